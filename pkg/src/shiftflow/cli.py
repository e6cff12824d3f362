"""Command-line entry point: ``shiftflow {run,synth,sweep,cost,oracle-check,render}``.

Parameters resolve in order preset < ``--config`` file < explicit flags.
The config file is INI with a ``[run]`` section whose keys are the long
flag names (``dt-us = 40000``).
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from dataclasses import replace
from typing import Any, Sequence

from . import __version__
from .binning import BinConfig
from .datapath import datapath_audit
from .events import SensorGeometry, read_events, write_events
from .evalbench.accuracy import directional_accuracy, load_segments
from .evalbench.cost import cost_model
from .evalbench.oracle import fuzz_incremental, fuzz_oracle
from .evalbench.render import render_flow, render_sweep
from .evalbench.sweep import N_MIN, sweep, write_sweep_csv
from .pipeline import FlowPipeline, PipelineConfig, read_detections, write_detections
from .scoring import HypothesisParams, theta_s_from_fraction
from .synth import load_scene, run_scene, write_ground_truth

log = logging.getLogger("shiftflow")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2

PRESETS: dict[str, dict[str, Any]] = {
    # Real-data configuration: cross-multiplication scorer, beta = 4, theta_s = 0.5 L.
    "real": dict(dt_us=40_000, theta_e=80, L=16, J=15, beta=4, theta_s=8, mode="normalized"),
    # Synthetic-data configuration: raw popcount, beta = L/2, theta_s = 0.3 L.
    "synthetic": dict(dt_us=200, theta_e=10, L=16, J=15, beta=8, theta_s=5, mode="raw"),
}

RUN_DEFAULTS: dict[str, Any] = dict(
    L=16,
    J=15,
    beta=4,
    mode="raw",
    trace_mode="canonical",
    variant="trace",
    adapt=False,
    rho_lo=0.10,
    rho_hi=0.40,
    hold_bins=None,
    rescale_theta=True,
    nx=240,
    ny=180,
    y_enabled=True,
)


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _add_algorithm_flags(p: argparse.ArgumentParser, with_bins: bool = True) -> None:
    g = p.add_argument_group("algorithm parameters")
    if with_bins:
        g.add_argument("--dt-us", type=int, help="Δt: time-bin duration in microseconds")
        g.add_argument("--theta-e", type=int, help="θ_e: event-count threshold per pixel per bin")
    g.add_argument("--L", "--l", dest="L", type=int, help="L: temporal depth, grid columns (16)")
    g.add_argument("--J", "--j", dest="J", type=int, help="J: max hypothesis magnitude, px/bin (15)")
    g.add_argument("--beta", type=int, help="β: minimum in-bounds trace steps (4)")
    g.add_argument("--theta-s", type=int, help="θ_s: score threshold in raw-score units 0..L")
    g.add_argument("--theta-s-frac", type=float, help="θ_s as a fraction of L (rounded)")
    g.add_argument("--mode", choices=("raw", "normalized"), help="scorer: raw popcount or cross-multiplication")
    g.add_argument(
        "--trace-mode",
        choices=("canonical", "literal"),
        help="diagonal indexing: canonical (ends at the active cell) or literal (starts one bin back)",
    )
    g.add_argument("--variant", choices=("trace", "incremental"), help="trace-based or incremental scorer")
    g.add_argument("--nx", type=int, help="N_x: sensor width in pixels (240)")
    g.add_argument("--ny", type=int, help="N_y: sensor height in pixels (180)")
    g.add_argument("--no-y", dest="y_enabled", action="store_const", const=False, help="disable the y pipeline")
    a = p.add_argument_group("adaptive bin duration")
    a.add_argument("--adapt", action="store_const", const=True, help="enable density-feedback Δt adaptation")
    a.add_argument("--rho-lo", type=float, help="ρ_lo: lower occupancy-density bound (0.10)")
    a.add_argument("--rho-hi", type=float, help="ρ_hi: upper occupancy-density bound (0.40)")
    a.add_argument("--dt-min-us", type=int, help="lower clamp for Δt")
    a.add_argument("--dt-max-us", type=int, help="upper clamp for Δt")
    a.add_argument("--hold-bins", type=int, help="bins after a change before Δt may change again (L)")
    a.add_argument("--rescale-theta", type=_bool, help="scale θ_e with Δt on adaptation (true)")
    p.add_argument("--preset", choices=sorted(PRESETS), help="start from a named parameter set")
    p.add_argument("--config", help="INI file with a [run] section mirroring these flags")
    p.add_argument("--audit", action="store_true", help="check datapath register widths while running")


_TYPES = {
    "dt_us": int,
    "theta_e": int,
    "L": int,
    "J": int,
    "beta": int,
    "theta_s": int,
    "theta_s_frac": float,
    "nx": int,
    "ny": int,
    "rho_lo": float,
    "rho_hi": float,
    "dt_min_us": int,
    "dt_max_us": int,
    "hold_bins": int,
    "adapt": _bool,
    "rescale_theta": _bool,
    "y_enabled": _bool,
    "seed": int,
    "workers": int,
    "n_min": int,
}


def _read_config(path: str) -> dict[str, Any]:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        found = cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not found:
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, Any] = {}
    for section in ("run", "binning", "scoring"):
        if cp.has_section(section):
            for key, raw in cp.items(section):
                k = key.strip().replace("-", "_")
                if k in ("l", "j"):
                    k = k.upper()
                conv = _TYPES.get(k, str)
                try:
                    out[k] = conv(raw)
                except ValueError as exc:
                    raise ConfigError(f"{path}: bad value for {key}: {raw!r}") from exc
    return out


def resolve(args: argparse.Namespace, defaults: dict[str, Any] | None = None) -> dict[str, Any]:
    """Merge defaults, preset, config file and explicit flags (later wins)."""
    merged: dict[str, Any] = dict(defaults or {})
    if getattr(args, "preset", None):
        merged.update(PRESETS[args.preset])
    if getattr(args, "config", None):
        merged.update(_read_config(args.config))
    for key, value in vars(args).items():
        if value is not None and key not in ("preset", "config", "func", "command"):
            merged[key] = value
    if merged.get("theta_s_frac") is not None and "theta_s" not in {
        k for k, v in vars(args).items() if v is not None
    }:
        merged["theta_s"] = theta_s_from_fraction(merged["theta_s_frac"], merged["L"])
    return merged


def build_pipeline_config(cfg: dict[str, Any]) -> PipelineConfig:
    for key in ("dt_us", "theta_e"):
        if cfg.get(key) is None:
            raise ConfigError(f"--{key.replace('_', '-')} is required (or use --preset / --config)")
    if cfg.get("theta_s") is None:
        raise ConfigError("--theta-s or --theta-s-frac is required (or use --preset / --config)")
    try:
        hyp = HypothesisParams(
            J=cfg["J"],
            L=cfg["L"],
            beta=cfg["beta"],
            theta_s=cfg["theta_s"],
            mode=cfg["mode"],
            trace_mode=cfg["trace_mode"],
        )
        bins = BinConfig(
            delta_t=cfg["dt_us"],
            theta_e=cfg["theta_e"],
            rho_lo=cfg["rho_lo"],
            rho_hi=cfg["rho_hi"],
            delta_t_min=cfg.get("dt_min_us"),
            delta_t_max=cfg.get("dt_max_us"),
            hold_bins=cfg["hold_bins"] if cfg.get("hold_bins") is not None else hyp.L,
            adapt=bool(cfg["adapt"]),
            rescale_theta=bool(cfg["rescale_theta"]),
        )
        geometry = SensorGeometry(cfg["nx"], cfg["ny"])
        pc = PipelineConfig(bins, hyp, geometry, cfg["variant"], bool(cfg["y_enabled"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if hyp.trace_mode == "literal" and pc.variant == "incremental":
        raise ConfigError("the incremental scorer requires --trace-mode canonical")
    return pc


def _load_input(cfg: dict[str, Any], geometry: SensorGeometry):
    if cfg.get("input"):
        return read_events(cfg["input"], geometry), None
    if cfg.get("scene"):
        scene = load_scene(cfg["scene"])
        if cfg.get("seed") is not None:
            scene.noise = replace(scene.noise, seed=cfg["seed"])
        if (scene.geometry.nx, scene.geometry.ny) != (geometry.nx, geometry.ny):
            raise ConfigError("scene geometry differs from --nx/--ny")
        return run_scene(scene)
    raise ConfigError("one of --input or --scene is required")


def _open_out(path: str | None):
    if path in (None, "-"):
        return open(os.dup(sys.stdout.fileno()), "w", closefd=True)
    return open(path, "w", newline="")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve(args, RUN_DEFAULTS)
    pc = build_pipeline_config(cfg)
    events, gt = _load_input(cfg, pc.geometry)
    pipe = FlowPipeline(pc)
    header = {"command": "run", "version": __version__, **pc.describe()}
    if cfg.get("input"):
        header["input"] = cfg["input"]
    if cfg.get("scene"):
        header["scene"] = cfg["scene"]
    svg_dir = cfg.get("svg_dir")
    if svg_dir:
        os.makedirs(svg_dir, exist_ok=True)
    detections = []
    if svg_dir:
        by_bin: dict[int, list] = {}
        for d in pipe.feed(events):
            by_bin.setdefault(d.bin_index, []).append(d)
            detections.append(d)
        for rec in pipe.log:
            if rec.bin_index in by_bin:
                bin_events = [e for e in events if rec.t_start <= e.t < rec.t_end]
                with open(os.path.join(svg_dir, f"bin_{rec.bin_index:06d}.svg"), "w") as fh:
                    fh.write(render_flow(bin_events, by_bin[rec.bin_index], pc.geometry))
    else:
        detections = list(pipe.feed(events))
    with _open_out(cfg.get("output")) as fh:
        write_detections(detections, fh, header)
    log.info("%d events, %d bins, %d detections", len(events), len(pipe.log), len(detections))
    if cfg.get("segments"):
        segs = load_segments(cfg["segments"])
        report = directional_accuracy(detections, segs, pc.bins.delta_t)
        sys.stderr.write(report.to_text())
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        scene = load_scene(args.scene)
    except (ValueError, KeyError, configparser.Error) as exc:
        raise ConfigError(str(exc)) from exc
    if args.seed is not None:
        scene.noise = replace(scene.noise, seed=args.seed)
    if args.gt_bin_us is not None:
        scene.gt_bin_us = args.gt_bin_us
    events, segments = run_scene(scene)
    with _open_out(args.output) as fh:
        write_events(events, fh)
    if args.gt:
        with open(args.gt, "w", newline="") as fh:
            write_ground_truth(segments, fh)
    log.info("%d events, %d ground-truth segments", len(events), len(segments))
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"not an integer list: {text!r}") from exc


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = resolve(args, RUN_DEFAULTS)
    dts = _int_list(cfg["dt_list"])
    thetas = _int_list(cfg["theta_list"])
    probe = dict(cfg, dt_us=dts[0], theta_e=thetas[0], adapt=False)
    pc = build_pipeline_config(probe)
    events, gt = _load_input(cfg, pc.geometry)
    if cfg.get("segments"):
        segs = load_segments(cfg["segments"])
    elif gt is not None:
        segs = [s for s in gt if s.axis == "x"]
        if len({s.object_id for s in segs}) > 1:
            raise ConfigError("scene has several objects; pass --segments with one track per time range")
    else:
        raise ConfigError("--segments is required for recorded input")
    cells = sweep(events, dts, thetas, pc.hyp, pc.geometry, segs, cfg.get("n_min") or N_MIN, cfg.get("workers") or 1)
    with _open_out(cfg.get("output")) as fh:
        for k, v in {"command": "sweep", **pc.describe()}.items():
            if k not in ("dt_us", "theta_e"):
                fh.write(f"# {k}={v}\n")
        write_sweep_csv(cells, fh)
    if cfg.get("svg"):
        with open(cfg["svg"], "w") as fh:
            fh.write(render_sweep(cells))
    return EXIT_OK


def cmd_cost(args: argparse.Namespace) -> int:
    try:
        report = cost_model(args.nx, args.ny, args.L, args.J, args.clock_hz, args.variant, args.n_active)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sys.stdout.write(report.to_text())
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            report.write_csv(fh)
    return EXIT_OK


def cmd_oracle_check(args: argparse.Namespace) -> int:
    reports = []
    with datapath_audit(strict=False) as audit:
        if args.which in ("incremental", "both"):
            reports.append(fuzz_incremental(args.cases, args.seed))
        if args.which in ("oracle", "both"):
            reports.append(fuzz_oracle(args.cases, args.seed))
    for r in reports:
        print(r.summary())
        for m in r.mismatches[:10]:
            print("  " + m)
    print(f"datapath width checks: {audit.checks}, violations: {len(audit.violations)}")
    ok = all(r.ok for r in reports) and not audit.violations
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_render(args: argparse.Namespace) -> int:
    with open(args.detections) as fh:
        detections, header = read_detections(fh)
    nx = args.nx or int(header.get("nx", 240))
    ny = args.ny or int(header.get("ny", 180))
    geometry = SensorGeometry(nx, ny)
    chosen = args.bin
    if chosen is None:
        if not detections:
            raise ConfigError("no detections to render; pass --bin")
        chosen = max({d.bin_index for d in detections}, key=lambda b: (sum(d.bin_index == b for d in detections), -b))
    selected = [d for d in detections if d.bin_index == chosen]
    events = []
    if args.input:
        dt = int(header.get("dt_us", 0)) or None
        t_end = selected[0].t_end if selected else None
        if dt is None or t_end is None:
            raise ConfigError("cannot locate bin events: need detections and dt_us in the CSV header")
        events = [e for e in read_events(args.input, geometry) if t_end - dt <= e.t < t_end]
    with _open_out(args.output) as fh:
        fh.write(render_flow(events, selected, geometry, args.scale_s))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shiftflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="estimate velocities, write detections CSV")
    run.add_argument("--input", help="events.txt (t x y p, t in seconds)")
    run.add_argument("--scene", help="synthesise events from a scene file instead")
    run.add_argument("--seed", type=int, help="noise seed override for --scene")
    run.add_argument("--output", "-o", help="detections CSV (default stdout)")
    run.add_argument("--svg-dir", help="write one flow-field SVG per bin with detections")
    run.add_argument("--segments", help="ground-truth segments CSV; prints directional accuracy")
    _add_algorithm_flags(run)
    run.set_defaults(func=cmd_run)

    syn = sub.add_parser("synth", help="generate a synthetic event stream and ground truth")
    syn.add_argument("--scene", required=True, help="scene file ([scene], [noise], [object.*])")
    syn.add_argument("--seed", type=int, help="override the scene's noise seed")
    syn.add_argument("--output", "-o", help="events.txt output (default stdout)")
    syn.add_argument("--gt", help="ground-truth CSV output")
    syn.add_argument("--gt-bin-us", type=int, help="ground-truth sampling interval (us)")
    syn.set_defaults(func=cmd_synth)

    sw = sub.add_parser("sweep", help="fixed (Δt, θ_e) grid sweep")
    sw.add_argument("--input")
    sw.add_argument("--scene")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--segments", help="ground-truth segments CSV (t_start_s,t_end_s,axis,expected_j)")
    sw.add_argument("--dt-list", required=True, help="comma-separated Δt values (us)")
    sw.add_argument("--theta-list", required=True, help="comma-separated θ_e values")
    sw.add_argument("--n-min", type=int, help=f"detections needed to report accuracy ({N_MIN})")
    sw.add_argument("--workers", type=int, help="parallel worker processes")
    sw.add_argument("--output", "-o", help="sweep CSV (default stdout)")
    sw.add_argument("--svg", help="heat-map SVG output")
    _add_algorithm_flags(sw, with_bins=False)
    sw.set_defaults(func=cmd_sweep)

    co = sub.add_parser("cost", help="storage and latency model")
    co.add_argument("--nx", type=int, default=240, help="N_x: pixels on the x axis")
    co.add_argument("--ny", type=int, default=None, help="N_y: pixels on the y axis (default N_x)")
    co.add_argument("--L", "--l", dest="L", type=int, default=16, help="L: temporal depth")
    co.add_argument("--J", "--j", dest="J", type=int, default=15, help="J: max hypothesis magnitude")
    co.add_argument("--clock-hz", type=float, default=100e6, help="datapath clock (Hz)")
    co.add_argument("--variant", choices=("trace", "incremental"), default="trace")
    co.add_argument("--n-active", type=int, help="active pixels per bin (default N_x)")
    co.add_argument("--csv", help="also write the report as CSV")
    co.set_defaults(func=cmd_cost)

    oc = sub.add_parser("oracle-check", help="randomized equivalence checks; exit 1 on any mismatch")
    oc.add_argument("--cases", type=int, default=10_000)
    oc.add_argument("--seed", type=int, default=0)
    oc.add_argument("--which", choices=("incremental", "oracle", "both"), default="both")
    oc.set_defaults(func=cmd_oracle_check)

    rd = sub.add_parser("render", help="flow-field SVG from a detections CSV")
    rd.add_argument("--detections", required=True)
    rd.add_argument("--input", help="events.txt for the background raster")
    rd.add_argument("--bin", type=int, help="bin index (default: bin with most detections)")
    rd.add_argument("--scale-s", type=float, help="arrow length = speed(px/s) x scale (s)")
    rd.add_argument("--nx", type=int)
    rd.add_argument("--ny", type=int)
    rd.add_argument("--output", "-o")
    rd.set_defaults(func=cmd_render)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if getattr(args, "audit", False):
            with datapath_audit(strict=True):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"shiftflow: configuration error: {exc}\n")
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        log.debug("failure", exc_info=True)
        sys.stderr.write(f"shiftflow: error: {exc}\n")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
