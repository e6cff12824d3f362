"""Evaluation bench: oracle, accuracy, sweeps, cost model and SVG rendering."""

from .accuracy import AccuracyReport, directional_accuracy, load_segments, overlap_split
from .cost import CostReport, cost_model
from .oracle import OracleHistory, fuzz_incremental, fuzz_oracle, oracle_score, oracle_winner
from .render import render_flow, render_sweep
from .sweep import SweepCell, sweep
