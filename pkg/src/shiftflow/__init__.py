"""Streaming bit-vector velocity estimation for event cameras."""

from .binning import AxisAccumulator, BinConfig, OccupancyVector, adapt_bin_duration, occupancy_density
from .events import Event, SensorGeometry, parse_event_line, read_events, stream_events, write_events
from .grid import OccupancyGrid
from .scoring import (
    HypothesisParams,
    HypothesisScore,
    PixelWinner,
    ScoreArray,
    compare_normalized,
    compare_raw,
    incremental_update,
    jump_to_velocity,
    passes_threshold,
    score_all,
    select_winner,
    trace,
)

__version__ = "0.1.0"
