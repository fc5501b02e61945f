"""Meta-bootstrapped negative sampling for GCN link prediction."""

__version__ = "0.1.0"

from .errors import ConfigError, MebnsError, NumericError, ParseError, RangeError, SamplingError  # noqa: E402
from .graph import EdgeSplit, Graph, drop_edge, k_hop_candidates, load_graph, split_edges  # noqa: E402
from .pipeline import RunConfig, TrainReport, run_mebns, train_student, train_teacher  # noqa: E402

__all__ = [
    "ConfigError", "EdgeSplit", "Graph", "MebnsError", "NumericError", "ParseError", "RangeError",
    "RunConfig", "SamplingError", "TrainReport", "drop_edge", "k_hop_candidates", "load_graph",
    "run_mebns", "split_edges", "train_student", "train_teacher",
]
