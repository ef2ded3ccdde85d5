"""nar_lab: executors for classical graph algorithms, learned and exact.

The package has three layers:

- data: graph samplers, task oracles, and NDJSON shard IO
  (:mod:`nar_lab.graphs`, :mod:`nar_lab.oracles`, :mod:`nar_lab.tasks`,
  :mod:`nar_lab.shards`);
- engine: a small float64 reverse-mode tape and optimizers
  (:mod:`nar_lab.tensor`, :mod:`nar_lab.optim`);
- models: recurrent graph processors, encoders/decoders, training and
  evaluation loops (:mod:`nar_lab.processors`, :mod:`nar_lab.model`,
  :mod:`nar_lab.train`, :mod:`nar_lab.metrics`).

``nar-lab --help`` shows the command-line entry points.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    GenerationError,
    InputError,
    NarLabError,
    ParameterError,
    ParseError,
    ShapeError,
)
from .graphs import (
    Graph,
    LineGraph,
    ProbePair,
    induced_subgraph,
    line_graph,
    sample_er,
    sample_k_regular,
    sample_two_community_pair,
)
from .rng import Rng

__all__ = [
    "__version__",
    "ConfigError",
    "GenerationError",
    "Graph",
    "InputError",
    "LineGraph",
    "NarLabError",
    "ParameterError",
    "ParseError",
    "ProbePair",
    "Rng",
    "ShapeError",
    "induced_subgraph",
    "line_graph",
    "sample_er",
    "sample_k_regular",
    "sample_two_community_pair",
]
