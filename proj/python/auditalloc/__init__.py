"""Python front end for the audit-selection simulator.

Configs are plain dicts with the same shape as the CLI's JSON configs.
"""

import json
import os
from typing import Any, Dict, List, Optional, Sequence

from ._auditalloc import (
    BudgetError,
    ConfigError,
    DimensionError,
    Error,
    ParseError,
    suite_names,
)
from . import _auditalloc as _core

__all__ = [
    "BudgetError",
    "ConfigError",
    "DimensionError",
    "Error",
    "ParseError",
    "allocate",
    "canonical_config",
    "config_hash",
    "default_config",
    "run_experiment",
    "run_suite",
    "suite_names",
]


def default_config(seed: int = 0, n_records: int = 50_000) -> Dict[str, Any]:
    """The paper-qualitative scenario for one seed."""
    return json.loads(_core.default_config(seed, n_records))


def canonical_config(config: Dict[str, Any]) -> Dict[str, Any]:
    """Validated config with every default spelled out."""
    return json.loads(_core.canonical_config(json.dumps(config)))


def config_hash(config: Dict[str, Any]) -> str:
    return _core.config_hash(json.dumps(config))


def run_experiment(config: Dict[str, Any], out: Optional[os.PathLike] = None) -> Dict[str, Any]:
    """Runs a config; writes the CSV artifacts too when `out` is given."""
    return json.loads(_core.run_experiment(json.dumps(config), os.fspath(out) if out else ""))


def run_suite(name: str, out: os.PathLike, seeds: Sequence[int] = (),
              n_records: int = 50_000) -> Dict[str, Any]:
    return json.loads(_core.run_suite(name, os.fspath(out), list(seeds), n_records))


def allocate(scores: Sequence[float], weights: Sequence[float], buckets: Sequence[int],
             kind: str, budget: float, costs: Sequence[float] = ()) -> List[float]:
    """Audit probabilities for records 0..n-1.

    kind is "topk" or "monotone" (budget = audit rate k) or "roi"
    (budget = dollars, costs required).
    """
    return _core.allocate(list(map(float, scores)), list(map(float, weights)),
                          list(map(int, buckets)), list(map(float, costs)), kind, float(budget))
