"""Exact memory and credit-assignment length analysis for tabular POMDPs."""

try:
    from ._core import *  # noqa: F401,F403
    from . import _core  # noqa: F401
except ImportError:  # test builds put _core next to the package on PYTHONPATH
    from _core import *  # noqa: F401,F403
    import _core  # noqa: F401

__all__ = [
    "TabularPOMDP",
    "builtin",
    "from_json",
    "delay",
    "episodic_sum",
    "analyze",
    "analyze_json",
    "grad_check",
    "rollout_return",
    "optimal_return",
    "train",
    "SpecError",
    "BudgetError",
]
