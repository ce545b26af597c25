"""Exact model counting and projected model counting on tree decompositions."""

from .counting_dp import model_count, run_dp, purge
from .decompose import TreeDecomposition, decompose, make_nice, validate_td
from .formula import CnfFormula, PmcInstance, parse_dimacs
from .hybrid import SolverConfig, hyb_dp, solve
from .nested_dp import nested_count, run_nested_dp
from .projected_dp import pmc_count, run_proj

__all__ = [
    "CnfFormula",
    "PmcInstance",
    "SolverConfig",
    "TreeDecomposition",
    "decompose",
    "hyb_dp",
    "make_nice",
    "model_count",
    "nested_count",
    "parse_dimacs",
    "pmc_count",
    "purge",
    "run_dp",
    "run_nested_dp",
    "run_proj",
    "solve",
    "validate_td",
]
