"""Parametric reachability for pDTMCs by fragmentation and composition."""
from .casegen import gen_fx, gen_loop_chain, gen_param_sweep
from .compose import EquationSystem, check, evaluate_system, system_op_count
from .estimator import FragmentationChecker
from .fragmentation import Fragment, FragmentSet, fragmentation, validate_fragment
from .model import Pdtmc, parse_model, render_model
from .oracle import oracle_reach
from .pmc import eliminate_reach, monolithic
from .ratfun import RationalFunction, parse_expr

__version__ = "0.1.0"

__all__ = [
    "EquationSystem", "Fragment", "FragmentSet", "FragmentationChecker", "Pdtmc",
    "RationalFunction", "check", "eliminate_reach", "evaluate_system", "fragmentation",
    "gen_fx", "gen_loop_chain", "gen_param_sweep", "monolithic", "oracle_reach",
    "parse_expr", "parse_model", "render_model", "system_op_count", "validate_fragment",
]
