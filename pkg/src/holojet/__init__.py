"""Jet prolongation, invariant jets, transport and holonomy for singularly
foliated bundles on coordinate charts."""
from ._backend import NAME as BACKEND
from .connection import (
    Connection,
    flow_domain_guard,
    lift_combination,
    validate_bracket_preserving,
    validate_right_inverse,
)
from .flow import (
    BlowupError,
    DomainExitError,
    FlowResult,
    LeafwisePath,
    MaxStepsError,
    concatenate,
    constant_path,
    exposure,
    integrate,
    invert,
    make_path,
)
from .geometry import BaseField, Bundle, Chart, Foliation, ProjField, involutivity_check, membership_test
from .holonomy import groupoid_laws_check, hierarchy_check, holonomy_equivalent
from .invariants import has_enough_conservation_laws, invariance_constraints, invariant_fibre, residual_check
from .multiindex import JetLayout
from .prolong import contact_apply, prolong, prolong_direct, total_derivative, vertical_prolong
from .scene import Scene, load_scene, parse_scene, print_scene
from .symexpr import Expr, diff, evaluate, parse_expr, simplify
from .transport import JetPoint, fd_oracle, jet_of_section, transport, transport_ode

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Connection",
    "flow_domain_guard",
    "lift_combination",
    "validate_bracket_preserving",
    "validate_right_inverse",
    "BlowupError",
    "DomainExitError",
    "FlowResult",
    "LeafwisePath",
    "MaxStepsError",
    "concatenate",
    "constant_path",
    "exposure",
    "integrate",
    "invert",
    "make_path",
    "BaseField",
    "Bundle",
    "Chart",
    "Foliation",
    "ProjField",
    "involutivity_check",
    "membership_test",
    "groupoid_laws_check",
    "hierarchy_check",
    "holonomy_equivalent",
    "has_enough_conservation_laws",
    "invariance_constraints",
    "invariant_fibre",
    "residual_check",
    "JetLayout",
    "contact_apply",
    "prolong",
    "prolong_direct",
    "total_derivative",
    "vertical_prolong",
    "Scene",
    "load_scene",
    "parse_scene",
    "print_scene",
    "Expr",
    "diff",
    "evaluate",
    "parse_expr",
    "simplify",
    "JetPoint",
    "fd_oracle",
    "jet_of_section",
    "transport",
    "transport_ode",
    "__version__",
]
