"""Curvature flows of left-invariant almost-hermitian structures via the bracket flow."""

from .curvature import (CurvatureReport, FlowKind, FlowPreconditionViolated, StructureViolation,
                        chern_ricci_form, chern_ricci_operator, curvature_report, flow_generator, flow_pq)
from .flows import FlowTrajectory, cointegrate_h, crf_closed_form, integrate_bracket, integrate_direct
from .hermitian import HermitianTriple, triple_from_pair
from .liealg import LieBracket
from .soliton import SolitonCertificate, detect_algebraic, detect_full, verify_trajectory

__version__ = "0.1.0"

__all__ = [
    "CurvatureReport", "FlowKind", "FlowPreconditionViolated", "FlowTrajectory", "HermitianTriple",
    "LieBracket", "SolitonCertificate", "StructureViolation", "chern_ricci_form", "chern_ricci_operator",
    "cointegrate_h", "crf_closed_form", "curvature_report", "detect_algebraic", "detect_full",
    "flow_generator", "flow_pq", "integrate_bracket", "integrate_direct", "triple_from_pair",
    "verify_trajectory",
]
