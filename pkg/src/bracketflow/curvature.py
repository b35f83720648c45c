"""Chern-Ricci form and operator, and the (P, Q) pairs defining each flow."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import liealg
from .hermitian import (HermitianTriple, decompose_operator, is_closed, omega_transpose)
from .liealg import LieBracket


class FlowKind(str, Enum):
    CRF = "crf"
    SCF = "scf"
    ACRF = "acrf"

    @classmethod
    def parse(cls, value) -> "FlowKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown flow kind {value!r}; expected one of crf, scf, acrf") from None


class FlowPreconditionViolated(ValueError):
    pass


class NotClosed(ValueError):
    pass


class StructureViolation(AssertionError):
    """A structural identity that must hold failed numerically."""


def _to_frame(mu: LieBracket, triple: HermitianTriple):
    """Move (mu, triple) into coordinates where the metric is the identity."""
    if triple.is_orthonormal():
        return mu, triple, None
    h = liealg.orthonormal_frame(triple.metric)
    hinv = np.linalg.inv(h)
    W = hinv.T @ triple.omega @ hinv
    t = HermitianTriple(0.5 * (W - W.T), np.eye(triple.dim), h @ triple.J @ hinv)
    return liealg.gl_action(h, mu), t, h


def _from_frame(A: np.ndarray, h) -> np.ndarray:
    return A if h is None else np.linalg.solve(h, A @ h)


def chern_ricci_form(mu: LieBracket, J) -> np.ndarray:
    """Matrix of ``p(X, Y) = -1/2 tr(J ad[X, Y]) + 1/2 tr ad(J[X, Y])``."""
    J = np.asarray(J, dtype=float)
    ads = mu.ad_basis()
    tr_J_ad = np.einsum("ab,kba->k", J, ads)
    tr_ad = np.einsum("kaa->k", ads)
    weights = -0.5 * tr_J_ad + 0.5 * (J.T @ tr_ad)
    return np.einsum("ijk,k->ij", mu.coeffs, weights)


def chern_ricci_operator(mu: LieBracket, triple: HermitianTriple) -> np.ndarray:
    """P with ``p = omega(P., .)``, i.e. ``W P = p``."""
    return np.linalg.solve(triple.omega, chern_ricci_form(mu, triple.J))


def chern_scalar(mu: LieBracket, triple: HermitianTriple) -> float:
    return float(np.trace(chern_ricci_operator(mu, triple)))


def ricci_ac(mu: LieBracket, triple: HermitianTriple) -> np.ndarray:
    """Anti-complexified part of the Ricci operator of the triple's metric."""
    nu, t, h = _to_frame(mu, triple)
    return _from_frame(decompose_operator(liealg.ricci_operator(nu), t.J)[1], h)


def flow_pq(kind, mu: LieBracket, triple: HermitianTriple, check: bool = True,
            closed_tol: float = 1e-7) -> tuple[np.ndarray, np.ndarray]:
    """The operators (P, Q) with ``p = omega(P., .)`` and ``q = g(Q., .)`` for a flow."""
    kind = FlowKind.parse(kind)
    if kind is FlowKind.CRF:
        P = chern_ricci_operator(mu, triple)
        return P, P.copy()
    if kind is FlowKind.SCF:
        if check and not is_closed(mu, triple.omega, closed_tol):
            raise FlowPreconditionViolated("symplectic curvature flow needs d(omega) = 0")
        P = chern_ricci_operator(mu, triple)
        Pc = decompose_operator(P, triple.J)[0]
        P_, Q = P, Pc + ricci_ac(mu, triple)
    else:
        P_ = np.zeros((mu.dim, mu.dim))
        Q = ricci_ac(mu, triple)
    if check:
        Pc = decompose_operator(P_, triple.J)[0]
        Qc = decompose_operator(Q, triple.J)[0]
        if np.linalg.norm(Pc - Qc) > 1e-9 * max(1.0, np.linalg.norm(Q)):
            raise StructureViolation("P^c != Q^c: flow would not preserve compatibility")
    return P_, Q


def flow_generator(kind, mu: LieBracket, triple: HermitianTriple, check: bool = False) -> np.ndarray:
    """``P + Q^ac``, the operator driving both h(t) and the bracket flow."""
    P, Q = flow_pq(kind, mu, triple, check=check)
    return P + decompose_operator(Q, triple.J)[1]


@dataclass(frozen=True)
class CurvatureReport:
    P: np.ndarray
    Q: np.ndarray
    Ric: np.ndarray
    momentMap: np.ndarray
    killing: np.ndarray
    meanVector: np.ndarray
    scalarR: float
    chernScalar: float
    Qac: np.ndarray

    @property
    def generator(self) -> np.ndarray:
        return self.P + self.Qac


def curvature_report(kind, mu: LieBracket, triple: HermitianTriple) -> CurvatureReport:
    """All curvature quantities for ``(mu, triple)`` in the triple's own basis."""
    P, Q = flow_pq(kind, mu, triple, check=False)
    G = None if triple.is_orthonormal() else triple.metric
    B, H = liealg.killing_and_mean(mu, G)
    rep = CurvatureReport(
        P=P, Q=Q,
        Ric=liealg.ricci_operator(mu, G),
        momentMap=liealg.moment_map(mu, G),
        killing=B, meanVector=H,
        scalarR=liealg.scalar_curvature(mu, G),
        chernScalar=chern_scalar(mu, triple),
        Qac=decompose_operator(Q, triple.J)[1],
    )
    return rep


@dataclass(frozen=True)
class ClosedCheck:
    residual: float
    Z: np.ndarray
    unimodular: bool
    nilpotent: bool


def chern_ricci_closed_check(mu: LieBracket, triple: HermitianTriple, tol: float = 1e-10) -> ClosedCheck:
    """Check ``P = ad Z + (ad Z)^{t_omega}`` where ``omega(Z, mu(X, Y)) = p(X, Y)``."""
    if not is_closed(mu, triple.omega, tol):
        raise NotClosed("omega is not closed for this bracket")
    d = mu.dim
    p = chern_ricci_form(mu, triple.J)
    # omega(Z, mu(e_i, e_j)) = sum_a Z_a (W c_ij)_a
    rows = np.einsum("ab,ijb->ija", triple.omega, mu.coeffs).reshape(d * d, d)
    Z, *_ = np.linalg.lstsq(rows, p.reshape(-1), rcond=None)
    P = chern_ricci_operator(mu, triple)
    adZ = mu.ad(Z)
    residual = float(np.linalg.norm(P - adZ - omega_transpose(adZ, triple)))
    _, H = liealg.killing_and_mean(mu)
    unimodular = bool(np.linalg.norm(H) <= tol * max(1.0, mu.norm()))
    scale = max(1.0, np.linalg.norm(P)) ** d
    nilpotent = bool(np.linalg.norm(np.linalg.matrix_power(P, d)) <= 1e-9 * scale)
    return ClosedCheck(residual, Z, unimodular, nilpotent)


@dataclass(frozen=True)
class VanishingFlags:
    bi_invariant: bool
    anti_bi_invariant: bool
    abelian_unimodular: bool
    p_norm: float

    @property
    def any(self) -> bool:
        return self.bi_invariant or self.anti_bi_invariant or self.abelian_unimodular


def vanishing_predicates(mu: LieBracket, J, tol: float = 1e-10) -> VanishingFlags:
    """Sufficient conditions on J for ``p = 0``; raises if one holds and p does not vanish."""
    J = np.asarray(J, dtype=float)
    c = mu.coeffs
    scale = max(1.0, mu.norm())
    JX_Y = np.einsum("ai,ajk->ijk", J, c)
    J_XY = np.einsum("kl,ijl->ijk", J, c)
    JX_JY = np.einsum("ai,bj,abk->ijk", J, J, c)
    _, H = liealg.killing_and_mean(mu)
    flags = VanishingFlags(
        bi_invariant=bool(np.linalg.norm(JX_Y - J_XY) <= tol * scale),
        anti_bi_invariant=bool(np.linalg.norm(JX_Y + J_XY) <= tol * scale),
        abelian_unimodular=bool(np.linalg.norm(JX_JY - c) <= tol * scale
                                and np.linalg.norm(H) <= tol * scale),
        p_norm=float(np.linalg.norm(chern_ricci_form(mu, J))),
    )
    if flags.any and flags.p_norm > 1e3 * tol * scale ** 2:
        raise StructureViolation(f"p should vanish but has norm {flags.p_norm:.3e}")
    return flags
