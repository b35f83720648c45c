"""Bracket flow and direct (omega, g) flow integration, closed-form CRF, diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import liealg
from .curvature import (FlowKind, chern_ricci_form, chern_ricci_operator, curvature_report, flow_generator,
                        flow_pq)
from .hermitian import (FLOW_TOL, DegenerateForm, HermitianTriple, IncompatiblePair, ce_differential,
                        decompose_operator, triple_from_pair)
from .integrator import StepSizeUnderflow, dopri5
from .liealg import LieBracket

log = logging.getLogger(__name__)

BLOWUP_NORM = 1e6
RECONSTRUCTION_TOL = 1e-5


class LossOfCompatibility(RuntimeError):
    pass


class ReconstructionMismatch(RuntimeError):
    pass


class OutOfInterval(ValueError):
    pass


@dataclass(frozen=True)
class Singularity:
    T_est: float
    side: str  # "forward" or "backward"
    fitExponent: float
    lowerBound: float  # min over the final decade of |mu| |t - T|^(1/2)


@dataclass(frozen=True)
class Limit:
    lam: LieBracket
    residual: float


@dataclass
class FlowTrajectory:
    flowKind: FlowKind
    times: np.ndarray
    mus: np.ndarray
    h: Optional[np.ndarray] = None
    omegas: Optional[np.ndarray] = None
    metrics: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)
    singularity: Optional[Singularity] = None
    limit: Optional[Limit] = None
    normalized: bool = False
    status: str = "done"
    message: str = ""

    def __len__(self) -> int:
        return len(self.times)

    def bracket(self, i: int) -> LieBracket:
        return LieBracket(self.mus[i])

    def index_of(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def at(self, t: float) -> LieBracket:
        i = self.index_of(t)
        if abs(self.times[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not a sample of this trajectory (closest {self.times[i]})")
        return self.bracket(i)

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt(np.einsum("nijk,nijk->n", self.mus, self.mus))


def _generator_raw(kind, coeffs: np.ndarray, triple: HermitianTriple) -> tuple[LieBracket, np.ndarray]:
    mu = LieBracket(coeffs)
    return mu, flow_generator(kind, mu, triple)


def bracket_rhs(kind, mu: LieBracket, triple0: HermitianTriple) -> np.ndarray:
    """``delta_mu(P_mu + Q_mu^ac)`` with the background triple held fixed."""
    return liealg.delta(mu, flow_generator(kind, mu, triple0, check=True))


def _diagnostics(kind, mus: np.ndarray, triple0: HermitianTriple) -> dict:
    out = {k: np.empty(len(mus)) for k in ("mu_norm", "R", "trP", "ric_ac_norm", "pq_norm", "jacobi")}
    for n, c in enumerate(mus):
        mu = LieBracket(c)
        rep = curvature_report(kind, mu, triple0)
        ric_ac = decompose_operator(rep.Ric, triple0.J)[1]
        out["mu_norm"][n] = mu.norm()
        out["R"][n] = rep.scalarR
        out["trP"][n] = rep.chernScalar
        out["ric_ac_norm"][n] = np.linalg.norm(ric_ac)
        out["pq_norm"][n] = np.linalg.norm(rep.generator)
        out["jacobi"][n] = mu.jacobi_residual() / (1.0 + mu.norm() ** 3)
    return out


def estimate_singularity(times: np.ndarray, norms: np.ndarray) -> Singularity:
    """Estimate the blow-up time and rate from the tail of a run approaching a singularity.

    The solver's step sizes shrink geometrically near a blow-up, so Aitken extrapolation
    of the last three accepted times gives the limit time.
    """
    t1, t2, t3 = times[-3:]
    d1, d2 = t2 - t1, t3 - t2
    denom = d2 - d1
    T = t3 - d2 * d2 / denom if denom != 0 and abs(d2) < abs(d1) else t3
    side = "forward" if t3 > times[0] else "backward"
    gap = np.abs(times - T)
    last = gap[-1] if gap[-1] > 0 else abs(d2)
    # fit well inside the asymptotic regime but away from the extrapolation error
    sel = (gap >= 1e2 * last) & (gap <= 1e5 * last)
    if sel.sum() < 4:
        sel = np.zeros_like(gap, dtype=bool)
        sel[-min(len(gap) - 1, 20):-1] = True
    slope = float(np.polyfit(np.log(gap[sel]), np.log(norms[sel]), 1)[0])
    decade = (gap >= last) & (gap <= 10 * last)
    decade[-1] = gap[-1] > 0
    lower = float(np.min(norms[decade] * np.sqrt(gap[decade]))) if decade.any() else float("nan")
    return Singularity(float(T), side, slope, lower)


def integrate_bracket(kind, mu0: LieBracket, triple0: HermitianTriple, t_end: float, *,
                      tol: float = 1e-9, atol: float = 1e-12, blowup_norm: float = BLOWUP_NORM,
                      normalized: bool = False, with_h: bool = False,
                      checkpoints: Sequence[float] = (), diagnostics: bool = True,
                      max_steps: int = 1_000_000) -> FlowTrajectory:
    """Integrate ``mu' = delta_mu(P_mu + Q_mu^ac)`` from ``mu0`` up to ``t_end``.

    With ``normalized=True`` the unit-norm projected field is integrated instead, which is
    the right choice for long runs where ``|mu|`` decays.  With ``with_h=True`` the
    isomorphisms ``h' = -(P_mu + Q_mu^ac) h`` are carried along.
    """
    kind = FlowKind.parse(kind)
    if not mu0.is_lie():
        raise liealg.BracketError("starting bracket fails the Jacobi identity")
    # raises FlowPreconditionViolated on a bad start
    flow_pq(kind, mu0, triple0, check=True)
    if normalized and with_h:
        raise ValueError("h(t) is only defined for the unnormalized flow")
    d = mu0.dim
    n_mu = d ** 3
    start = mu0.coeffs * (1.0 / mu0.norm()) if normalized and mu0.norm() > 0 else mu0.coeffs
    y0 = start.reshape(-1)
    if with_h:
        y0 = np.concatenate([y0, np.eye(d).reshape(-1)])

    def f(t, y):
        c = y[:n_mu].reshape(d, d, d)
        mu, A = _generator_raw(kind, c, triple0)
        r = liealg.delta(mu, A).reshape(-1)
        if normalized:
            nn = float(y[:n_mu] @ y[:n_mu])
            if nn > 0:
                r = r - (float(r @ y[:n_mu]) / nn) * y[:n_mu]
        if with_h:
            h = y[n_mu:].reshape(d, d)
            return np.concatenate([r, (-A @ h).reshape(-1)])
        return r

    def stop(t, y):
        return float(np.linalg.norm(y[:n_mu])) > blowup_norm

    sol = dopri5(f, 0.0, y0, t_end, rtol=tol, atol=atol, stop=stop, checkpoints=checkpoints,
                 max_steps=max_steps)
    mus = sol.y[:, :n_mu].reshape(-1, d, d, d)
    traj = FlowTrajectory(kind, sol.t, mus, normalized=normalized, status=sol.status, message=sol.message)
    if with_h:
        traj.h = sol.y[:, n_mu:].reshape(-1, d, d)
    norms = traj.norms
    if sol.status == "stopped" or (sol.status == "underflow" and norms[-1] > 10 * max(norms[0], 1e-300)):
        traj.singularity = estimate_singularity(sol.t, norms)
        traj.status = "singular"
    elif sol.status in ("underflow", "max_steps"):
        partial = traj
        err = StepSizeUnderflow(f"bracket flow stalled: {sol.message}", sol.t[-1], mus[-1])
        err.trajectory = partial
        raise err
    if diagnostics:
        traj.diagnostics = _diagnostics(kind, mus, triple0)
    return traj


def _direct_triple(W0, G0, Om, Gop) -> HermitianTriple:
    W = Om.T @ W0
    Gm = Gop.T @ G0
    W = 0.5 * (W - W.T)
    Gm = 0.5 * (Gm + Gm.T)
    return HermitianTriple(W, Gm, -np.linalg.solve(Gm, W))


def integrate_direct(kind, triple0: HermitianTriple, mu_fixed: LieBracket, t_end: float, *,
                     tol: float = 1e-9, atol: float = 1e-12, with_h: bool = False,
                     checkpoints: Sequence[float] = (), max_steps: int = 1_000_000) -> FlowTrajectory:
    """Integrate ``Omega' = -2 Omega P``, ``G' = -2 G Q`` on a fixed bracket.

    ``omega(t) = omega0(Omega ., .)`` and ``g(t) = g0(G ., .)``; compatibility of every
    sampled pair is re-checked and ``J0 Omega = G J`` is monitored.
    """
    kind = FlowKind.parse(kind)
    flow_pq(kind, mu_fixed, triple0, check=True)
    d = mu_fixed.dim
    W0, G0 = np.asarray(triple0.omega), np.asarray(triple0.metric)
    n = d * d
    y0 = np.concatenate([np.eye(d).reshape(-1), np.eye(d).reshape(-1)]
                        + ([np.eye(d).reshape(-1)] if with_h else []))

    def f(t, y):
        Om, Gop = y[:n].reshape(d, d), y[n:2 * n].reshape(d, d)
        tr = _direct_triple(W0, G0, Om, Gop)
        P, Q = flow_pq(kind, mu_fixed, tr, check=False)
        out = [(-2 * Om @ P).reshape(-1), (-2 * Gop @ Q).reshape(-1)]
        if with_h:
            h = y[2 * n:].reshape(d, d)
            out.append((-h @ (P + decompose_operator(Q, tr.J)[1])).reshape(-1))
        return np.concatenate(out)

    sol = dopri5(f, 0.0, y0, t_end, rtol=tol, atol=atol, checkpoints=checkpoints, max_steps=max_steps)
    if sol.status != "done":
        err = StepSizeUnderflow(f"direct flow stalled: {sol.message}", sol.t[-1], sol.y[-1])
        raise err
    m = len(sol.t)
    Om = sol.y[:, :n].reshape(m, d, d)
    Gop = sol.y[:, n:2 * n].reshape(m, d, d)
    omegas = np.einsum("nba,bc->nac", Om, W0)
    metrics = np.einsum("nba,bc->nac", Gop, G0)
    worst = 0.0
    for k in range(m):
        try:
            tr = triple_from_pair(0.5 * (omegas[k] - omegas[k].T), 0.5 * (metrics[k] + metrics[k].T),
                                  tol=FLOW_TOL)
        except (IncompatiblePair, DegenerateForm) as exc:
            raise LossOfCompatibility(f"at t={sol.t[k]:.6g}: {exc}") from exc
        worst = max(worst, float(np.linalg.norm(triple0.J @ Om[k] - Gop[k] @ tr.J)))
    traj = FlowTrajectory(kind, sol.t, np.repeat(mu_fixed.coeffs[None], m, axis=0),
                          omegas=omegas, metrics=metrics, status=sol.status)
    traj.diagnostics = {"omega_G_J_residual": worst}
    if with_h:
        traj.h = sol.y[:, 2 * n:].reshape(m, d, d)
    return traj


def triple_at(traj: FlowTrajectory, i: int) -> HermitianTriple:
    return triple_from_pair(traj.omegas[i], traj.metrics[i], tol=FLOW_TOL)


def pullback(h: np.ndarray, form: np.ndarray) -> np.ndarray:
    """Matrix of ``h^{-1} . form = form(h ., h .)``."""
    return h.T @ form @ h


@dataclass
class CointegrationResult:
    trajectory: FlowTrajectory
    counterpart: FlowTrajectory
    times: np.ndarray
    bracket_residual: np.ndarray   # |mu(t) - h . mu0|
    structure_residual: np.ndarray  # |(omega, g)(t) - (h^-1 . omega0, h^-1 . g0)|

    @property
    def max_residual(self) -> float:
        return float(max(self.bracket_residual.max(initial=0), self.structure_residual.max(initial=0)))


def cointegrate_h(kind, mu0: LieBracket, triple0: HermitianTriple, t_end: float, *,
                  side: str = "bracket", sample_times: Sequence[float] = (), tol: float = 1e-10,
                  mismatch_tol: float = RECONSTRUCTION_TOL) -> CointegrationResult:
    """Carry h(t) along one flow and check both reconstruction identities against the other.

    ``side="bracket"`` uses ``h' = -(P_mu + Q_mu^ac) h`` next to the bracket flow;
    ``side="direct"`` uses ``h' = -h (P + Q^ac)`` next to the direct flow.  In both cases
    ``mu(t) = h . mu0`` and ``(omega, g)(t) = (h^-1 . omega0, h^-1 . g0)`` are evaluated with
    the bracket and structures taken from two independent integrations.
    """
    times = sorted(set(float(t) for t in sample_times) | {float(t_end)})
    W0, G0 = np.asarray(triple0.omega), np.asarray(triple0.metric)
    if side == "bracket":
        main = integrate_bracket(kind, mu0, triple0, t_end, tol=tol, with_h=True, checkpoints=times,
                                 diagnostics=False)
        other = integrate_direct(kind, triple0, mu0, t_end, tol=tol, checkpoints=times)
    elif side == "direct":
        main = integrate_direct(kind, triple0, mu0, t_end, tol=tol, with_h=True, checkpoints=times)
        other = integrate_bracket(kind, mu0, triple0, t_end, tol=tol, checkpoints=times, diagnostics=False)
    else:
        raise ValueError("side must be 'bracket' or 'direct'")
    br, st = [], []
    for t in times:
        i, j = main.index_of(t), other.index_of(t)
        h = main.h[i]
        mu_b = (main if side == "bracket" else other).mus[i if side == "bracket" else j]
        W = (other if side == "bracket" else main).omegas[j if side == "bracket" else i]
        G = (other if side == "bracket" else main).metrics[j if side == "bracket" else i]
        br.append(np.linalg.norm(mu_b - liealg.act(h, mu0)))
        st.append(np.hypot(np.linalg.norm(W - pullback(h, W0)), np.linalg.norm(G - pullback(h, G0))))
    res = CointegrationResult(main, other, np.array(times), np.array(br), np.array(st))
    if res.max_residual > mismatch_tol:
        raise ReconstructionMismatch(f"reconstruction residual {res.max_residual:.3e} > {mismatch_tol:.1e}")
    return res


@dataclass(frozen=True)
class CRFClosedForm:
    t: float
    omega: np.ndarray
    mu: LieBracket
    h: np.ndarray
    T_plus: float
    T_minus: float
    trP: float


def crf_interval(P0: np.ndarray) -> tuple[float, float]:
    p = np.linalg.eigvalsh(0.5 * (P0 + P0.T))
    scale = max(1.0, np.abs(p).max(initial=0.0))
    pos = p[p > 1e-12 * scale]
    neg = p[p < -1e-12 * scale]
    T_plus = 1.0 / (2 * pos.max()) if pos.size else np.inf
    T_minus = 1.0 / (2 * neg.min()) if neg.size else -np.inf
    return T_plus, T_minus


def _symmetric_sqrt(M: np.ndarray, clamp_tol: float = 1e-10) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if w.min(initial=0.0) < -clamp_tol:
        raise OutOfInterval(f"I - 2tP0 has eigenvalue {w.min():.3e} < 0")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def crf_closed_form(mu0: LieBracket, triple0: HermitianTriple, t: float) -> CRFClosedForm:
    """Chern-Ricci flow solution at time t: ``omega0 - 2t p0`` and ``(I - 2tP0)^(1/2) . mu0``."""
    if not triple0.is_orthonormal():
        raise ValueError("closed form assumes the working basis is g0-orthonormal")
    P0 = chern_ricci_operator(mu0, triple0)
    if np.linalg.norm(P0 - P0.T) > 1e-9 * max(1.0, np.linalg.norm(P0)):
        raise ValueError("Chern-Ricci operator is not symmetric; J is not integrable for this bracket")
    T_plus, T_minus = crf_interval(P0)
    if not (T_minus < t < T_plus):
        raise OutOfInterval(f"t={t} outside the existence interval ({T_minus}, {T_plus})")
    M = np.eye(mu0.dim) - 2 * t * P0
    h = _symmetric_sqrt(M)
    p = np.linalg.eigvalsh(0.5 * (P0 + P0.T))
    omega = triple0.omega - 2 * t * chern_ricci_form(mu0, triple0.J)
    return CRFClosedForm(t, omega, liealg.gl_action(h, mu0), h, T_plus, T_minus,
                         float(np.sum(p / (1 - 2 * t * p))))


def crf_structure_coefficients(mu0: LieBracket, P0: np.ndarray, t: float) -> np.ndarray:
    """Coefficients of ``mu(t)`` in an orthonormal eigenbasis of P0, expressed back in the working basis.

    ``mu_ij^k(t) = ((1 - 2t p_k) / ((1 - 2t p_i)(1 - 2t p_j)))^(1/2) c_ij^k``.
    """
    p, V = np.linalg.eigh(0.5 * (P0 + P0.T))
    # structure constants of mu0 in the eigenbasis
    c = np.einsum("ai,bj,abk,kl->ijl", V, V, mu0.coeffs, V)
    s = 1 - 2 * t * p
    c_t = c * np.sqrt(s[None, None, :] / (s[:, None, None] * s[None, :, None]))
    return np.einsum("ai,bj,ijk,lk->abl", V, V, c_t, V)


def diagnostics_rhs(kind, mu: LieBracket, triple0: HermitianTriple) -> tuple[float, float, np.ndarray]:
    """Time derivatives of R, |mu|^2 and Ric along the bracket flow, from their closed expressions."""
    if not triple0.is_orthonormal():
        raise ValueError("diagnostics assume the working basis is g0-orthonormal")
    A = flow_generator(kind, mu, triple0)
    Ric = liealg.ricci_operator(mu)
    M = liealg.moment_map(mu)
    B, H = liealg.killing_and_mean(mu)
    adH = mu.ad(H)
    sym = lambda X: 0.5 * (X + X.T)  # noqa: E731
    ip = lambda X, Y: float(np.sum(X * Y))  # noqa: E731
    dR = 2 * ip(A, Ric) + 2 * ip(A, sym(adH)) - 2 * float((A @ H) @ H)
    dnorm2 = -8 * ip(A, M)
    lap = sym(liealg.delta_adjoint(mu, liealg.delta(mu, A)))
    dRic = (-0.5 * lap - 0.5 * (B @ A + A.T @ B)
            - 2 * sym(mu.ad(sym(A) @ H)) - sym(adH @ A - A @ adH))
    return dR, dnorm2, dRic


def detect_limit(traj: FlowTrajectory, window: int = 20, tol: float = 1e-6) -> Optional[Limit]:
    """Normalized-bracket limit over the trailing window, if the samples have settled."""
    if len(traj) < window:
        return None
    tail = traj.mus[-window:]
    norms = np.sqrt(np.einsum("nijk,nijk->n", tail, tail))
    if np.any(norms == 0):
        return None
    nu = tail / norms[:, None, None, None]
    flat = nu.reshape(window, -1)
    diff = flat[:, None, :] - flat[None, :, :]
    residual = float(np.sqrt(np.einsum("abk,abk->ab", diff, diff)).max())
    if residual >= tol:
        return None
    return Limit(LieBracket(nu[-1]), residual)


def almost_kahler_defect(traj: FlowTrajectory, triple0: HermitianTriple) -> float:
    """Largest |d omega0| along a bracket trajectory, relative to |mu|."""
    worst = 0.0
    for c in traj.mus:
        mu = LieBracket(c)
        worst = max(worst, float(np.abs(ce_differential(mu, triple0.omega)).max()) / max(1.0, mu.norm()))
    return worst
