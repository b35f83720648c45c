"""Compatible triples (omega, g, J) and the J-decomposition calculus.

Matrix conventions: ``omega(x, y) = x^T W y`` and ``g(x, y) = x^T G y``.  The relation
``omega = g(J., .)`` then reads ``W = J^T G``, i.e. ``J = -G^{-1} W``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liealg import LieBracket

INGEST_TOL = 1e-9
FLOW_TOL = 1e-6


class IncompatiblePair(ValueError):
    """omega and g do not define an almost-complex structure."""


class DegenerateForm(ValueError):
    """omega is degenerate or g is not positive definite."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HermitianTriple:
    omega: np.ndarray
    metric: np.ndarray
    J: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", _frozen(self.omega))
        object.__setattr__(self, "metric", _frozen(self.metric))
        object.__setattr__(self, "J", _frozen(self.J))

    @property
    def dim(self) -> int:
        return self.omega.shape[0]

    def compatibility_residual(self) -> float:
        """Largest of the defect norms of J^2 = -I, omega = g(J., .) and g(J., J.) = g."""
        d = self.dim
        J, W, G = self.J, self.omega, self.metric
        scale = max(1.0, np.linalg.norm(G))
        return max(np.linalg.norm(J @ J + np.eye(d)),
                   np.linalg.norm(J.T @ G - W) / scale,
                   np.linalg.norm(J.T @ G @ J - G) / scale)

    def is_orthonormal(self) -> bool:
        return bool(np.allclose(self.metric, np.eye(self.dim), rtol=0, atol=1e-14))


def triple_from_pair(omega, metric, tol: float = INGEST_TOL) -> HermitianTriple:
    """Derive J from (omega, g) and check that the pair is compatible."""
    W = np.asarray(omega, dtype=float)
    G = np.asarray(metric, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1] or W.shape != G.shape:
        raise DegenerateForm(f"omega and metric must be square of equal size, got {W.shape}, {G.shape}")
    d = W.shape[0]
    if d % 2:
        raise DegenerateForm(f"dimension must be even, got {d}")
    if np.linalg.norm(W + W.T) > tol * max(1.0, np.linalg.norm(W)):
        raise DegenerateForm("omega is not antisymmetric")
    if np.linalg.norm(G - G.T) > tol * max(1.0, np.linalg.norm(G)):
        raise DegenerateForm("metric is not symmetric")
    W = 0.5 * (W - W.T)
    G = 0.5 * (G + G.T)
    if np.linalg.eigvalsh(G).min() <= 0:
        raise DegenerateForm("metric is not positive definite")
    if abs(np.linalg.det(W)) < 1e-12 * max(1.0, np.linalg.norm(W)) ** d:
        raise DegenerateForm("omega is degenerate")
    J = -np.linalg.solve(G, W)
    defect = np.linalg.norm(J @ J + np.eye(d))
    if defect > tol:
        raise IncompatiblePair(f"J^2 + I has norm {defect:.3e} > {tol:.1e}")
    return HermitianTriple(W, G, J)


def standard_omega(dim: int) -> np.ndarray:
    """``e^1 ^ e^2 + e^3 ^ e^4 + ...``."""
    W = np.zeros((dim, dim))
    for i in range(0, dim, 2):
        W[i, i + 1], W[i + 1, i] = 1.0, -1.0
    return W


def two_form(dim: int, pairs, one_based: bool = True) -> np.ndarray:
    """Antisymmetric matrix of ``sum coeff * e^i ^ e^j`` from ``(i, j, coeff)`` triples."""
    W = np.zeros((dim, dim))
    off = 1 if one_based else 0
    for i, j, v in pairs:
        W[i - off, j - off] += v
        W[j - off, i - off] -= v
    return W


def decompose_operator(A, J) -> tuple[np.ndarray, np.ndarray]:
    """``A = A^c + A^ac`` with ``A^c = (A - JAJ)/2`` commuting with J."""
    A = np.asarray(A, dtype=float)
    JAJ = J @ A @ J
    return 0.5 * (A - JAJ), 0.5 * (A + JAJ)


def complex_part(A, J) -> np.ndarray:
    return decompose_operator(A, J)[0]


def anti_complex_part(A, J) -> np.ndarray:
    return decompose_operator(A, J)[1]


def decompose_form(p, J) -> tuple[np.ndarray, np.ndarray]:
    """(1,1) and (2,0)+(0,2) parts of a bilinear form given by its matrix."""
    p = np.asarray(p, dtype=float)
    pJJ = J.T @ p @ J
    return 0.5 * (p + pJJ), 0.5 * (p - pJJ)


def omega_transpose(A, triple: HermitianTriple) -> np.ndarray:
    """``A^{t_omega}``, defined by ``omega(A., .) = omega(., A^{t_omega} .)``."""
    W = triple.omega
    return np.linalg.solve(W, np.asarray(A, dtype=float).T @ W)


def metric_transpose(A, metric) -> np.ndarray:
    """Adjoint of A with respect to the metric."""
    G = np.asarray(metric, dtype=float)
    return np.linalg.solve(G, np.asarray(A, dtype=float).T @ G)


def nijenhuis(mu: LieBracket, J) -> np.ndarray:
    """``N(X, Y) = [JX, JY] - [X, Y] - J[JX, Y] - J[X, JY]`` on basis pairs, as N[i, j, k]."""
    c = mu.coeffs
    JXJY = np.einsum("ai,bj,abk->ijk", J, J, c)
    JXY = np.einsum("ai,ajk->ijk", J, c)
    XJY = np.einsum("bj,ibk->ijk", J, c)
    return JXJY - c - np.einsum("kl,ijl->ijk", J, JXY + XJY)


def is_integrable(mu: LieBracket, J, tol: float = 1e-10) -> bool:
    return float(np.linalg.norm(nijenhuis(mu, J))) <= tol * max(1.0, mu.norm())


def ce_differential(mu: LieBracket, form) -> np.ndarray:
    """Chevalley-Eilenberg differential of a 2-form, as a (d, d, d) array.

    ``d w(X, Y, Z) = -w(mu(X, Y), Z) + w(mu(X, Z), Y) - w(mu(Y, Z), X)``.
    """
    W = np.asarray(form, dtype=float)
    # w(mu(e_i, e_j), e_l) = c[i, j, k] W[k, l]
    t = np.einsum("ijk,kl->ijl", mu.coeffs, W)
    return (-t + np.einsum("ilj->ijl", t) - np.einsum("jli->ijl", t))


def is_closed(mu: LieBracket, form, tol: float = 1e-10) -> bool:
    scale = max(1.0, mu.norm()) * max(1.0, float(np.linalg.norm(form)))
    return float(np.abs(ce_differential(mu, form)).max(initial=0.0)) <= tol * scale


def is_almost_kahler(mu: LieBracket, triple: HermitianTriple, tol: float = 1e-10) -> bool:
    return is_closed(mu, triple.omega, tol)
