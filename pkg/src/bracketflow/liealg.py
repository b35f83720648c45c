"""Lie brackets stored as dense structure constants, and the linear algebra built on them.

A bracket ``mu`` on R^d is stored as ``c[i, j, k]`` with ``mu(e_i, e_j) = sum_k c[i, j, k] e_k``.
Linear maps are plain ``(d, d)`` arrays whose column ``j`` is the image of ``e_j``.
Inner products follow the working basis, which is always taken orthonormal for ``g0``;
callers with another metric pass it explicitly and the functions below move to a
Cholesky frame first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

JACOBI_TOL = 1e-9
DERIVATION_TOL = 1e-10
COND_MAX = 1e12


class BracketError(ValueError):
    """Raised for malformed brackets or incompatible shapes."""


@dataclass(frozen=True)
class LieBracket:
    """Structure constants of a skew-symmetric bracket on R^dim."""

    coeffs: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]):
            raise BracketError(f"structure constants must be (d, d, d), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise BracketError("structure constants must be finite")
        scale = max(1.0, float(np.abs(c).max(initial=0.0)))
        if np.abs(c + c.transpose(1, 0, 2)).max(initial=0.0) > 1e-12 * scale:
            raise BracketError("structure constants are not antisymmetric in (i, j)")
        c = 0.5 * (c - c.transpose(1, 0, 2))
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "dim", c.shape[0])

    @classmethod
    def zero(cls, dim: int) -> "LieBracket":
        return cls(np.zeros((dim, dim, dim)))

    @classmethod
    def from_entries(cls, dim: int, entries: Iterable[tuple[int, int, int, float]],
                     one_based: bool = True) -> "LieBracket":
        """Build a bracket from ``(i, j, k, c)`` entries meaning ``[e_i, e_j] += c e_k``.

        Only one of each antisymmetric pair needs to be listed.
        """
        c = np.zeros((dim, dim, dim))
        off = 1 if one_based else 0
        for i, j, k, v in entries:
            i, j, k = i - off, j - off, k - off
            if not all(0 <= n < dim for n in (i, j, k)):
                raise BracketError(f"index out of range in entry {(i + off, j + off, k + off)}")
            if i == j:
                raise BracketError(f"diagonal entry [e_{i + off}, e_{i + off}] is not allowed")
            c[i, j, k] += v
            c[j, i, k] -= v
        return cls(c)

    def __call__(self, x, y) -> np.ndarray:
        return bracket_eval(self, x, y)

    def __add__(self, other: "LieBracket") -> "LieBracket":
        return LieBracket(self.coeffs + other.coeffs)

    def __sub__(self, other: "LieBracket") -> "LieBracket":
        return LieBracket(self.coeffs - other.coeffs)

    def __mul__(self, s: float) -> "LieBracket":
        return LieBracket(float(s) * self.coeffs)

    __rmul__ = __mul__

    def ad(self, x) -> np.ndarray:
        """Matrix of ``y -> mu(x, y)``."""
        return np.einsum("i,ijk->kj", np.asarray(x, dtype=float), self.coeffs)

    def ad_basis(self) -> np.ndarray:
        """Stack ``ad[i] = ad(e_i)``."""
        return self.coeffs.transpose(0, 2, 1)

    def norm(self) -> float:
        return bracket_norm(self)

    def jacobi_residual(self) -> float:
        """Largest component of the Jacobiator over all basis triples."""
        c = self.coeffs
        jac = np.einsum("ijk,klm->ijlm", c, c)
        cyc = jac + jac.transpose(1, 2, 0, 3) + jac.transpose(2, 0, 1, 3)
        return float(np.abs(cyc).max(initial=0.0))

    def is_lie(self, tol: float = JACOBI_TOL) -> bool:
        return self.jacobi_residual() <= tol * (1.0 + self.norm() ** 3)

    def entries(self, tol: float = 0.0) -> list[tuple[int, int, int, float]]:
        """Independent ``(i, j, k, c)`` entries with ``i < j``, one-based."""
        d = self.dim
        out = []
        for i in range(d):
            for j in range(i + 1, d):
                for k in range(d):
                    v = float(self.coeffs[i, j, k])
                    if abs(v) > tol:
                        out.append((i + 1, j + 1, k + 1, v))
        return out

    def independent_coeffs(self) -> np.ndarray:
        """Values ``c[i, j, k]`` for ``i < j`` in lexicographic ``(i, j, k)`` order."""
        iu, ju = np.triu_indices(self.dim, k=1)
        return self.coeffs[iu, ju, :].reshape(-1)


def _check_dim(mu: LieBracket, *arrays) -> None:
    for a in arrays:
        if np.shape(a)[0] != mu.dim:
            raise BracketError(f"dimension mismatch: bracket has dim {mu.dim}, got {np.shape(a)}")


def bracket_eval(mu: LieBracket, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dim(mu, x, y)
    if x.shape != (mu.dim,) or y.shape != (mu.dim,):
        raise BracketError("bracket arguments must be vectors")
    return np.einsum("i,j,ijk->k", x, y, mu.coeffs)


def act(h: np.ndarray, mu: LieBracket) -> np.ndarray:
    """Raw tensor of ``h mu(h^-1 ., h^-1 .)`` without validation."""
    hinv = np.linalg.inv(h)
    return np.einsum("ai,bj,ijk,lk->abl", hinv.T, hinv.T, mu.coeffs, h)


def gl_action(h: np.ndarray, mu: LieBracket, cond_max: float = COND_MAX) -> LieBracket:
    """The change-of-basis action ``h . mu = h mu(h^-1 ., h^-1 .)``."""
    h = np.asarray(h, dtype=float)
    _check_dim(mu, h)
    if h.shape != (mu.dim, mu.dim):
        raise BracketError(f"h must be square of size {mu.dim}")
    if not np.isfinite(np.linalg.cond(h)) or np.linalg.cond(h) > cond_max:
        raise BracketError("h is singular or too ill-conditioned to act")
    return LieBracket(act(h, mu))


def delta(mu: LieBracket, A: np.ndarray) -> np.ndarray:
    """``delta_mu(A) = mu(A., .) + mu(., A.) - A mu(., .)`` as a (d, d, d) tensor."""
    A = np.asarray(A, dtype=float)
    _check_dim(mu, A)
    c = mu.coeffs
    return (np.einsum("li,ljk->ijk", A, c)
            + np.einsum("lj,ilk->ijk", A, c)
            - np.einsum("kl,ijl->ijk", A, c))


def pi_rep(H: np.ndarray, mu: LieBracket) -> np.ndarray:
    """``pi(H) mu = H mu(., .) - mu(H., .) - mu(., H.)``."""
    return -delta(mu, H)


def delta_matrix(mu: LieBracket) -> np.ndarray:
    """Matrix of ``A -> delta_mu(A)`` from row-major ``vec(A)`` to row-major ``vec`` of the tensor.

    Both flattenings are isometries for the trace and bracket inner products, so the
    transpose of this matrix is the adjoint of ``delta_mu``.
    """
    d = mu.dim
    c = mu.coeffs
    eye = np.eye(d)
    # T[l, m, i, j, k] is the coefficient of A[l, m] in delta_mu(A)[i, j, k]
    T = (np.einsum("mi,ljk->lmijk", eye, c)
         + np.einsum("mj,ilk->lmijk", eye, c)
         - np.einsum("kl,ijm->lmijk", eye, c))
    return T.reshape(d * d, d ** 3).T


def delta_adjoint(mu: LieBracket, lam: np.ndarray) -> np.ndarray:
    """Adjoint of ``delta_mu`` applied to a bracket-shaped tensor."""
    d = mu.dim
    return (delta_matrix(mu).T @ np.asarray(lam, dtype=float).reshape(-1)).reshape(d, d)


def bracket_inner(mu, lam) -> float:
    """Sum over ordered basis pairs of ``g0(mu(e_i, e_j), lam(e_i, e_j))``."""
    a = mu.coeffs if isinstance(mu, LieBracket) else np.asarray(mu)
    b = lam.coeffs if isinstance(lam, LieBracket) else np.asarray(lam)
    if a.shape != b.shape:
        raise BracketError("bracket dimensions differ")
    return float(np.sum(a * b))


def bracket_norm(mu) -> float:
    return float(np.sqrt(max(bracket_inner(mu, mu), 0.0)))


def derivation_basis(mu: LieBracket, tol: float = DERIVATION_TOL) -> list[np.ndarray]:
    """Frobenius-orthonormal basis of Der(mu), the kernel of ``D -> pi(D) mu``."""
    d = mu.dim
    M = delta_matrix(mu)
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    return [row.reshape(d, d) for row in vt[rank:]]


def orthonormal_frame(g0: np.ndarray) -> np.ndarray:
    """Return ``h`` with ``h^T h = g0``; ``h`` maps into coordinates where g0 is the identity."""
    g0 = np.asarray(g0, dtype=float)
    try:
        L = np.linalg.cholesky(g0)
    except np.linalg.LinAlgError as exc:
        raise BracketError("metric is not positive definite") from exc
    return L.T


def _frame(mu: LieBracket, g0):
    if g0 is None or np.allclose(g0, np.eye(mu.dim), rtol=0, atol=1e-15):
        return mu, None
    h = orthonormal_frame(g0)
    return gl_action(h, mu), h


def _back(A: np.ndarray, h) -> np.ndarray:
    return A if h is None else np.linalg.solve(h, A @ h)


def killing_and_mean(mu: LieBracket, g0=None) -> tuple[np.ndarray, np.ndarray]:
    """Killing form ``B[i, j] = tr(ad e_i ad e_j)`` and the mean curvature vector H.

    H is defined by ``g0(H, X) = tr ad X``; the algebra is unimodular iff H = 0.
    """
    ads = mu.ad_basis()
    B = np.einsum("iab,jba->ij", ads, ads)
    tr = np.einsum("iaa->i", ads)
    if g0 is None:
        return B, tr
    return B, np.linalg.solve(np.asarray(g0, dtype=float), tr)


def _moment_map_on(mu: LieBracket) -> np.ndarray:
    d = mu.dim
    M = -0.25 * delta_adjoint(mu, mu.coeffs)
    return 0.5 * (M + M.T) if d else M


def moment_map(mu: LieBracket, g0=None) -> np.ndarray:
    """Symmetric M with ``<M, E> = -1/4 <delta_mu(E), mu>`` for every E."""
    nu, h = _frame(mu, g0)
    return _back(_moment_map_on(nu), h)


def _ricci_on(mu: LieBracket) -> np.ndarray:
    B, H = killing_and_mean(mu)
    adH = mu.ad(H)
    return _moment_map_on(mu) - 0.5 * B - 0.5 * (adH + adH.T)


def ricci_operator(mu: LieBracket, g0=None) -> np.ndarray:
    """Ricci operator of the left-invariant metric g0 on the group of ``mu``."""
    nu, h = _frame(mu, g0)
    return _back(_ricci_on(nu), h)


def scalar_curvature(mu: LieBracket, g0=None) -> float:
    nu, _ = _frame(mu, g0)
    B, H = killing_and_mean(nu)
    return -0.25 * nu.norm() ** 2 - 0.5 * float(np.trace(B)) - float(H @ H)


def center(mu: LieBracket, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal columns spanning ``{z : mu(z, .) = 0}``."""
    d = mu.dim
    # z -> ad(z) as a (d*d, d) matrix
    M = mu.coeffs.reshape(d, d * d).T
    _, s, vt = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    return vt[rank:].T


def random_gl(rng: np.random.Generator, dim: int, spread: float = 0.5) -> np.ndarray:
    """A well-conditioned random element of GL(dim)."""
    while True:
        h = np.eye(dim) + spread * rng.standard_normal((dim, dim))
        if np.linalg.cond(h) < 50:
            return h
