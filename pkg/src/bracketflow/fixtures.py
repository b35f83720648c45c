"""Built-in catalog of (bracket, triple) pairs used by tests, the CLI and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hermitian import HermitianTriple, standard_omega, triple_from_pair, two_form
from .liealg import LieBracket


@dataclass(frozen=True)
class Fixture:
    name: str
    mu: LieBracket
    triple: HermitianTriple
    flows: tuple[str, ...]
    params: dict = field(default_factory=dict)
    note: str = ""


def n4_bracket(a: float = 1.0, b: float = 1.0) -> LieBracket:
    """``mu(e1, e2) = a e3``, ``mu(e1, e3) = b e4``."""
    return LieBracket.from_entries(4, [(1, 2, 3, a), (1, 3, 4, b)])


def n4_omega() -> np.ndarray:
    return two_form(4, [(1, 4, 1.0), (2, 3, 1.0)])


def n4(a: float = 1.0, b: float = 1.0) -> Fixture:
    return Fixture("n4", n4_bracket(a, b), triple_from_pair(n4_omega(), np.eye(4)),
                   ("scf",), {"a": a, "b": b},
                   "3-step nilpotent, strictly almost-Kahler; SCF soliton iff a = b")


def n4_params(mu: LieBracket) -> tuple[float, float]:
    return float(mu.coeffs[0, 1, 2]), float(mu.coeffs[0, 2, 3])


def anna_bracket(a: float = 1.0, b: float = 2.0) -> LieBracket:
    return LieBracket.from_entries(4, [(1, 2, 2, -a), (1, 3, 3, 2 * a), (1, 4, 4, a), (2, 3, 4, b)])


def anna_omega() -> np.ndarray:
    return two_form(4, [(1, 3, 1.0), (2, 4, 1.0)])


def anna(a: float = 1.0, b: float = 2.0) -> Fixture:
    return Fixture("anna", anna_bracket(a, b), triple_from_pair(anna_omega(), np.eye(4)),
                   ("scf",), {"a": a, "b": b},
                   "non-unimodular solvable, almost-Kahler; SCF soliton iff b = 2a")


def anna_params(mu: LieBracket) -> tuple[float, float]:
    return float(-mu.coeffs[0, 1, 1]), float(mu.coeffs[1, 2, 3])


def aff_bracket(s: float = 1.0) -> LieBracket:
    return LieBracket.from_entries(2, [(1, 2, 2, s)])


def aff(s: float = 1.0) -> Fixture:
    return Fixture("aff", aff_bracket(s), triple_from_pair(standard_omega(2), np.eye(2)),
                   ("crf", "scf"), {"s": s}, "hyperbolic plane, Kahler with P = -s^2 I")


def abelian(dim: int = 4) -> Fixture:
    return Fixture("abelian", LieBracket.zero(dim), triple_from_pair(standard_omega(dim), np.eye(dim)),
                   ("crf", "scf", "acrf"), {"dim": dim}, "flat")


def aff_pair(s1: float = 1.0, s2: float = 2.0) -> Fixture:
    """Product of two hyperbolic planes of curvatures -s1^2 and -s2^2, with the product complex structure."""
    mu = LieBracket.from_entries(4, [(1, 2, 2, s1), (3, 4, 4, s2)])
    return Fixture("aff_pair", mu, triple_from_pair(standard_omega(4), np.eye(4)),
                   ("crf", "scf"), {"s1": s1, "s2": s2}, "Kahler, P = -diag(s1^2, s1^2, s2^2, s2^2)")


def h3xR(a: float = 1.0) -> Fixture:
    """Kodaira-Thurston algebra ``[e1, e2] = a e3`` with the abelian complex structure J e1 = e2, J e3 = e4."""
    mu = LieBracket.from_entries(4, [(1, 2, 3, a)])
    return Fixture("h3xR", mu, triple_from_pair(standard_omega(4), np.eye(4)),
                   ("crf",), {"a": a}, "nilpotent hermitian, Chern-Ricci flat, abelian J")


def product83() -> Fixture:
    """aff x (h3 x R): a Chern-Ricci soliton factor times a Chern-Ricci flat nonabelian factor."""
    mu = LieBracket.from_entries(6, [(1, 2, 2, 1.0), (3, 4, 5, 1.0)])
    return Fixture("product83", mu, triple_from_pair(standard_omega(6), np.eye(6)),
                   ("crf",), {}, "semi-algebraic but not a Chern-Ricci soliton")


def nil6(x: float = 0.6) -> Fixture:
    """2-step nilpotent almost-Kahler 6-dim algebra (p = 0, so SCF reduces to acRF)."""
    mu = LieBracket.from_entries(6, [(1, 2, 5, 1.0), (1, 3, 6, 1.0), (2, 4, 6, 1.0), (3, 4, 5, x)])
    W = two_form(6, [(1, 4, 1.0), (2, 6, 1.0), (3, 5, 1.0)])
    return Fixture("nil6", mu, triple_from_pair(W, np.eye(6)), ("acrf", "scf"), {"x": x},
                   "2-step nilpotent, symplectic")


def h3h3(a: float = 1.0, b: float = 1.3) -> Fixture:
    mu = LieBracket.from_entries(6, [(1, 2, 3, a), (4, 5, 6, b)])
    W = two_form(6, [(1, 3, 1.0), (2, 5, 1.0), (4, 6, 1.0)])
    return Fixture("h3h3", mu, triple_from_pair(W, np.eye(6)), ("acrf", "scf"), {"a": a, "b": b},
                   "2-step nilpotent, symplectic")


def sl2c() -> Fixture:
    """Realification of sl(2, C) with J = multiplication by i (a bi-invariant J)."""
    cplx = {(0, 1): {1: 2.0}, (0, 2): {2: -2.0}, (1, 2): {0: 1.0}}
    entries = []
    for (a, b), out in cplx.items():
        for k, v in out.items():
            # basis: e_{2a} = z_a, e_{2a+1} = i z_a
            entries.append((2 * a + 1, 2 * b + 1, 2 * k + 1, v))       # [z_a, z_b]
            entries.append((2 * a + 2, 2 * b + 1, 2 * k + 2, v))       # [i z_a, z_b] = i[z_a, z_b]
            entries.append((2 * a + 1, 2 * b + 2, 2 * k + 2, v))       # [z_a, i z_b]
            entries.append((2 * a + 2, 2 * b + 2, 2 * k + 1, -v))      # [i z_a, i z_b] = -[z_a, z_b]
    mu = LieBracket.from_entries(6, entries)
    return Fixture("sl2c", mu, triple_from_pair(standard_omega(6), np.eye(6)), ("crf",), {},
                   "complex semisimple, bi-invariant J")


CATALOG = {
    "n4": n4,
    "anna": anna,
    "aff": aff,
    "abelian": abelian,
    "aff_pair": aff_pair,
    "h3xR": h3xR,
    "product83": product83,
    "nil6": nil6,
    "h3h3": h3h3,
    "sl2c": sl2c,
}


def get(name: str, **params) -> Fixture:
    try:
        return CATALOG[name](**params)
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(CATALOG)}") from None


def normalized(mu: LieBracket) -> LieBracket:
    return mu * (1.0 / mu.norm())
