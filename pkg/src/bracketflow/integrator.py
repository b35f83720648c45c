"""Dormand-Prince 5(4) integrator with PI step-size control.

Works on flat float arrays and integrates in either time direction.  Every accepted
step is recorded so callers can compute diagnostics on the actual solver grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

# Butcher tableau (Hairer, Norsett & Wanner, Solving ODEs I, p. 178)
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
E = B5 - B4

SAFETY = 0.9
FAC_MIN, FAC_MAX = 0.2, 5.0
# PI controller exponents for a 5th order pair (Hairer & Wanner, II.4)
ALPHA = 0.7 / 5
BETA = 0.4 / 5


class StepSizeUnderflow(RuntimeError):
    def __init__(self, msg, t, y):
        super().__init__(msg)
        self.t = t
        self.y = y


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    status: str  # "done", "stopped", "underflow"
    nfev: int = 0
    rejected: int = 0
    message: str = ""
    accepted_h: list = field(default_factory=list)


def _initial_step(f, t0, y0, f0, direction, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = f(t0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def dopri5(f: Callable[[float, np.ndarray], np.ndarray], t0: float, y0: np.ndarray, t_end: float,
           rtol: float = 1e-9, atol: float = 1e-12,
           stop: Optional[Callable[[float, np.ndarray], bool]] = None,
           checkpoints: Sequence[float] = (),
           h_min_rel: float = 1e-14, max_steps: int = 1_000_000,
           h_max: float = np.inf) -> Solution:
    """Integrate ``y' = f(t, y)`` from t0 to t_end.

    ``stop(t, y)`` is evaluated after each accepted step and ends the run when true.
    Steps are shortened to land exactly on every checkpoint.
    Step underflow ends the run with status ``"underflow"`` rather than raising, so the
    caller decides whether it signals a singularity.
    """
    y = np.array(y0, dtype=float).reshape(-1)
    t = float(t0)
    direction = 1.0 if t_end >= t0 else -1.0
    marks = sorted({float(c) for c in checkpoints if direction * (c - t0) > 0 and direction * (t_end - c) > 0},
                   key=lambda c: direction * c)
    marks.append(t_end)
    ts, ys, hs = [t], [y.copy()], []
    if t_end == t0:
        return Solution(np.array(ts), np.array(ys), "done")
    k1 = f(t, y)
    nfev = 2
    h = min(_initial_step(f, t, y, k1, direction, rtol, atol), h_max)
    err_prev = 1e-4
    rejected = 0
    next_mark = 0
    status, message = "done", ""
    for _ in range(max_steps):
        target = marks[next_mark]
        h = min(h, abs(target - t))
        if h <= h_min_rel * max(1.0, abs(t)):
            status, message = "underflow", f"step size {h:.3e} underflow at t={t:.17g}"
            break
        dt = direction * h
        K = [k1]
        for s in range(1, 7):
            ys_ = y + dt * sum(a * k for a, k in zip(A[s], K))
            K.append(f(t + C[s] * dt, ys_))
        nfev += 6
        y_new = y + dt * sum(b * k for b, k in zip(B5, K))
        err_vec = dt * sum(e * k for e, k in zip(E, K))
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if not np.isfinite(err):
            h *= FAC_MIN
            rejected += 1
            continue
        if err <= 1.0:
            t_new = target if h == abs(target - t) else t + dt
            t, y = t_new, y_new
            k1 = K[6]
            ts.append(t)
            ys.append(y.copy())
            hs.append(h)
            fac = SAFETY * max(err, 1e-10) ** (-ALPHA) * err_prev ** BETA
            h = min(h * min(FAC_MAX, max(FAC_MIN, fac)), h_max)
            err_prev = max(err, 1e-4)
            if t == target:
                next_mark += 1
                if next_mark == len(marks):
                    break
            if stop is not None and stop(t, y):
                status = "stopped"
                break
        else:
            rejected += 1
            h *= max(FAC_MIN, SAFETY * err ** (-1 / 5))
    else:
        status, message = "max_steps", "maximum number of steps reached"
    if status == "underflow":
        log.debug(message)
    return Solution(np.array(ts), np.array(ys), status, nfev, rejected, message, hs)
