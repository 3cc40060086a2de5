"""Trust-region Newton solver for one weighted binary subproblem.

Minimizes::

    ||w||^2 + c_pos * sum_{z_i=+1} loss(z_i w.x_i) + c_neg * sum_{z_i=-1} loss(z_i w.x_i)

with ``loss`` the squared hinge ``max(0, 1 - m)^2`` or the logistic loss
``log(1 + exp(-m))``. Newton steps are computed by truncated conjugate
gradient restricted to a trust region; only Hessian-vector products are
needed, and for the squared hinge these use the generalized Hessian over the
currently active (margin-violating) examples.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit


class SubproblemLoss(enum.Enum):
    SQUARED_HINGE = "sqhinge"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-3
    max_outer_iterations: int = 100
    max_cg_iterations: int = 50

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_outer_iterations < 1 or self.max_cg_iterations < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass
class SolveResult:
    w: np.ndarray
    converged: bool
    iterations: int
    objective: float
    grad_norm: float


class BinaryProblem:
    """One label's subproblem over a shared, read-only feature matrix."""

    def __init__(
        self,
        features,
        signs,
        c_pos: float,
        c_neg: float,
        loss: SubproblemLoss = SubproblemLoss.SQUARED_HINGE,
    ):
        x = features if sp.issparse(features) else np.atleast_2d(np.asarray(features, dtype=np.float64))
        if sp.issparse(x):
            x = x.tocsr()
        self.features = x
        self.signs = np.asarray(signs, dtype=np.float64).ravel()
        if self.signs.shape[0] != x.shape[0]:
            raise ValueError(f"{self.signs.shape[0]} signs for {x.shape[0]} examples")
        if not np.all(np.abs(self.signs) == 1.0):
            raise ValueError("signs must be -1 or +1")
        if c_pos < 0 or not c_neg > 0:
            raise ValueError(f"need c_pos >= 0 and c_neg > 0, got {c_pos}, {c_neg}")
        self.c_pos = float(c_pos)
        self.c_neg = float(c_neg)
        self.loss = SubproblemLoss(loss)
        self.costs = np.where(self.signs > 0, self.c_pos, self.c_neg)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def _check(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64).ravel()
        if w.shape[0] != self.dim:
            raise ValueError(f"weight vector has length {w.shape[0]}, expected {self.dim}")
        return w

    def margins(self, w) -> np.ndarray:
        return self.signs * (self.features @ self._check(w))

    def objective(self, w) -> float:
        w = self._check(w)
        m = self.margins(w)
        if self.loss is SubproblemLoss.SQUARED_HINGE:
            v = np.maximum(0.0, 1.0 - m)
            data = self.costs @ (v * v)
        else:
            data = self.costs @ np.logaddexp(0.0, -m)
        return float(w @ w + data)

    def gradient(self, w) -> np.ndarray:
        w = self._check(w)
        m = self.margins(w)
        if self.loss is SubproblemLoss.SQUARED_HINGE:
            coef = -2.0 * self.costs * self.signs * np.maximum(0.0, 1.0 - m)
        else:
            coef = -self.costs * self.signs * expit(-m)
        return 2.0 * w + self.features.T @ coef

    def hessian_operator(self, w):
        """Return a function computing ``H v`` at ``w``."""
        m = self.margins(self._check(w))
        if self.loss is SubproblemLoss.SQUARED_HINGE:
            active = np.flatnonzero(m < 1.0)
            xa = self.features[active]
            da = 2.0 * self.costs[active]
        else:
            s = expit(m)
            xa = self.features
            da = self.costs * s * (1.0 - s)

        def hv(v: np.ndarray) -> np.ndarray:
            return 2.0 * v + xa.T @ (da * (xa @ v))

        return hv


def _truncated_cg(hv, g: np.ndarray, delta: float, max_iter: int) -> tuple[np.ndarray, np.ndarray]:
    """Approximately solve ``H s = -g`` subject to ``||s|| <= delta``; returns ``(s, residual)``."""
    s = np.zeros_like(g)
    r = -g
    d = r.copy()
    rr = r @ r
    cg_tol = 0.1 * math.sqrt(g @ g)
    for _ in range(max_iter):
        if math.sqrt(rr) <= cg_tol:
            break
        hd = hv(d)
        dhd = d @ hd
        alpha = rr / dhd
        s_next = s + alpha * d
        if np.linalg.norm(s_next) > delta:
            # step to the boundary along d
            sd, dd, ss = s @ d, d @ d, s @ s
            rad = math.sqrt(max(sd * sd + dd * (delta * delta - ss), 0.0))
            tau = (delta * delta - ss) / (sd + rad) if sd >= 0 else (rad - sd) / dd
            s = s + tau * d
            r = r - tau * hd
            break
        s = s_next
        r = r - alpha * hd
        rr_new = r @ r
        d = r + (rr_new / rr) * d
        rr = rr_new
    return s, r


def solve(problem: BinaryProblem, config: SolverConfig = SolverConfig()) -> SolveResult:
    """Minimize the subproblem objective starting from ``w = 0``.

    Stops when ``||grad|| <= tolerance * max(1, ||grad(0)||)``. When the
    iteration budget runs out the best iterate is returned with
    ``converged=False``.
    """
    eta0, eta1, eta2 = 1e-4, 0.25, 0.75
    sigma1, sigma2, sigma3 = 0.25, 0.5, 4.0

    w = np.zeros(problem.dim)
    f = problem.objective(w)
    g = problem.gradient(w)
    gnorm = float(np.linalg.norm(g))
    stop = config.tolerance * max(1.0, gnorm)
    delta = gnorm
    it = 0
    converged = gnorm <= stop

    while not converged and it < config.max_outer_iterations:
        it += 1
        hv = problem.hessian_operator(w)
        s, r = _truncated_cg(hv, g, delta, config.max_cg_iterations)
        snorm = float(np.linalg.norm(s))
        if it == 1:
            delta = min(delta, snorm)

        w_new = w + s
        f_new = problem.objective(w_new)
        gs = float(g @ s)
        prered = -0.5 * (gs - float(s @ r))
        actred = f - f_new

        if f_new - f - gs <= 0:
            alpha = sigma3
        else:
            alpha = max(sigma1, -0.5 * (gs / (f_new - f - gs)))
        if actred < eta0 * prered:
            delta = min(max(alpha, sigma1) * snorm, sigma2 * delta)
        elif actred < eta1 * prered:
            delta = max(sigma1 * delta, min(alpha * snorm, sigma2 * delta))
        elif actred < eta2 * prered:
            delta = max(sigma1 * delta, min(alpha * snorm, sigma3 * delta))
        else:
            delta = max(delta, min(alpha * snorm, sigma3 * delta))

        if actred > eta0 * prered:
            w, f = w_new, f_new
            g = problem.gradient(w)
            gnorm = float(np.linalg.norm(g))
            if gnorm <= stop:
                converged = True
                break

        # no further progress is representable in floating point
        if prered <= 0 and actred <= 0:
            break
        if abs(actred) <= 1e-12 * abs(f) and abs(prered) <= 1e-12 * abs(f):
            break
        if delta <= 0 or not math.isfinite(delta):
            break

    return SolveResult(w=w, converged=converged, iterations=it, objective=f, grad_norm=gnorm)
