"""Log-barrier interior-point method for small smooth convex programs.

The programs handled here have a linear objective and three constraint
families, all written as ``f(x) <= 0``:

* linear:     A x - b <= 0
* quadratic:  x' Q x + q' x + r <= 0          (Q symmetric PSD)
* log-type:   l' x + d - kappa * log(1 + x[j]) <= 0   (kappa > 0)

That is exactly what a convexified rate/SINR subproblem needs, and the
barrier Hessians of all three families have closed forms. Dense linear
algebra throughout; problems are a few dozen variables.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

class InfeasibleStart(ValueError):
    """Starting point is not strictly inside the feasible set."""


@dataclass
class BarrierOptions:
    gap_tol: float = 1e-7
    # 100 skips the first, nearly useless, centering steps without hurting accuracy
    t0: float = 100.0
    mu: float = 20.0
    newton_tol: float = 1e-10
    max_newton: int = 200
    max_outer: int = 60


@dataclass
class ConvexProgram:
    objective: np.ndarray
    lin_A: np.ndarray = None
    lin_b: np.ndarray = None
    quad_Q: np.ndarray = None
    quad_q: np.ndarray = None
    quad_r: np.ndarray = None
    log_L: np.ndarray = None
    log_d: np.ndarray = None
    log_idx: np.ndarray = None
    log_kappa: np.ndarray = None

    def __post_init__(self):
        n = self.objective.shape[0]
        if self.lin_A is None:
            self.lin_A, self.lin_b = np.zeros((0, n)), np.zeros(0)
        if self.quad_Q is None:
            self.quad_Q, self.quad_q, self.quad_r = np.zeros((0, n, n)), np.zeros((0, n)), np.zeros(0)
        if self.log_L is None:
            self.log_L, self.log_d = np.zeros((0, n)), np.zeros(0)
            self.log_idx, self.log_kappa = np.zeros(0, dtype=int), np.zeros(0)
        self.log_idx = np.asarray(self.log_idx, dtype=int)

    @property
    def num_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def num_constraints(self) -> int:
        return self.lin_b.shape[0] + self.quad_r.shape[0] + self.log_d.shape[0]

    def constraint_values(self, x):
        """(linear, quadratic, log) constraint values; NaN-free only on the log domain."""
        lin = self.lin_A @ x - self.lin_b
        Qx = self.quad_Q @ x
        quad = Qx @ x + self.quad_q @ x + self.quad_r
        arg = 1.0 + x[self.log_idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            log = self.log_L @ x + self.log_d - self.log_kappa * np.log(arg)
        log = np.where(arg > 0, log, np.inf)
        return lin, quad, log

    def max_violation(self, x) -> float:
        values = np.concatenate(self.constraint_values(x))
        return float(values.max()) if values.size else -np.inf


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    gap: float
    newton_steps: int
    outer_steps: int
    converged: bool


def _phi(prog, x, t):
    lin, quad, log = prog.constraint_values(x)
    if lin.size and lin.max() >= 0 or quad.size and quad.max() >= 0 or log.size and log.max() >= 0:
        return np.inf
    return (t * prog.objective @ x - np.log(-lin).sum() - np.log(-quad).sum()
            - np.log(-log).sum())


def _newton_system(prog, x, t):
    lin, quad, log = prog.constraint_values(x)
    n = prog.num_vars
    grad = t * prog.objective.copy()
    hess = np.zeros((n, n))
    if lin.size:
        w = 1.0 / -lin
        grad += prog.lin_A.T @ w
        Aw = prog.lin_A * w[:, None]
        hess += Aw.T @ Aw
    if quad.size:
        w = 1.0 / -quad
        g = 2.0 * (prog.quad_Q @ x) + prog.quad_q
        grad += g.T @ w
        gw = g * w[:, None]
        hess += gw.T @ gw + 2.0 * np.tensordot(w, prog.quad_Q, axes=1)
    if log.size:
        w = 1.0 / -log
        arg = 1.0 + x[prog.log_idx]
        g = prog.log_L.copy()
        g[np.arange(log.size), prog.log_idx] -= prog.log_kappa / arg
        grad += g.T @ w
        gw = g * w[:, None]
        hess += gw.T @ gw
        np.add.at(hess, (prog.log_idx, prog.log_idx), w * prog.log_kappa / arg**2)
    return grad, hess


def _solve_newton(hess, grad):
    scale = np.sqrt(np.clip(np.diag(hess), 1e-300, None))
    scaled = hess / np.outer(scale, scale)
    try:
        step = cho_solve(cho_factor(scaled, check_finite=False), -grad / scale, check_finite=False)
    except np.linalg.LinAlgError:
        step = np.linalg.lstsq(scaled + 1e-12 * np.eye(len(grad)), -grad / scale, rcond=None)[0]
    return step / scale


def barrier_solve(prog: ConvexProgram, x0, options: BarrierOptions = None) -> BarrierResult:
    """Minimize ``prog.objective @ x`` from a strictly feasible ``x0``."""
    options = options or BarrierOptions()
    x = np.array(x0, dtype=float)
    if prog.max_violation(x) >= 0:
        raise InfeasibleStart(f"start point violates a constraint by {prog.max_violation(x):.3g}")
    m = prog.num_constraints
    t = options.t0
    total_newton = 0
    outer = 0
    converged = False
    while outer < options.max_outer:
        outer += 1
        phi = _phi(prog, x, t)
        for _ in range(options.max_newton):
            grad, hess = _newton_system(prog, x, t)
            dx = _solve_newton(hess, grad)
            decrement = -grad @ dx
            total_newton += 1
            if decrement / 2.0 <= options.newton_tol:
                break
            step = 1.0
            slope = grad @ dx
            while True:
                candidate = x + step * dx
                phi_new = _phi(prog, candidate, t)
                if phi_new <= phi + 0.25 * step * slope:
                    break
                step *= 0.5
                if step < 1e-14:
                    break
            if step < 1e-14:
                # no representable decrease left; the centering is as good as float allows
                break
            x, phi = candidate, phi_new
        if m / t < options.gap_tol:
            converged = True
            break
        t *= options.mu
    return BarrierResult(x, float(prog.objective @ x), m / t, total_newton, outer, converged)
