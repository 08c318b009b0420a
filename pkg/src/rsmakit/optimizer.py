"""Weighted-sum-rate precoder optimization by successive convex approximation.

The non-convex problem

    maximize    sum_k u_k (C_k + R_p,k)
    subject to  sum_k C_k <= R_c,k          for every user k
                ||p_c||^2 + sum_k ||p_k||^2 <= P
                C_k + R_p,k >= r_k^th
                C_k >= 0

with finite-blocklength rates R = log2(1+SINR) - sqrt(V(SINR)/N) Q^{-1}(xi)
is convexified around the current iterate:

* every SINR gets a slack gamma and an interference slack beta, with
  beta >= interference + noise (convex quadratic) and
  gamma <= |h^H p|^2 / beta replaced by its first-order under-estimator
  (|z|^2/beta is jointly convex, so the tangent plane is a global lower bound);
* the concave dispersion term sqrt(V(gamma)) is replaced by its tangent line,
  a global upper bound, so the surrogate rate is a global lower bound.

Each surrogate is solved with the log-barrier method in ``ipm``. The previous
iterate is strictly feasible for the next surrogate, so the objective trace
is monotone up to the barrier's duality gap.

SDMA and two-user NOMA reuse the same machinery with parts of the stream
structure removed.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .fbl import FblConfig, fbl_allocation
from .ipm import BarrierOptions, ConvexProgram, InfeasibleStart, barrier_solve
from .txmodel import PrecoderSet, RateAllocation, noma_order, shannon_rates

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
LOG2E = 1.0 / LN2

_START_MARGIN = 1e-8
_POWER_MARGIN = 1e-7
_RATE_FLOOR = -100.0
_GAMMA_LINEARIZATION_FLOOR = 1e-6
_QOS_SLACK_TARGET = 1e-6


class UnsupportedConfiguration(ValueError):
    pass


@dataclass(frozen=True)
class WsrProblem:
    """Weighted-sum-rate problem; ``fbl=None`` means infinite blocklength."""

    channels: ChannelSet
    weights: np.ndarray
    power_budget: float
    fbl: FblConfig | None = None
    qos_rates: np.ndarray | None = None

    def __post_init__(self):
        K = self.channels.num_users
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if weights.shape != (K,) or np.any(weights < 0) or not np.any(weights > 0):
            raise ValueError("weights must be K non-negative values, not all zero")
        qos = np.zeros(K) if self.qos_rates is None else np.asarray(self.qos_rates, dtype=float)
        if qos.shape != (K,) or np.any(qos < 0):
            raise ValueError("qos_rates must be K non-negative values")
        if not self.power_budget > 0:
            raise ValueError("power budget must be positive")
        if self.fbl is not None and len(self.fbl.private_blocklengths) != K:
            raise ValueError("FBL config must list one private blocklength per user")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "qos_rates", qos)

    @property
    def num_users(self) -> int:
        return self.channels.num_users

    def allocation(self, precoders: PrecoderSet, shares) -> RateAllocation:
        if self.fbl is None:
            return shannon_rates(self.channels, precoders, shares)
        return fbl_allocation(self.channels, precoders, self.fbl, shares)


@dataclass
class SolverOptions:
    max_iterations: int = 200
    tolerance: float = 1e-5
    restarts: int = 3
    barrier: BarrierOptions = field(default_factory=BarrierOptions)


@dataclass
class SolveReport:
    scheme: str
    precoders: PrecoderSet | None
    allocation: RateAllocation | None
    objective_trace: list
    iterations: int
    converged: bool
    infeasible: bool = False
    violated: str | None = None
    start: str = ""
    objective: float = -math.inf


@dataclass(frozen=True)
class _Structure:
    has_common: bool
    private_users: tuple
    share_users: tuple


class _Layout:
    """Index bookkeeping for the real-valued SCA variable vector."""

    def __init__(self, structure: _Structure, num_users: int, n_t: int, phase1: bool):
        self.structure = structure
        self.K = num_users
        self.n_t = n_t
        self.phase1 = phase1
        self.streams = (["c"] if structure.has_common else []) + list(structure.private_users)
        pos = 0
        self.p = {}
        for s in self.streams:
            self.p[s] = slice(pos, pos + 2 * n_t)
            pos += 2 * n_t
        self.p_all = slice(0, pos)

        def block(keys):
            nonlocal pos
            out = {k: pos + i for i, k in enumerate(keys)}
            pos += len(keys)
            return out

        self.C = block(structure.share_users)
        users = range(num_users) if structure.has_common else ()
        self.gc = block(users)
        self.bc = block(users)
        self.gp = block(structure.private_users)
        self.bp = block(structure.private_users)
        self.r = block(structure.private_users)
        self.s = pos if phase1 else None
        pos += int(phase1)
        self.n = pos

    def precoder_vector(self, x, stream):
        y = x[self.p[stream]]
        return y[: self.n_t] + 1j * y[self.n_t:]

    def precoders(self, x, power_budget) -> PrecoderSet:
        common = self.precoder_vector(x, "c") if self.structure.has_common else np.zeros(self.n_t, complex)
        privates = np.zeros((self.K, self.n_t), dtype=complex)
        for k in self.structure.private_users:
            privates[k] = self.precoder_vector(x, k)
        return PrecoderSet(common, privates, power_budget)


def _real_gain_rows(h):
    # z = h^H p = (u . y) + j (w . y) with y = [Re p, Im p]
    g = np.conj(h)
    u = np.concatenate([g.real, -g.imag])
    w = np.concatenate([g.imag, g.real])
    return u, w


def _dispersion_root(gamma):
    # sqrt(1 - (1+gamma)^-2) and its derivative
    s = math.sqrt(-math.expm1(-2.0 * math.log1p(gamma)))
    return s, (1.0 + gamma) ** -3 / s


class _Surrogate:
    """Builds the convexified program around a linearization point."""

    def __init__(self, problem: WsrProblem, layout: _Layout):
        self.problem = problem
        self.layout = layout
        ch = problem.channels
        self.rows = [_real_gain_rows(ch.true_channels[k]) for k in range(ch.num_users)]
        self.gain_Q = [np.outer(u, u) + np.outer(w, w) for u, w in self.rows]
        cfg = problem.fbl
        if cfg is None:
            self.pen_common = 0.0
            self.pen_private = np.zeros(ch.num_users)
        else:
            self.pen_common = LOG2E * cfg.penalty_scale(cfg.common_blocklength)
            self.pen_private = np.array([LOG2E * cfg.penalty_scale(n) for n in cfg.private_blocklengths])

    # true |h_k^H p_s|^2 and z values at x
    def z(self, x, k, stream):
        u, w = self.rows[k]
        y = x[self.layout.p[stream]]
        return complex(u @ y, w @ y)

    def interference(self, x, k, exclude=None):
        total = self.problem.channels.noise_vars[k]
        for s in self.layout.structure.private_users:
            if s != exclude:
                total += abs(self.z(x, k, s)) ** 2
        return total

    def penalty_line(self, coef, gamma_bar):
        """(slope, intercept) of the tangent of coef*sqrt(V)/log2e ... at gamma_bar."""
        if coef == 0.0:
            return 0.0, 0.0
        g0 = max(gamma_bar, _GAMMA_LINEARIZATION_FLOOR)
        s, ds = _dispersion_root(g0)
        return coef * ds, coef * (s - ds * g0)

    def surrogate_rate(self, coef, gamma, gamma_bar):
        slope, icpt = self.penalty_line(coef, gamma_bar)
        return math.log2(1.0 + gamma) - slope * gamma - icpt

    def build(self, x_bar) -> ConvexProgram:
        L = self.layout
        prob = self.problem
        n = L.n
        st = L.structure
        obj = np.zeros(n)
        if L.phase1:
            obj[L.s] = -1.0
        else:
            for k, i in L.C.items():
                obj[i] -= prob.weights[k]
            for k, i in L.r.items():
                obj[i] -= prob.weights[k]

        lin_A, lin_b = [], []
        quad_Q, quad_q, quad_r = [], [], []
        log_L, log_d, log_idx, log_kappa = [], [], [], []

        def lin(coeffs, rhs):
            row = np.zeros(n)
            for i, c in coeffs:
                row[i] += c
            lin_A.append(row)
            lin_b.append(rhs)

        def sinr_cut(k, stream, gi, bi):
            # gamma - [2 Re(conj(zb) z)/bb - |zb|^2 beta / bb^2] <= 0
            u, w = self.rows[k]
            zb = self.z(x_bar, k, stream)
            bb = x_bar[bi]
            row = np.zeros(n)
            row[gi] = 1.0
            row[L.p[stream]] -= 2.0 * (zb.real * u + zb.imag * w) / bb
            row[bi] += abs(zb) ** 2 / bb**2
            lin_A.append(row)
            lin_b.append(0.0)

        def interference_bound(k, bi, streams):
            Q = np.zeros((n, n))
            for s in streams:
                sl = L.p[s]
                Q[sl, sl] += self.gain_Q[k]
            q = np.zeros(n)
            q[bi] = -1.0
            quad_Q.append(Q)
            quad_q.append(q)
            quad_r.append(prob.channels.noise_vars[k])

        def rate_bound(lhs, gi, coef):
            # lhs(x) - log2(1+gamma) + tangent penalty <= 0
            slope, icpt = self.penalty_line(coef, x_bar[gi])
            row = np.zeros(n)
            for i, c in lhs:
                row[i] += c
            row[gi] += slope
            log_L.append(row)
            log_d.append(icpt)
            log_idx.append(gi)
            log_kappa.append(LOG2E)

        # total power
        Q = np.zeros((n, n))
        Q[L.p_all, L.p_all] = np.eye(L.p_all.stop)
        quad_Q.append(Q)
        quad_q.append(np.zeros(n))
        quad_r.append(-prob.power_budget)

        shares = [(i, 1.0) for i in L.C.values()]
        if st.has_common:
            for k in range(L.K):
                gi, bi = L.gc[k], L.bc[k]
                interference_bound(k, bi, st.private_users)
                sinr_cut(k, "c", gi, bi)
                rate_bound(shares, gi, self.pen_common)
                lin([(gi, -1.0)], 0.0)
        for k in st.private_users:
            gi, bi = L.gp[k], L.bp[k]
            interference_bound(k, bi, [s for s in st.private_users if s != k])
            sinr_cut(k, k, gi, bi)
            rate_bound([(L.r[k], 1.0)], gi, self.pen_private[k])
            lin([(gi, -1.0)], 0.0)
            lin([(L.r[k], -1.0)], -_RATE_FLOOR)
        for i in L.C.values():
            lin([(i, -1.0)], 0.0)
        for k in range(L.K):
            target = prob.qos_rates[k]
            if target <= 0 and not L.phase1:
                continue
            total = [(L.C[k], -1.0)] if k in L.C else []
            total += [(L.r[k], -1.0)] if k in L.r else []
            if L.phase1:
                if target > 0:
                    lin(total + [(L.s, 1.0)], -target)
            else:
                lin(total, -target)
        if L.phase1:
            # keep the phase-one objective bounded
            lin([(L.s, 1.0)], 1.0)

        return ConvexProgram(
            objective=obj,
            lin_A=np.array(lin_A).reshape(-1, n), lin_b=np.array(lin_b),
            quad_Q=np.array(quad_Q), quad_q=np.array(quad_q), quad_r=np.array(quad_r),
            log_L=np.array(log_L).reshape(-1, n), log_d=np.array(log_d),
            log_idx=np.array(log_idx, dtype=int), log_kappa=np.array(log_kappa),
        )

    def start_point(self, precoders: PrecoderSet) -> np.ndarray:
        """Strictly feasible point built from initial precoders.

        SINR slacks sit just below the true SINRs, rates just below the
        surrogate rates, and common shares split the smallest common rate.
        Raises InfeasibleStart when the common stream has no positive rate.
        """
        L = self.layout
        prob = self.problem
        st = L.structure
        x = np.zeros(L.n)
        scale = min(1.0, math.sqrt(prob.power_budget * (1.0 - _POWER_MARGIN)
                                   / max(precoders.total_power(), 1e-300)))
        for s in L.streams:
            vec = precoders.common if s == "c" else precoders.privates[s]
            vec = vec * scale
            x[L.p[s]] = np.concatenate([vec.real, vec.imag])
        d = _START_MARGIN
        common_rates = []
        if st.has_common:
            for k in range(L.K):
                beta = self.interference(x, k) * (1.0 + d)
                gamma = abs(self.z(x, k, "c")) ** 2 / beta * (1.0 - d)
                x[L.bc[k]], x[L.gc[k]] = beta, gamma
                common_rates.append(self.surrogate_rate(self.pen_common, gamma, gamma))
        for k in st.private_users:
            beta = self.interference(x, k, exclude=k) * (1.0 + d)
            gamma = abs(self.z(x, k, k)) ** 2 / beta * (1.0 - d)
            x[L.bp[k]], x[L.gp[k]] = beta, gamma
            rate = self.surrogate_rate(self.pen_private[k], gamma, gamma)
            x[L.r[k]] = max(rate - d * max(1.0, abs(rate)), _RATE_FLOOR / 2)
        if st.share_users:
            available = min(common_rates)
            if available <= 0:
                raise InfeasibleStart("common stream has no positive rate at this start")
            for k, i in L.C.items():
                x[i] = available * (1.0 - 10 * d) / len(L.C)
        if L.phase1:
            slack = [self._user_total(x, k) - prob.qos_rates[k]
                     for k in range(L.K) if prob.qos_rates[k] > 0]
            x[L.s] = min(slack) - 1.0
        return x

    def _user_total(self, x, k):
        L = self.layout
        return (x[L.C[k]] if k in L.C else 0.0) + (x[L.r[k]] if k in L.r else 0.0)

    def qos_slack(self, x):
        prob = self.problem
        return np.array([self._user_total(x, k) - prob.qos_rates[k] for k in range(self.layout.K)])


def _run_sca(surrogate: _Surrogate, x, options: SolverOptions, stop_at_positive=False):
    trace = []
    converged = False
    it = 0
    for it in range(1, options.max_iterations + 1):
        prog = surrogate.build(x)
        result = barrier_solve(prog, x, options.barrier)
        x = result.x
        trace.append(-result.objective)
        if stop_at_positive and -result.objective > _QOS_SLACK_TARGET:
            converged = True
            break
        if len(trace) > 1 and trace[-1] - trace[-2] < options.tolerance:
            converged = True
            break
    return x, trace, it, converged


def _structure(problem: WsrProblem, scheme: str) -> _Structure:
    K = problem.num_users
    users = tuple(range(K))
    if scheme == "rsma":
        return _Structure(True, users, users)
    if scheme == "sdma":
        return _Structure(False, users, ())
    if scheme == "noma":
        if K != 2:
            raise UnsupportedConfiguration(f"NOMA baseline supports exactly 2 users, got K={K}")
        strong, weak = noma_order(problem.channels)
        return _Structure(True, (strong,), (weak,))
    raise ValueError(f"unknown scheme {scheme!r}")


def _unit(v):
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def _directions(problem: WsrProblem):
    """Unit beam directions: regularized ZF, matched filter, dominant common."""
    ch = problem.channels
    H = ch.true_channels  # rows h_k; received z_k = conj(h_k) . p
    Hc = H.conj()
    K = ch.num_users
    alpha = K * float(np.mean(ch.noise_vars)) / problem.power_budget
    rzf = Hc.conj().T @ np.linalg.inv(Hc @ Hc.conj().T + alpha * np.eye(K))
    rzf = np.array([_unit(rzf[:, k]) for k in range(K)])
    mrt = np.array([_unit(H[k]) for k in range(K)])
    u, _, _ = np.linalg.svd(H.T, full_matrices=False)
    dominant = u[:, 0]
    return rzf, mrt, dominant


def _assemble(problem, structure, common_dir, private_dirs, common_fraction):
    K, n_t = problem.num_users, problem.channels.num_antennas
    P = problem.power_budget
    common = np.zeros(n_t, dtype=complex)
    privates = np.zeros((K, n_t), dtype=complex)
    frac = common_fraction if structure.has_common else 0.0
    if structure.has_common:
        common = math.sqrt(frac * P) * common_dir
    each = (1.0 - frac) * P / len(structure.private_users)
    for k in structure.private_users:
        privates[k] = math.sqrt(each) * private_dirs[k]
    return PrecoderSet(common, privates, P)


def _starts(problem: WsrProblem, scheme: str, structure: _Structure):
    rzf, mrt, dominant = _directions(problem)
    if scheme == "rsma":
        return [
            ("rzf", [dominant], rzf, [0.2, 0.5, 0.8]),
            ("mrt", [dominant], mrt, [0.2, 0.5, 0.8]),
            ("all-common", [dominant], rzf, [0.95]),
        ]
    if scheme == "sdma":
        blend = np.array([_unit(a + b) if np.linalg.norm(a + b) > 0 else a for a, b in zip(rzf, mrt)])
        return [("rzf", [None], rzf, [0.0]), ("mrt", [None], mrt, [0.0]), ("blend", [None], blend, [0.0])]
    strong, weak = structure.private_users[0], structure.share_users[0]
    H = problem.channels.true_channels
    return [
        ("noma-dominant", [dominant], mrt, [0.5, 0.8, 0.2]),
        ("noma-weak-mrt", [_unit(H[weak])], rzf, [0.5, 0.8, 0.2]),
        ("noma-strong-mrt", [_unit(H[strong])], mrt, [0.8, 0.5, 0.2]),
    ]


def _finalize(problem: WsrProblem, scheme, layout, x, trace, iterations, converged, start) -> SolveReport:
    precoders = layout.precoders(x, problem.power_budget)
    shares = np.zeros(problem.num_users)
    for k, i in layout.C.items():
        shares[k] = max(x[i], 0.0)
    base = problem.allocation(precoders, np.zeros(problem.num_users))
    if layout.structure.share_users:
        # shares from the surrogate never exceed the true common rate; top up with the leftover
        shares *= min(1.0, base.common_rate / shares.sum()) if shares.sum() > 0 else 0.0
        leftover = max(base.common_rate - shares.sum(), 0.0)
        best = max(layout.structure.share_users, key=lambda k: problem.weights[k])
        shares[best] += leftover * (1.0 - 1e-12)
    allocation = problem.allocation(precoders, shares)
    return SolveReport(scheme, precoders, allocation, trace, iterations, converged, start=start,
                       objective=allocation.weighted_sum(problem.weights))


def _solve_from(problem, scheme, structure, precoders, options, start_name) -> SolveReport:
    K, n_t = problem.num_users, problem.channels.num_antennas
    needs_phase1 = bool(np.any(problem.qos_rates > 0))
    layout = _Layout(structure, K, n_t, phase1=False)
    surrogate = _Surrogate(problem, layout)
    x = surrogate.start_point(precoders)
    trace, iterations = [], 0
    if needs_phase1 and surrogate.qos_slack(x).min() <= 0:
        layout1 = _Layout(structure, K, n_t, phase1=True)
        surrogate1 = _Surrogate(problem, layout1)
        x1 = surrogate1.start_point(precoders)
        x1, trace1, it1, _ = _run_sca(surrogate1, x1, options, stop_at_positive=True)
        iterations += it1
        if x1[layout1.s] <= _QOS_SLACK_TARGET:
            slack = surrogate1.qos_slack(x1)
            worst = int(np.argmin(slack))
            report = _finalize(problem, scheme, layout1, x1, trace1, iterations, False, start_name)
            report.infeasible = True
            report.violated = (f"QoS of user {worst}: best found rate {slack[worst] + problem.qos_rates[worst]:.6g}"
                               f" < target {problem.qos_rates[worst]:.6g}")
            return report
        x = np.delete(x1, layout1.s)
    x, trace2, it2, converged = _run_sca(surrogate, x, options)
    return _finalize(problem, scheme, layout, x, trace + trace2, iterations + it2, converged, start_name)


def _solve(problem: WsrProblem, scheme: str, options: SolverOptions | None) -> SolveReport:
    options = options or SolverOptions()
    structure = _structure(problem, scheme)
    reports = []
    for name, common_dirs, private_dirs, fractions in _starts(problem, scheme, structure)[: options.restarts]:
        for fraction in fractions:
            precoders = _assemble(problem, structure, common_dirs[0], private_dirs, fraction)
            try:
                reports.append(_solve_from(problem, scheme, structure, precoders, options, name))
                break
            except InfeasibleStart:
                logger.debug("%s start %s with common fraction %.2f has no feasible interior",
                             scheme, name, fraction)
    if scheme == "rsma":
        # the private-only configuration is a feasible RSMA point; keep it as a candidate
        sdma = _solve(problem, "sdma", options)
        sdma.scheme = "rsma"
        sdma.start = "common-off"
        reports.append(sdma)
    if scheme == "noma":
        # switching the weak user's stream off leaves the strong user alone, also a feasible point
        strong = structure.private_users[0]
        alone = _Structure(False, (strong,), ())
        _, mrt, _ = _directions(problem)
        precoders = _assemble(problem, alone, None, mrt, 0.0)
        try:
            report = _solve_from(problem, scheme, alone, precoders, options, "common-off")
            reports.append(report)
        except InfeasibleStart:
            logger.debug("noma common-off start has no feasible interior")
    feasible = [r for r in reports if not r.infeasible]
    if feasible:
        return max(feasible, key=lambda r: r.objective)
    if reports:
        return max(reports, key=lambda r: r.objective_trace[-1] if r.objective_trace else -math.inf)
    return SolveReport(scheme, None, None, [], 0, False, infeasible=True,
                       violated="no start point with a strictly feasible interior")


def solve_rsma(problem: WsrProblem, options: SolverOptions | None = None) -> SolveReport:
    return _solve(problem, "rsma", options)


def solve_sdma(problem: WsrProblem, options: SolverOptions | None = None) -> SolveReport:
    return _solve(problem, "sdma", options)


def solve_noma(problem: WsrProblem, options: SolverOptions | None = None) -> SolveReport:
    return _solve(problem, "noma", options)
