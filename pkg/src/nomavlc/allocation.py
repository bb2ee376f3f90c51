"""QoS-constrained sum-rate power allocation and the two baselines.

The solver works in cumulative coordinates S_u = sum_{l>=u} P_l.  With
n_u = alpha²/h_u² and c_u = 2^(2 R_u), layer u meets its Shannon-Hartley
threshold iff S_{u+1} <= phi_u(S_u) = (S_u + n_u)/c_u - n_u, and the layers
below can still be served iff S_{u+1} >= L_{u+1} (L_u = c_u (L_{u+1} + n_u) - n_u,
L_{U+1} = 0).  The chain S_{u+1} = L_{u+1} + t_u (phi_u(S_u) - L_{u+1}) maps the
unit box t in [0,1]^(U-1) onto the feasible set, so the recursion step is a
projected-gradient ascent on t, followed by the budget projection, the Omega
bookkeeping and the non-negativity clamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import MobilityModel, mean_square_gain, ordered_pdf
from .errors import DomainError, IterationDegeneracyError, OrderingError
from .noise import NoiseParams
from .rates import PowerVector, expected_rates, rates_sh, rates_static

STATUSES = ("converged", "infeasible", "max_iterations", "qos_violated")


@dataclass(frozen=True)
class QosSpec:
    thresholds: np.ndarray
    total_power: float
    epsilon: float = 1e-8
    max_iterations: int = 10_000

    def __post_init__(self):
        th = np.array(self.thresholds, dtype=float).ravel()
        if np.any(th < 0) or not np.all(np.isfinite(th)):
            raise DomainError("QoS thresholds must be finite and non-negative")
        if not self.total_power > 0:
            raise DomainError("total_power must be positive")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise DomainError("max_iterations must be a positive integer")
        th.setflags(write=False)
        object.__setattr__(self, "thresholds", th)

    def with_total(self, total_power: float) -> "QosSpec":
        return QosSpec(self.thresholds, total_power, self.epsilon, self.max_iterations)


@dataclass(frozen=True)
class AllocationResult:
    powers: PowerVector
    iterations: int
    converged: bool
    constraint_residuals: np.ndarray
    achieved_rates: np.ndarray
    status: str = "converged"
    method: str = "projected"
    diagnostics: dict = field(default_factory=dict)

    @property
    def sum_rate(self) -> float:
        return float(math.fsum(self.achieved_rates))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# status={self.status}\n# converged={str(self.converged).lower()}\n")
            fh.write(f"# iterations={self.iterations}\n# method={self.method}\n")
            for k, v in sorted(self.diagnostics.items()):
                fh.write(f"# {k}={v}\n")
            fh.write("user,power,achieved_rate_bpcu\n")
            for u, (p, r) in enumerate(zip(self.powers.powers, self.achieved_rates), start=1):
                fh.write(f"{u},{float(p)!r},{float(r)!r}\n")


# --------------------------------------------------------------------------
# baseline and building blocks

def _check_gains(h):
    h = np.asarray(h, dtype=float).ravel()
    if h.size == 0:
        raise DomainError("no users")
    if np.any(h <= 0):
        raise DomainError("channel gains must be positive")
    if np.any(np.diff(h) < 0):
        raise OrderingError("channel gains must be sorted ascending")
    return h


def grpa(h, total_power: float) -> PowerVector:
    """Gain-ratio allocation: weight (h_1/h_u)^u, normalized to the budget."""
    h = _check_gains(h)
    w = (h[0] / h) ** np.arange(1, h.size + 1)
    p = total_power * w / np.sum(w)
    p[-1] = total_power - math.fsum(p[:-1])
    return PowerVector(np.maximum(p, 0.0), total_power)


def project_budget(p, total_power: float) -> np.ndarray:
    """Euclidean projection onto the hyperplane sum(p) = total_power."""
    p = np.asarray(p, dtype=float)
    out = p - (math.fsum(p) - total_power) / p.size
    # fold the last rounding residue into the largest entry
    out[np.argmax(out)] += total_power - math.fsum(out)
    return out


def omega_update(p, p_proj, total_power: float) -> np.ndarray:
    """Minimum-norm solution of (I - 11'/U) Omega = p_proj - (I - 11'/U) p - total/U.

    The matrix is the projector onto zero-mean vectors, so its pseudo-inverse
    keeps the zero-mean part of the right-hand side and drops the rest.
    """
    p = np.asarray(p, dtype=float)
    centered = p - np.mean(p)
    rhs = np.asarray(p_proj, dtype=float) - centered - total_power / p.size
    return rhs - np.mean(rhs)


def _clamp_and_repair(p, total_power):
    """Apply [.]_+ and, if that broke the budget, re-project on the positive support."""
    q = np.maximum(p, 0.0)
    for _ in range(p.size):
        gap = total_power - math.fsum(q)
        if abs(gap) <= 1e-12 * max(1.0, total_power):
            break
        support = q > 0 if gap < 0 else np.ones_like(q, dtype=bool)
        q[support] += gap / np.count_nonzero(support)
        q = np.maximum(q, 0.0)
    q[np.argmax(q)] += total_power - math.fsum(q)
    return q


def recursion_power(u: int, powers, qos: QosSpec, noise: NoiseParams, eta=None) -> float:
    """Closed-form stationarity recursion for layer u >= 2 given the layers below it.

    numerator   (2^(R_u+eta_u) - 1) / 2^(R_u+eta_u+1)
    denominator sum_{q<u} (2^(R_q+eta_q) - 1)/(2 P_q) - beta² (2^(R_q+eta_q) - 1)²/P_q²
    """
    p = np.asarray(powers, dtype=float)
    if int(u) != u or not 2 <= u <= p.size:
        raise DomainError(f"recursion applies to layers 2..{p.size}, got {u}")
    r = qos.thresholds + (np.zeros(p.size) if eta is None else np.asarray(eta, dtype=float))
    k = 2.0 ** r - 1.0
    if np.any(p[: u - 1] <= 0):
        raise IterationDegeneracyError(f"layers below {u} need positive power")
    den = float(np.sum(k[: u - 1] / (2.0 * p[: u - 1]) - noise.beta**2 * k[: u - 1] ** 2 / p[: u - 1] ** 2))
    if not den > 0:
        raise IterationDegeneracyError(f"non-positive recursion denominator {den} at layer {u}")
    return float(k[u - 1] / 2.0 ** (r[u - 1] + 1.0) / den)


def rates_approx_nats(p, h, noise: NoiseParams) -> np.ndarray:
    """High-SINR rate form 0.5 ln(1 + P/I) - beta²/I, per layer, in nats."""
    p = np.asarray(p, dtype=float)
    h = _check_gains(h)
    above = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])
    inter = above + noise.alpha**2 / h**2
    return 0.5 * np.log1p(p / inter) - noise.beta**2 / inter


def sum_rate_gradient(u: int, p, h, noise: NoiseParams) -> float:
    """d/dP_u of the summed high-SINR rate form (nats per power unit).

    1/(2(P_u+I_u)) + sum_{q<u} [1/(2(P_q+I_q)) - 1/(2 I_q) + beta²/I_q²]
    """
    p = np.asarray(p, dtype=float)
    h = _check_gains(h)
    above = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])
    inter = above + noise.alpha**2 / h**2
    tot = inter + p
    q = slice(0, u - 1)
    return float(0.5 / tot[u - 1] + np.sum(0.5 / tot[q] - 0.5 / inter[q] + noise.beta**2 / inter[q] ** 2))


def printed_gradient(u: int, p, h, noise: NoiseParams) -> float:
    """The gradient as printed, without the 1/(2(P_q+I_q)) terms for q < u."""
    p = np.asarray(p, dtype=float)
    h = _check_gains(h)
    above = np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])
    inter = above + noise.alpha**2 / h**2
    q = slice(0, u - 1)
    return float(0.5 / (inter[u - 1] + p[u - 1]) - np.sum(0.5 / inter[q] - noise.beta**2 / inter[q] ** 2))


# --------------------------------------------------------------------------
# chain parameterization of the feasible set

@dataclass(frozen=True)
class _Problem:
    n: np.ndarray        # alpha²/h_u²
    c: np.ndarray        # 2^(2 R_u)
    lower: np.ndarray    # L_1..L_{U+1}
    total: float
    beta2: float
    feasible: bool
    # objective noise nodes and weights, shape (U, K); default is n with weight 1
    obj_n: np.ndarray | None = None
    obj_w: np.ndarray | None = None

    @property
    def users(self):
        return self.n.size

    def _nodes(self):
        if self.obj_n is None:
            return self.n[:, None], np.ones((self.users, 1))
        return self.obj_n, self.obj_w

    def chain(self, t):
        s = np.empty(self.users + 1)
        s[0] = self.total
        s[-1] = 0.0
        for u in range(self.users - 1):
            top = (s[u] + self.n[u]) / self.c[u] - self.n[u]
            s[u + 1] = self.lower[u + 1] + t[u] * (top - self.lower[u + 1])
        return s

    def powers(self, s):
        return np.maximum(s[:-1] - s[1:], 0.0)

    def objective(self, s):
        """Sum of ambient-corrected rates in nats, as a function of the cumulative loads."""
        nn, w = self._nodes()
        top = s[:-1, None] + nn
        inter = s[1:, None] + nn
        return float(np.sum(w * (0.5 * np.log(top / inter) - self.beta2 * (1.0 / inter - 1.0 / top))))

    def grad_t(self, t):
        s = self.chain(t)
        U = self.users
        nn, w = self._nodes()
        gs = np.zeros(U + 1)
        for u in range(1, U):
            x = s[u] + nn[u]
            y = s[u] + nn[u - 1]
            gs[u] = (np.sum(w[u] * (0.5 / x - self.beta2 / x**2))
                     - np.sum(w[u - 1] * (0.5 / y - self.beta2 / y**2)))
        gt = np.zeros(U - 1)
        acc = 0.0
        for j in range(U - 1, 0, -1):
            # dS_{j+1}/dS_j = t_j / c_j
            acc = gs[j] + (acc * t[j] / self.c[j] if j < U - 1 else 0.0)
            top = (s[j - 1] + self.n[j - 1]) / self.c[j - 1] - self.n[j - 1]
            gt[j - 1] = acc * (top - self.lower[j])
        return gt, s

    def to_t(self, p):
        """Coordinates of the feasible point nearest (along the chain) to p."""
        p = np.asarray(p, dtype=float)
        want = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
        t = np.zeros(self.users - 1)
        s = self.total
        for u in range(self.users - 1):
            top = (s + self.n[u]) / self.c[u] - self.n[u]
            span = top - self.lower[u + 1]
            t[u] = 0.0 if span <= 0 else min(1.0, max(0.0, (want[u + 1] - self.lower[u + 1]) / span))
            s = self.lower[u + 1] + t[u] * span
        return t

    def residual(self, t):
        g, _ = self.grad_t(t)
        return float(np.max(np.abs(np.clip(t + g, 0.0, 1.0) - t))) if t.size else 0.0


def _problem(effective_gain, qos: QosSpec, noise: NoiseParams, beta2: float, nodes=None) -> _Problem:
    g = _check_gains(effective_gain)
    if qos.thresholds.size != g.size:
        raise DomainError(f"{qos.thresholds.size} QoS thresholds for {g.size} users")
    n = noise.alpha**2 / g**2
    c = 2.0 ** (2.0 * qos.thresholds)
    lower = np.zeros(g.size + 1)
    for u in range(g.size - 1, -1, -1):
        lower[u] = c[u] * (lower[u + 1] + n[u]) - n[u]
    feasible = lower[0] <= qos.total_power * (1 + 1e-12)
    if not feasible:
        # budget-only problem: every split of the budget is admissible
        c = np.ones(g.size)
        lower = np.zeros(g.size + 1)
    obj_n, obj_w = (None, None) if nodes is None else nodes
    return _Problem(n, c, lower, qos.total_power, beta2, bool(feasible), obj_n, obj_w)


def minimum_powers(effective_gain, qos: QosSpec, alpha: float) -> np.ndarray:
    """Smallest powers meeting every SH threshold with all slack given to no one."""
    g = _check_gains(effective_gain)
    n = alpha**2 / g**2
    c = 2.0 ** (2.0 * qos.thresholds)
    lower = np.zeros(g.size + 1)
    for u in range(g.size - 1, -1, -1):
        lower[u] = c[u] * (lower[u + 1] + n[u]) - n[u]
    return lower[:-1] - lower[1:]


def _ascend(prob: _Problem, t0, qos: QosSpec):
    """Projected-gradient ascent in t with Armijo backtracking.

    Each sweep: gradient step and clip to the box (the recursion), then the
    budget projection, the Omega update and the [.]_+ clamp.
    Returns (t, p, iterations, converged, max |Omega|).
    """
    t = np.clip(np.asarray(t0, dtype=float), 0.0, 1.0)
    s = prob.chain(t)
    f = prob.objective(s)
    p = prob.powers(s)
    tol = qos.epsilon * max(1.0, prob.total)
    step = 1.0
    omega_max = 0.0
    for it in range(1, qos.max_iterations + 1):
        p_prev = p
        g, _ = prob.grad_t(t)
        step = min(step * 2.0, 1e12)
        while True:
            t_new = np.clip(t + step * g, 0.0, 1.0)
            s_new = prob.chain(t_new)
            f_new = prob.objective(s_new)
            if f_new >= f + 1e-4 * float(g @ (t_new - t)) or step < 1e-30:
                break
            step *= 0.5
        if f_new < f:
            t_new, s_new, f_new = t, s, f
        t, s, f = t_new, s_new, f_new
        raw = prob.powers(s)
        proj = project_budget(raw, prob.total)
        omega_max = max(omega_max, float(np.max(np.abs(omega_update(raw, proj, prob.total)))))
        p = _clamp_and_repair(proj, prob.total)
        if np.linalg.norm(p - p_prev) <= tol:
            return t, p, it, True, omega_max
    return t, p, qos.max_iterations, False, omega_max


def _starts(prob: _Problem, hints):
    U1 = prob.users - 1
    starts = [np.ones(U1), np.full(U1, 0.5)]
    for k in range(U1):
        e = np.ones(U1)
        e[k] = 0.0
        starts.append(e)
    starts.append(prob.to_t(np.full(prob.users, prob.total / prob.users)))  # uniform initialization
    for h in hints:
        starts.append(prob.to_t(h))
    return starts


def _solve(effective_gain, qos: QosSpec, noise: NoiseParams, beta2: float, hints=(), nodes=None):
    prob = _problem(effective_gain, qos, noise, beta2, nodes)
    if prob.users == 1:
        return prob, np.array([qos.total_power]), 1, True, 0.0, 0.0
    best = None
    for t0 in _starts(prob, hints):
        t, p, its, ok, om = _ascend(prob, t0, qos)
        f = prob.objective(prob.chain(t))
        if best is None or f > best[0] + 1e-13 * abs(best[0]):
            best = (f, t, p, its, ok, om)
    f, t, p, its, ok, om = best
    return prob, p, its, ok, om, prob.residual(t)


def _result(prob, p, its, ok, om, resid, h_eval, qos, noise, method, extra=None) -> AllocationResult:
    power = PowerVector(p, qos.total_power)
    sh = rates_sh(power, h_eval, noise.alpha)
    resid_qos = sh - qos.thresholds
    qos_met = bool(np.all(resid_qos >= -1e-6))
    if not prob.feasible:
        status = "infeasible"
    elif not ok:
        status = "max_iterations"
    elif not qos_met:
        status = "qos_violated"
    else:
        status = "converged"
    diag = {
        "feasible": prob.feasible,
        "minimum_power_total": float(prob.lower[0]) if prob.feasible else float("nan"),
        "stationarity_residual": resid,
        "omega_max": om,
        "objective_bpcu": prob.objective(np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])) / math.log(2.0),
    }
    if extra:
        diag.update(extra)
    return AllocationResult(
        powers=power,
        iterations=its,
        converged=status == "converged",
        constraint_residuals=resid_qos,
        achieved_rates=rates_static(power, h_eval, noise),
        status=status,
        method=method,
        diagnostics=diag,
    )


# --------------------------------------------------------------------------
# public allocators

def allocate_static(h, qos: QosSpec, noise: NoiseParams, method: str = "projected", hints=()) -> AllocationResult:
    """Maximize the summed ambient-corrected rate subject to SH-rate QoS and the budget.

    ``method="recursion"`` runs the literal fixed-point loop instead (recursion for
    layers >= 2 with eta = 0, budget projection, Omega, clamp).  When the
    thresholds cannot be met the projected solver maximizes over the whole
    budget simplex and reports status ``infeasible``.
    """
    h = _check_gains(h)
    if method == "recursion":
        return _allocate_recursion(h, qos, noise)
    if method != "projected":
        raise DomainError(f"unknown allocation method {method!r}")
    base = list(hints) + [grpa(h, qos.total_power).powers]
    if noise.beta > 0:
        _, p_sh, *_ = _solve(h, qos, noise, 0.0, base)
        base.append(p_sh)
    prob, p, its, ok, om, resid = _solve(h, qos, noise, noise.beta**2, base)
    return _result(prob, p, its, ok, om, resid, h, qos, noise, "projected")


def allocate_sh_baseline(h, qos: QosSpec, noise: NoiseParams) -> AllocationResult:
    """Same solver with beta forced to zero in the objective; rates reported under the true beta."""
    h = _check_gains(h)
    prob, p, its, ok, om, resid = _solve(h, qos, noise, 0.0, [grpa(h, qos.total_power).powers])
    return _result(prob, p, its, ok, om, resid, h, qos, noise, "sh_baseline")


def effective_gains(model: MobilityModel, users: int) -> np.ndarray:
    """sqrt of each SIC layer's mean squared gain under the ordered mobility densities."""
    return np.sqrt([mean_square_gain(model, users, u) for u in range(1, users + 1)])


def layer_noise_nodes(model: MobilityModel, users: int, alpha: float, order: int = 64):
    """Gauss-Legendre nodes alpha²/h² and weights under each layer's ordered gain density.

    Returns arrays of shape (users, order); row u integrates a function of
    alpha²/h_(u)² against the density of the u-th smallest gain.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (model.h_max - model.h_min)
    h = model.h_min + half * (x + 1.0)
    weights = np.array([half * w * ordered_pdf(model, users, u, h) for u in range(1, users + 1)])
    weights /= weights.sum(axis=1, keepdims=True)
    return np.broadcast_to(alpha**2 / h**2, weights.shape).copy(), weights


def allocate_mobility(model: MobilityModel, users: int, qos: QosSpec, noise: NoiseParams,
                      baseline: bool = False, objective: str = "expected") -> AllocationResult:
    """Static solver with each layer's gain replaced by sqrt(E[h_(u)²]).

    QoS constraints always use those effective gains.  ``objective="jensen"``
    also maximizes the rate at the effective gains; ``"expected"`` (default)
    maximizes the mobility-averaged sum rate instead, so the reported
    ``achieved_rates`` are layer means over the ordered gain densities.
    ``baseline=True`` gives the beta = 0 design in either case.
    """
    g = effective_gains(model, users)
    if objective == "jensen":
        res = allocate_sh_baseline(g, qos, noise) if baseline else allocate_static(g, qos, noise)
    elif objective == "expected":
        nodes = layer_noise_nodes(model, users, noise.alpha)
        base = [grpa(g, qos.total_power).powers]
        _, p_sh, *_ = _solve(g, qos, noise, 0.0, base, nodes)
        if baseline:
            prob, p, its, ok, om, resid = _solve(g, qos, noise, 0.0, base, nodes)
        else:
            prob, p, its, ok, om, resid = _solve(g, qos, noise, noise.beta**2, base + [p_sh], nodes)
        res = _result(prob, p, its, ok, om, resid, g, qos, noise, "sh_baseline" if baseline else "projected")
        mean_rates = expected_rates(res.powers, noise, model)
        res = replace(res, achieved_rates=mean_rates)
    else:
        raise DomainError(f"unknown mobility objective {objective!r}")
    res.diagnostics["effective_gains"] = " ".join(f"{x:.10g}" for x in g)
    res.diagnostics["objective"] = objective
    return res


def stationarity_residual(powers, h, qos: QosSpec, noise: NoiseParams, beta2: float | None = None) -> float:
    """Projected-gradient residual of the summed rate at ``powers`` on the feasible set."""
    b2 = noise.beta**2 if beta2 is None else beta2
    prob = _problem(h, qos, noise, b2)
    if prob.users == 1:
        return 0.0
    return prob.residual(prob.to_t(powers))


# --------------------------------------------------------------------------
# literal fixed-point loop

def _allocate_recursion(h, qos: QosSpec, noise: NoiseParams) -> AllocationResult:
    U = h.size
    P = qos.total_power
    p = np.full(U, P / U)
    omega = np.zeros(U)
    its, ok = 0, False
    degenerate = 0
    for its in range(1, qos.max_iterations + 1):
        p_prev = p.copy()
        new = p.copy()
        for u in range(2, U + 1):
            try:
                new[u - 1] = recursion_power(u, new, qos, noise) + omega[u - 1]
            except IterationDegeneracyError:
                degenerate += 1
        proj = project_budget(new, P)
        omega = omega_update(new, proj, P)
        p = _clamp_and_repair(proj, P)
        if np.linalg.norm(p - p_prev) <= qos.epsilon * max(1.0, P):
            ok = True
            break
    prob = _problem(h, qos, noise, noise.beta**2)
    resid = prob.residual(prob.to_t(p)) if U > 1 else 0.0
    return _result(prob, p, its, ok, float(np.max(np.abs(omega))), resid, h, qos, noise, "recursion",
                   {"degenerate_steps": degenerate})
