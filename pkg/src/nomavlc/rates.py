"""Per-user achievable rates under ambient light, static and mobility-averaged.

Layers are numbered 1..U in ascending channel-gain order; layer u decodes and
cancels nothing above it, so layers l > u act as interference.  Rates are in
bits per channel use (bpcu); entropies are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .channel import MobilityModel, ordered_pdf, ordered_pdf_terms, sample_ordered_gains
from .errors import DomainError, NomaVlcError, OrderingError, PoleError
from .noise import NoiseParams, histogram_entropy, pdf_oracle
from .specfun import QuadratureSpec, adaptive_quad, gauss_2f1

LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# containers

@dataclass(frozen=True)
class PowerVector:
    powers: np.ndarray
    total: float

    def __post_init__(self):
        p = np.array(self.powers, dtype=float).ravel()
        if p.size == 0:
            raise DomainError("power vector is empty")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError(f"powers must be finite and non-negative, got {p}")
        if abs(float(np.sum(p)) - self.total) > 1e-9 * max(1.0, abs(self.total)):
            raise DomainError(f"powers sum to {np.sum(p)!r}, expected total {self.total!r}")
        p.setflags(write=False)
        object.__setattr__(self, "powers", p)
        object.__setattr__(self, "total", float(self.total))

    @classmethod
    def of(cls, powers) -> "PowerVector":
        p = np.asarray(powers, dtype=float)
        return cls(p, float(np.sum(p)))

    def __len__(self):
        return self.powers.size


@dataclass(frozen=True)
class RateReport:
    per_user: np.ndarray
    sum: float
    method: str
    diagnostics: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.per_user, dtype=float)
        if not np.all(np.isfinite(r)):
            raise DomainError("per-user rates must be finite")
        if self.method not in ("analytic", "quadrature", "monte_carlo"):
            raise DomainError(f"unknown rate method {self.method!r}")
        if abs(self.sum - float(np.sum(r))) > 1e-9:
            raise DomainError("sum does not match per-user rates")
        object.__setattr__(self, "per_user", r)

    @classmethod
    def from_rates(cls, rates, method, diagnostics=None) -> "RateReport":
        r = np.asarray(rates, dtype=float)
        return cls(r, sum_rate(r), method, dict(diagnostics or {}))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("user,rate_bpcu,method\n")
            for u, r in enumerate(self.per_user, start=1):
                fh.write(f"{u},{float(r)!r},{self.method}\n")
            fh.write(f"sum,{self.sum!r},{self.method}\n")

    def diagnostics_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in sorted(self.diagnostics.items()))


def sum_rate(rates) -> float:
    return float(math.fsum(np.asarray(rates, dtype=float).ravel()))


# --------------------------------------------------------------------------
# static rates

def _powers(p) -> np.ndarray:
    return p.powers if isinstance(p, PowerVector) else np.asarray(p, dtype=float)


def _check(u, p, h):
    h = np.asarray(h, dtype=float)
    if h.shape != p.shape:
        raise DomainError(f"{p.size} powers but {h.size} gains")
    if np.any(np.diff(h) < 0):
        raise OrderingError("channel gains must be sorted ascending")
    if np.any(h <= 0):
        raise DomainError("channel gains must be positive")
    if u is not None and (int(u) != u or not 1 <= u <= p.size):
        raise DomainError(f"layer must lie in 1..{p.size}, got {u}")
    return h


def interference(u: int, p, h, alpha: float) -> float:
    """I = sum of powers above layer u plus alpha²/h_u²."""
    pw = _powers(p)
    h = _check(u, pw, h)
    return float(np.sum(pw[u:])) + alpha**2 / h[u - 1] ** 2


def _layer_terms(pw, h, alpha):
    above = np.concatenate([np.cumsum(pw[::-1])[::-1][1:], [0.0]])
    inter = above + alpha**2 / h**2
    return inter, inter + pw


def rates_sh(p, h, alpha: float) -> np.ndarray:
    pw = _powers(p)
    h = _check(None, pw, h)
    inter, total = _layer_terms(pw, h, alpha)
    return 0.5 * np.log2(total / inter)


def rates_static(p, h, noise: NoiseParams) -> np.ndarray:
    """All layers' ambient-corrected rates."""
    pw = _powers(p)
    h = _check(None, pw, h)
    inter, total = _layer_terms(pw, h, noise.alpha)
    penalty = noise.beta**2 * pw / (inter * total)
    return 0.5 * np.log2(total / inter) - penalty / LN2


def rate_sh(u: int, p, h, alpha: float) -> float:
    """Shannon-Hartley rate 0.5 log2(1 + P_u/I_u)."""
    pw = _powers(p)
    _check(u, pw, h)
    return float(rates_sh(pw, h, alpha)[u - 1])


def rate_static(u: int, p, h, noise: NoiseParams) -> float:
    """Ambient-corrected rate: SH rate minus beta² P/(I (P + I)) / ln 2."""
    pw = _powers(p)
    _check(u, pw, h)
    return float(rates_static(pw, h, noise)[u - 1])


def entropy_y(u: int, p, h, noise: NoiseParams) -> float:
    """Entropy (nats) of the received mixture at layer u, Gaussian part S = P + I."""
    i = interference(u, p, h, noise.alpha)
    s = _powers(p)[u - 1] + i
    return 0.5 * math.log(2 * math.pi * s) + 0.5 + noise.beta**2 / s


def entropy_p(u: int, p, h, noise: NoiseParams) -> float:
    """Entropy (nats) of interference plus distortion at layer u."""
    i = interference(u, p, h, noise.alpha)
    return 0.5 * math.log(2 * math.pi * i) + 0.5 + noise.beta**2 / i


def entropy_phi(noise: NoiseParams) -> float:
    """(alpha² + beta²)/(2 alpha²) + 0.5 ln(2 pi alpha²)."""
    a2 = noise.alpha**2
    return (a2 + noise.beta**2) / (2 * a2) + 0.5 * math.log(2 * math.pi * a2)


# --------------------------------------------------------------------------
# exact Gaussian-input mutual information by quadrature

_ENTROPY_QUAD = QuadratureSpec(abs_tol=1e-9, rel_tol=1e-9)


def mixture_entropy(sigma2: float, noise: NoiseParams) -> float:
    """Differential entropy (nats) of N(0, sigma2) plus the centered chi-squared distortion."""
    if noise.beta == 0.0:
        return 0.5 * math.log(2 * math.pi * math.e * sigma2)
    mix = NoiseParams(math.sqrt(sigma2), noise.beta, noise.nu)

    def integrand(x):
        q = pdf_oracle(mix, x)
        return np.where(q > 0, -q * np.log(np.where(q > 0, q, 1.0)), 0.0)

    sd = math.sqrt(sigma2 + noise.beta**2)
    lo = -12.0 * sd - noise.beta_prime * noise.nu
    hi = 12.0 * sd + noise.beta_prime * (12.0 * math.sqrt(2.0 * noise.nu) + 12.0)
    return adaptive_quad(integrand, lo, hi, _ENTROPY_QUAD).value


def rate_quadrature(u: int, p, h, noise: NoiseParams) -> float:
    """Mutual information for Gaussian signalling under the exact distortion law (bpcu)."""
    pw = _powers(p)
    if pw[u - 1] == 0.0:
        return 0.0
    i = interference(u, pw, h, noise.alpha)
    return (mixture_entropy(pw[u - 1] + i, noise) - mixture_entropy(i, noise)) / LN2


def mc_rate_entropy(u: int, p, h, noise: NoiseParams, n: int = 100_000, seed: int = 0) -> float:
    """Histogram-entropy estimate of H(Y) - H(P) from simulated mixtures, in bpcu.

    Y = signal + P where P is Gaussian interference-plus-noise plus the centered
    chi-squared distortion; the same draws of P are reused for both entropies.
    """
    if n < 100_000:
        raise DomainError(f"need at least 1e5 samples for the entropy estimate, got {n}")
    pw = _powers(p)
    if pw[u - 1] == 0.0:
        return 0.0
    i = interference(u, pw, h, noise.alpha)
    rng = np.random.default_rng(seed)
    sig = math.sqrt(pw[u - 1]) * rng.standard_normal(n)
    gauss = math.sqrt(i) * rng.standard_normal(n)
    w = rng.chisquare(noise.nu, n)
    dist = gauss + noise.beta_prime * (w - noise.nu)
    return (histogram_entropy(sig + dist) - histogram_entropy(dist)) / LN2


# --------------------------------------------------------------------------
# antiderivatives

def log_power_antiderivative(x: float, theta: float, b: float, c: float) -> float:
    """Antiderivative of x^-theta ln(b x + c) in x (b >= 0, c > 0)."""
    if theta in (1.0, 2.0):
        raise PoleError(f"theta = {theta} is a pole of the log antiderivative; integrate numerically")
    if not (x > 0 and b >= 0 and c > 0):
        raise DomainError("log_power_antiderivative needs x > 0, b >= 0, c > 0")
    tm1 = theta - 1.0
    f = gauss_2f1(1.0, 1.0 - theta, 2.0 - theta, -b * x / c)
    return x ** (1.0 - theta) * (f - tm1 * math.log(b * x + c) - 1.0) / tm1**2


def penalty_antiderivative(x: float, theta: float, k1: float, k2: float, zeta: float, beta_sq: float = 1.0) -> float:
    """Antiderivative of beta_sq x^(1-theta)/zeta² [(1 + k1 x/zeta²)^-1 - (1 + k2 x/zeta²)^-1]."""
    if theta == 2.0 or (theta > 2.0 and float(theta).is_integer()):
        raise PoleError(f"theta = {theta} is a pole of the penalty antiderivative; integrate numerically")
    if not (x > 0 and k1 >= 0 and k2 >= 0 and zeta > 0):
        raise DomainError("penalty_antiderivative needs x > 0, k1, k2 >= 0, zeta > 0")
    z2 = zeta * zeta
    c = 3.0 - theta
    diff = gauss_2f1(1.0, 2.0 - theta, c, -k1 * x / z2) - gauss_2f1(1.0, 2.0 - theta, c, -k2 * x / z2)
    return beta_sq * x ** (2.0 - theta) / (z2 * (2.0 - theta)) * diff


# --------------------------------------------------------------------------
# mobility-averaged rates

_RATE_QUAD = QuadratureSpec(abs_tol=1e-11, rel_tol=1e-10)


def _layer_loads(u, pw):
    """Interference power above layer u and that plus the layer's own power."""
    above = float(np.sum(pw[u:]))
    return above, above + pw[u - 1]


def layer_rate_at_gain(u: int, p, h, noise: NoiseParams):
    """Rate of layer u when its own gain is h (vectorized in h), in bpcu."""
    pw = _powers(p)
    above, load = _layer_loads(u, pw)
    h = np.asarray(h, dtype=float)
    a2 = noise.alpha**2
    inter = above + a2 / h**2
    total = load + a2 / h**2
    return 0.5 * np.log2(total / inter) - noise.beta**2 * pw[u - 1] / (inter * total) / LN2


def _check_layer(u, pw):
    if int(u) != u or not 1 <= u <= pw.size:
        raise DomainError(f"layer must lie in 1..{pw.size}, got {u}")


def weighted_rate_quadrature(theta: float, u: int, p, noise: NoiseParams, model: MobilityModel) -> float:
    """Integral of h^-theta R_u(h) over the mobility support, by quadrature (bpcu)."""
    pw = _powers(p)
    _check_layer(u, pw)
    f = lambda h: h ** (-theta) * layer_rate_at_gain(u, pw, h, noise)  # noqa: E731
    return adaptive_quad(f, model.h_min, model.h_max, _RATE_QUAD).value


def weighted_rate_closed(theta: float, u: int, p, noise: NoiseParams, model: MobilityModel,
                         literal: bool = False) -> float:
    """Closed form of the h^-theta weighted rate integral via the two antiderivatives.

    The default substitutes x = h² with its Jacobian: the integral becomes
    0.5 * int x^-t' g(x) dx with t' = (theta + 1)/2.  ``literal=True`` instead
    evaluates the antiderivatives at h² with the unchanged theta, no Jacobian,
    the penalty added rather than subtracted, and zeta = alpha²; that variant
    does not equal the integral and is kept only to quantify the discrepancy.
    """
    pw = _powers(p)
    _check_layer(u, pw)
    above, load = _layer_loads(u, pw)
    a2 = noise.alpha**2
    b2 = noise.beta**2
    x1, x2 = model.h_min**2, model.h_max**2
    if literal:
        t, zeta = theta, a2
    else:
        t, zeta = 0.5 * (theta + 1.0), noise.alpha

    def log_part(b):
        return log_power_antiderivative(x2, t, b, a2) - log_power_antiderivative(x1, t, b, a2)

    logs = log_part(load) - log_part(above)
    if b2 > 0:
        pen = (penalty_antiderivative(x2, t, above, load, zeta, b2)
               - penalty_antiderivative(x1, t, above, load, zeta, b2))
    else:
        pen = 0.0
    if literal:
        return (logs + pen) / LN2
    return (0.25 * logs - 0.5 * pen) / LN2


def expected_rate_theta(theta: float, u: int, p, noise: NoiseParams, model: MobilityModel,
                        method: str = "closed", diagnostics: dict | None = None) -> float:
    """h^-theta weighted rate integral; ``method`` is closed, literal or quadrature.

    A closed form that hits a pole (or a non-convergent hypergeometric series)
    falls back to quadrature and sets ``diagnostics['fallback']``.
    """
    if method == "quadrature":
        return weighted_rate_quadrature(theta, u, p, noise, model)
    if method not in ("closed", "literal"):
        raise DomainError(f"unknown method {method!r}")
    try:
        return weighted_rate_closed(theta, u, p, noise, model, literal=(method == "literal"))
    except NomaVlcError as exc:
        if diagnostics is not None:
            diagnostics["fallback"] = diagnostics.get("fallback", 0) + 1
            diagnostics["fallback_reason"] = str(exc)
        return weighted_rate_quadrature(theta, u, p, noise, model)


def expected_rate_user(u: int, total_users: int, p, noise: NoiseParams, model: MobilityModel,
                       method: str = "quadrature", diagnostics: dict | None = None) -> float:
    """Mean rate of SIC layer u when the U gains are i.i.d. mobility draws, in bpcu.

    ``quadrature`` integrates R_u(h) against the ordered density directly.
    ``closed`` sums the power-law expansion of the ordered density against
    closed-form h^-theta integrals.  ``literal`` reproduces the printed
    combination (theta = (U-i-j)/(m+3) + 1, printed signs, literal integrals).
    """
    pw = _powers(p)
    if pw.size != total_users:
        raise DomainError(f"{pw.size} powers for {total_users} users")
    _check_layer(u, pw)
    if method == "quadrature":
        f = lambda h: layer_rate_at_gain(u, pw, h, noise) * ordered_pdf(model, total_users, u, h)  # noqa: E731
        return adaptive_quad(f, model.h_min, model.h_max, _RATE_QUAD).value
    literal = method == "literal"
    if not literal and method != "closed":
        raise DomainError(f"unknown method {method!r}")
    s = model.exponent
    out = 0.0
    for coef, theta in ordered_pdf_terms(model, total_users, u, printed_signs=literal):
        if literal:
            # printed exponent omits the factor 2 in s
            theta = (theta - 1.0) / s / (model.lambertian_m + 3.0) + 1.0
        out += coef * expected_rate_theta(theta, u, pw, noise, model, method, diagnostics)
    return out


def expected_rates(p, noise: NoiseParams, model: MobilityModel, method: str = "quadrature") -> np.ndarray:
    pw = _powers(p)
    return np.array([expected_rate_user(u, pw.size, pw, noise, model, method) for u in range(1, pw.size + 1)])


def mc_expected_rates(p, noise: NoiseParams, model: MobilityModel, count: int = 100_000, seed: int = 0) -> np.ndarray:
    """Sorted-sample Monte Carlo of every layer's mean rate."""
    pw = _powers(p)
    gains = sample_ordered_gains(model, pw.size, count, seed)
    return np.array([float(np.mean(layer_rate_at_gain(u, pw, gains[:, u - 1], noise)))
                     for u in range(1, pw.size + 1)])
