"""Line-of-sight Lambertian gains, the mobility gain distribution and its order statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import DomainError
from .specfun import QuadratureSpec, adaptive_quad


def lambertian_order(half_angle: float) -> float:
    """m = -ln 2 / ln cos(half_angle), half_angle in radians."""
    if not 0.0 < half_angle < math.pi / 2:
        raise DomainError(f"half-power angle must lie in (0, pi/2) rad, got {half_angle}")
    return -math.log(2.0) / math.log(math.cos(half_angle))


@dataclass(frozen=True)
class LedGeometry:
    pd_area: float
    distance: float
    led_angle: float
    incidence_angle: float
    fov: float
    half_angle: float

    def __post_init__(self):
        if not self.pd_area > 0 or not self.distance > 0:
            raise DomainError("pd_area and distance must be positive")
        if self.led_angle < 0 or self.incidence_angle < 0:
            raise DomainError("angles must be non-negative")
        if not 0.0 < self.fov <= math.pi / 2:
            raise DomainError(f"fov must lie in (0, pi/2], got {self.fov}")
        if not 0.0 < self.half_angle < math.pi / 2:
            raise DomainError(f"half_angle must lie in (0, pi/2), got {self.half_angle}")

    @property
    def lambertian_m(self) -> float:
        return lambertian_order(self.half_angle)

    @classmethod
    def overhead(cls, radius, height, pd_area, fov, half_angle) -> "LedGeometry":
        """Downward LED at ``height`` above an upward-facing detector at horizontal ``radius``."""
        d = math.hypot(radius, height)
        angle = math.atan2(radius, height)
        return cls(pd_area, d, angle, angle, fov, half_angle)


def los_gain(geom: LedGeometry) -> float:
    """Lambertian LOS gain A/(d² sin²fov) * (m+1) cos^m(led_angle)/(2 pi) * cos(incidence).

    Zero unless 0 < led_angle < fov.
    """
    if not 0.0 < geom.led_angle < geom.fov:
        return 0.0
    m = geom.lambertian_m
    radiant = (m + 1.0) * math.cos(geom.led_angle) ** m / (2.0 * math.pi)
    return geom.pd_area / (geom.distance**2 * math.sin(geom.fov) ** 2) * radiant * math.cos(geom.incidence_angle)


# --------------------------------------------------------------------------
# mobility model

@dataclass(frozen=True)
class MobilityModel:
    """Power-law gain density K h^(-s-1) on [h_min, h_max] with s = 2/(m+3).

    Build with :meth:`from_geometry` (bounds from LED height and coverage
    radius) or :meth:`from_bounds` (bounds given, K renormalized).
    """

    lambertian_m: float
    h_min: float
    h_max: float
    k_norm: float
    pd_area: float | None = None
    led_height: float | None = None
    r_max: float | None = None
    k1: float | None = None
    quad: QuadratureSpec = field(default=QuadratureSpec(), compare=False, repr=False)

    def __post_init__(self):
        if not self.lambertian_m > 0:
            raise DomainError(f"Lambertian order must be positive, got {self.lambertian_m}")
        if not 0 < self.h_min < self.h_max:
            raise DomainError(f"need 0 < h_min < h_max, got ({self.h_min}, {self.h_max})")
        if not self.k_norm > 0:
            raise DomainError("k_norm must be positive")

    @staticmethod
    def _normalizer(m, h_min, h_max):
        s = 2.0 / (m + 3.0)
        # h_min^-s - h_max^-s without cancellation for tight supports
        span = -h_min ** (-s) * math.expm1(s * math.log(h_min / h_max))
        return 1.0 / (span * (m + 3.0) / 2.0)

    @classmethod
    def from_bounds(cls, h_min: float, h_max: float, lambertian_m: float) -> "MobilityModel":
        if not 0 < h_min < h_max:
            raise DomainError(f"need 0 < h_min < h_max, got ({h_min}, {h_max})")
        return cls(lambertian_m, h_min, h_max, cls._normalizer(lambertian_m, h_min, h_max))

    @classmethod
    def from_geometry(cls, pd_area: float, led_height: float, r_max: float, lambertian_m: float) -> "MobilityModel":
        """Bounds from the gains at the coverage edge and directly below the LED."""
        if not (pd_area > 0 and led_height > 0 and r_max > 0):
            raise DomainError("pd_area, led_height and r_max must be positive")
        m = lambertian_m
        k1 = pd_area / (2.0 * math.pi)
        amp = k1 * (m + 1.0) * led_height ** (m + 1.0)
        h_min = amp / (r_max**2 + led_height**2) ** ((m + 3.0) / 2.0)
        h_max = amp / led_height ** (m + 3.0)
        k = 2.0 * amp ** (2.0 / (m + 3.0)) / ((m + 3.0) * r_max**2)
        return cls(m, h_min, h_max, k, pd_area, led_height, r_max, k1)

    @property
    def exponent(self) -> float:
        """s = 2/(m+3)."""
        return 2.0 / (self.lambertian_m + 3.0)

    @property
    def f1(self) -> float:
        return -(self.lambertian_m + 3.0) * self.k_norm * self.h_min ** (-self.exponent) / 2.0

    @property
    def f2(self) -> float:
        return -(self.lambertian_m + 3.0) * self.k_norm / 2.0

    def pdf(self, h):
        h = np.asarray(h, dtype=float)
        inside = (h >= self.h_min) & (h <= self.h_max)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(inside, self.k_norm * h ** (-self.exponent - 1.0), 0.0)
        return out if out.ndim else float(out)

    def cdf(self, h):
        h = np.asarray(h, dtype=float)
        hc = np.clip(h, self.h_min, self.h_max)
        out = self.f2 * hc ** (-self.exponent) - self.f1
        out = np.where(h <= self.h_min, 0.0, np.where(h >= self.h_max, 1.0, out))
        return out if out.ndim else float(out)

    def inverse_cdf(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise DomainError("quantile levels must lie in [0, 1]")
        out = ((q + self.f1) / self.f2) ** (-1.0 / self.exponent)
        out = np.clip(out, self.h_min, self.h_max)
        return out if out.ndim else float(out)


def mobility_pdf(model: MobilityModel, h):
    return model.pdf(h)


def mobility_cdf(model: MobilityModel, h):
    return model.cdf(h)


def sample_gains(model: MobilityModel, count: int, seed: int) -> np.ndarray:
    """Inverse-CDF draws from the mobility gain density."""
    if int(count) != count or count < 1:
        raise DomainError(f"count must be a positive integer, got {count}")
    rng = np.random.default_rng(seed)
    return model.inverse_cdf(rng.random(int(count)))


def sample_ordered_gains(model: MobilityModel, users: int, count: int, seed: int) -> np.ndarray:
    """``count`` ascending-sorted tuples of ``users`` i.i.d. gains, shape (count, users)."""
    g = sample_gains(model, users * count, seed).reshape(count, users)
    return np.sort(g, axis=1)


def gains_to_csv(gains, path) -> None:
    """Write sampled gains as ``sample_index,h`` rows."""
    g = np.asarray(gains, dtype=float).ravel()
    with open(path, "w") as fh:
        fh.write("sample_index,h\n")
        for i, x in enumerate(g):
            fh.write(f"{i},{float(x)!r}\n")


def _check_layer(total_users, layer):
    if int(total_users) != total_users or total_users < 1:
        raise DomainError(f"total_users must be a positive integer, got {total_users}")
    if int(layer) != layer or not 1 <= layer <= total_users:
        raise DomainError(f"layer must lie in 1..{total_users}, got {layer}")


def _order_factor(total_users, layer):
    return math.factorial(total_users) / (math.factorial(layer - 1) * math.factorial(total_users - layer))


def ordered_pdf(model: MobilityModel, total_users: int, layer: int, h):
    """Density of the layer-th smallest of total_users i.i.d. gains (unexpanded form)."""
    _check_layer(total_users, layer)
    p = model.pdf(h)
    c = model.cdf(h)
    out = _order_factor(total_users, layer) * p * c ** (layer - 1) * (1.0 - c) ** (total_users - layer)
    return out if np.ndim(out) else float(out)


def ordered_pdf_terms(model: MobilityModel, total_users: int, layer: int, printed_signs: bool = False):
    """Power-law terms of the double-binomial expansion of the ordered density.

    Returns a list of (coefficient, theta) with
    ordered_pdf(h) = sum coefficient * h^(-theta) on the support, where
    theta = s (U - i - j) + 1.  ``printed_signs`` swaps in the sign factor
    (-1)^(U-i-j-1) instead of the correct (-1)^(U-u-j); the two agree only
    when u - 1 - i is even.
    """
    _check_layer(total_users, layer)
    U, u = total_users, layer
    f1, f2, s = model.f1, model.f2, model.exponent
    lead = _order_factor(U, u) * model.k_norm
    terms = []
    for i in range(u):
        for j in range(U - u + 1):
            sign = (-1) ** (U - j - i - 1) if printed_signs else (-1) ** (U - u - j)
            coef = (lead * comb(u - 1, i) * comb(U - u, j) * (-f1) ** i * (1.0 + f1) ** j
                    * sign * f2 ** (U - 1 - i - j))
            terms.append((coef, s * (U - i - j) + 1.0))
    return terms


def ordered_pdf_expanded(model: MobilityModel, total_users: int, layer: int, h, printed_signs: bool = False):
    """Ordered density from the double-binomial expansion in powers of h."""
    h = np.asarray(h, dtype=float)
    inside = (h >= model.h_min) & (h <= model.h_max)
    hs = np.where(inside, h, 1.0)
    out = np.zeros_like(hs)
    for coef, theta in ordered_pdf_terms(model, total_users, layer, printed_signs):
        out = out + coef * hs ** (-theta)
    out = np.where(inside, out, 0.0)
    return out if out.ndim else float(out)


def mean_square_gain(model: MobilityModel, total_users: int | None = None, layer: int | None = None) -> float:
    """E[h²] under the mobility density, or under the layer's ordered density if given."""
    if layer is None:
        f = lambda h: h * h * model.pdf(h)  # noqa: E731
    else:
        f = lambda h: h * h * ordered_pdf(model, total_users, layer, h)  # noqa: E731
    return adaptive_quad(f, model.h_min, model.h_max, model.quad).value
