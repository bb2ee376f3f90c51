"""Composite receiver distortion: Gaussian thermal noise plus centered chi-squared ambient light.

The distortion is phi = alpha*n + beta'*(w - nu) with n ~ N(0, 1), w ~ chi2(nu)
and beta' = beta/sqrt(2 nu), so var[phi] = alpha² + beta².  The uncentered sum
psi = alpha*n + beta*w is what the moment generating function describes.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DivergenceError, DomainError
from .specfun import QuadratureSpec, adaptive_quad, hermite_all, log_gamma, pochhammer

_SQRT2PI = math.sqrt(2.0 * math.pi)
_CHI_SUM_MAX_NU = 64
_SAMPLE_CHUNK = 1 << 16


@dataclass(frozen=True)
class NoiseParams:
    alpha: float
    beta: float
    nu: int = 10
    truncation_m: int = 10

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be non-negative, got {self.beta}")
        if int(self.nu) != self.nu or self.nu < 1:
            raise DomainError(f"nu must be a positive integer, got {self.nu}")
        if int(self.truncation_m) != self.truncation_m or self.truncation_m < 1:
            raise DomainError(f"truncation_m must be a positive integer, got {self.truncation_m}")
        object.__setattr__(self, "nu", int(self.nu))
        object.__setattr__(self, "truncation_m", int(self.truncation_m))

    @property
    def beta_prime(self) -> float:
        """Scale of the centered chi-squared variate, beta/sqrt(2 nu)."""
        return self.beta / math.sqrt(2.0 * self.nu)

    @property
    def variance(self) -> float:
        return self.alpha**2 + self.beta**2

    def with_beta(self, beta: float) -> "NoiseParams":
        return NoiseParams(self.alpha, beta, self.nu, self.truncation_m)


# --------------------------------------------------------------------------
# sampling

def _chi_squared(rng: np.random.Generator, nu: int, n: int) -> np.ndarray:
    if nu > _CHI_SUM_MAX_NU:
        return rng.chisquare(nu, n)
    out = np.empty(n)
    for start in range(0, n, _SAMPLE_CHUNK):
        stop = min(n, start + _SAMPLE_CHUNK)
        z = rng.standard_normal((stop - start, nu))
        out[start:stop] = np.einsum("ij,ij->i", z, z)
    return out


def sample_phi(params: NoiseParams, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws of the centered distortion phi."""
    if int(n) != n or n < 1:
        raise DomainError(f"sample count must be a positive integer, got {n}")
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal(int(n))
    w = _chi_squared(rng, params.nu, int(n))
    return params.alpha * gauss + params.beta_prime * (w - params.nu)


def sample_psi(params: NoiseParams, n: int, seed: int) -> np.ndarray:
    """n draws of the uncentered sum alpha*n + beta*w."""
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal(int(n))
    w = _chi_squared(rng, params.nu, int(n))
    return params.alpha * gauss + params.beta * w


def mgf(params: NoiseParams, t: float) -> float:
    """Moment generating function of psi = alpha*n + beta*w."""
    if params.beta > 0 and t >= 1.0 / (2.0 * params.beta):
        raise DomainError(f"mgf undefined for t >= 1/(2 beta) = {1 / (2 * params.beta)}")
    return math.exp(0.5 * t * t * params.alpha**2) * (1.0 - 2.0 * params.beta * t) ** (-0.5 * params.nu)


# --------------------------------------------------------------------------
# Hermite series density

def _check_series(params: NoiseParams):
    if params.beta >= params.alpha:
        raise DivergenceError(
            f"Hermite series for the distortion density diverges when beta >= alpha "
            f"(beta={params.beta}, alpha={params.alpha})"
        )


def series_coefficients(params: NoiseParams, literal_beta: bool = False) -> np.ndarray:
    """Theta_m = (nu/2)_m / m! * (2 b/alpha)^m for m = 0..M, with b = beta' by default.

    ``literal_beta=True`` uses the unscaled beta instead, which is the audit
    variant; it does not converge to the true density.
    """
    _check_series(params)
    b = params.beta if literal_beta else params.beta_prime
    ratio = 2.0 * b / params.alpha
    return np.array([
        pochhammer(params.nu / 2.0, m) / math.factorial(m) * ratio**m
        for m in range(params.truncation_m + 1)
    ])


def _standardized(params: NoiseParams, phi):
    return (np.asarray(phi, dtype=float) + params.beta_prime * params.nu) / params.alpha


def _raw_series(params: NoiseParams, phi, convention="probabilists", literal_beta=False):
    y = _standardized(params, phi)
    theta = series_coefficients(params, literal_beta)
    herm = hermite_all(params.truncation_m, y, convention)
    return np.tensordot(theta, herm, axes=1) * np.exp(-0.5 * y * y)


@functools.lru_cache(maxsize=256)
def series_normalizer(params: NoiseParams, convention: str = "probabilists", literal_beta: bool = False) -> float:
    """Reciprocal of the integral of the un-normalized series, by quadrature.

    For the probabilists' form this equals 1/(alpha*sqrt(2 pi)) up to quadrature error.
    """
    _check_series(params)
    center = -params.beta_prime * params.nu
    half = 40.0 * params.alpha
    # the audit variants sum large alternating terms; round-off limits their accuracy
    rel = 1e-10 if (convention == "probabilists" and not literal_beta) else 1e-6
    res = adaptive_quad(lambda x: _raw_series(params, x, convention, literal_beta),
                        center - half, center + half, QuadratureSpec(1e-13, rel))
    return 1.0 / res.value


def pdf_series(params: NoiseParams, phi, convention: str = "probabilists", literal_beta: bool = False):
    """Truncated Hermite-series density of phi (M = params.truncation_m), normalized to unit mass."""
    _check_series(params)
    out = series_normalizer(params, convention, literal_beta) * _raw_series(params, phi, convention, literal_beta)
    return out if np.ndim(out) else float(out)


def cdf_series(params: NoiseParams, phi):
    """Distribution function matching :func:`pdf_series` term by term.

    Uses  int_{-inf}^{y} He_m(s) e^{-s²/2} ds = -He_{m-1}(y) e^{-y²/2}  for m >= 1;
    the m = 0 term is the Gaussian distribution function.
    """
    _check_series(params)
    y = _standardized(params, phi)
    theta = series_coefficients(params)
    herm = hermite_all(max(params.truncation_m - 1, 0), y)
    tail = np.tensordot(theta[1:], herm[: params.truncation_m], axes=1) * np.exp(-0.5 * y * y)
    out = series_normalizer(params) * params.alpha * (_SQRT2PI * ndtr(y) - tail)
    return out if np.ndim(out) else float(out)


# --------------------------------------------------------------------------
# large-nu closed form

def partition_function(params: NoiseParams) -> float:
    b = params.beta_prime
    return math.exp(params.nu**2 * b**2 / (2.0 * params.alpha**2)) * math.sqrt(2.0 * math.pi * params.alpha**2)


def pdf_high_nu(params: NoiseParams, phi):
    """Gaussian-shaped large-nu approximation, exp((2 nu b (phi + b nu) - (phi + b nu)²)/(2 alpha²))/Z."""
    b = params.beta_prime
    x = np.asarray(phi, dtype=float) + b * params.nu
    out = np.exp((2.0 * params.nu * b * x - x * x) / (2.0 * params.alpha**2)) / partition_function(params)
    return out if np.ndim(out) else float(out)


# --------------------------------------------------------------------------
# convolution oracle

ORACLE_QUAD = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-11)


def _gauss_pdf(x, sd):
    return np.exp(-0.5 * (x / sd) ** 2) / (_SQRT2PI * sd)


def pdf_oracle(params: NoiseParams, phi, spec: QuadratureSpec = ORACLE_QUAD):
    """Density of phi by direct convolution of N(0, alpha²) with the scaled chi-squared law.

    Integrates over s = sqrt(w) so the chi-squared weight 2 s^(nu-1) e^{-s²/2} is
    smooth at the origin for every nu.
    """
    phi_arr = np.atleast_1d(np.asarray(phi, dtype=float))
    a, b, nu = params.alpha, params.beta_prime, params.nu
    if b == 0.0:
        out = _gauss_pdf(phi_arr, a)
        return out if np.ndim(phi) else float(out[0])
    log_norm = -(0.5 * nu) * math.log(2.0) - log_gamma(0.5 * nu) + math.log(2.0)
    s_max = math.sqrt(nu + 30.0 * math.sqrt(2.0 * nu) + 200.0)
    out = np.empty_like(phi_arr)
    for i, x in enumerate(phi_arr):
        def integrand(s, x=x):
            with np.errstate(divide="ignore"):
                log_w = (nu - 1) * np.log(s) - 0.5 * s * s + log_norm
            return _gauss_pdf(x - b * (s * s - nu), a) * np.exp(log_w)
        out[i] = adaptive_quad(integrand, 0.0, s_max, spec).value
    return out if np.ndim(phi) else float(out[0])


def oracle_moment(params: NoiseParams, k: int, central: bool = True) -> float:
    """k-th moment of phi from the oracle density by quadrature."""
    span = 12.0 * math.sqrt(params.variance) + 12.0 * params.beta_prime * math.sqrt(params.nu)
    f = lambda x: x**k * pdf_oracle(params, x)  # noqa: E731
    return adaptive_quad(f, -span, span, QuadratureSpec(1e-11, 1e-10)).value


# --------------------------------------------------------------------------
# empirical densities

@dataclass(frozen=True)
class EmpiricalPdf:
    bin_edges: np.ndarray
    densities: np.ndarray
    sample_count: int

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        dens = np.asarray(self.densities, dtype=float)
        if edges.ndim != 1 or len(edges) != len(dens) + 1:
            raise DomainError("bin_edges must have one more entry than densities")
        if np.any(np.diff(edges) <= 0):
            raise DomainError("bin_edges must be strictly increasing")
        if np.any(dens < 0):
            raise DomainError("densities must be non-negative")
        mass = float(np.sum(dens * np.diff(edges)))
        if abs(mass - 1.0) > 1e-9:
            raise DomainError(f"histogram mass is {mass}, expected 1")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "densities", dens)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("bin_left,bin_right,density\n")
            for lo, hi, d in zip(self.bin_edges[:-1], self.bin_edges[1:], self.densities):
                fh.write(f"{float(lo)!r},{float(hi)!r},{float(d)!r}\n")

    @classmethod
    def from_csv(cls, path, sample_count: int = 1) -> "EmpiricalPdf":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        edges = np.append(data[:, 0], data[-1, 1])
        return cls(edges, data[:, 2], sample_count)


def histogram(samples, bins: int = 100) -> EmpiricalPdf:
    """Equal-width density histogram over [min, max] of the samples."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("histogram needs at least one sample")
    if int(bins) != bins or bins < 2:
        raise DomainError(f"bins must be an integer >= 2, got {bins}")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(x, bins=int(bins), range=(lo, hi))
    dens = counts / (x.size * np.diff(edges))
    # renormalize away the rounding of edges
    dens = dens / np.sum(dens * np.diff(edges))
    return EmpiricalPdf(edges, dens, int(x.size))


def l1_distance(emp: EmpiricalPdf, pdf) -> float:
    """Sum over bins of width * |histogram density - pdf(bin center)|."""
    ref = np.asarray(pdf(emp.centers), dtype=float)
    return float(np.sum(emp.widths * np.abs(emp.densities - ref)))


def histogram_entropy(samples, bins: int | None = None) -> float:
    """Plug-in differential entropy (nats) of a sample with the Miller-Madow bias correction."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if bins is None:
        bins = max(10, int(math.sqrt(n)))
    counts, edges = np.histogram(x, bins=bins)
    width = edges[1] - edges[0]
    occupied = counts[counts > 0]
    q = occupied / n
    return float(-np.sum(q * np.log(q)) + math.log(width) + (occupied.size - 1) / (2.0 * n))
