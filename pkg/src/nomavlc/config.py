"""Flat ``section.key = value`` experiment configuration with strict validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .channel import MobilityModel, lambertian_order
from .errors import ConfigError, NomaVlcError
from .noise import NoiseParams

DEFAULT_SEED = 20240611


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (attribute, parser, formatter)
_KEYS = {
    "noise.alpha": ("alpha", float, repr),
    "noise.beta": ("beta", float, repr),
    "noise.nu": ("nu", int, str),
    "noise.truncation_m": ("truncation_m", int, str),
    "channel.mode": ("mode", str, str),
    "channel.half_angle_deg": ("half_angle_deg", float, repr),
    "channel.led_height": ("led_height", float, repr),
    "channel.pd_area": ("pd_area", float, repr),
    "channel.fov_deg": ("fov_deg", float, repr),
    "channel.radii": ("radii", _floats, lambda v: ", ".join(repr(x) for x in v)),
    "channel.reference_radius": ("reference_radius", float, repr),
    "channel.h_min": ("h_min", float, repr),
    "channel.h_max": ("h_max", float, repr),
    "users.count": ("users", int, str),
    "users.qos": ("qos", _floats, lambda v: ", ".join(repr(x) for x in v)),
    "users.allocation": ("allocation", str, str),
    "sweep.snr_min_db": ("snr_min_db", float, repr),
    "sweep.snr_max_db": ("snr_max_db", float, repr),
    "sweep.snr_step_db": ("snr_step_db", float, repr),
    "allocate.snr_db": ("allocate_snr_db", float, repr),
    "solver.epsilon": ("epsilon", float, repr),
    "solver.max_iterations": ("max_iterations", int, str),
    "pdf.phi_min": ("phi_min", float, repr),
    "pdf.phi_max": ("phi_max", float, repr),
    "pdf.bins": ("bins", int, str),
    "mc.pdf_samples": ("pdf_samples", int, str),
    "mc.rate_samples": ("rate_samples", int, str),
    "mc.seed": ("seed", int, str),
    "mc.jobs": ("jobs", int, str),
    "output.dir": ("output_dir", str, str),
    "output.quadrature_rates": ("quadrature_rates", _bool, lambda v: str(v).lower()),
}

_ALLOCATIONS = ("grpa", "proposed", "sh_baseline")


@dataclass(frozen=True)
class ExperimentConfig:
    alpha: float = 2.0
    beta: float = 2.0 / 3.0
    nu: int = 10
    truncation_m: int = 10
    mode: str = "static"
    half_angle_deg: float = 50.0
    led_height: float = 2.25
    pd_area: float = 1e-4
    fov_deg: float = 70.0
    radii: tuple = (2.0, 1.5, 1.0, 0.5)
    reference_radius: float = 2.5
    h_min: float = 1.0
    h_max: float = 3.0
    users: int = 4
    qos: tuple = (0.2, 0.6, 2.0, 5.0)
    allocation: str = "grpa"
    snr_min_db: float = 0.0
    snr_max_db: float = 30.0
    snr_step_db: float = 2.0
    allocate_snr_db: float = 20.0
    epsilon: float = 1e-8
    max_iterations: int = 10_000
    phi_min: float = -15.0
    phi_max: float = 15.0
    bins: int = 100
    pdf_samples: int = 1_000_000
    rate_samples: int = 100_000
    seed: int = DEFAULT_SEED
    jobs: int = 1
    output_dir: str = "out"
    quadrature_rates: bool = True

    def __post_init__(self):
        try:
            self.noise  # noqa: B018  (validates the noise block)
        except NomaVlcError as exc:
            raise ConfigError(f"noise: {exc}") from None
        if self.mode not in ("static", "mobility"):
            raise ConfigError(f"channel.mode must be static or mobility, got {self.mode!r}")
        if not 0 < self.half_angle_deg < 90:
            raise ConfigError("channel.half_angle_deg must lie in (0, 90)")
        if not 0 < self.fov_deg <= 90:
            raise ConfigError("channel.fov_deg must lie in (0, 90]")
        if self.led_height <= 0 or self.pd_area <= 0 or self.reference_radius <= 0:
            raise ConfigError("channel.led_height, channel.pd_area and channel.reference_radius must be positive")
        if self.users < 1:
            raise ConfigError("users.count must be at least 1")
        if len(self.qos) != self.users:
            raise ConfigError(f"users.qos has {len(self.qos)} entries for {self.users} users")
        if any(q < 0 for q in self.qos):
            raise ConfigError("users.qos thresholds must be non-negative")
        if self.mode == "static":
            if len(self.radii) != self.users:
                raise ConfigError(f"channel.radii has {len(self.radii)} entries for {self.users} users")
            if any(r <= 0 for r in self.radii):
                raise ConfigError("channel.radii must be positive")
        if not 0 < self.h_min < self.h_max:
            raise ConfigError("need 0 < channel.h_min < channel.h_max")
        if self.allocation not in _ALLOCATIONS:
            raise ConfigError(f"users.allocation must be one of {_ALLOCATIONS}, got {self.allocation!r}")
        if self.snr_step_db <= 0 or self.snr_max_db < self.snr_min_db:
            raise ConfigError("sweep needs snr_step_db > 0 and snr_max_db >= snr_min_db")
        if self.epsilon <= 0 or self.max_iterations < 1:
            raise ConfigError("solver.epsilon must be positive and solver.max_iterations >= 1")
        if self.bins < 2 or self.phi_max <= self.phi_min:
            raise ConfigError("pdf.bins must be >= 2 and pdf.phi_max > pdf.phi_min")
        if self.pdf_samples < 1 or self.rate_samples < 100_000:
            raise ConfigError("mc.pdf_samples must be >= 1 and mc.rate_samples >= 100000")
        if self.jobs < 1:
            raise ConfigError("mc.jobs must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("mc.seed must be an unsigned 64-bit integer")

    # derived objects -----------------------------------------------------
    @property
    def noise(self) -> NoiseParams:
        return NoiseParams(self.alpha, self.beta, self.nu, self.truncation_m)

    @property
    def lambertian_m(self) -> float:
        return lambertian_order(math.radians(self.half_angle_deg))

    def mobility_model(self) -> MobilityModel:
        return MobilityModel.from_bounds(self.h_min, self.h_max, self.lambertian_m)

    def static_gains(self) -> np.ndarray:
        """LOS gains at the configured radii divided by the gain at the reference radius, sorted ascending."""
        from .channel import LedGeometry, los_gain

        half, fov = math.radians(self.half_angle_deg), math.radians(self.fov_deg)

        def gain(r):
            return los_gain(LedGeometry.overhead(r, self.led_height, self.pd_area, fov, half))

        ref = gain(self.reference_radius)
        if ref <= 0:
            raise ConfigError("reference radius lies outside the detector field of view")
        g = np.array([gain(r) for r in self.radii]) / ref
        if np.any(g <= 0):
            raise ConfigError("a user radius lies outside the detector field of view")
        if np.any(np.diff(g) < 0):
            raise ConfigError("channel.radii must be listed weakest user first (descending radius)")
        return g

    def snr_grid(self) -> np.ndarray:
        n = int(math.floor((self.snr_max_db - self.snr_min_db) / self.snr_step_db + 1e-9)) + 1
        return np.round(self.snr_min_db + self.snr_step_db * np.arange(n), 10)

    def total_power(self, snr_db: float) -> float:
        """Budget giving SNR_dB = 10 log10(P/(alpha² + beta²))."""
        return self.noise.variance * 10.0 ** (snr_db / 10.0)

    # text round trip ---------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for key, (attr, _, fmt) in _KEYS.items():
            lines.append(f"{key} = {fmt(getattr(self, attr))}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)


def parse_config_text(text: str, base: ExperimentConfig | None = None, source: str = "<config>") -> ExperimentConfig:
    """Apply ``key = value`` lines on top of ``base``; unknown keys are errors."""
    values = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: key {key!r} already set on line {seen[key]}")
        attr, parse, _ = _KEYS[key]
        try:
            values[attr] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        seen[key] = lineno
    try:
        return replace(base or ExperimentConfig(), **values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config_text(text, base, str(p))


CONFIG_FIELDS = tuple(f.name for f in fields(ExperimentConfig))
