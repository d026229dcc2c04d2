"""Named numerical tolerances with validated overrides.

Every check in the verification suite reads its threshold from a
:class:`Tolerances` instance, so a run can report the exact tolerance used
next to each verdict and the command line can override any of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType

__all__ = ["DEFAULTS", "Tolerances", "parse_override"]

DEFAULTS = MappingProxyType({
    "flat_zero": 1e-8,          # tensors of flat models
    "flat_kalpha": 1e-10,       # K^alpha of flat models
    "riemannian_zero": 1e-8,    # C, L, T, Tdot of Riemannian models
    "riemannian_K": 1e-5,       # K and K^alpha against +-1
    "funk_K": 1e-4,             # Funk flag curvature against -1/4
    "homogeneity": 1e-8,        # G(x, l y) = l^2 G(x, y), relative
    "symmetry": 1e-8,           # self-adjointness of R_y, R_y(y) = 0, relative
    "minkowski": 1e-12,         # smallest eigenvalue of g must exceed this
    "taylor_rtol": 1e-3,
    "taylor_atol": 1e-6,
    "tmpara": 1e-4,
    "hessian": 3e-3,
    "variation1": 1e-8,
    "variation2": 1e-4,
    "busemann": 1e-5,
    "ray_support": 1e-4,
    "ray_affine": 5e-3,
    "certificate": 1e-3,
    "arithmetic": 1e-10,
    "speed_drift": 1e-8,        # relative drift of F along integrated geodesics
})


def parse_override(text: str) -> tuple[str, float]:
    """Parse ``key=value`` into a (key, float) pair."""
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ValueError(f"tolerance override must look like key=value, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise ValueError(f"tolerance {key.strip()!r} needs a number, got {value!r}") from None


@dataclass(frozen=True)
class Tolerances:
    """Immutable tolerance table: the defaults plus validated overrides."""

    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.overrides) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown tolerance key(s) {sorted(unknown)}; known: {sorted(DEFAULTS)}")
        for key, value in self.overrides.items():
            if not float(value) >= 0:
                raise ValueError(f"tolerance {key!r} must be non-negative, got {value}")

    def __getitem__(self, key: str) -> float:
        if key not in DEFAULTS:
            raise KeyError(key)
        return float(self.overrides.get(key, DEFAULTS[key]))

    def updated(self, **changes) -> "Tolerances":
        return Tolerances({**self.overrides, **changes})

    def as_dict(self) -> dict:
        return {key: self[key] for key in sorted(DEFAULTS)}
