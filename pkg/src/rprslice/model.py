"""Manipulator geometry, platform frame and slice configuration.

Configuration files are flat ``key = value`` text, one entry per line.
Blank lines and ``#`` comments are ignored; string values may be quoted.
Recognised keys::

    a1x a1y a2x a2y a3x a3y   base anchor coordinates
    d1 d2 d3                  platform side lengths
    edge_assignment           e.g. "12-23-31": d1=|B1B2|, d2=|B2B3|, d3=|B3B1|
    rho1                      fixed length of leg 1 (slice value)
    grid_n                    slice grid resolution per axis

Unknown keys are rejected.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

TWO_PI = 2.0 * math.pi

EDGES = ("12", "23", "31")
EDGE_ASSIGNMENTS = tuple("-".join(p) for p in permutations(EDGES))
DEFAULT_EDGE_ASSIGNMENT = "12-23-31"

GEOMETRY_KEYS = ("a1x", "a1y", "a2x", "a2y", "a3x", "a3y", "d1", "d2", "d3")
SLICE_KEYS = ("rho1", "grid_n")
CONFIG_KEYS = GEOMETRY_KEYS + ("edge_assignment",) + SLICE_KEYS


class ConfigError(ValueError):
    """Malformed configuration text or a geometry that fails validation."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class PlatformFrame:
    """Positions of B2 and B3 with B1 at the origin and B1B2 on the x-axis."""

    p2: tuple[float, float]
    p3: tuple[float, float]

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.p2), np.array(self.p3)


@dataclass(frozen=True)
class ManipulatorGeometry:
    a1: tuple[float, float]
    a2: tuple[float, float]
    a3: tuple[float, float]
    d1: float
    d2: float
    d3: float
    edge_assignment: str = DEFAULT_EDGE_ASSIGNMENT

    def __post_init__(self):
        anchors = {"a1": self.a1, "a2": self.a2, "a3": self.a3}
        for name, pt in anchors.items():
            if len(pt) != 2 or not all(math.isfinite(c) for c in pt):
                raise ConfigError("anchor must be two finite numbers", name)
        for (na, pa), (nb, pb) in (
            (("a1", self.a1), ("a2", self.a2)),
            (("a2", self.a2), ("a3", self.a3)),
            (("a1", self.a1), ("a3", self.a3)),
        ):
            if math.dist(pa, pb) == 0.0:
                raise ConfigError(f"duplicate anchor, coincides with {na}", nb)
        for name in ("d1", "d2", "d3"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0.0:
                raise ConfigError("side length must be positive", name)
        if self.edge_assignment not in EDGE_ASSIGNMENTS:
            raise ConfigError(
                f"unknown value {self.edge_assignment!r}; expected one of {EDGE_ASSIGNMENTS}",
                "edge_assignment",
            )
        s = sorted((self.d1, self.d2, self.d3))
        if not s[0] + s[1] > s[2]:
            longest = max(("d1", "d2", "d3"), key=lambda n: getattr(self, n))
            raise ConfigError("triangle inequality violated", longest)

    @property
    def anchors(self) -> np.ndarray:
        """Base anchors as a (3, 2) array."""
        return np.array([self.a1, self.a2, self.a3], dtype=float)

    def side(self, edge: str) -> float:
        """Length of platform edge ``"12"``, ``"23"`` or ``"31"``."""
        lengths = dict(zip(self.edge_assignment.split("-"), (self.d1, self.d2, self.d3)))
        return lengths[edge]

    @property
    def reach(self) -> float:
        """Upper bound on any leg length over the whole workspace slice family."""
        base = max(np.linalg.norm(self.anchors - self.anchors[:, None], axis=-1).ravel())
        return base + self.d1 + self.d2 + self.d3


@dataclass(frozen=True)
class SliceConfig:
    rho1: float
    grid_n: int = 512
    theta_range: tuple[float, float] = (0.0, TWO_PI)
    alpha_range: tuple[float, float] = (0.0, TWO_PI)

    def __post_init__(self):
        if not (math.isfinite(self.rho1) and self.rho1 > 0):
            raise ConfigError("must be positive", "rho1")
        if int(self.grid_n) != self.grid_n or self.grid_n < 16:
            raise ConfigError("must be an integer >= 16", "grid_n")
        for name in ("theta_range", "alpha_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError("interval must be ordered", name)

    @property
    def full_torus(self) -> bool:
        return (
            self.theta_range[1] - self.theta_range[0] >= TWO_PI
            and self.alpha_range[1] - self.alpha_range[0] >= TWO_PI
        )


@dataclass(frozen=True)
class Config:
    geometry: ManipulatorGeometry
    slice: SliceConfig
    text_hash: str = field(default="", compare=False)
    text: str = field(default="", compare=False, repr=False)


def platform_frame(g: ManipulatorGeometry) -> PlatformFrame:
    """Realise the platform triangle counter-clockwise from its side lengths."""
    l12, l23, l31 = g.side("12"), g.side("23"), g.side("31")
    x = (l12 * l12 + l31 * l31 - l23 * l23) / (2.0 * l12)
    y = math.sqrt(max(l31 * l31 - x * x, 0.0))
    return PlatformFrame(p2=(l12, 0.0), p3=(x, y))


REFERENCE_CONFIG_TEXT = """\
# 3-RPR benchmark manipulator
a1x = 0.0
a1y = 0.0
a2x = 15.91
a2y = 0.0
a3x = 0.0
a3y = 10.0
d1 = 17.04
d2 = 16.54
d3 = 20.84
edge_assignment = "12-23-31"
rho1 = 17.0
grid_n = 512
"""


def parse_config_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key", key)
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key", key)
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        if not value:
            raise ConfigError(f"line {lineno}: empty value", key)
        entries[key] = value
    return entries


def _float(entries, key, default=None):
    if key not in entries:
        if default is None:
            raise ConfigError("missing required key", key)
        return default
    try:
        return float(entries[key])
    except ValueError:
        raise ConfigError(f"not a number: {entries[key]!r}", key) from None


def load_config(config_text: str) -> Config:
    """Parse and validate geometry plus slice settings."""
    e = parse_config_text(config_text)
    g = ManipulatorGeometry(
        a1=(_float(e, "a1x"), _float(e, "a1y")),
        a2=(_float(e, "a2x"), _float(e, "a2y")),
        a3=(_float(e, "a3x"), _float(e, "a3y")),
        d1=_float(e, "d1"),
        d2=_float(e, "d2"),
        d3=_float(e, "d3"),
        edge_assignment=e.get("edge_assignment", DEFAULT_EDGE_ASSIGNMENT),
    )
    grid = _float(e, "grid_n", 512.0)
    if grid != int(grid):
        raise ConfigError("must be an integer", "grid_n")
    s = SliceConfig(rho1=_float(e, "rho1", 17.0), grid_n=int(grid))
    return Config(g, s, hashlib.sha256(config_text.encode()).hexdigest(), config_text)


def load_geometry(config_text: str) -> ManipulatorGeometry:
    return load_config(config_text).geometry


def reference_geometry() -> ManipulatorGeometry:
    return load_geometry(REFERENCE_CONFIG_TEXT)
