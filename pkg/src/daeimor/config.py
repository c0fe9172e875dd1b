"""Run configuration: parsing, defaults, conjugate completion and echo."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from daeimor.errors import ConfigError
from daeimor.systems import InterpolationData

DIRECTION_STRATEGIES = ("unit-columns", "random-seeded", "user-supplied")


def _default_points():
    return [[0.0, float(w)] for w in np.logspace(-2, 2, 10)]


def _default_system():
    return {"generator": "oseen", "nx": 24, "ny": 12, "extent": [-2.0, 6.0, -2.0, 2.0],
            "obstacle": [-0.5, 0.5, -0.5, 0.5], "reynolds": 10.0, "base_flow": "parabolic"}


@dataclass
class RunConfig:
    seed: int = 0
    system: dict = field(default_factory=_default_system)
    points: list = field(default_factory=_default_points)
    directions: str = "unit-columns"
    right_dirs: list | None = None
    left_dirs: list | None = None
    mode: str = "galerkin"
    svd_tol: float = 1e-10
    R: float | list = 10.0
    sweep: dict = field(default_factory=lambda: {"omega_min": 1e-2, "omega_max": 1e2,
                                                 "count": 200, "spacing": "log"})
    simulate: dict = field(default_factory=lambda: {"dt": 0.05, "T": 50.0})
    verify_tol: float = 1e-8
    auto_completed: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**copy.deepcopy(data))
        cfg.check()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def check(self):
        if self.mode not in ("petrov_galerkin", "galerkin"):
            raise ConfigError(f"mode must be petrov_galerkin or galerkin, got {self.mode!r}")
        if self.directions not in DIRECTION_STRATEGIES:
            raise ConfigError(f"directions must be one of {DIRECTION_STRATEGIES}")
        if self.directions == "user-supplied" and (self.right_dirs is None or self.left_dirs is None):
            raise ConfigError("user-supplied directions need right_dirs and left_dirs")
        try:
            pts = [complex(float(a), float(b)) for a, b in self.points]
        except (TypeError, ValueError):
            raise ConfigError("points must be a list of [real, imag] pairs") from None
        if not pts:
            raise ConfigError("at least one interpolation point is required")
        if not self.svd_tol > 0:
            raise ConfigError("svd_tol must be positive")

    def resolved(self) -> "RunConfig":
        """Copy with conjugate partners appended to the point list (recorded in ``auto_completed``)."""
        cfg = copy.deepcopy(self)
        pts = [complex(a, b) for a, b in cfg.points]
        out, added = [], []
        right = cfg.right_dirs
        left = cfg.left_dirs
        new_right, new_left = [], []
        for k, z in enumerate(pts):
            out.append(z)
            if right is not None:
                new_right.append(right[k])
                new_left.append(left[k])
            if z.imag != 0 and z.conjugate() not in pts:
                out.append(z.conjugate())
                added.append([z.real, -z.imag])
                if right is not None:
                    new_right.append([[a, -b] for a, b in right[k]])
                    new_left.append([[a, -b] for a, b in left[k]])
        cfg.points = [[z.real, z.imag] for z in out]
        cfg.auto_completed = self.auto_completed + added
        if right is not None:
            cfg.right_dirs, cfg.left_dirs = new_right, new_left
        return cfg


def _pair_ids(points):
    """Group index per point: conjugate partners share an id."""
    ids, seen = [], {}
    for z in points:
        key = (z.real, abs(z.imag))
        ids.append(seen.setdefault(key, len(seen)))
    return ids


def interpolation_data(cfg: RunConfig, m: int, p: int) -> InterpolationData:
    """Interpolation data for the resolved config and an m-input, p-output system."""
    pts = np.array([complex(a, b) for a, b in cfg.points])
    r = len(pts)
    ids = _pair_ids(pts)
    if cfg.directions == "user-supplied":
        b = np.array([[complex(a, c) for a, c in row] for row in cfg.right_dirs]).reshape(r, m)
        c = np.array([[complex(a, d) for a, d in row] for row in cfg.left_dirs]).reshape(r, p)
    elif cfg.directions == "unit-columns":
        b = np.zeros((r, m), complex)
        c = np.zeros((r, p), complex)
        for k, g in enumerate(ids):
            b[k, g % m] = 1.0
            c[k, g % p] = 1.0
    else:
        rng = np.random.default_rng(cfg.seed)
        n_groups = max(ids) + 1
        gb = rng.standard_normal((n_groups, m)) + 1j * rng.standard_normal((n_groups, m))
        gc = rng.standard_normal((n_groups, p)) + 1j * rng.standard_normal((n_groups, p))
        b = np.empty((r, m), complex)
        c = np.empty((r, p), complex)
        first = {}
        for k, g in enumerate(ids):
            if pts[k].imag == 0:
                b[k], c[k] = gb[g].real, gc[g].real
            elif g in first and pts[first[g]] == pts[k].conjugate():
                b[k], c[k] = b[first[g]].conj(), c[first[g]].conj()
            else:
                b[k], c[k] = gb[g], gc[g]
            first.setdefault(g, k)
    closed = all(z.imag == 0 or z.conjugate() in set(pts) for z in pts)
    data = InterpolationData(pts, b, c, False)
    if closed:
        try:
            data = InterpolationData(pts, b, c, True)
        except ValueError:
            pass
    return data
