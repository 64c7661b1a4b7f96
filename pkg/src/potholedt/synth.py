"""Synthetic road scenes with known road model, potholes and noise.

A scene is a planar road ``g = varkappa (cos(phi) v - sin(phi) u) + varkappa kappa``
minus a depression inside each pothole ellipse, plus seeded Gaussian noise,
with a seeded subset of pixels dropped as invalid.

Scene files hold one scene per line as whitespace-separated ``key=value``
pairs; ``seed`` is mandatory. Potholes are ``;``-separated records
``cu:cv:a:b:angle:depth:profile``::

    width=640 height=480 phi=0.01 varkappa=0.2 kappa=150 noise_sigma=0.1 invalid_fraction=0.02 seed=7 potholes=320:300:30:20:0.5:7:flat
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adaptation import Ellipse, make_rng, random_ellipses
from .disparity import DisparityImage
from .transform import RoadModel

PROFILES = ("flat", "paraboloid")


@dataclass(frozen=True)
class Pothole:
    region: Ellipse
    depth: float
    profile: str = "paraboloid"

    def __post_init__(self):
        if not self.depth > 0:
            raise ValueError("pothole depth must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {self.profile!r}")

    def depression(self, u, v) -> np.ndarray:
        rho2 = self.region.rho2(u, v)
        inside = rho2 < 1.0
        if self.profile == "flat":
            return np.where(inside, self.depth, 0.0)
        return np.where(inside, self.depth * (1.0 - rho2), 0.0)


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    phi: float
    varkappa: float
    kappa: float
    potholes: tuple = field(default_factory=tuple)
    noise_sigma: float = 0.0
    invalid_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "potholes", tuple(self.potholes))
        if self.width < 2 or self.height < 2:
            raise ValueError("scene must be at least 2x2")
        if not -math.pi / 2 < self.phi < math.pi / 2:
            raise ValueError("phi must lie in (-pi/2, pi/2)")
        if not self.varkappa > 0:
            raise ValueError("varkappa must be positive")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.invalid_fraction < 1:
            raise ValueError("invalid_fraction must lie in [0, 1)")
        low = self.plane_min(0, 0, self.width - 1, self.height - 1)
        if not low > 0:
            raise ValueError(f"road plane is not positive over the frame (min {low:.4g})")
        for p in self.potholes:
            e = p.region
            r = max(e.a, e.b)
            lo = self.plane_min(max(0.0, e.cu - r), max(0.0, e.cv - r),
                                min(self.width - 1.0, e.cu + r), min(self.height - 1.0, e.cv + r))
            if lo - p.depth < 0:
                raise ValueError("pothole deeper than the road disparity around it")

    @property
    def model(self) -> RoadModel:
        return RoadModel(self.phi, self.varkappa, self.kappa, self.max_depth)

    @property
    def max_depth(self) -> float:
        return max((p.depth for p in self.potholes), default=0.0)

    def plane_min(self, u0, v0, u1, v1) -> float:
        """Smallest plane value over a box; the plane is linear so a corner wins."""
        m = RoadModel(self.phi, self.varkappa, self.kappa)
        return float(min(m.plane(u, v) for u in (u0, u1) for v in (v0, v1)))


@dataclass(frozen=True, eq=False)
class Scene:
    image: DisparityImage
    mask: np.ndarray
    model: RoadModel  # ground truth; lam equals the deepest pothole
    plane: np.ndarray
    depression: np.ndarray


def generate(spec: SceneSpec) -> Scene:
    h, w = spec.height, spec.width
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    gt = spec.model
    plane = gt.plane(u, v)
    depression = np.zeros((h, w))
    for p in spec.potholes:
        np.maximum(depression, p.depression(u, v), out=depression)
    g = plane - depression

    noise_ss, invalid_ss = np.random.SeedSequence(spec.seed).spawn(2)
    if spec.noise_sigma > 0:
        rng = np.random.Generator(np.random.PCG64(noise_ss))
        g = g + rng.normal(0.0, spec.noise_sigma, size=(h, w))
    n_invalid = int(round(spec.invalid_fraction * h * w))
    if n_invalid:
        rng = np.random.Generator(np.random.PCG64(invalid_ss))
        drop = rng.choice(h * w, size=n_invalid, replace=False)
        g = g.copy()
        g.ravel()[drop] = np.nan
    return Scene(DisparityImage.from_raw(g), depression > 0, gt, plane, depression)


def generate_rgb_standin(disp: DisparityImage, mask, seed: int,
                         darken: float = 0.55) -> np.ndarray:
    """Gray asphalt-like texture, potholes darkened; ``uint8 (H, W, 3)``."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != disp.shape:
        raise ValueError(f"mask shape {mask.shape} does not match disparity {disp.shape}")
    rng = make_rng(seed)
    tex = 140.0 + rng.normal(0.0, 12.0, size=disp.shape)
    tex = np.where(mask, tex * darken, tex)
    tint = np.array([1.0, 0.98, 0.95])
    return np.clip(np.rint(tex[:, :, None] * tint), 0, 255).astype(np.uint8)


# --------------------------------------------------------------------------


def draw_scene(seed: int, width: int = 640, height: int = 480,
               phi_range=(-0.05, 0.05), varkappa_range=(0.1, 0.3),
               kappa_range=(20.0, 300.0), n_potholes=(1, 3), axis_range=(15.0, 40.0),
               depth_range=(5.0, 10.0), profile: str = "flat",
               noise_sigma: float = 0.0, invalid_fraction: float = 0.0,
               max_tries: int = 10000) -> SceneSpec:
    """Random scene parameters, redrawn until the road stays positive."""
    rng = make_rng(seed)
    last = None
    for _ in range(max_tries):
        phi = float(rng.uniform(*phi_range))
        varkappa = float(rng.uniform(*varkappa_range))
        kappa = float(rng.uniform(*kappa_range))
        ellipses = random_ellipses(width, height, rng, n_potholes, axis_range) \
            if n_potholes[1] > 0 else []
        potholes = tuple(Pothole(e, float(rng.uniform(*depth_range)), profile) for e in ellipses)
        try:
            return SceneSpec(width, height, phi, varkappa, kappa, potholes,
                             noise_sigma, invalid_fraction, seed)
        except ValueError as exc:
            last = exc
    raise ValueError(f"no valid scene after {max_tries} draws: {last}")


def _fmt(x) -> str:
    return repr(float(x))


def format_scene(spec: SceneSpec) -> str:
    parts = [f"width={spec.width}", f"height={spec.height}", f"phi={_fmt(spec.phi)}",
             f"varkappa={_fmt(spec.varkappa)}", f"kappa={_fmt(spec.kappa)}",
             f"noise_sigma={_fmt(spec.noise_sigma)}",
             f"invalid_fraction={_fmt(spec.invalid_fraction)}", f"seed={spec.seed}"]
    if spec.potholes:
        recs = [":".join([_fmt(p.region.cu), _fmt(p.region.cv), _fmt(p.region.a),
                          _fmt(p.region.b), _fmt(p.region.angle), _fmt(p.depth), p.profile])
                for p in spec.potholes]
        parts.append("potholes=" + ";".join(recs))
    return " ".join(parts)


_REQUIRED = ("width", "height", "phi", "varkappa", "kappa", "seed")


def parse_scene(line: str) -> SceneSpec:
    kv = {}
    for tok in line.split():
        key, sep, val = tok.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {tok!r}")
        kv[key] = val
    missing = [k for k in _REQUIRED if k not in kv]
    if missing:
        raise ValueError(f"missing keys: {', '.join(missing)}")
    unknown = set(kv) - set(_REQUIRED) - {"noise_sigma", "invalid_fraction", "potholes"}
    if unknown:
        raise ValueError(f"unknown keys: {', '.join(sorted(unknown))}")
    potholes = []
    for rec in filter(None, kv.get("potholes", "").split(";")):
        f = rec.split(":")
        if len(f) != 7:
            raise ValueError(f"pothole record needs 7 fields, got {rec!r}")
        e = Ellipse(*(float(x) for x in f[:5]))
        potholes.append(Pothole(e, float(f[5]), f[6]))
    return SceneSpec(int(kv["width"]), int(kv["height"]), float(kv["phi"]),
                     float(kv["varkappa"]), float(kv["kappa"]), tuple(potholes),
                     float(kv.get("noise_sigma", 0.0)), float(kv.get("invalid_fraction", 0.0)),
                     int(kv["seed"]))


def read_scene_file(path) -> list[SceneSpec]:
    specs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                specs.append(parse_scene(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return specs
