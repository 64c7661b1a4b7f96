"""Road-model estimation and the disparity transform.

On-road pixels obey ``g = varkappa * (cos(phi) * v - sin(phi) * u) + varkappa * kappa``.
``phi`` is found by minimising the residual of the best affine fit of ``g``
against ``t(phi) = cos(phi) v - sin(phi) u``; ``varkappa`` and ``kappa`` then
follow from ordinary least squares, and the transformed image is the
residual shifted by a non-negative constant ``lam``.

Two solvers for ``phi`` are provided: a grid scan refined by golden-section
search (the default), and the closed form documented in
``docs/closed_form.md``. They are checked against each other in the tests.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import kernels
from .disparity import DisparityImage

log = logging.getLogger(__name__)

_HALF_PI = 0.5 * math.pi
_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
# relative floor on sum((t - mean t)^2) below which the fit is rank deficient
_RANK_RTOL = 1e-12


class RankDeficientError(ValueError):
    """The design matrix ``[1, t(phi)]`` has collinear columns."""


class NoRealRootError(ValueError):
    """The closed-form discriminant is negative."""


class DegenerateGeometryWarning(UserWarning):
    pass


class DegenerateGeometryError(ValueError):
    """Fitted scale ``varkappa`` is not positive."""


@dataclass(frozen=True)
class RoadModel:
    phi: float
    varkappa: float
    kappa: float
    lam: float = 0.0

    def __post_init__(self):
        if not -_HALF_PI < self.phi < _HALF_PI:
            raise ValueError(f"phi must lie in (-pi/2, pi/2), got {self.phi}")
        if not self.varkappa > 0:
            raise ValueError(f"varkappa must be positive, got {self.varkappa}")
        if not self.lam >= 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")

    def plane(self, u, v):
        """Modelled road disparity at pixel coordinates ``(u, v)``."""
        c, s = math.cos(self.phi), math.sin(self.phi)
        return self.varkappa * (c * np.asarray(v) - s * np.asarray(u)) + self.varkappa * self.kappa


@dataclass(frozen=True, eq=False)
class FitInput:
    """Observed samples ``(g, u, v)``; centred moments are cached on demand."""

    g: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        arrays = [np.ascontiguousarray(a, dtype=np.float64).ravel()
                  for a in (self.g, self.u, self.v)]
        k = arrays[0].size
        if any(a.size != k for a in arrays):
            raise ValueError("g, u and v must have equal length")
        if k < 3:
            raise ValueError(f"need at least 3 samples, got {k}")
        if not (np.all(np.isfinite(arrays[0])) and np.all(arrays[0] > 0)):
            raise ValueError("disparities must be finite and positive")
        for name, a in zip(("g", "u", "v"), arrays):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def k(self) -> int:
        return self.g.size

    @cached_property
    def means(self):
        return float(np.mean(self.g)), float(np.mean(self.u)), float(np.mean(self.v))

    @cached_property
    def centred(self):
        gm, um, vm = self.means
        return self.g - gm, self.u - um, self.v - vm

    @cached_property
    def moments(self):
        """Centred sums (Cuu, Cvv, Cuv, Cgu, Cgv, Cgg)."""
        gc, uc, vc = self.centred
        return (float(uc @ uc), float(vc @ vc), float(uc @ vc),
                float(gc @ uc), float(gc @ vc), float(gc @ gc))


@dataclass(frozen=True)
class PhiSolution:
    phi_star: float
    cost: float
    method: str  # "grid_refine" or "closed_form"
    candidates: tuple = ()  # ((phi, cost), (phi, cost)) for q = -1, +1
    delta: float | None = None


@dataclass(frozen=True)
class SolverConfig:
    grid_size: int = 1024
    tol: float = 1e-13
    closed_form: bool = False
    robust_refit: bool = False
    mad_k: float = 3.0


class ScaleOffset(NamedTuple):
    varkappa: float
    kappa: float


@dataclass(frozen=True)
class FitReport:
    model: RoadModel
    solution: PhiSolution
    n_used: int
    fallback: bool = False
    notes: tuple = field(default_factory=tuple)


def _wrap_phi(phi: float) -> float:
    """Map an angle onto [-pi/2, pi/2) using the period-pi symmetry."""
    return (phi + _HALF_PI) % math.pi - _HALF_PI


# --------------------------------------------------------------------------


def fit_input_from_image(img: DisparityImage) -> FitInput:
    """Collect ``(g, u, v)`` over valid pixels in row-major order."""
    valid = img.valid
    vs, us = np.nonzero(valid)
    if vs.size < 3:
        raise ValueError(f"need at least 3 valid pixels, got {vs.size}")
    if np.all(vs == vs[0]):
        raise RankDeficientError("all valid pixels lie in one row")
    return FitInput(img.values[valid], us.astype(np.float64), vs.astype(np.float64))


def _slope(fit: FitInput, c: float, s: float) -> float:
    cuu, cvv, cuv, cgu, cgv, _ = fit.moments
    d = c * c * cvv - 2.0 * c * s * cuv + s * s * cuu
    if d <= _RANK_RTOL * (cuu + cvv):
        raise RankDeficientError("t(phi) is constant over the samples")
    return (c * cgv - s * cgu) / d


def energy(fit: FitInput, phi: float) -> float:
    """Residual sum of squares of the best fit ``g ~ x0 + x1 * t(phi)``.

    Evaluated pixel by pixel on centred data, which keeps full absolute
    precision near the optimum (the moment shortcut cancels badly there).
    """
    c, s = math.cos(phi), math.sin(phi)
    slope = _slope(fit, c, s)
    gc, uc, vc = fit.centred
    return kernels.residual_ss(gc, uc, vc, c, s, slope)


def _energy_moments(fit: FitInput, phis: np.ndarray) -> np.ndarray:
    cuu, cvv, cuv, cgu, cgv, cgg = fit.moments
    c, s = np.cos(phis), np.sin(phis)
    d = c * c * cvv - 2.0 * c * s * cuv + s * s * cuu
    n = c * cgv - s * cgu
    out = np.full(phis.shape, np.inf)
    ok = d > _RANK_RTOL * (cuu + cvv)
    out[ok] = cgg - n[ok] ** 2 / d[ok]
    return out


def golden_section(f, a: float, b: float, tol: float, max_iter: int = 500):
    """Minimise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    while b - a > tol and it < max_iter:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = f(x2)
        it += 1
    return (x1, f1) if f1 <= f2 else (x2, f2)


def estimate_phi(fit: FitInput, grid_size: int = 1024, tol: float = 1e-13) -> PhiSolution:
    """Grid scan over (-pi/2, pi/2) followed by golden-section refinement.

    The energy has period pi and a single minimum per period, so the
    minimiser lies within one grid step of the best sample.
    """
    if grid_size < 16:
        raise ValueError("grid_size must be >= 16")
    if not tol > 0:
        raise ValueError("tol must be positive")
    step = math.pi / grid_size
    phis = -_HALF_PI + (np.arange(grid_size) + 0.5) * step
    coarse = _energy_moments(fit, phis)
    if not np.isfinite(coarse).any():
        raise RankDeficientError("energy undefined at every grid sample")
    best = float(phis[int(np.argmin(coarse))])

    def f(phi):
        try:
            return energy(fit, phi)
        except RankDeficientError:
            return math.inf

    phi, _ = golden_section(f, best - step, best + step, tol)
    phi = _wrap_phi(phi)
    return PhiSolution(phi_star=phi, cost=energy(fit, phi), method="grid_refine")


def closed_form_coefficients(fit: FitInput):
    """``(w0, ..., w5)``: double-angle coefficients of the explained and total
    variance of ``t(phi)``; see ``docs/closed_form.md``."""
    cuu, cvv, cuv, cgu, cgv, _ = fit.moments
    # (c*Cgv - s*Cgu)^2 and c^2 Cvv - 2cs Cuv + s^2 Cuu, each written as
    # a0 + a1 cos(2 phi) + a2 sin(2 phi)
    w0 = 0.5 * (cgv * cgv + cgu * cgu)
    w1 = 0.5 * (cgv * cgv - cgu * cgu)
    w2 = -cgv * cgu
    w3 = 0.5 * (cvv + cuu)
    w4 = 0.5 * (cvv - cuu)
    w5 = -cuv
    return w0, w1, w2, w3, w4, w5


def phi_closed_form(fit: FitInput) -> PhiSolution:
    """Both stationary angles from the closed form; keep the lower-energy one.

    Raises :class:`NoRealRootError` when the discriminant is negative.
    """
    w0, w1, w2, w3, w4, w5 = closed_form_coefficients(fit)
    a = w4 * w0 - w3 * w1
    b = w3 * w2 - w5 * w0
    c = w4 * w2 - w5 * w1
    delta = a * a + b * b - c * c
    if delta < 0:
        raise NoRealRootError(f"discriminant is negative ({delta:.3e})")
    den = w3 * w2 + w5 * w1 - w5 * w0 - w4 * w2
    root = math.sqrt(delta)
    candidates = []
    for q in (-1.0, 1.0):
        # atan2 agrees with arctan(num / den) modulo pi and tolerates den == 0
        phi = _wrap_phi(math.atan2(a + q * root, den))
        try:
            cost = energy(fit, phi)
        except RankDeficientError:
            cost = math.inf
        candidates.append((phi, cost))
    phi, cost = min(candidates, key=lambda pc: pc[1])
    if not math.isfinite(cost):
        raise RankDeficientError("energy undefined at both closed-form roots")
    return PhiSolution(phi_star=phi, cost=cost, method="closed_form",
                       candidates=tuple(candidates), delta=delta)


def solve_scale_offset(fit: FitInput, phi: float) -> ScaleOffset:
    """Least-squares ``x = [x0, x1]``; returns ``(x1, x0 / x1)``.

    A non-positive ``x1`` is returned as-is with a
    :class:`DegenerateGeometryWarning`.
    """
    c, s = math.cos(phi), math.sin(phi)
    slope = _slope(fit, c, s)
    gm, um, vm = fit.means
    intercept = gm - slope * (c * vm - s * um)
    if not slope > 0:
        warnings.warn(f"non-positive road scale {slope!r} at phi={phi!r}",
                      DegenerateGeometryWarning, stacklevel=2)
    kappa = intercept / slope if slope != 0 else math.inf
    return ScaleOffset(slope, kappa)


def _road_residual(img: DisparityImage, phi: float, varkappa: float, kappa: float) -> np.ndarray:
    h, w = img.shape
    v = np.arange(h, dtype=np.float64)[:, None]
    u = np.arange(w, dtype=np.float64)[None, :]
    c, s = math.cos(phi), math.sin(phi)
    return img.values - varkappa * (c * v - s * u) - varkappa * kappa


def transform(img: DisparityImage, model: RoadModel) -> DisparityImage:
    """``G'(u, v) = G(u, v) - varkappa (cos(phi) v - sin(phi) u) - varkappa kappa + lam``."""
    out = _road_residual(img, model.phi, model.varkappa, model.kappa) + model.lam
    return DisparityImage(out)


def _solve_phi(fit: FitInput, cfg: SolverConfig):
    if cfg.closed_form:
        try:
            return phi_closed_form(fit), False
        except (NoRealRootError, RankDeficientError) as exc:
            log.debug("closed form failed (%s); falling back to grid search", exc)
            return estimate_phi(fit, cfg.grid_size, cfg.tol), True
    return estimate_phi(fit, cfg.grid_size, cfg.tol), False


def _fit_once(fit: FitInput, cfg: SolverConfig):
    sol, fell_back = _solve_phi(fit, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGeometryWarning)
        so = solve_scale_offset(fit, sol.phi_star)
    if not so.varkappa > 0:
        raise DegenerateGeometryError(f"fitted varkappa {so.varkappa!r} is not positive")
    return sol, so, fell_back


def fit_road_model(img: DisparityImage, cfg: SolverConfig = SolverConfig()) -> FitReport:
    """Fit ``(phi, varkappa, kappa)`` and choose ``lam``.

    ``lam = max(0, -min residual)`` so the smallest transformed value is 0.
    With ``cfg.robust_refit`` the fit is repeated once without pixels more
    than ``cfg.mad_k`` median absolute deviations below the first plane.
    """
    fit = fit_input_from_image(img)
    sol, so, fell_back = _fit_once(fit, cfg)
    n_used = fit.k
    notes = []
    if cfg.robust_refit:
        r = _road_residual(img, sol.phi_star, so.varkappa, so.kappa)
        valid = img.valid
        rv = r[valid]
        med = float(np.median(rv))
        mad = float(np.median(np.abs(rv - med)))
        # exact data has mad == 0; keep the cut above rounding noise
        floor = 1e-9 * max(1.0, float(np.median(np.abs(img.values[valid]))))
        keep = valid & (r >= med - cfg.mad_k * max(mad, floor))
        refit_img = DisparityImage(np.where(keep, img.values, np.nan))
        try:
            fit2 = fit_input_from_image(refit_img)
            sol, so, fb2 = _fit_once(fit2, cfg)
            fell_back = fell_back or fb2
            n_used = fit2.k
        except (ValueError, RankDeficientError) as exc:
            notes.append(f"refit skipped: {exc}")
            log.debug("robust refit skipped: %s", exc)
    r = _road_residual(img, sol.phi_star, so.varkappa, so.kappa)
    lam = max(0.0, -float(np.nanmin(r)))
    model = RoadModel(sol.phi_star, so.varkappa, so.kappa, lam)
    return FitReport(model, sol, n_used, fell_back, tuple(notes))


def fit_and_transform(img: DisparityImage, cfg: SolverConfig = SolverConfig()):
    """Returns ``(RoadModel, transformed DisparityImage)``."""
    report = fit_road_model(img, cfg)
    return report.model, transform(img, report.model)


def with_lambda(model: RoadModel, lam: float) -> RoadModel:
    return replace(model, lam=lam)
