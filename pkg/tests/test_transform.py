import importlib
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from potholedt.disparity import DisparityImage
from potholedt.transform import (DegenerateGeometryError, DegenerateGeometryWarning, FitInput,
                                 NoRealRootError, RankDeficientError, RoadModel, SolverConfig,
                                 closed_form_coefficients, energy, estimate_phi,
                                 fit_and_transform, fit_input_from_image, fit_road_model,
                                 golden_section, phi_closed_form, solve_scale_offset, transform,
                                 with_lambda)

from conftest import plane


def lstsq_energy(g, u, v, phi):
    t = math.cos(phi) * v - math.sin(phi) * u
    A = np.column_stack([np.ones_like(t), t])
    x, *_ = np.linalg.lstsq(A, g, rcond=None)
    r = g - A @ x
    return float(r @ r), x


def flat(img):
    fit = fit_input_from_image(img)
    return fit.g, fit.u, fit.v


def noisy_fit(seed, phi=0.07, varkappa=1.2, kappa=50.0, h=40, w=50, sigma=0.3):
    rng = np.random.default_rng(seed)
    g = plane(phi, varkappa, kappa, h, w) + rng.normal(0, sigma, (h, w))
    return fit_input_from_image(DisparityImage(g))


def test_fit_input_order_and_validation():
    vals = np.array([[1.0, np.nan, 3.0], [4.0, 5.0, 6.0]])
    fit = fit_input_from_image(DisparityImage(vals))
    assert fit.g.tolist() == [1, 3, 4, 5, 6]
    assert fit.u.tolist() == [0, 2, 0, 1, 2]
    assert fit.v.tolist() == [0, 0, 1, 1, 1]
    with pytest.raises(ValueError):
        FitInput(np.array([1.0, 2.0]), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        FitInput(np.array([1.0, -2.0, 3.0]), np.arange(3.0), np.arange(3.0))
    with pytest.raises(RankDeficientError):
        fit_input_from_image(DisparityImage(np.array([[1.0, 2.0, 3.0], [np.nan] * 3])))


def test_road_model_invariants():
    with pytest.raises(ValueError):
        RoadModel(math.pi / 2, 1.0, 0.0)
    with pytest.raises(ValueError):
        RoadModel(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        RoadModel(0.0, 1.0, 0.0, lam=-1)
    assert with_lambda(RoadModel(0.1, 1.0, 2.0), 3.0).lam == 3.0


@pytest.mark.parametrize("phi", [-1.2, -0.3, 0.0, 0.4, 1.3])
def test_energy_matches_lstsq_oracle(phi):
    fit = noisy_fit(1)
    expected, _ = lstsq_energy(fit.g, fit.u, fit.v, phi)
    assert energy(fit, phi) == pytest.approx(expected, rel=1e-9)


def test_scale_offset_matches_lstsq_oracle():
    fit = noisy_fit(2)
    _, (x0, x1) = lstsq_energy(fit.g, fit.u, fit.v, 0.07)
    so = solve_scale_offset(fit, 0.07)
    assert so.varkappa == pytest.approx(x1, rel=1e-10)
    assert so.kappa == pytest.approx(x0 / x1, rel=1e-10)


def test_scale_offset_warns_when_slope_negative():
    g = 100.0 - plane(0.0, 1.0, 0.0, 10, 10)
    fit = fit_input_from_image(DisparityImage(g))
    with pytest.warns(DegenerateGeometryWarning):
        so = solve_scale_offset(fit, 0.0)
    assert so.varkappa < 0
    with pytest.raises(DegenerateGeometryError):
        fit_road_model(DisparityImage(g), SolverConfig(closed_form=True))


def test_golden_section_quadratic():
    x, fx = golden_section(lambda t: (t - 0.3) ** 2, -1.0, 1.0, 1e-12)
    assert abs(x - 0.3) < 1e-6 and fx < 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_estimate_phi_beats_dense_grid_oracle(seed):
    fit = noisy_fit(seed, sigma=2.0)
    grid = np.linspace(-math.pi / 2, math.pi / 2, 20001)
    best = min(lstsq_energy(fit.g, fit.u, fit.v, p)[0] for p in grid)
    sol = estimate_phi(fit)
    assert sol.method == "grid_refine"
    assert sol.cost <= best * (1 + 1e-12)
    assert -math.pi / 2 <= sol.phi_star < math.pi / 2


def test_estimate_phi_argument_checks():
    fit = noisy_fit(0)
    with pytest.raises(ValueError):
        estimate_phi(fit, grid_size=4)
    with pytest.raises(ValueError):
        estimate_phi(fit, tol=0)


@pytest.mark.parametrize("seed", range(6))
def test_closed_form_agrees_with_grid(seed):
    fit = noisy_fit(seed, phi=0.3 * (seed - 3) / 3, sigma=0.5)
    a = estimate_phi(fit)
    b = phi_closed_form(fit)
    assert b.method == "closed_form" and b.delta >= 0 and len(b.candidates) == 2
    assert abs(a.phi_star - b.phi_star) < 1e-8
    assert b.cost <= a.cost * (1 + 1e-9)


def test_closed_form_coefficients_hand_values():
    # three points: (g, u, v) chosen so centred sums are simple
    fit = FitInput(np.array([1.0, 2.0, 4.0]), np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))
    w = closed_form_coefficients(fit)
    gc, uc, vc = fit.centred
    cuu, cvv, cuv, cgu, cgv = uc @ uc, vc @ vc, uc @ vc, gc @ uc, gc @ vc
    assert w[0] == pytest.approx((cgv ** 2 + cgu ** 2) / 2)
    assert w[1] == pytest.approx((cgv ** 2 - cgu ** 2) / 2)
    assert w[2] == pytest.approx(-cgv * cgu)
    assert w[3] == pytest.approx((cvv + cuu) / 2)
    assert w[4] == pytest.approx((cvv - cuu) / 2)
    assert w[5] == pytest.approx(-cuv)
    sol = phi_closed_form(fit)
    a = w[4] * w[0] - w[3] * w[1]
    b = w[3] * w[2] - w[5] * w[0]
    c = w[4] * w[2] - w[5] * w[1]
    assert sol.delta == pytest.approx(a * a + b * b - c * c)


def test_closed_form_negative_discriminant_falls_back(monkeypatch):
    T = importlib.import_module("potholedt.transform")
    fit_img = DisparityImage(plane(0.1, 1.0, 30.0, 20, 30))

    def boom(fit):
        raise NoRealRootError("forced")
    monkeypatch.setattr(T, "phi_closed_form", boom)
    rep = fit_road_model(fit_img, SolverConfig(closed_form=True))
    assert rep.fallback and rep.solution.method == "grid_refine"
    assert abs(rep.model.phi - 0.1) < 1e-9


@given(st.floats(-0.15, 0.15), st.floats(0.5, 3.0), st.floats(20.0, 100.0))
def test_exact_recovery(phi, varkappa, kappa):
    img = DisparityImage(plane(phi, varkappa, kappa, 30, 40))
    model, td = fit_and_transform(img)
    assert abs(model.phi - phi) < 1e-8
    assert model.varkappa == pytest.approx(varkappa, rel=1e-8)
    assert model.kappa == pytest.approx(kappa, rel=1e-8)
    assert np.nanmax(td.values) - np.nanmin(td.values) < 1e-8
    assert np.nanmin(td.values) == 0.0


@given(st.floats(0.0, 50.0))
def test_offset_shift_changes_only_kappa(c):
    base = plane(0.05, 1.3, 40.0, 30, 40)
    rng = np.random.default_rng(0)
    base = base + rng.normal(0, 0.3, base.shape)
    m0, t0 = fit_and_transform(DisparityImage(base))
    m1, t1 = fit_and_transform(DisparityImage(base + c))
    assert abs(m0.phi - m1.phi) < 1e-9
    assert m1.varkappa == pytest.approx(m0.varkappa, rel=1e-9)
    assert m1.varkappa * m1.kappa == pytest.approx(m0.varkappa * m0.kappa + c, rel=1e-9)
    assert np.allclose(t0.values, t1.values, atol=1e-7)


def test_invalid_pixels_are_transparent():
    g = plane(-0.08, 2.0, 60.0, 30, 40)
    rng = np.random.default_rng(5)
    holes = rng.random(g.shape) < 0.3
    m, td = fit_and_transform(DisparityImage(np.where(holes, np.nan, g)))
    assert abs(m.phi + 0.08) < 1e-9
    assert np.array_equal(np.isnan(td.values), holes)


def test_lambda_makes_minimum_zero():
    g = plane(0.02, 1.0, 50.0, 40, 40)
    g[10:20, 10:20] -= 6.0
    rep = fit_road_model(DisparityImage(g))
    td = transform(DisparityImage(g), rep.model)
    assert rep.model.lam > 0
    assert np.nanmin(td.values) == 0.0


def test_robust_refit_rejects_potholes():
    g = plane(0.04, 1.0, 50.0, 60, 60)
    g[20:40, 20:40] -= 8.0
    img = DisparityImage(g)
    plain = fit_road_model(img).model
    robust = fit_road_model(img, SolverConfig(robust_refit=True))
    assert robust.n_used == 60 * 60 - 400
    assert abs(robust.model.phi - 0.04) < 1e-9
    assert abs(plain.phi - 0.04) > abs(robust.model.phi - 0.04)


def test_monte_carlo_phi_unbiased():
    # mean error over 200 seeded noisy fits must sit within 4 standard errors of 0
    errs = np.array([estimate_phi(noisy_fit(s, h=30, w=40, sigma=1.0)).phi_star - 0.07
                     for s in range(200)])
    se = errs.std(ddof=1) / math.sqrt(errs.size)
    assert abs(errs.mean()) < 4 * se
    assert errs.std() < 5e-3
