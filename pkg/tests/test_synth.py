import math

import numpy as np
import pytest

from potholedt.adaptation import Ellipse
from potholedt.synth import (Pothole, SceneSpec, draw_scene, format_scene, generate,
                             generate_rgb_standin, parse_scene, read_scene_file)

from conftest import plane


def spec(**kw):
    base = dict(width=80, height=60, phi=0.02, varkappa=1.0, kappa=40.0,
                potholes=(Pothole(Ellipse(40, 30, 10, 6, 0.3), 5.0, "flat"),), seed=3)
    base.update(kw)
    return SceneSpec(**base)


def test_generate_exact_plane_and_mask():
    s = generate(spec())
    assert np.array_equal(s.plane, plane(0.02, 1.0, 40.0, 60, 80))
    inside = s.mask
    assert np.allclose(s.image.values[inside], s.plane[inside] - 5.0)
    assert np.array_equal(s.image.values[~inside], s.plane[~inside])
    assert s.model.lam == 5.0


def test_paraboloid_profile():
    p = Pothole(Ellipse(40, 30, 10, 10, 0.0), 4.0)
    d = p.depression(np.array([40.0, 45.0, 50.0]), np.array([30.0, 30.0, 30.0]))
    assert d.tolist() == [4.0, 3.0, 0.0]


def test_noise_and_invalid_are_seeded():
    a = generate(spec(noise_sigma=0.5, invalid_fraction=0.1))
    b = generate(spec(noise_sigma=0.5, invalid_fraction=0.1))
    c = generate(spec(noise_sigma=0.5, invalid_fraction=0.1, seed=4))
    assert np.array_equal(a.image.values, b.image.values, equal_nan=True)
    assert not np.array_equal(a.image.values, c.image.values, equal_nan=True)
    assert (~a.image.valid).sum() == round(0.1 * 80 * 60)
    resid = (a.image.values - a.plane + a.depression)[a.image.valid]
    assert abs(resid.std() - 0.5) < 0.05


def test_spec_validation():
    with pytest.raises(ValueError, match="not positive"):
        spec(kappa=-10.0)
    with pytest.raises(ValueError, match="deeper"):
        spec(kappa=3.0, potholes=(Pothole(Ellipse(40, 30, 10, 6, 0.3), 50.0, "flat"),))
    with pytest.raises(ValueError):
        spec(phi=2.0)
    with pytest.raises(ValueError):
        Pothole(Ellipse(1, 1, 1, 1, 0), 1.0, "cone")


def test_draw_scene_deterministic_and_valid():
    a = draw_scene(5, width=160, height=120, axis_range=(5, 15))
    assert a == draw_scene(5, width=160, height=120, axis_range=(5, 15))
    assert 1 <= len(a.potholes) <= 3
    assert generate(a).image.values.min() > 0


def test_scene_text_round_trip(tmp_path):
    s = draw_scene(8, width=160, height=120, axis_range=(5, 15), noise_sigma=0.1)
    line = format_scene(s)
    assert parse_scene(line) == s
    (tmp_path / "s.txt").write_text(f"# header\n{line}\n\n{format_scene(spec())}  # tail\n")
    assert read_scene_file(tmp_path / "s.txt") == [s, spec()]


@pytest.mark.parametrize("line,msg", [
    ("width=10 height=10 phi=0 varkappa=1 kappa=5", "seed"),
    ("width=10 height=10 phi=0 varkappa=1 kappa=5 seed=1 color=red", "unknown"),
    ("width=10 height=10 phi=0 varkappa=1 kappa=5 seed=1 potholes=1:2:3", "7 fields"),
    ("width=10 bogus", "key=value"),
])
def test_parse_scene_errors(line, msg):
    with pytest.raises(ValueError, match=msg):
        parse_scene(line)


def test_scene_file_error_has_line_number(tmp_path):
    (tmp_path / "s.txt").write_text("\nwidth=10\n")
    with pytest.raises(ValueError, match=":2:"):
        read_scene_file(tmp_path / "s.txt")


def test_rgb_standin():
    s = generate(spec())
    rgb = generate_rgb_standin(s.image, s.mask, 1)
    assert rgb.shape == (60, 80, 3) and rgb.dtype == np.uint8
    assert rgb[s.mask].mean() < rgb[~s.mask].mean()
    assert np.array_equal(rgb, generate_rgb_standin(s.image, s.mask, 1))
    with pytest.raises(ValueError):
        generate_rgb_standin(s.image, s.mask[:10], 1)
