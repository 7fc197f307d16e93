import math

import numpy as np
import pytest

from holojet.flow import exposure
from holojet.scene import SceneError, load_scene, parse_scene, print_scene

SHIPPED = ["circles", "twisted", "germfol", "scaling", "regular", "ysquared", "nonbracket"]

HEAD = (
    "chart { dim 2; names x,y; box -2..2, -2..2 }\n"
    "bundle { fibre 1; names f; box -10..10 }\n"
    "foliation { gen R = -y, x; }\n"
)


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scene_round_trips(name):
    sc = load_scene(name)
    again = parse_scene(print_scene(sc))
    assert again.structure() == sc.structure()
    assert print_scene(again) == print_scene(sc)


@pytest.mark.parametrize("name", ["circles", "twisted", "germfol", "scaling", "regular"])
def test_shipped_scenes_validate_cleanly(name):
    assert load_scene(name, strict=True).warnings == []


def test_nonbracket_scene_warns_and_strict_rejects():
    assert any("brackets" in w for w in load_scene("nonbracket").warnings)
    with pytest.raises(SceneError):
        load_scene("nonbracket", strict=True)


def test_exposure_sets_the_rotation_angle():
    sc = load_scene("circles")
    spec = sc.paths["quarter"]
    c = spec.effective_coeffs()["R"]
    assert float(c(t=0.0)) * exposure(1.0, 0.1) == pytest.approx(math.pi / 2, rel=1e-12)
    np.testing.assert_allclose(sc.path("quarter").end, (0.0, 1.0), atol=1e-8)


def test_derived_paths():
    sc = load_scene("circles")
    np.testing.assert_allclose(sc.path("qq").end, (-1.0, 0.0), atol=1e-8)
    np.testing.assert_allclose(sc.path("back").end, (1.0, 0.0), atol=1e-8)
    assert sc.path("qq") is sc.path("qq")


def test_time_dependent_exposure_is_rescaled():
    sc = parse_scene(HEAD + "connection { trivial; }\npath p { start 1, 0; duration 1; coeff R = 1 + t; exposure R = 1; }\n")
    np.testing.assert_allclose(sc.path("p").end, (math.cos(1), math.sin(1)), atol=1e-8)


@pytest.mark.parametrize(
    "body,msg,line,col",
    [
        ("connection { trivial; }\nsection s = x + z;", "unknown identifier 'z'", 5, 17),
        ("connection { lift Q = -y, x | 0; }", "unknown generator 'Q'", 4, 19),
        ("connection { trivial; }\npath p = inverse(nope);", "unknown path 'nope'", 5, 18),
        ("connection { trivial; }\npath p { start 5, 0; }", "lies outside the chart box", 5, 16),
        ("connection { trivial; }\npath p { start 1, 0; duration 1; margin 0.5; }", "margin must lie", 5, 41),
        ("connection { trivial; }\nsection s = x +;", "unexpected ';'", 5, 16),
    ],
)
def test_errors_are_positioned(body, msg, line, col):
    with pytest.raises(SceneError) as info:
        parse_scene(HEAD + body)
    assert msg in str(info.value)
    assert (info.value.line, info.value.col) == (line, col)


def test_foliation_without_generators():
    with pytest.raises(SceneError, match="foliation needs at least one generator"):
        parse_scene("chart { dim 1; names x; box -1..1 }\nbundle { fibre 1; names f; box -1..1 }\nfoliation { }\n")


def test_missing_blocks_and_ordering():
    with pytest.raises(SceneError, match="no chart"):
        parse_scene("")
    with pytest.raises(SceneError, match="before chart"):
        parse_scene("bundle { fibre 1; names f; box -1..1 }")


def test_reserved_names_are_rejected():
    with pytest.raises(SceneError, match="reserved"):
        parse_scene(HEAD + "connection { trivial; }\nsection sin = x;")


def test_comments_are_ignored():
    sc = parse_scene("# header\n" + HEAD + "connection { trivial; } # trailing\n")
    assert sc.connection.is_trivial


def test_unknown_scene_name():
    with pytest.raises(FileNotFoundError):
        load_scene("no_such_scene")
