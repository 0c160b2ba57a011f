import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from qsimaging.scene import (
    MaskFormatError,
    ObjectMask,
    PixelCoord,
    Reflection,
    builtin_mask,
    format_pgm,
    load_mask,
    parse_pbm,
    read_pgm,
    reflect,
    resolve_mask,
    sample_position,
    sample_positions,
    write_image_pgm,
    write_mask,
)


def test_load_small_mask(tmp_path):
    path = tmp_path / "m.pbm"
    path.write_text("P1\n2 1\n1 0\n")
    m = load_mask(path)
    assert (m.width, m.height) == (2, 1)
    assert reflect(m, PixelCoord(0, 0)) is Reflection.REFLECTED
    assert reflect(m, PixelCoord(1, 0)) is Reflection.ABSORBED


def test_all_zero_mask_reflects_nowhere():
    m = parse_pbm("P1\n# empty\n4 4\n" + "0 0 0 0\n" * 4)
    assert m.reflective_count == 0


def test_pixels_without_whitespace():
    m = parse_pbm("P1 3 2\n101\n010")
    assert m.pixels.tolist() == [[1, 0, 1], [0, 1, 0]]


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("P4\n1 1\n1\n", "line 1, col 1: expected 'P1'"),
        ("P1\n2 x\n1 0\n", "line 2, col 3: height"),
        ("P1\n2 1\n1 2\n", "line 3, col 3: pixel value"),
        ("P1\n2 2\n1 0 1\n", "dimension mismatch"),
        ("", "empty file"),
    ],
)
def test_malformed_pbm(text, fragment):
    with pytest.raises(MaskFormatError, match=fragment):
        parse_pbm(text)


def test_builtin_masks():
    # set-bit counts of the shipped outlines, frozen after inspection
    air, bird = builtin_mask("aircraft"), builtin_mask("bird")
    assert (air.width, air.height) == (64, 64)
    assert air.reflective_count == 964
    assert bird.reflective_count == 608
    assert air != bird
    assert resolve_mask("aircraft") == air
    with pytest.raises(KeyError):
        builtin_mask("ufo")


def test_mask_is_immutable():
    m = builtin_mask("bird")
    with pytest.raises(ValueError):
        m.pixels[0, 0] = 1


def test_mask_rejects_nonbinary():
    with pytest.raises(ValueError):
        ObjectMask(np.array([[0, 2]]))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.randoms(use_true_random=False))
def test_pbm_round_trip(tmp_path_factory, w, h, rnd):
    bits = np.array([[rnd.randint(0, 1) for _ in range(w)] for _ in range(h)])
    m = ObjectMask(bits)
    path = tmp_path_factory.mktemp("pbm") / "m.pbm"
    write_mask(m, path)
    assert load_mask(path) == m


def test_sample_position_examples():
    one = ObjectMask(np.ones((1, 1)))
    assert sample_position(one, 0.999, 0.0) == PixelCoord(0, 0)
    two = ObjectMask(np.ones((2, 2)))
    assert sample_position(two, 0.6, 0.1) == PixelCoord(1, 0)


def test_sample_position_uniform_chi_square():
    m = ObjectMask(np.ones((4, 4)))
    rng = np.random.default_rng(2024)
    x, y = sample_positions(m, rng.random(100_000), rng.random(100_000))
    counts = np.bincount(y * 4 + x, minlength=16)
    assert chisquare(counts).pvalue > 0.001
    assert chisquare(np.bincount(x, minlength=4)).pvalue > 0.001
    assert chisquare(np.bincount(y, minlength=4)).pvalue > 0.001


def test_reflect_out_of_bounds():
    with pytest.raises(IndexError):
        reflect(ObjectMask(np.ones((2, 2))), PixelCoord(2, 0))


def test_pgm_golden_strings():
    assert format_pgm([[5]]) == "P2\n1 1\n5\n5\n"
    assert format_pgm(np.zeros((2, 2), dtype=int)) == "P2\n2 2\n1\n0 0\n0 0\n"


def test_pgm_round_trip(tmp_path):
    counts = np.array([[0, 3, 7], [12, 0, 1]])
    path = tmp_path / "c.pgm"
    write_image_pgm(counts, path)
    assert np.array_equal(read_pgm(path), counts)
    assert path.read_bytes() == b"P2\n3 2\n12\n0 3 7\n12 0 1\n"


def test_pgm_rejects_negative():
    with pytest.raises(ValueError):
        format_pgm([[-1]])
