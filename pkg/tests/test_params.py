from fractions import Fraction

import pytest
from gmpy2 import mpq

from lrswap.params import ModelParams, rational, render_scalar


@pytest.mark.parametrize(
    "raw, want",
    [("1/3", mpq(1, 3)), ("0.3", mpq(3, 10)), (0.3, mpq(3, 10)), (2, mpq(2)), (Fraction(2, 7), mpq(2, 7))],
)
def test_rational_coercion(raw, want):
    assert rational(raw) == want


def test_rational_rejects_bool():
    with pytest.raises(TypeError):
        rational(True)


def test_params_validation():
    with pytest.raises(ValueError, match="expected 2"):
        ModelParams(2, ("1/2",))
    with pytest.raises(ValueError, match="outside"):
        ModelParams(1, ("3/2",))
    with pytest.raises(ValueError, match="p ="):
        ModelParams(1, ("1/2",), p="-1")


def test_params_derived_quantities():
    p = ModelParams(2, ("1/3", "2/5"), p="3/4")
    assert p.lam == (mpq(2, 3), mpq(3, 5))
    assert p.q == mpq(1, 4)
    assert p.alpha_of(1) == mpq(2, 9)
    assert not p.is_binary()
    assert ModelParams(2, (0, 1)).is_binary()


def test_float_mode_and_rendering():
    p = ModelParams(2, ("1/4", 0.5), exact=False)
    assert p.mu == (0.25, 0.5)
    assert render_scalar(mpq(1, 3)) == "1/3"
    assert render_scalar(0.25) == "0.25"
    assert p.to_float().mu == (0.25, 0.5)
