import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import grid_quantize
from qbilstm.errors import DomainError, InvalidBitwidthError
from qbilstm.quant import (
    BinaryActivationSpec,
    BinaryWeightSpec,
    PrecisionConfig,
    binarize_activation,
    binarize_weight,
    cell_spec,
    fixed_point_spec,
    make_signed_spec,
    make_unsigned_spec,
    quantize,
    quantize_tensor,
    round_half_away,
)

finite = st.floats(min_value=-4, max_value=4, allow_nan=False)
specs = st.one_of(
    st.integers(2, 12).map(make_signed_spec),
    st.integers(1, 12).map(make_unsigned_spec),
)


@pytest.mark.parametrize(
    "k, f, lo, hi",
    [(4, 3, -1.0, 0.875), (2, 1, -1.0, 0.5), (8, 7, -1.0, 0.9921875)],
)
def test_signed_spec(k, f, lo, hi):
    s = make_signed_spec(k)
    assert (s.k, s.f, s.min, s.max, s.signed) == (k, f, lo, hi, True)


@pytest.mark.parametrize(
    "k, f, hi",
    [(3, 3, 0.875), (1, 1, 0.5), (8, 8, 0.99609375)],
)
def test_unsigned_spec(k, f, hi):
    s = make_unsigned_spec(k)
    assert (s.k, s.f, s.min, s.max, s.signed) == (k, f, 0.0, hi, False)


def test_bitwidth_errors():
    with pytest.raises(InvalidBitwidthError):
        make_signed_spec(1)
    with pytest.raises(InvalidBitwidthError):
        make_unsigned_spec(0)
    with pytest.raises(InvalidBitwidthError):
        fixed_point_spec(4, 4)


def test_signed_spec_is_general_fixed_point_form():
    for k in range(2, 10):
        assert fixed_point_spec(k, k - 1) == make_signed_spec(k)


def test_cell_spec_default():
    s = cell_spec(8)
    assert (s.k, s.f, s.min, s.max) == (8, 4, -8.0, 7.9375)
    assert s.levels == 256


@pytest.mark.parametrize(
    "x, expected",
    [(0.3, 0.25), (1.7, 0.875), (0.0, 0.0), (-1.3, -1.0), (0.0625, 0.125), (-0.0625, -0.125)],
)
def test_quantize_signed4(x, expected):
    assert grid_quantize(x, 4, signed=True) == expected
    assert quantize(x, make_signed_spec(4)) == expected


def test_round_half_away_from_zero():
    assert round_half_away(np.array([0.5, 1.5, 2.5, -0.5, -2.5, 0.49999999999999994])).tolist() == [
        1.0, 2.0, 3.0, -1.0, -3.0, 0.0]
    assert round_half_away(2.5) == 3.0


def test_quantize_rejects_nonfinite():
    for bad in (math.inf, -math.inf, math.nan):
        with pytest.raises(DomainError):
            quantize(bad, make_signed_spec(4))


@settings(max_examples=300, deadline=None)
@given(x=finite, k=st.integers(1, 8), signed=st.booleans())
def test_quantize_matches_enumerated_grid(x, k, signed):
    if signed and k < 2:
        k = 2
    spec = make_signed_spec(k) if signed else make_unsigned_spec(k)
    assert quantize(x, spec) == grid_quantize(x, k, signed)


@settings(max_examples=300, deadline=None)
@given(x=finite, y=finite, spec=specs)
def test_grid_properties(x, y, spec):
    q = quantize(x, spec)
    code = (q - spec.min) * 2 ** spec.f
    assert code == int(code) and 0 <= code <= (spec.max - spec.min) * 2 ** spec.f
    assert spec.contains(q)
    assert quantize(q, spec) == q
    if x <= y:
        assert q <= quantize(y, spec)
    if spec.min <= x <= spec.max:
        assert abs(q - x) <= 2.0 ** (-spec.f - 1)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 8])
def test_level_count(k):
    assert make_unsigned_spec(k).levels == 2 ** k
    if k >= 2:
        assert make_signed_spec(k).levels == 2 ** k


def test_binarize_activation():
    assert binarize_activation(-0.2) == -1.0
    assert binarize_activation(0.7) == 1.0
    assert binarize_activation(0.0) == 1.0
    assert binarize_activation(-0.0) == 1.0


def test_binarize_weight():
    s = 1 / math.sqrt(160)
    assert binarize_weight(-0.4, 128, 32) == pytest.approx(-0.0790569, abs=1e-7)
    assert binarize_weight(0.9, 128, 32) == pytest.approx(0.0790569, abs=1e-7)
    assert binarize_weight(0.9, 128, 32) == s
    assert binarize_weight(0.5, 2, 2) == 0.5


def test_quantize_tensor():
    np.testing.assert_array_equal(quantize_tensor([0.3, 1.7], make_signed_spec(4)), [0.25, 0.875])
    assert quantize_tensor([], make_signed_spec(4)).shape == (0,)
    np.testing.assert_allclose(
        quantize_tensor([-0.4, 0.9], BinaryWeightSpec(128, 32)), [-0.0790569, 0.0790569], atol=1e-7
    )
    np.testing.assert_array_equal(quantize_tensor([[-1e-9, 0.0]], BinaryActivationSpec()), [[-1.0, 1.0]])


def test_quantize_tensor_error_names_index():
    with pytest.raises(DomainError, match=r"\(1, 0\)"):
        quantize_tensor([[0.1, 0.2], [np.nan, 0.3]], make_signed_spec(4))


def test_binarized_tensor_two_values(rng):
    w = quantize_tensor(rng.normal(size=(128, 160)), BinaryWeightSpec(128, 32))
    vals = np.unique(w)
    assert len(vals) == 2 and vals[0] == -vals[1]


class TestPrecisionConfig:
    def test_parse_three(self):
        p = PrecisionConfig.parse("1/2/8")
        assert (p.WQ, p.AQ, p.IQ, p.RQ) == (1, 2, 8, 2)
        assert p.label == "1/2/8"

    def test_parse_four(self):
        p = PrecisionConfig.parse("1/2/1/1")
        assert (p.WQ, p.AQ, p.IQ, p.RQ) == (1, 2, 1, 1)
        assert p.label == "1/2/1/1"
        assert p.cell_bits == 8 and p.fc_weight_bits == 8

    @pytest.mark.parametrize("bad", ["1/2", "1/2/3/4/5", "a/b/c", "0/1/1", "1/1/17"])
    def test_parse_errors(self, bad):
        with pytest.raises(InvalidBitwidthError):
            PrecisionConfig.parse(bad)

    def test_equal_rq_matches_default(self):
        assert PrecisionConfig.parse("2/3/4/3") == PrecisionConfig.parse("2/3/4")
