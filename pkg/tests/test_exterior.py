"""Exterior algebra: frozen basis cases, oracle cross-checks, invariants."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blt.exterior import (
    ExteriorError,
    MultiVector,
    cross_like,
    hodge_star,
    inner_product,
    rows_wedge,
    transversality_quantity,
    wedge,
)
from tests.conftest import loomis_whitney_maps


def e(d, *idx):
    return MultiVector(d, len(idx), {tuple(sorted(idx)): 1.0})


def minors_oracle(B: np.ndarray) -> dict:
    """Independent coefficient computation: signed maximal minors by
    explicit determinant expansion over column subsets."""
    B = np.atleast_2d(B)
    k, d = B.shape
    out = {}
    for cols in itertools.combinations(range(d), k):
        val = float(np.linalg.det(B[:, cols]))
        if val != 0.0:
            out[cols] = val
    return out


class TestWedge:
    def test_basis_product(self):
        u = wedge(e(3, 0), e(3, 1))
        assert u.terms == {(0, 1): 1.0}

    def test_antisymmetry_annihilates(self):
        assert wedge(e(3, 0), e(3, 0)).prune().terms == {}

    def test_bilinearity(self):
        u = MultiVector(3, 1, {(0,): 1.0, (1,): 1.0})
        out = wedge(u, e(3, 1)).prune()
        assert out.terms == {(0, 1): 1.0}

    def test_dimension_mismatch(self):
        with pytest.raises(ExteriorError):
            wedge(e(3, 0), e(4, 0))

    def test_grade_overflow(self):
        with pytest.raises(ExteriorError):
            wedge(e(2, 0, 1), e(2, 0))

    def test_associativity_random(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b, c = (MultiVector.from_vector(rng.standard_normal(5)) for _ in range(3))
            left = wedge(wedge(a, b), c)
            right = wedge(a, wedge(b, c))
            for key in set(left.terms) | set(right.terms):
                assert left.coefficient(key) == pytest.approx(right.coefficient(key), abs=1e-12)


class TestHodgeStar:
    def test_plane_to_axis(self):
        assert hodge_star(e(3, 0, 1)).terms == {(2,): 1.0}

    def test_volume_to_scalar(self):
        assert hodge_star(e(3, 0, 1, 2)).terms == {(): 1.0}

    def test_involution_on_vector(self):
        out = hodge_star(hodge_star(e(3, 0)))
        assert out.terms == {(0,): 1.0}

    @given(st.integers(2, 6), st.integers(0, 6), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_double_star_sign(self, d, k, seed):
        k = min(k, d)
        rng = np.random.default_rng(seed)
        keys = list(itertools.combinations(range(d), k))
        coeffs = rng.standard_normal(len(keys))
        u = MultiVector(d, k, {key: float(c) for key, c in zip(keys, coeffs)})
        out = hodge_star(hodge_star(u))
        sign = (-1.0) ** (k * (d - k))
        for key in keys:
            assert out.coefficient(key) == pytest.approx(sign * u.coefficient(key), abs=1e-14)

    @given(st.integers(2, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_wedge_with_dual_recovers_inner_product(self, d, k, seed):
        k = min(k, d)
        rng = np.random.default_rng(seed)
        keys = list(itertools.combinations(range(d), k))
        u = MultiVector(d, k, {key: float(c) for key, c in zip(keys, rng.standard_normal(len(keys)))})
        v = MultiVector(d, k, {key: float(c) for key, c in zip(keys, rng.standard_normal(len(keys)))})
        pairing = wedge(u, hodge_star(v)).coefficient(tuple(range(d)))
        expected = inner_product(u, v)
        assert pairing == pytest.approx(expected, rel=1e-12, abs=1e-12)


class TestInnerProduct:
    def test_orthonormal_gram(self):
        assert inner_product(e(3, 0, 1), e(3, 0, 1)) == 1.0

    def test_distinct_keys_orthogonal(self):
        assert inner_product(e(3, 0, 1), e(3, 0, 2)) == 0.0

    def test_bilinear(self):
        u = wedge(MultiVector.from_vector(np.array([2.0, 0, 0])), e(3, 1))
        assert inner_product(u, e(3, 0, 1)) == pytest.approx(2.0)

    def test_gram_determinant_on_decomposables(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            U = rng.standard_normal((2, 4))
            V = rng.standard_normal((2, 4))
            got = inner_product(rows_wedge(U), rows_wedge(V))
            gram = np.array([[U[i] @ V[j] for j in range(2)] for i in range(2)])
            assert got == pytest.approx(float(np.linalg.det(gram)), rel=1e-12, abs=1e-12)


class TestRowsWedge:
    def test_coordinate_rows(self):
        u = rows_wedge(loomis_whitney_maps()[0])
        assert u.terms == {(1, 2): 1.0}

    def test_rank_deficient_vanishes(self):
        B = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        assert rows_wedge(B).prune(1e-15).terms == {}

    def test_frozen_two_row_example(self):
        # minors of ((1,1,0),(0,1,0)): only columns {0,1} survive
        u = rows_wedge(np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]))
        assert u.prune(1e-15).terms == {(0, 1): 1.0}

    def test_empty_matrix_rejected(self):
        with pytest.raises(ExteriorError):
            rows_wedge(np.zeros((0, 3)))

    @pytest.mark.parametrize("shape", [(2, 4), (3, 5)])
    def test_against_minor_oracle(self, shape):
        rng = np.random.default_rng(shape[0] * 10 + shape[1])
        for _ in range(25):
            B = rng.standard_normal(shape)
            got = rows_wedge(B)
            expected = minors_oracle(B)
            keys = set(got.terms) | set(expected)
            for key in keys:
                assert got.coefficient(key) == pytest.approx(
                    expected.get(key, 0.0), rel=1e-12, abs=1e-12
                )


class TestTransversality:
    def test_loomis_whitney_magnitude_one(self):
        assert abs(transversality_quantity(loomis_whitney_maps())) == pytest.approx(1.0)

    def test_overlapping_kernels_vanish(self):
        # two copies of the same projection share a kernel line
        P1, P2, _ = loomis_whitney_maps()
        quantity = transversality_quantity([P1, P1, P2])
        assert quantity == pytest.approx(0.0, abs=1e-14)

    def test_scaled_maps_frozen_value(self):
        maps = [2.0 * B for B in loomis_whitney_maps()]
        assert abs(transversality_quantity(maps)) == pytest.approx(64.0)

    def test_kernel_dimension_mismatch_rejected(self):
        maps = loomis_whitney_maps()[:2]
        with pytest.raises(ExteriorError):
            transversality_quantity(maps)

    def test_swap_preserves_magnitude(self):
        # the dual blocks have grade 1 here, so a swap flips the sign only
        maps = loomis_whitney_maps()
        base = transversality_quantity(maps)
        swapped = transversality_quantity([maps[1], maps[0], maps[2]])
        assert swapped == pytest.approx(-base, rel=1e-12)

    def test_multilinear_in_blocks(self):
        maps = loomis_whitney_maps()
        scaled = [maps[0] * 3.0, maps[1], maps[2]]
        assert transversality_quantity(scaled) == pytest.approx(
            9.0 * transversality_quantity(maps), rel=1e-12
        )


def test_cross_like_matches_cross_product():
    rng = np.random.default_rng(9)
    for _ in range(20):
        rows = rng.standard_normal((2, 3))
        got = cross_like(rows)
        assert np.allclose(got, np.cross(rows[0], rows[1]), atol=1e-12)


def test_multivector_json_roundtrip():
    rng = np.random.default_rng(15)
    u = MultiVector(4, 2, {(0, 1): 1.5, (1, 3): -0.25})
    payload = u.to_json()
    assert payload == {
        "d": 4,
        "grade": 2,
        "terms": [{"idx": [0, 1], "c": 1.5}, {"idx": [1, 3], "c": -0.25}],
    }
    back = MultiVector.from_json(payload)
    assert back.terms == u.terms
