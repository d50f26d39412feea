"""Quadrature layer: masses, ratios, discrete inequality, convolution report."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blt.datum import BLDatum, ProjectionScheme, bl_constant_classC
from blt.inputs import (
    BoxIndicator,
    GaussianFunction,
    GridFunction,
    ZeroMassError,
    convolve_grids,
    integrate,
)
from blt.quadrature import (
    QuadratureSpec,
    UnboundedDomainError,
    ball_inequality_report,
    bl_ratio,
    canonical_extremizer,
    discrete_finner,
)
from tests.conftest import loomis_whitney_maps, random_class_c_datum


def lw_scheme():
    return ProjectionScheme(3, [1, 1, 1])


def x_grid_8():
    mesh = np.meshgrid(*[np.arange(8.0)] * 3, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


class TestIntegrate:
    def test_grid_unit_mass(self):
        g = GridFunction(np.zeros(2), 0.5, np.ones((2, 2)))
        assert integrate(g) == pytest.approx(1.0)

    def test_gaussian_normalised(self):
        assert integrate(GaussianFunction(np.eye(2))) == pytest.approx(1.0)

    def test_box_determinant(self):
        assert integrate(BoxIndicator(2 * np.eye(2))) == pytest.approx(4.0)

    def test_negative_grid_rejected(self):
        with pytest.raises(ValueError):
            GridFunction(np.zeros(1), 1.0, np.array([1.0, -0.5]))


class TestBlRatio:
    def test_unit_boxes_over_unit_cube(self, lw_datum):
        spec = QuadratureSpec("tensor-midpoint", resolution=32)
        value, err = bl_ratio(
            lw_datum, [BoxIndicator(np.eye(2))] * 3, (np.zeros(3), np.ones(3)), spec
        )
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_inputs_match_closed_form(self, lw_datum):
        from blt.datum import gaussian_ratio

        spec = QuadratureSpec("tensor-midpoint", resolution=72)
        value, err = bl_ratio(
            lw_datum,
            [GaussianFunction(np.eye(2))] * 3,
            (np.full(3, -4.0), np.full(3, 4.0)),
            spec,
        )
        closed = gaussian_ratio(lw_datum, [np.eye(2)] * 3)
        assert value == pytest.approx(closed, abs=max(3 * err, 1e-6))

    def test_zero_mass_rejected(self, lw_datum):
        zero = GridFunction(np.zeros(2), 1.0, np.zeros((2, 2)))
        good = GridFunction(np.zeros(2), 1.0, np.ones((2, 2)))
        with pytest.raises(ZeroMassError):
            bl_ratio(
                lw_datum,
                [good, zero, good],
                None,
                QuadratureSpec("tensor-midpoint", resolution=8),
            )

    def test_unbounded_without_region_rejected(self, lw_datum):
        spec = QuadratureSpec("tensor-midpoint", resolution=8)
        with pytest.raises(UnboundedDomainError):
            bl_ratio(lw_datum, [GaussianFunction(np.eye(2))] * 3, None, spec)

    def test_monte_carlo_reproducible(self, lw_datum):
        spec = QuadratureSpec("monte-carlo", samples=20_000, seed=13)
        inputs = [BoxIndicator(np.eye(2))] * 3
        region = (np.zeros(3), np.ones(3))
        a = bl_ratio(lw_datum, inputs, region, spec)
        b = bl_ratio(lw_datum, inputs, region, spec)
        assert a == b  # bitwise

    def test_grid_refinement_within_error_estimate(self, lw_datum):
        # fixed smooth data sampled on successively finer grids
        def sampled_grid(spacing):
            axes = [np.arange(0, 2.0, spacing) + spacing / 2] * 2
            X, Y = np.meshgrid(*axes, indexing="ij")
            vals = 1.0 + 0.5 * np.sin(X) * np.cos(Y)
            return GridFunction(np.zeros(2), spacing, vals)

        spec = QuadratureSpec("tensor-midpoint", resolution=64)
        region = (np.zeros(3), np.full(3, 2.0))
        coarse, err = bl_ratio(lw_datum, [sampled_grid(0.25)] * 3, region, spec)
        fine, _ = bl_ratio(lw_datum, [sampled_grid(0.125)] * 3, region, spec)
        assert abs(fine - coarse) <= 3 * max(err, 1e-4)


class TestDiscreteFinner:
    def test_constant_inputs_equality(self):
        lhs, rhs = discrete_finner([np.ones((2, 2))] * 3, lw_scheme())
        assert lhs == pytest.approx(8.0, abs=1e-14)
        assert rhs == pytest.approx(8.0, abs=1e-14)

    def test_point_mass(self):
        arrays = []
        for _ in range(3):
            a = np.zeros((3, 3))
            a[0, 0] = 1.0
            arrays.append(a)
        lhs, rhs = discrete_finner(arrays, lw_scheme())
        assert lhs == pytest.approx(1.0)
        assert rhs == pytest.approx(1.0)

    def test_random_trials_never_violate(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            arrays = [rng.uniform(0, 1, (4, 4)) for _ in range(3)]
            lhs, rhs = discrete_finner(arrays, lw_scheme())
            assert lhs <= rhs * (1 + 1e-12)

    def test_perturbed_constants_strict(self):
        arrays = [np.ones((2, 2)) for _ in range(3)]
        arrays[0][0, 0] = 1.5
        lhs, rhs = discrete_finner(arrays, lw_scheme())
        assert lhs < rhs * (1 - 1e-6)

    def test_negative_entry_rejected(self):
        bad = [np.ones((2, 2)), np.array([[1.0, -1.0], [1.0, 1.0]]), np.ones((2, 2))]
        with pytest.raises(ValueError):
            discrete_finner(bad, lw_scheme())

    def test_mixed_kernel_dimensions(self):
        # one array per block on a [1, 2] split of three axes
        scheme = ProjectionScheme(3, [1, 2])
        rng = np.random.default_rng(3)
        f1 = rng.uniform(0, 1, (3, 3))  # axes {1, 2}
        f2 = rng.uniform(0, 1, 3)  # axis {0}
        lhs, rhs = discrete_finner([f1, f2], scheme)
        # m = 2: exponent 1, direct product structure gives equality
        assert lhs == pytest.approx(f2.sum() * f1.sum(), rel=1e-12)
        assert lhs <= rhs * (1 + 1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_property_random_shapes(self, seed):
        rng = np.random.default_rng(seed)
        arrays = [rng.uniform(0, 2, (3, 3)) for _ in range(3)]
        lhs, rhs = discrete_finner(arrays, lw_scheme())
        assert lhs <= rhs * (1 + 1e-12)


class TestCanonicalExtremizer:
    def test_loomis_whitney_unit_squares(self, lw_datum):
        boxes, ratio = canonical_extremizer(lw_datum)
        assert ratio == pytest.approx(1.0, abs=1e-14)
        for box in boxes:
            assert np.allclose(np.abs(box.matrix), np.eye(2))

    def test_doubled_maps_frozen_ratio(self):
        datum = BLDatum(3, [2 * B for B in loomis_whitney_maps()], np.full(3, 0.5))
        _, ratio = canonical_extremizer(datum)
        assert ratio == pytest.approx(0.125, rel=1e-12)

    def test_rotated_invariance(self):
        rng = np.random.default_rng(4)
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        datum = BLDatum(3, [B @ Q for B in loomis_whitney_maps()], np.full(3, 0.5))
        _, ratio = canonical_extremizer(datum)
        assert ratio == pytest.approx(1.0, rel=1e-10)

    def test_ratio_equals_constant_on_random_data(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            datum, _, _, _ = random_class_c_datum(rng, int(rng.integers(3, 6)))
            _, ratio = canonical_extremizer(datum)
            assert ratio == pytest.approx(bl_constant_classC(datum), rel=1e-10)

    def test_bl_ratio_reproduces_constant_exactly(self, lw_datum):
        # exact indicator path, no sampling
        boxes, _ = canonical_extremizer(lw_datum)
        spec = QuadratureSpec("tensor-midpoint", resolution=8)
        value, err = bl_ratio(lw_datum, boxes, None, spec)
        assert err == 0.0
        assert value == pytest.approx(bl_constant_classC(lw_datum), rel=1e-10)

    def test_bl_ratio_exact_path_random_datum(self):
        rng = np.random.default_rng(6)
        datum, _, _, _ = random_class_c_datum(rng, 3)
        boxes, _ = canonical_extremizer(datum)
        spec = QuadratureSpec("tensor-midpoint", resolution=8)
        value, err = bl_ratio(datum, boxes, None, spec)
        assert value == pytest.approx(bl_constant_classC(datum), rel=1e-9)


class TestConvolution:
    def test_exact_mass_identity(self):
        rng = np.random.default_rng(7)
        f = GridFunction(np.zeros(2), 0.5, rng.uniform(0, 1, (3, 4)))
        g = GridFunction(np.array([1.0, -0.5]), 0.5, rng.uniform(0, 1, (2, 2)))
        conv = convolve_grids(f, g)
        assert integrate(conv) == pytest.approx(integrate(f) * integrate(g), rel=1e-12)

    def test_pointwise_against_direct_integral(self):
        rng = np.random.default_rng(8)
        f = GridFunction(np.zeros(1), 1.0, rng.uniform(0, 1, 3))
        g = GridFunction(np.zeros(1), 1.0, rng.uniform(0, 1, 2))
        conv = convolve_grids(f, g)
        ys = np.linspace(-0.5, 5.5, 41)[:, None]
        fine = np.linspace(0, 5, 20001)
        for y in ys:
            direct = np.trapezoid(
                f.evaluate((y - fine)[:, None]) * g.evaluate(fine[:, None]), fine
            )
            assert conv.evaluate(y[None, :])[0] == pytest.approx(direct, abs=2e-3)


class TestBallReport:
    def test_single_cell_frozen_closed_ratio(self, lw_datum):
        spec = QuadratureSpec("tensor-midpoint", resolution=32)
        f = [GridFunction(np.zeros(2), 1.0, np.ones((1, 1)))] * 3
        report = ball_inequality_report(lw_datum, f, f, x_grid_8(), spec)
        # both sides close at ratio 1: lhs = sup * conv exactly
        assert report.lhs == pytest.approx(1.0, abs=1e-10)
        assert report.sup_term == pytest.approx(1.0, abs=1e-10)
        assert report.conv_term == pytest.approx(1.0, rel=5e-3)
        assert report.slack >= -5e-2
        assert report.flag == "consistent"

    def test_extremizer_one_sided_form(self, lw_datum):
        spec = QuadratureSpec("tensor-midpoint", resolution=32)
        rng = np.random.default_rng(9)
        f = [GridFunction(np.zeros(2), 1.0, rng.uniform(0.5, 1.5, (4, 4))) for _ in range(3)]
        boxes, _ = canonical_extremizer(lw_datum)
        fprime = [GridFunction(np.zeros(2), 1.0, np.ones((1, 1)))] * 3
        report = ball_inequality_report(lw_datum, f, fprime, x_grid_8(), spec)
        assert report.details["ratio_f"] <= report.sup_term * (1 + 1e-9)

    def test_singleton_grid_sup(self, lw_datum):
        spec = QuadratureSpec("tensor-midpoint", resolution=32)
        f = [GridFunction(np.zeros(2), 1.0, np.ones((2, 2)))] * 3
        report = ball_inequality_report(lw_datum, f, f, np.array([[2.0, 2.0, 2.0]]), spec)
        assert report.excluded_grid_points == 0
        assert report.sup_term > 0

    def test_zero_mass_rejected(self, lw_datum):
        spec = QuadratureSpec("tensor-midpoint", resolution=16)
        zero = [GridFunction(np.zeros(2), 1.0, np.zeros((2, 2)))] * 3
        good = [GridFunction(np.zeros(2), 1.0, np.ones((2, 2)))] * 3
        with pytest.raises(ZeroMassError):
            ball_inequality_report(lw_datum, good, zero, x_grid_8(), spec)

    def test_degenerate_origin_grid_symmetric_inputs(self, lw_datum):
        # singleton sup at the origin for inputs centred there
        spec = QuadratureSpec("tensor-midpoint", resolution=32)
        rng = np.random.default_rng(11)
        vals = rng.uniform(0.5, 1.5, (4, 4))
        sym = 0.5 * (vals + vals[::-1, ::-1])
        f = [GridFunction(np.full(2, -2.0), 1.0, sym) for _ in range(3)]
        report = ball_inequality_report(lw_datum, f, f, np.zeros((1, 3)), spec)
        assert report.excluded_grid_points == 0
        assert np.allclose(report.sup_argmax, 0.0)
        assert report.sup_term > 0

    def test_random_trials_within_tolerance(self, lw_datum):
        spec = QuadratureSpec("tensor-midpoint", resolution=64)
        rng = np.random.default_rng(10)
        for _ in range(5):
            f = [GridFunction(np.zeros(2), 1.0, rng.uniform(0.5, 1.5, (4, 4))) for _ in range(3)]
            fp = [GridFunction(np.zeros(2), 1.0, rng.uniform(0.5, 1.5, (4, 4))) for _ in range(3)]
            report = ball_inequality_report(lw_datum, f, fp, x_grid_8(), spec)
            assert report.slack >= -5e-2
            assert report.flag == "consistent"


def test_lattice_exact_path_matches_generic_quadrature(lw_datum):
    # the aligned-lattice shortcut must agree with the midpoint rule when
    # the rule's cells tile the lattice cells exactly
    from blt.quadrature import _lattice_bl_exact

    rng = np.random.default_rng(23)
    grids = [GridFunction(np.zeros(2), 1.0, rng.uniform(0.2, 1.0, (4, 4))) for _ in range(3)]
    fast = _lattice_bl_exact(lw_datum, grids)
    spec = QuadratureSpec("tensor-midpoint", resolution=64, error_estimate=False)
    generic, _ = bl_ratio(lw_datum, grids, (np.zeros(3), np.full(3, 4.0)), spec)
    assert fast == pytest.approx(generic, rel=1e-12)
