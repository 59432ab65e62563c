import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bernoulli_lab.errors import DomainError, ResourceError
from bernoulli_lab.geometry import zero_components
from bernoulli_lab.solutions import (
    AnalyticSolution,
    ComposedHairpin,
    HalfPlane,
    Hairpin,
    RigidMotion,
    TwoPlane,
    Wedge,
    boundary_param,
    calibrate_c0,
    evaluate,
    family_from_dict,
    grad,
    hairpin_geometry,
    holo_ext,
    holo_jet,
    margin,
    phi,
    phi_inv,
    sample_to_grid,
)

# reference values computed once with mpmath at 30 digits and frozen here
PHI_1 = 2.1752011936438015j
COSH_1 = 1.5430806348152438
TAN_PI_6 = 0.57735026918962576
SECH2_3 = 0.0098660371654401913
PHI_I_PI_3 = -1.9132229549810364
PHI_03_02 = -0.40767670305628438 + 0.59845016188195172j
H1_REFERENCE = [
    (0.7 + 1.3j, 1.1537714161047687),
    (-1.2 + 0.4j, 0.83834994541253633),
    (3 + 5j, 3.0754155243010983),
    (0.2 - 2.5j, 1.6982763498640095),
]

H1 = AnalyticSolution(Hairpin(1.0))

strip_points = st.builds(
    complex,
    st.floats(-6.0, 6.0),
    st.floats(-0.999 * math.pi / 2, 0.999 * math.pi / 2),
)
motions = st.builds(RigidMotion, st.floats(-math.pi, math.pi), st.complex_numbers(max_magnitude=5.0))


class TestPhi:
    def test_origin(self):
        assert phi(0j) == 0

    def test_strip_edge(self):
        assert phi(0.5j * math.pi) == pytest.approx(-(1 + math.pi / 2), abs=1e-15)

    def test_at_one(self):
        assert phi(1.0) == pytest.approx(PHI_1, abs=1e-15)

    def test_other_references(self):
        assert phi(1j * math.pi / 3) == pytest.approx(PHI_I_PI_3, abs=1e-15)
        assert phi(0.3 + 0.2j) == pytest.approx(PHI_03_02, abs=1e-15)

    def test_outside_strip_rejected(self):
        with pytest.raises(DomainError):
            phi(2j)

    def test_array_shape_kept(self):
        z = np.zeros((3, 4), complex)
        assert phi(z).shape == (3, 4)


class TestPhiInv:
    def test_origin(self):
        assert phi_inv(0j) == 0

    def test_round_trip_example(self):
        assert abs(phi_inv(phi(0.3 + 0.2j)) - (0.3 + 0.2j)) <= 1e-12

    def test_forward_oracle(self):
        assert abs(phi_inv(PHI_1) - 1.0) <= 1e-10

    def test_outside_rejected(self):
        with pytest.raises(DomainError):
            phi_inv(10.0 + 0j)

    def test_bad_tol(self):
        with pytest.raises(DomainError):
            phi_inv(0j, tol=0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            phi_inv(complex(math.nan, 0.0))

    @given(strip_points)
    def test_round_trip_property(self, zeta):
        z = phi(zeta)
        back = phi_inv(z)
        assert abs(phi(back) - z) <= 1e-11 * max(1.0, abs(z))
        assert abs(back - zeta) <= 1e-9 * max(1.0, abs(zeta))


class TestEvaluate:
    def test_saddle_value(self):
        assert evaluate(H1, 0j) == 1.0

    def test_tip_is_zero(self):
        assert evaluate(H1, -(1 + math.pi / 2) + 0j) == pytest.approx(0.0, abs=1e-12)

    def test_cosh_oracle(self):
        assert evaluate(H1, PHI_1) == pytest.approx(COSH_1, abs=1e-13)

    @pytest.mark.parametrize("z,value", H1_REFERENCE)
    def test_reference_values(self, z, value):
        assert evaluate(H1, z) == pytest.approx(value, rel=1e-12)

    def test_zero_phase(self):
        assert evaluate(H1, 5.0 + 0j) == 0.0

    def test_simple_families(self):
        z = np.array([0.3 + 0.5j, -1 - 2j, 2 + 0j])
        assert np.allclose(evaluate(AnalyticSolution(HalfPlane()), z), [0.5, 0.0, 0.0])
        assert np.allclose(evaluate(AnalyticSolution(TwoPlane(0.5)), z), [0.5, 1.5, 0.0])
        assert np.allclose(evaluate(AnalyticSolution(Wedge(0.5)), z), [0.25, 1.0, 0.0])

    @given(st.floats(0.05, 20.0), st.floats(0.1, 10.0), strip_points)
    def test_dilation(self, a, lam, zeta):
        # H_a(lam x) / lam = H_{a / lam}(x)
        x = a * phi(zeta) / lam
        lhs = evaluate(AnalyticSolution(Hairpin(a)), lam * x) / lam
        rhs = evaluate(AnalyticSolution(Hairpin(a / lam)), x)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12 * a / lam)

    @given(motions, st.complex_numbers(max_magnitude=4.0))
    def test_rigid_motion_equivariance(self, m, w):
        moved = AnalyticSolution(Hairpin(0.7), m)
        assert evaluate(moved, m.apply(w)) == pytest.approx(evaluate(AnalyticSolution(Hairpin(0.7)), w), abs=1e-10)

    @given(st.complex_numbers(max_magnitude=10.0))
    def test_nonnegative(self, z):
        for fam in (HalfPlane(), TwoPlane(0.3), Wedge(0.4), Hairpin(0.5)):
            assert evaluate(AnalyticSolution(fam), z) >= 0.0

    def test_bad_parameters(self):
        for bad in (lambda: Hairpin(-1.0), lambda: TwoPlane(-0.1), lambda: Wedge(1.5), lambda: Wedge(0.0)):
            with pytest.raises(DomainError):
                bad()

    def test_non_finite_point(self):
        with pytest.raises(DomainError):
            evaluate(H1, complex(math.inf, 0))


class TestGradient:
    def test_saddle(self):
        assert abs(grad(H1, 0j)) <= 1e-15

    def test_boundary_magnitude(self):
        y1 = np.linspace(-6, 6, 201)
        for side in ("left", "right"):
            pts, _ = boundary_param(1.0, y1, side)
            assert np.max(np.abs(np.abs(grad(H1, pts)) - 1.0)) <= 1e-10

    def test_tan_oracle(self):
        z = phi(1j * math.pi / 3)
        assert abs(grad(H1, z)) == pytest.approx(TAN_PI_6, abs=1e-12)

    def test_zero_phase_raises(self):
        with pytest.raises(DomainError):
            grad(H1, 6.0 + 0j)
        assert grad(H1, 6.0 + 0j, outside="zero") == 0

    @given(strip_points)
    def test_tanh_half_formula(self, zeta):
        z = phi(zeta)
        assert abs(grad(H1, z)) == pytest.approx(abs(np.tanh(zeta / 2)), abs=1e-9)

    @given(strip_points)
    def test_lipschitz_bound(self, zeta):
        assert abs(grad(H1, phi(zeta))) <= 1.0 + 1e-12

    @given(strip_points, st.floats(-1.0, 1.0))
    def test_matches_finite_difference(self, zeta, theta):
        z = phi(0.9 * zeta.real + 0.9j * zeta.imag)
        d = 1e-6 * np.exp(1j * theta)
        fd = (evaluate(H1, z + d) - evaluate(H1, z - d)) / (2 * abs(d))
        g = grad(H1, z)
        assert fd == pytest.approx((np.conj(g) * d / abs(d)).real, abs=1e-6)


class TestBoundaryParam:
    def test_tip(self):
        p, k = boundary_param(1.0, 0.0, "left")
        assert p == pytest.approx(-(1 + math.pi / 2))
        assert k == pytest.approx(1.0)

    def test_dilation(self):
        assert boundary_param(2.0, 0.0, "left")[1] == pytest.approx(0.5)

    def test_sech_oracle(self):
        assert boundary_param(1.0, 3.0, "left")[1] == pytest.approx(SECH2_3, rel=1e-14)

    def test_points_are_on_the_boundary(self):
        pts, _ = boundary_param(0.3, np.linspace(-4, 4, 51), "right")
        assert np.max(np.abs(margin(AnalyticSolution(Hairpin(0.3)), pts))) <= 1e-12
        assert np.max(evaluate(AnalyticSolution(Hairpin(0.3)), pts)) <= 1e-12

    def test_bad_side(self):
        with pytest.raises(DomainError):
            boundary_param(1.0, 0.0, "up")


class TestHoloExt:
    def test_half_plane(self):
        assert holo_ext(AnalyticSolution(HalfPlane()), 1j).real == pytest.approx(1.0)

    def test_cosh_oracle(self):
        w = holo_ext(H1, PHI_1)
        assert w == pytest.approx(COSH_1 + 0j, abs=1e-13)

    @pytest.mark.parametrize("a", [0.1, 1.0, 7.0])
    def test_saddle_value(self, a):
        assert holo_ext(AnalyticSolution(Hairpin(a)), 0j) == pytest.approx(a)

    @given(motions, strip_points)
    def test_real_part_is_u(self, m, zeta):
        sol = AnalyticSolution(Hairpin(1.0), m)
        z = m.apply(phi(zeta))
        assert holo_ext(sol, z).real == pytest.approx(evaluate(sol, z), abs=1e-9)

    @given(motions, strip_points)
    def test_derivative_consistency(self, m, zeta):
        sol = AnalyticSolution(Hairpin(1.0), m)
        z = m.apply(phi(0.8 * zeta))
        d = 1e-5
        U0, U1, U2 = holo_jet(sol, z)
        fd1 = (holo_ext(sol, z + d) - holo_ext(sol, z - d)) / (2 * d)
        fd2 = (holo_jet(sol, z + d, 1)[1] - holo_jet(sol, z - d, 1)[1]) / (2 * d)
        assert fd1 == pytest.approx(U1, abs=1e-7)
        assert fd2 == pytest.approx(U2, abs=1e-6)

    def test_zero_phase_raises(self):
        with pytest.raises(DomainError):
            holo_ext(H1, 6.0 + 0j)


class TestComposedHairpin:
    def test_identity_when_delta_zero(self):
        u = ComposedHairpin.with_second_derivative(0.5, 0.0, 1.0)
        z = np.array([0.1 + 0.3j, -0.4 + 1.2j])
        assert np.allclose(u(z), evaluate(AnalyticSolution(Hairpin(0.5)), z))

    def test_second_derivative_size(self):
        u = ComposedHairpin.with_second_derivative(0.5, 0.04, 2.0, direction=1j)
        assert abs(u.psi.d2(0j)) == pytest.approx(0.02)

    def test_inverse(self):
        u = ComposedHairpin.with_second_derivative(0.5, 0.04, 1.0)
        w = np.array([0.3 + 0.2j, -0.5j])
        assert np.allclose(u.psi(u.psi.inverse(w)), w)

    def test_jet_real_part(self):
        u = ComposedHairpin.with_second_derivative(0.5, 0.02, 1.0, motion=RigidMotion(0.4, 0.1j))
        z = np.array([0.1 + 0.2j, 0.3 - 0.1j])
        assert np.allclose(u.holo_jet(z, 0)[0].real, u(z))


class TestSampling:
    def test_half_plane_grid(self):
        f = sample_to_grid(AnalyticSolution(HalfPlane()), (-1, 1, -1, 1), 0.5)
        assert f.values.shape == (5, 5)
        assert np.all(f.values[-1] == 1.0)

    def test_hairpin_two_zero_components(self):
        f = sample_to_grid(H1, (-8, 8, -8, 8), 0.05)
        assert zero_components(f)[1] == 2

    def test_wedge_symmetry(self):
        f = sample_to_grid(AnalyticSolution(Wedge(0.5)), (-1, 1, -1, 1), 0.125)
        assert np.array_equal(f.values, f.values[::-1])

    def test_node_cap(self):
        with pytest.raises(ResourceError):
            sample_to_grid(H1, (-1, 1, -1, 1), 1e-3, node_cap=1000)

    def test_bad_window(self):
        with pytest.raises(DomainError):
            sample_to_grid(H1, (1, -1, -1, 1), 0.1)
        with pytest.raises(DomainError):
            sample_to_grid(H1, (-1, 1, -1, 1), 0.0)


class TestMisc:
    def test_hairpin_geometry(self):
        g = hairpin_geometry(2.0)
        assert g.separation == pytest.approx(10.283185307179586)
        assert g.saddle_value == 2.0

    def test_round_trip_dict(self):
        sol = AnalyticSolution(TwoPlane(0.25), RigidMotion(0.3, 1 - 2j))
        back = AnalyticSolution.from_dict(sol.to_dict())
        assert back == sol

    def test_unknown_family(self):
        with pytest.raises(DomainError):
            family_from_dict({"type": "catenoid"})

    @given(motions, motions, st.complex_numbers(max_magnitude=5.0))
    def test_motion_composition(self, m1, m2, w):
        assert m1.compose(m2).apply(w) == pytest.approx(m1.apply(m2.apply(w)), abs=1e-12)
        assert m1.inverse().apply(m1.apply(w)) == pytest.approx(w, abs=1e-12)

    def test_calibrated_c0(self):
        c0 = calibrate_c0()
        assert 0.2 < c0 < 0.21
        # nondegeneracy bound |grad H_1(x)| >= min(1/2, c0 |x|) holds on an independent sample
        zeta = np.random.default_rng(0).uniform(-6, 6, 2000) + 1j * np.random.default_rng(1).uniform(-1.5, 1.5, 2000)
        x = phi(zeta)
        g = np.abs(grad(H1, x))
        assert np.all(g >= np.minimum(0.5, c0 * np.abs(x)) * (1 - 1e-2))
