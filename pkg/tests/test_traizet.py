import json
import math

import numpy as np
import pytest

from bernoulli_lab.errors import DomainError, FitError, StructureError, UnsupportedFamilyError
from bernoulli_lab.solutions import (
    AnalyticSolution,
    ComposedHairpin,
    HalfPlane,
    Hairpin,
    RigidMotion,
    TwoPlane,
    Wedge,
    boundary_param,
    evaluate,
)
from bernoulli_lab.traizet import (
    canonical_align,
    catenoid_curvature,
    catenoid_mesh,
    catenoid_residual,
    curvature_compare_3d,
    fit_rho,
    gauss_curvature,
    immerse,
    interior_vertices,
    mean_curvature,
    neck_geodesic_length,
    reflect_bigraph,
    segment_integral,
    weierstrass_data,
)

H1 = AnalyticSolution(Hairpin(1.0))
D1 = weierstrass_data(H1)


@pytest.fixture(scope="module")
def meshes():
    """Aligned immersions of H_1 on [-3,3]^2 at two steps."""
    return {h: canonical_align(immerse(D1, (-3, 3, -3, 3), h), D1) for h in (0.04, 0.02)}


def _composed_nodes(delta, n=4000):
    u = ComposedHairpin.with_second_derivative(0.25, delta, 1.0)
    d = weierstrass_data(u)
    rng = np.random.default_rng(0)
    z = rng.uniform(-0.6, 0.6, n) + 1j * rng.uniform(-0.6, 0.6, n)
    return d, z[np.asarray(d.margin(z)) > 0]


class TestData:
    def test_vertical_at_neck(self):
        assert abs(D1.g_eval(np.array([0j]))[0]) <= 1e-14

    def test_unit_on_boundary(self):
        pts, _ = boundary_param(1.0, np.linspace(-3, 3, 61), "left")
        assert np.max(np.abs(np.abs(D1.g_eval(pts)) - 1)) <= 1e-8

    def test_below_one_inside(self):
        rng = np.random.default_rng(1)
        z = rng.uniform(-3, 3, 5000) + 1j * rng.uniform(-3, 3, 5000)
        z = z[np.asarray(D1.margin(z)) > 1e-3]
        assert np.max(np.abs(D1.g_eval(z))) < 1

    def test_height_density_is_g(self):
        z = np.array([0.3 + 0.2j, -1 + 1j])
        assert np.array_equal(D1.dh_density(z), D1.g_eval(z))

    @pytest.mark.parametrize("fam", [Wedge(0.5), TwoPlane(0.3)])
    def test_unsupported(self, fam):
        with pytest.raises(UnsupportedFamilyError):
            weierstrass_data(AnalyticSolution(fam))
        with pytest.raises(UnsupportedFamilyError):
            weierstrass_data(lambda z: z)

    def test_half_plane(self):
        d = weierstrass_data(AnalyticSolution(HalfPlane()))
        assert d.saddle is None
        assert np.allclose(np.abs(d.g_eval(np.array([0.5 + 0.5j]))), 1.0)


def test_closed_loops_integrate_to_zero():
    rng = np.random.default_rng(7)
    t = np.linspace(0, 1, 65)
    for _ in range(100):
        corners = rng.uniform(0, 1.5, 3) * np.exp(2j * np.pi * rng.random(3))
        loop = np.concatenate([a + (b - a) * t[:-1] for a, b in zip(corners, np.roll(corners, -1))] + [corners[:1]])
        total = segment_integral(D1, loop[:-1], loop[1:]).sum(axis=0)
        length = np.sum(np.abs(np.diff(loop)))
        assert np.max(np.abs(total)) <= 1e-8 * length


class TestImmerse:
    def test_height_identity(self, meshes):
        m = meshes[0.02]
        assert np.max(np.abs(m.vertices[:, 2] - evaluate(H1, m.params))) <= 1e-6
        assert np.max(np.abs(m.vertices[m.boundary, 2])) <= 1e-6
        assert m.edge_residual <= 1e-10

    def test_neck_vertex(self, meshes):
        m = meshes[0.04]
        k = int(np.argmin(np.abs(m.params)))
        assert m.vertices[k] == pytest.approx([0, 0, 1.0], abs=1e-9)

    def test_mesh_is_valid(self, meshes):
        m = meshes[0.04]
        n = m.vertices.shape[0]
        assert m.faces.min() >= 0 and m.faces.max() < n
        assert np.all(m.gauss_curvature <= 0)
        assert len(np.unique(m.boundary_label[m.boundary])) == 2

    def test_window_misses_phase(self):
        with pytest.raises(DomainError):
            immerse(weierstrass_data(AnalyticSolution(HalfPlane())), (-1, 1, -2, -1), 0.1)

    def test_align_needs_saddle(self):
        d = weierstrass_data(AnalyticSolution(HalfPlane()))
        with pytest.raises(StructureError):
            canonical_align(immerse(d, (-1, 1, 0, 1), 0.1), d)

    def test_export(self, meshes, tmp_path):
        m = meshes[0.04]
        m.write_obj(tmp_path / "m.obj")
        lines = (tmp_path / "m.obj").read_text().splitlines()
        assert sum(line.startswith("v ") for line in lines) == m.vertices.shape[0]
        assert sum(line.startswith("f ") for line in lines) == m.faces.shape[0]
        m.write_sidecar(tmp_path / "m.json")
        side = json.loads((tmp_path / "m.json").read_text())
        assert len(side["gauss_curvature"]) == m.vertices.shape[0]


class TestCatenoid:
    def test_sampled_catenoid(self):
        m = catenoid_mesh(2.0, 3.0)
        assert catenoid_residual(m, 2.0) <= 1e-12
        assert fit_rho(m) == pytest.approx(2.0, abs=1e-9)

    def test_hairpin_fit(self, meshes):
        m = meshes[0.02]
        rho = fit_rho(m)
        assert rho == pytest.approx(1.0, abs=1e-2)
        assert catenoid_residual(m, rho) <= 1e-3
        assert catenoid_residual(m, 2 * rho) > 10 * catenoid_residual(m, rho)
        assert catenoid_residual(m, 0.5 * rho) > 10 * catenoid_residual(m, rho)

    def test_dilation_covariance(self, meshes):
        a = 0.3
        d = weierstrass_data(AnalyticSolution(Hairpin(a)))
        m = canonical_align(immerse(d, (-3 * a, 3 * a, -3 * a, 3 * a), 0.04 * a), d)
        assert fit_rho(m) / a == pytest.approx(fit_rho(meshes[0.04]), abs=1e-3)

    def test_rotated_input(self):
        sol = AnalyticSolution(Hairpin(1.0), RigidMotion(0.7, 0.3 - 0.2j))
        d = weierstrass_data(sol)
        m = canonical_align(immerse(d, (-2.7, 3.3, -3.2, 2.8), 0.05), d)
        assert fit_rho(m) == pytest.approx(1.0, abs=1e-6)

    def test_fit_error(self):
        m = catenoid_mesh(1.0, 2.0)
        m.neck_height = 10.0
        with pytest.raises(FitError):
            fit_rho(m)

    def test_bad_rho(self):
        with pytest.raises(DomainError):
            catenoid_residual(catenoid_mesh(1.0, 1.0), 0.0)
        with pytest.raises(DomainError):
            catenoid_mesh(-1.0, 1.0)


class TestCurvature:
    def test_neck(self):
        assert gauss_curvature(D1, np.array([0j]))[0] == pytest.approx(-1.0, abs=1e-12)
        d = weierstrass_data(AnalyticSolution(Hairpin(0.5)))
        assert gauss_curvature(d, np.array([0j]))[0] == pytest.approx(-4.0, abs=1e-12)

    def test_matches_catenoid(self, meshes):
        m = meshes[0.04]
        x1, x2, x3 = m.vertices.T
        assert np.allclose(m.gauss_curvature, catenoid_curvature(1.0, x1), atol=1e-9)
        # K = -rho^2 / R^4 with R the distance to the axis
        R = np.hypot(x2, x3)
        assert np.allclose(m.gauss_curvature * R**4, -1.0, atol=1e-8)

    def test_decay_in_space(self):
        # a tall window reaches far along both arms
        m = canonical_align(immerse(D1, (-4, 4, -16, 16), 0.1), D1)
        r = np.linalg.norm(m.vertices, axis=1)
        far = r >= 4
        assert far.sum() > 10
        ratio = m.gauss_curvature[far] * r[far] ** 4
        # K |X|^4 -> -rho^2; on the catenoid the excess is (1 + x1^2 / R^2)^2 - 1
        assert np.all((ratio <= -1.0 + 1e-9) & (ratio >= -1.7))
        excess = [np.max(-1.0 - ratio[r[far] >= lo]) for lo in (4, 8, 12)]
        assert excess[0] > excess[1] > excess[2] and excess[2] <= 0.16

    def test_profile_exact(self):
        d, z = _composed_nodes(0.0)
        p = curvature_compare_3d(d, 0.25, z)
        assert np.nanmax(p.k_defect) <= 1e-10
        assert np.nanmax(p.metric_defect) <= 1e-10
        assert p.epsilon == pytest.approx(2 * math.pi * 0.25)
        assert p.count.sum() == z.size

    def test_profile_scales_with_delta(self):
        profiles = [curvature_compare_3d(*_composed_nodes(delta)[:1], 0.25, _composed_nodes(delta)[1]) for delta in (0.01, 0.02)]
        inner = np.isfinite(profiles[0].k_defect) & (profiles[0].r_hi <= math.sqrt(profiles[0].epsilon))
        ratio = profiles[1].k_defect[inner] / profiles[0].k_defect[inner]
        assert np.all((ratio > 1.8) & (ratio < 2.2))
        small = np.isfinite(profiles[0].metric_defect) & (profiles[0].r_hi <= 0.1)
        assert np.all(profiles[0].metric_defect[small] <= 0.1 / 100 + 1e-4)

    def test_profile_csv(self, tmp_path):
        d, z = _composed_nodes(0.01, 500)
        curvature_compare_3d(d, 0.25, z, n_bins=4).write_csv(tmp_path / "p.csv")
        rows = (tmp_path / "p.csv").read_text().splitlines()
        assert rows[0] == "r_lo,r_hi,count,k_defect,metric_defect,bound" and len(rows) == 5


class TestMeshGeometry:
    def test_reflection_symmetric(self, meshes):
        m = meshes[0.04]
        b = reflect_bigraph(m)
        n_in = int((~m.boundary).sum())
        assert b.vertices.shape[0] == m.vertices.shape[0] + n_in
        assert b.faces.shape[0] == 2 * m.faces.shape[0]
        V = b.vertices
        mirror = V * np.array([1, 1, -1])
        key = lambda A: np.round(A, 9)[np.lexsort(np.round(A, 9).T)]
        assert np.allclose(key(V), key(mirror), atol=1e-8)

    def test_neck_geodesic(self, meshes):
        assert neck_geodesic_length(meshes[0.02]) == pytest.approx(2 * math.pi, rel=1e-3)

    def test_neck_geodesic_needs_two_rims(self):
        m = catenoid_mesh(1.0, 1.0, n=8)
        m.boundary_label[:] = 0
        with pytest.raises(StructureError):
            neck_geodesic_length(m)

    def test_mean_curvature_refines(self, meshes):
        sups = []
        for h in (0.04, 0.02):
            m = meshes[h]
            H = mean_curvature(m)
            keep = interior_vertices(m, 2) & (np.abs(m.params) < 2.0)
            sups.append(np.nanmax(H[keep]))
        assert sups[0] / sups[1] >= 3
