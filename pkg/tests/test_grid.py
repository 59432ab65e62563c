import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bernoulli_lab.errors import DomainError, StructureError
from bernoulli_lab.grid import GridField, central_gradient, harmonic_jet
from bernoulli_lab.integrate import EdgeGraph, check_simply_connected, grid_edges, integrate_edges
from bernoulli_lab.solutions import AnalyticSolution, HalfPlane, Hairpin, boundary_param, grad, holo_jet, sample_to_grid

H1 = AnalyticSolution(Hairpin(1.0))


def test_coordinates_and_window():
    f = GridField(1 - 2j, 0.5, np.zeros((3, 5)))
    assert f.window == (1.0, 3.0, -2.0, -1.0)
    assert f.coords()[2, 4] == 3 - 1j
    assert f.index_of(2 - 1.5j) == (2.0, 1.0)


def test_rejects_bad_input():
    with pytest.raises(DomainError):
        GridField(0j, 0.0, np.zeros((2, 2)))
    with pytest.raises(DomainError):
        GridField(0j, 0.1, np.zeros(4))


def test_interp_is_exact_for_bilinear():
    f = sample_to_grid(lambda z: 1 + 2 * z.real - z.imag + 0.5 * z.real * z.imag, (-1, 1, -1, 1), 0.25)
    z = np.array([0.13 + 0.71j, -0.9 - 0.2j])
    assert np.allclose(f.interp(z), 1 + 2 * z.real - z.imag + 0.5 * z.real * z.imag)
    assert np.isnan(f.interp(3 + 0j))
    assert f.interp(3 + 0j, outside=0.0) == 0.0


def test_crop_snaps_outward():
    f = sample_to_grid(AnalyticSolution(HalfPlane()), (-1, 1, -1, 1), 0.25)
    c = f.crop((-0.3, 0.3, 0.1, 0.6))
    assert c.window == (-0.5, 0.5, 0.0, 0.75)
    assert np.array_equal(c.values, f.values[4:8, 2:7])
    with pytest.raises(DomainError):
        f.crop((5, 6, 5, 6))


def test_save_load_round_trip(tmp_path):
    f = sample_to_grid(H1, (-3, 3, -2, 2), 0.1)
    f.save(tmp_path / "f.grid")
    g = GridField.load(tmp_path / "f.grid")
    assert g.origin == f.origin and g.h == f.h
    assert np.array_equal(g.values, f.values)
    assert g.provenance == f.provenance
    (tmp_path / "bad.grid").write_bytes(b"nope")
    with pytest.raises(DomainError):
        GridField.load(tmp_path / "bad.grid")


def test_central_gradient_on_linear():
    f = sample_to_grid(lambda z: 3 * z.real - 2 * z.imag, (0, 1, 0, 1), 0.1)
    assert np.allclose(central_gradient(f), 3 - 2j)


@pytest.mark.parametrize("h", [0.05, 0.025])
def test_harmonic_jet_one_sided_on_boundary(h):
    f = sample_to_grid(H1, (-6, 6, -3, 3), h)
    pts, _ = boundary_param(1.0, np.linspace(-2, 2, 41), "right")
    jet = harmonic_jet(f, pts)
    err = np.max(np.abs(jet.gradient - grad(H1, pts)))
    assert err <= 3 * h**3
    assert np.max(np.abs(jet.value.real)) <= 3 * h**4


def test_harmonic_jet_second_derivative_interior():
    f = sample_to_grid(H1, (-2, 2, -2, 2), 0.02)
    z = np.array([0.0, 0.3 + 0.4j, -0.5 + 1.1j])
    jet = harmonic_jet(f, z)
    _, d1, d2 = holo_jet(H1, z)
    assert np.max(np.abs(jet.d1 - d1)) <= 1e-6
    assert np.max(np.abs(jet.d2 - d2)) <= 1e-4


def test_harmonic_jet_empty_fit_is_nan():
    f = GridField(0j, 0.1, np.zeros((20, 20)))
    jet = harmonic_jet(f, np.array([1 + 1j]))
    assert np.isnan(jet.d1[0])


# ---------------------------------------------------------------------------
# path integration
# ---------------------------------------------------------------------------


def test_grid_edges_counts():
    mask = np.ones((3, 4), bool)
    index, (hs, hd), (vs, vd) = grid_edges(mask)
    assert hs.size == 3 * 3 and vs.size == 2 * 4
    assert index.max() == 11


def test_simply_connected_check():
    mask = np.ones((7, 7), bool)
    check_simply_connected(mask)
    mask[3, 3] = False
    with pytest.raises(StructureError) as exc:
        check_simply_connected(mask)
    assert exc.value.count == 1


@given(st.integers(0, 2**32 - 1))
def test_integration_recovers_potential(seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((12, 15)) < 0.8
    mask[6, :] = True
    index, (hs, hd), (vs, vd) = grid_edges(mask)
    src = np.concatenate([hs, vs])
    dst = np.concatenate([hd, vd])
    pot = rng.normal(size=int(mask.sum()))
    base = int(index[6, 0])
    res = integrate_edges(EdgeGraph(int(mask.sum()), src, dst), pot[dst] - pot[src], base)
    comp = res.component
    assert comp[base]
    assert np.allclose(res.values[comp], pot[comp] - pot[base], atol=1e-9)
    assert res.edge_residual <= 1e-9
    assert res.tree_drift <= 1e-9
    assert np.all(np.isnan(res.values[~comp]))


def test_integration_spreads_loop_error():
    # a single square loop with one corrupted edge: least squares spreads the defect
    src = np.array([0, 1, 2, 3])
    dst = np.array([1, 2, 3, 0])
    d = np.array([1.0, 1.0, -1.0, -1.0 + 0.4])
    res = integrate_edges(EdgeGraph(4, src, dst), d, 0)
    assert res.edge_residual == pytest.approx(0.1)


def test_vector_increments():
    src = np.array([0, 1])
    dst = np.array([1, 2])
    d = np.array([[1.0, 2.0], [3.0, 4.0]])
    res = integrate_edges(EdgeGraph(3, src, dst), d, 0)
    assert np.allclose(res.values, [[0, 0], [1, 2], [4, 6]])
