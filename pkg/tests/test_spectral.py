import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pertdetect._binio import FormatError
from pertdetect.spectral import (SpectralBasis, explained_variance, fit_pca, load_basis,
                                 perturb_least_significant, project, reconstruct, save_basis)


def _images(seed=0, n=200, M=10):
    rng = np.random.default_rng(seed)
    scales = np.linspace(2.0, 0.1, M)
    return rng.standard_normal((n, M)) * scales + rng.random(M)


def test_three_points_match_hand_covariance():
    basis = fit_pca([[0, 0], [1, 0], [0, 2]])
    # [[1/3, -1/3], [-1/3, 4/3]]: trace 5/3, det 1/3
    tr, det = 5 / 3, 1 / 3
    disc = np.sqrt(tr**2 / 4 - det)
    np.testing.assert_allclose(basis.eigenvalues, [tr / 2 + disc, tr / 2 - disc], rtol=1e-12)
    np.testing.assert_allclose(basis.mean, [1 / 3, 2 / 3], rtol=1e-12)
    cov = np.array([[1 / 3, -1 / 3], [-1 / 3, 4 / 3]])
    for lam, v in zip(basis.eigenvalues, basis.vectors):
        np.testing.assert_allclose(cov @ v, lam * v, atol=1e-12)


def test_single_axis_variance():
    t = np.linspace(-3, 3, 100)
    basis = fit_pca(np.column_stack([t, np.zeros_like(t)]))
    np.testing.assert_allclose(np.abs(basis.vectors[0]), [1, 0], atol=1e-12)
    assert basis.eigenvalues[1] == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("n", [200, 6])  # SVD path and covariance-eigh path
def test_basis_invariants(n):
    X = _images(n=n)
    basis = fit_pca(X)
    assert basis.orthonormality_error() < 1e-9
    np.testing.assert_allclose(basis.mean, X.mean(axis=0), atol=1e-14)
    assert np.all(np.diff(basis.eigenvalues) <= 1e-12)
    coeffs = project(X, basis)
    var = coeffs.var(axis=0, ddof=1)
    big = basis.eigenvalues > 1e-10 * basis.eigenvalues[0]
    np.testing.assert_allclose(var[big], basis.eigenvalues[big], rtol=1e-8)
    assert np.max(np.abs(reconstruct(coeffs, basis) - X)) < 1e-9


def test_project_and_reconstruct_examples():
    basis = fit_pca(_images())
    M = basis.dim
    np.testing.assert_allclose(project(basis.mean, basis), np.zeros(M), atol=1e-12)
    e1 = np.zeros(M)
    e1[0] = 1
    np.testing.assert_allclose(project(basis.mean + basis.vectors[0], basis), e1, atol=1e-12)
    np.testing.assert_allclose(reconstruct(np.zeros(M), basis), basis.mean)
    eM = np.zeros(M)
    eM[-1] = 1
    np.testing.assert_allclose(reconstruct(eM, basis), basis.mean + basis.vectors[-1], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_isometry_and_round_trip(seed):
    basis = fit_pca(_images())
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, basis.dim)) * 3
    assert abs(np.linalg.norm(project(x, basis) - project(y, basis)) - np.linalg.norm(x - y)) < 1e-9
    assert np.max(np.abs(reconstruct(project(x, basis), basis) - x)) < 1e-9


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_pca([[1.0, 2.0]])
    with pytest.raises(ValueError):
        fit_pca([[1.0], [2.0]])
    with pytest.raises(ValueError):
        fit_pca([[1.0, np.nan], [2.0, 1.0]])
    with pytest.raises(ValueError):
        fit_pca([[1.0, 2.0], [1.0, 2.0, 3.0]])
    with pytest.raises(ValueError):
        project(np.zeros(3), fit_pca(_images()))


def test_perturbation_locality_and_degenerate_noise():
    rng = np.random.default_rng(0)
    c = rng.standard_normal(10)
    out = perturb_least_significant(c, 1, 0.5, rng)
    assert np.array_equal(out[:9], c[:9]) and out[9] != c[9]
    out = perturb_least_significant(c, 4, 0.5, rng)
    assert np.array_equal(out[:6], c[:6])
    tiny = perturb_least_significant(c, 10, 1e-300, rng)
    assert np.max(np.abs(tiny - c)) < 1e-290


def test_perturbation_std():
    rng = np.random.default_rng(7)
    c = np.arange(5.0)
    out = perturb_least_significant(c, 5, 0.3, rng, size=20000)
    assert abs((out - c).std() / 0.3 - 1) < 0.02


def test_batched_perturbation_matches_sequential():
    c = np.arange(8.0)
    batch = perturb_least_significant(c, 3, 0.2, np.random.default_rng(5), size=4)
    rng = np.random.default_rng(5)
    seq = [perturb_least_significant(c, 3, 0.2, rng) for _ in range(4)]
    np.testing.assert_array_equal(batch, np.array(seq))


@pytest.mark.parametrize("C,sigma", [(0, 1.0), (11, 1.0), (3, 0.0), (3, -1.0), (3, np.inf)])
def test_perturbation_rejects_bad_arguments(C, sigma):
    with pytest.raises(ValueError):
        perturb_least_significant(np.zeros(10), C, sigma, np.random.default_rng(0))


def _basis_with(eigs):
    M = len(eigs)
    return SpectralBasis(np.zeros(M), np.asarray(eigs, dtype=float), np.eye(M))


@pytest.mark.parametrize("eigs,expected", [
    ([2, 1, 1], [0.5, 0.75, 1.0]),
    ([3, 0, 0], [1, 1, 1]),
    ([1, 1, 1, 1], [0.25, 0.5, 0.75, 1.0]),
])
def test_explained_variance_examples(eigs, expected):
    np.testing.assert_allclose(explained_variance(_basis_with(eigs)), expected, atol=1e-12)


def test_explained_variance_all_zero_flags():
    with pytest.warns(RuntimeWarning):
        out = explained_variance(_basis_with([0, 0, 0]))
    assert np.all(out == 0)


def test_explained_variance_concentrated_on_desk_images():
    from pertdetect.harness.data import SynthSpec, synth_dataset

    ev = explained_variance(fit_pca(synth_dataset(SynthSpec(per_class=200)).images))
    assert np.all(np.diff(ev) >= 0) and ev[-1] == 1.0
    # most of the variance sits in a few leading components
    assert ev[9] > 0.5
    assert np.all(np.diff(ev, 2)[:10] <= 1e-12)


def test_basis_io_round_trip(tmp_path):
    basis = fit_pca(_images())
    save_basis(basis, tmp_path / "b.psb")
    back = load_basis(tmp_path / "b.psb")
    for a, b in ((basis.mean, back.mean), (basis.eigenvalues, back.eigenvalues),
                 (basis.vectors, back.vectors)):
        assert np.array_equal(a, b)


def test_basis_io_errors(tmp_path):
    basis = fit_pca(_images())
    p = tmp_path / "b.psb"
    save_basis(basis, p)
    raw = p.read_bytes()
    (tmp_path / "t.psb").write_bytes(raw[:-3])
    with pytest.raises(FormatError):
        load_basis(tmp_path / "t.psb")
    (tmp_path / "m.psb").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        load_basis(tmp_path / "m.psb")
    skew = SpectralBasis(basis.mean, basis.eigenvalues, basis.vectors * 1.01)
    save_basis(skew, tmp_path / "s.psb")
    with pytest.raises(FormatError):
        load_basis(tmp_path / "s.psb")


def test_basis_arrays_read_only():
    basis = fit_pca(_images())
    with pytest.raises(ValueError):
        basis.vectors[0, 0] = 1.0
