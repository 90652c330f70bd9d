"""PCA basis of clean images and perturbation in the spectral domain.

Images are flat float64 vectors of length M = h*w*channels. Coefficients are
coordinates in the centered PCA basis, ordered from the most to the least
significant component.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from ._binio import FormatError, f64, read_file, u32

logger = logging.getLogger(__name__)

BASIS_MAGIC = b"PSB1"


@dataclass(frozen=True)
class SpectralBasis:
    """Orthonormal PCA basis.

    ``vectors[i]`` is the i-th component (row-major, most significant first),
    ``eigenvalues`` are the matching sample variances, ``mean`` the centering
    vector.
    """

    mean: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        for name in ("mean", "eigenvalues", "vectors"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        M = self.mean.shape[0]
        if self.vectors.shape != (M, M) or self.eigenvalues.shape != (M,):
            raise ValueError(
                f"inconsistent basis shapes: mean {self.mean.shape}, "
                f"eigenvalues {self.eigenvalues.shape}, vectors {self.vectors.shape}"
            )

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def orthonormality_error(self) -> float:
        V = self.vectors
        return float(np.max(np.abs(V @ V.T - np.eye(self.dim))))


def _as_matrix(images) -> np.ndarray:
    X = np.asarray(images, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D (n_images, M) array, got shape {X.shape}")
    return X


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # rows: make the largest-magnitude entry of each component positive
    idx = np.argmax(np.abs(V), axis=1)
    signs = np.sign(V[np.arange(V.shape[0]), idx])
    signs[signs == 0] = 1.0
    return V * signs[:, None]


def fit_pca(images) -> SpectralBasis:
    """Fit a centered PCA basis to a stack of clean images (one per row)."""
    X = _as_matrix(images)
    n, M = X.shape
    if n < 2:
        raise ValueError(f"need at least 2 images to fit PCA, got {n}")
    if M < 2:
        raise ValueError(f"image dimension must be >= 2, got {M}")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite pixel values in PCA training set")

    mean = X.mean(axis=0)
    Xc = X - mean
    if n > M:
        # thin SVD of the centered data: right singular vectors are the
        # covariance eigenvectors, s^2/(n-1) the eigenvalues
        _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
        eigvals = s**2 / (n - 1)
        V = Vt
    else:
        cov = Xc.T @ Xc / (n - 1)
        w, U = np.linalg.eigh(cov)
        order = np.argsort(-w, kind="stable")
        eigvals = w[order]
        V = U[:, order].T

    eigvals = np.where(eigvals < 0, 0.0, eigvals)
    V = _fix_signs(V)
    return SpectralBasis(mean=mean, eigenvalues=eigvals, vectors=V)


def _check_dim(v: np.ndarray, basis: SpectralBasis, what: str):
    if v.shape[-1] != basis.dim:
        raise ValueError(f"{what} has length {v.shape[-1]}, basis dimension is {basis.dim}")


def project(x, basis: SpectralBasis) -> np.ndarray:
    """Coefficients <x - mean, phi_i> for every component. Accepts a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, basis, "image")
    return (x - basis.mean) @ basis.vectors.T


def reconstruct(coeffs, basis: SpectralBasis) -> np.ndarray:
    """Inverse of :func:`project`. The result is not clipped to the pixel range."""
    c = np.asarray(coeffs, dtype=np.float64)
    _check_dim(c, basis, "coefficient vector")
    return basis.mean + c @ basis.vectors


def perturb_least_significant(coeffs, C: int, sigma: float, rng: np.random.Generator,
                              size: int | None = None) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) noise to the last ``C`` coefficients.

    With ``size`` given, returns ``size`` independent perturbations stacked as
    rows; the draws come from ``rng`` in row order, so row j equals the j-th
    of ``size`` sequential single calls.
    """
    c = np.asarray(coeffs, dtype=np.float64)
    M = c.shape[-1]
    if not 1 <= C <= M:
        raise ValueError(f"C must be in [1, {M}], got {C}")
    if not (np.isfinite(sigma) and sigma > 0):
        raise ValueError(f"sigma must be finite and positive, got {sigma}")
    if size is None:
        out = c.copy()
        out[M - C:] = out[M - C:] + sigma * rng.standard_normal(C)
        return out
    out = np.tile(c, (size, 1))
    out[:, M - C:] += sigma * rng.standard_normal((size, C))
    return out


def explained_variance(basis: SpectralBasis) -> np.ndarray:
    """Cumulative fraction of total variance captured by the first k components."""
    ev = np.asarray(basis.eigenvalues, dtype=np.float64)
    total = ev.sum()
    if total <= 0:
        warnings.warn("all eigenvalues are zero; explained variance undefined", RuntimeWarning)
        return np.zeros_like(ev)
    cum = np.cumsum(ev) / total
    cum[-1] = 1.0
    return np.maximum.accumulate(cum)


def save_basis(basis: SpectralBasis, path):
    M = basis.dim
    with open(path, "wb") as fh:
        fh.write(BASIS_MAGIC + u32(M) + f64(basis.mean) + f64(basis.eigenvalues) + f64(basis.vectors))


def load_basis(path) -> SpectralBasis:
    r = read_file(path, "basis file")
    r.magic(BASIS_MAGIC)
    M = r.u32()
    if M < 1:
        raise FormatError("basis file: zero dimension")
    mean = r.f64(M)
    eigenvalues = r.f64(M)
    vectors = r.f64(M * M).reshape(M, M)
    r.finish()
    basis = SpectralBasis(mean=mean, eigenvalues=eigenvalues, vectors=vectors)
    err = basis.orthonormality_error()
    if not np.isfinite(err) or err > 1e-6:
        raise FormatError(f"basis file: vectors not orthonormal (max error {err:.3g})")
    if err > 1e-9:
        logger.warning("basis file %s: orthonormality error %.3g above 1e-9", path, err)
    return basis
