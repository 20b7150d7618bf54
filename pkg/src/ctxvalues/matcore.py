"""Dense complex-matrix foundations.

Everything here is a pure function of its inputs. Tolerances that callers may
want to tune for a whole run (the zero-singular-value cutoff in particular)
live on the module-level :data:`settings` object and can be overridden
temporarily with :func:`tolerances`.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np

HERMITIAN_RTOL = 1e-10
MERGE_RTOL = 1e-9
PSD_RTOL = 1e-10


@dataclass
class Settings:
    # None means dim * eps * sigma_max
    singular_rtol: Optional[float] = None


settings = Settings()


@contextlib.contextmanager
def tolerances(singular_rtol: Optional[float] = None) -> Iterator[Settings]:
    """Temporarily override the zero-singular-value cutoff."""
    old = settings.singular_rtol
    settings.singular_rtol = singular_rtol
    try:
        yield settings
    finally:
        settings.singular_rtol = old


class MatrixError(ValueError):
    pass


class NotHermitianError(MatrixError):
    def __init__(self, defect: float):
        self.defect = defect
        super().__init__(f"matrix is not Hermitian (defect ||m - m^H||_F = {defect:.3e})")


class NotPSDError(MatrixError):
    def __init__(self, min_eigenvalue: float):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(
            f"matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})"
        )


class DimensionError(MatrixError):
    pass


@dataclass(frozen=True)
class SVDResult:
    """Full singular value decomposition ``m = U @ diag(sigma) @ V^H``.

    ``sigma`` is sorted nonincreasing. For real input all factors are real and
    ``V^H`` is just ``V.T``.
    """

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def sigma_matrix(self) -> np.ndarray:
        n, m = self.U.shape[0], self.V.shape[0]
        s = np.zeros((n, m), dtype=self.sigma.dtype)
        k = len(self.sigma)
        s[:k, :k] = np.diag(self.sigma)
        return s

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.sigma_matrix() @ self.V.conj().T

    def rank(self, rtol: Optional[float] = None) -> int:
        return int(np.count_nonzero(self.sigma > singular_cutoff(self.sigma, self.U.shape[0], self.V.shape[0], rtol)))


@dataclass(frozen=True)
class PolarFactors:
    """``m = unitary @ root`` with ``root`` the positive square root of ``m^H m``."""

    unitary: np.ndarray
    root: np.ndarray


def as_matrix(m, dtype=complex) -> np.ndarray:
    a = np.asarray(m, dtype=dtype)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {a.shape}")
    if a.size == 0:
        raise DimensionError("empty matrix")
    if not np.all(np.isfinite(a)):
        raise MatrixError("matrix has non-finite entries")
    return a


def _as_square(m, dtype=complex) -> np.ndarray:
    a = as_matrix(m, dtype)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def hermitian_defect(m) -> float:
    a = _as_square(m)
    return float(np.linalg.norm(a - a.conj().T))


def is_hermitian(m, rtol: float = HERMITIAN_RTOL) -> bool:
    a = _as_square(m)
    return hermitian_defect(a) <= rtol * max(np.linalg.norm(a), 1e-300)


def check_hermitian(m, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Return the Hermitian part of ``m`` or raise :class:`NotHermitianError`."""
    a = _as_square(m)
    defect = hermitian_defect(a)
    if defect > rtol * np.linalg.norm(a):
        raise NotHermitianError(defect)
    return 0.5 * (a + a.conj().T)


def is_psd(m, rtol: float = PSD_RTOL) -> bool:
    try:
        h = check_hermitian(m)
    except NotHermitianError:
        return False
    w = np.linalg.eigvalsh(h)
    return bool(w[0] >= -rtol * max(1.0, float(np.max(np.abs(w)))))


def spectral_decompose(m, merge_rtol: float = MERGE_RTOL) -> List[Tuple[float, np.ndarray]]:
    """Split a Hermitian matrix into (eigenvalue, projector) pairs.

    Eigenvalues closer than ``merge_rtol * max|a|`` share one projector, so the
    result has one entry per distinct eigenvalue, in ascending order.
    """
    h = check_hermitian(m)
    w, v = np.linalg.eigh(h)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    thresh = merge_rtol * scale
    groups: List[List[int]] = [[0]]
    for i in range(1, len(w)):
        if w[i] - w[groups[-1][0]] <= thresh:
            groups[-1].append(i)
        else:
            groups.append([i])
    out = []
    for idx in groups:
        vecs = v[:, idx]
        proj = vecs @ vecs.conj().T
        out.append((float(np.mean(w[idx])), proj))
    return out


def svd(m) -> SVDResult:
    a = as_matrix(m, dtype=np.result_type(np.asarray(m).dtype, float))
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    return SVDResult(U=u, sigma=s, V=vh.conj().T)


def singular_cutoff(sigma: np.ndarray, n: int, m: int, rtol: Optional[float] = None) -> float:
    if rtol is None:
        rtol = settings.singular_rtol
    if rtol is None:
        rtol = max(n, m) * np.finfo(float).eps
    smax = float(sigma[0]) if len(sigma) else 0.0
    return rtol * smax


def pseudoinverse(m, rtol: Optional[float] = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse assembled from the SVD as ``V Sigma^+ U^H``.

    Singular values below ``rtol * sigma_max`` are treated as zero; the default
    cutoff is ``max(N, M) * eps``.
    """
    a = np.asarray(m)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {a.shape}")
    n, k = a.shape
    if a.size == 0:
        return np.zeros((k, n), dtype=a.dtype)
    dec = svd(a)
    cut = singular_cutoff(dec.sigma, n, k, rtol)
    r = len(dec.sigma)
    inv = np.zeros(r)
    keep = dec.sigma > cut
    inv[keep] = 1.0 / dec.sigma[keep]
    return (dec.V[:, :r] * inv) @ dec.U[:, :r].conj().T


def principal_sqrt(m, rtol: float = PSD_RTOL) -> np.ndarray:
    """Positive semidefinite square root of a PSD Hermitian matrix."""
    h = check_hermitian(m)
    w, v = np.linalg.eigh(h)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -rtol * scale:
        raise NotPSDError(float(w[0]))
    root = np.sqrt(np.clip(w, 0.0, None))
    out = (v * root) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def polar_decompose(m) -> PolarFactors:
    """Right polar decomposition ``m = U P``.

    PSD input returns the identity as the unitary factor. For singular input
    the unitary is completed on the kernel by the SVD factors, ``U = W V^H``.
    """
    a = _as_square(m)
    d = a.shape[0]
    if is_hermitian(a) and is_psd(a):
        h = 0.5 * (a + a.conj().T)
        return PolarFactors(unitary=np.eye(d, dtype=complex), root=h)
    w, s, vh = np.linalg.svd(a)
    unitary = w @ vh
    root = (vh.conj().T * s) @ vh
    root = 0.5 * (root + root.conj().T)
    return PolarFactors(unitary=unitary, root=root)


def commutator(a, b) -> np.ndarray:
    x = _as_square(a)
    y = _as_square(b)
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x @ y - y @ x


def is_unitary(u, atol: float = 1e-10) -> bool:
    a = _as_square(u)
    return bool(np.linalg.norm(a.conj().T @ a - np.eye(a.shape[0])) <= atol * a.shape[0])
