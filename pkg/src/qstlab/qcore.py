"""Density matrices, fidelity metrics and the Cholesky alpha-vector map.

States are plain ``complex128`` arrays of shape ``(d, d)``; most functions
also accept a leading batch axis ``(n, d, d)``.  An alpha vector is a real
array of length ``d**2`` laid out as::

    [L00, L11, ..., L(d-1)(d-1),
     Re L10, Im L10, Re L20, Im L20, Re L21, Im L21, Re L30, ...]

i.e. the diagonal of the lower-triangular factor ``L`` first, then the
strictly-lower entries in row-major order with real/imag interleaved.
"""

import numpy as np

from .errors import NotPositive, ZeroTrace

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
CHOLESKY_DELTA = 1e-9
LOG_FLOOR = 1e-16


def dim_from_alpha_length(n):
    d = int(round(np.sqrt(n)))
    if d * d != n or d < 1:
        raise ValueError(f"alpha length {n} is not a perfect square")
    return d


def _lower_indices(d):
    # row-major strictly-lower entries: (1,0), (2,0), (2,1), (3,0), ...
    rows, cols = np.tril_indices(d, -1)
    return rows, cols


def alpha_to_lower(alpha):
    """Unpack alpha vector(s) into lower-triangular complex factor(s)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    d = dim_from_alpha_length(alpha.shape[-1])
    rows, cols = _lower_indices(d)
    L = np.zeros(alpha.shape[:-1] + (d, d), dtype=np.complex128)
    idx = np.arange(d)
    L[..., idx, idx] = alpha[..., :d]
    off = alpha[..., d:]
    L[..., rows, cols] = off[..., 0::2] + 1j * off[..., 1::2]
    return L


def lower_to_alpha(L):
    L = np.asarray(L)
    d = L.shape[-1]
    rows, cols = _lower_indices(d)
    out = np.empty(L.shape[:-2] + (d * d,), dtype=np.float64)
    idx = np.arange(d)
    out[..., :d] = L[..., idx, idx].real
    off = L[..., rows, cols]
    out[..., d::2] = off.real
    out[..., d + 1::2] = off.imag
    return out


def alpha_to_rho(alpha):
    """Map alpha vector(s) to physical density matrices ``L L† / Tr(L L†)``.

    Raises ZeroTrace when a vector is (numerically) all zeros.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if not np.all(np.isfinite(alpha)):
        raise ValueError("alpha contains non-finite entries")
    # rescale before the product so huge inputs cannot overflow
    scale = np.max(np.abs(alpha), axis=-1, keepdims=True)
    if np.any(scale <= 0.0):
        raise ZeroTrace("alpha vector is all zeros; L L† has zero trace")
    L = alpha_to_lower(alpha / scale)
    rho = L @ np.conj(np.swapaxes(L, -1, -2))
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    if np.any(tr <= 1e-300):
        raise ZeroTrace("Tr(L L†) vanishes")
    rho = rho / tr[..., None, None]
    return 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))


def rho_to_alpha(rho, delta=CHOLESKY_DELTA):
    """Canonical Cholesky alpha vector of ``(1-δ)ρ + δ I/d``.

    The identity mixing makes rank-deficient (pure) states factorisable.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    d = rho.shape[-1]
    reg = (1.0 - delta) * rho + (delta / d) * np.eye(d)
    reg = 0.5 * (reg + np.conj(np.swapaxes(reg, -1, -2)))
    try:
        L = np.linalg.cholesky(reg)
    except np.linalg.LinAlgError as exc:
        raise NotPositive(f"regularised state is not positive definite: {exc}") from None
    if not np.all(np.isfinite(L)):
        raise NotPositive("Cholesky factor is not finite")
    return lower_to_alpha(L)


def check_density_matrix(rho, herm_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL, psd_tol=PSD_TOL):
    """Return a list of violated invariants (empty if ``rho`` is valid)."""
    rho = np.asarray(rho)
    problems = []
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        return ["not square"]
    dev = np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))))
    if dev > herm_tol:
        problems.append(f"not Hermitian (max deviation {dev:.3e})")
    tr = np.trace(rho, axis1=-2, axis2=-1)
    tr_dev = np.max(np.abs(tr - 1.0))
    if tr_dev > trace_tol:
        problems.append(f"trace off by {tr_dev:.3e}")
    herm = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
    min_eig = np.min(np.linalg.eigvalsh(herm))
    if min_eig < -psd_tol:
        problems.append(f"negative eigenvalue {min_eig:.3e}")
    return problems


def is_density_matrix(rho, **tols):
    return not check_density_matrix(rho, **tols)


def psd_sqrt(rho):
    """Square root of Hermitian PSD matrices via eigendecomposition.

    Eigenvalues below ``d * eps * max|λ|`` are treated as exact zeros: their
    rounding noise would otherwise surface as spurious ~1e-8 square roots.
    """
    w, v = np.linalg.eigh(rho)
    tol = rho.shape[-1] * np.finfo(np.float64).eps * np.max(np.abs(w), axis=-1, keepdims=True)
    w = np.sqrt(np.where(w > tol, w, 0.0))
    return (v * w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def fidelity(rho1, rho2):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(ρ1) ρ2 sqrt(ρ1)))**2`` clamped to [0, 1].

    Evaluated as the squared nuclear norm of ``sqrt(ρ1) sqrt(ρ2)``: its
    singular values are the ``sqrt(λ_i)`` of ``sqrt(ρ1) ρ2 sqrt(ρ1)``, obtained
    without square-rooting eigenvalue noise.  Broadcasts over batch axes.
    """
    rho1 = np.asarray(rho1, dtype=np.complex128)
    rho2 = np.asarray(rho2, dtype=np.complex128)
    sv = np.linalg.svd(psd_sqrt(rho1) @ psd_sqrt(rho2), compute_uv=False)
    f = np.clip(np.sum(sv, axis=-1) ** 2, 0.0, 1.0)
    return float(f) if np.ndim(f) == 0 else f


def bures_distance(rho1, rho2):
    return 2.0 * (1.0 - np.sqrt(fidelity(rho1, rho2)))


def angle_metric(rho1, rho2):
    return np.arccos(np.clip(np.sqrt(fidelity(rho1, rho2)), 0.0, 1.0))


def infidelity(rho1, rho2):
    return 1.0 - fidelity(rho1, rho2)


def log_infidelity(rho1, rho2):
    return log10_infidelity_from_fidelity(fidelity(rho1, rho2))


def log10_infidelity_from_fidelity(f):
    return np.log10(np.maximum(1.0 - np.asarray(f, dtype=np.float64), LOG_FLOOR))


def purity(rho):
    rho = np.asarray(rho)
    return np.real(np.einsum("...ij,...ji->...", rho, rho))
