"""Linear regression estimation (LRE) with projection onto physical states."""

import hashlib
import threading
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RankDeficient
from .povm import MeasurementSet

TIKHONOV = 1e-12
RANK_TOL = 1e-8


def hermitian_basis(d):
    """Trace-orthonormal Hermitian basis: ``I/sqrt(d)`` then generalised Gell-Mann matrices."""
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            sym = np.zeros((d, d), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0 / np.sqrt(2.0)
            asym = np.zeros((d, d), dtype=complex)
            asym[j, k] = -1j / np.sqrt(2.0)
            asym[k, j] = 1j / np.sqrt(2.0)
            basis += [sym, asym]
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1.0
        diag[l] = -l
        basis.append(np.diag(diag / np.sqrt(l * (l + 1))).astype(complex))
    return np.array(basis)


def project_to_simplex(v):
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    v = np.asarray(v, dtype=np.float64)
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    k = np.arange(1, v.shape[-1] + 1)
    cond = u - css / k > 0
    rho = v.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
    return np.maximum(v - theta, 0.0)


def physical_projection(h):
    """Closest (Frobenius) unit-trace PSD matrix to Hermitian ``h`` (batched)."""
    h = np.asarray(h, dtype=np.complex128)
    h = 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))
    w, v = np.linalg.eigh(h)
    w = project_to_simplex(w)
    rho = (v * w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    rho = 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    return rho / tr[..., None, None]


@dataclass
class LreDesign:
    """Design ``A`` with ``A[(η,γ), i] = Tr(O_ηγ B_i)`` and its solver pieces."""

    matrix: np.ndarray
    basis: np.ndarray
    normal_inv: np.ndarray

    @property
    def dim(self):
        return self.basis.shape[-1]


_cache = {}
_cache_lock = threading.Lock()


def _ops_of(ms):
    return ms.operators if isinstance(ms, MeasurementSet) else np.asarray(ms, dtype=np.complex128)


def lre_design(ms):
    """Design for measurement set ``ms``, cached by a hash of the operator bytes."""
    ops = np.ascontiguousarray(_ops_of(ms), dtype=np.complex128)
    key = hashlib.sha256(ops.tobytes() + str(ops.shape).encode()).hexdigest()
    with _cache_lock:
        hit = _cache.get(key)
    if hit is not None:
        return hit
    d = ops.shape[-1]
    basis = hermitian_basis(d)
    A = np.real(np.einsum("gkij,bji->gkb", ops, basis)).reshape(-1, d * d)
    rest = A[:, 1:]
    sv = np.linalg.svd(rest, compute_uv=False)
    if sv.size < d * d - 1 or sv[-1] <= RANK_TOL:
        raise RankDeficient(
            f"measurement set is not informationally complete (smallest singular value "
            f"{sv[-1] if sv.size else 0.0:.3e})")
    normal_inv = np.linalg.solve(rest.T @ rest + TIKHONOV * np.eye(d * d - 1), rest.T)
    design = LreDesign(A, basis, normal_inv)
    with _cache_lock:
        _cache[key] = design
    return design


def lre_estimate(freqs, ms):
    """LRE state estimate(s) from frequency table(s) ``(..., d_G, d)``."""
    design = lre_design(ms)
    d = design.dim
    freqs = np.asarray(freqs, dtype=np.float64)
    n_rows = design.matrix.shape[0]
    if freqs.shape[-2] * freqs.shape[-1] != n_rows or freqs.shape[-1] != d:
        raise DimensionMismatch(f"frequencies {freqs.shape} vs design with {n_rows} rows (d={d})")
    lead = freqs.shape[:-2]
    f = freqs.reshape(lead + (n_rows,))
    x0 = 1.0 / np.sqrt(d)
    rhs = f - x0 * design.matrix[:, 0]
    x = rhs @ design.normal_inv.T
    coeffs = np.concatenate([np.full(lead + (1,), x0), x], axis=-1)
    raw = np.einsum("...b,bij->...ij", coeffs.astype(complex), design.basis)
    return physical_projection(raw)
