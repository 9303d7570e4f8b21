"""Measurement detectors, Born-rule probabilities and finite-copy sampling.

Cube measurement enumeration
----------------------------
Detectors are ordered lexicographically over qubit positions (qubit 0 is the
most significant) with per-qubit axis order ``z, y, x``; e.g. for two qubits
``zz, zy, zx, yz, ..., xx``.  Inside a detector the outcomes are ordered the
same way with per-qubit eigenvalue order ``+, -``.  So detector ``zz`` is
``{|00><00|, |01><01|, |10><10|, |11><11|}``.  This order fixes the rows of
every frequency table and therefore the position index seen by the model.

Random streams
--------------
All sampling uses ``numpy.random.Philox`` (a counter-based 64-bit generator)
seeded through ``numpy.random.SeedSequence``; see :func:`make_rng`.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NotPositive, SingularGram, UnsupportedSize

_S = 1.0 / np.sqrt(2.0)
# eigenvectors (+1, -1) of each Pauli matrix, σ_z diagonal
PAULI_EIGENVECTORS = {
    "z": (np.array([1.0, 0.0], dtype=complex), np.array([0.0, 1.0], dtype=complex)),
    "y": (np.array([_S, 1j * _S]), np.array([_S, -1j * _S])),
    "x": (np.array([_S, _S], dtype=complex), np.array([_S, -_S], dtype=complex)),
}
CUBE_AXES = ("z", "y", "x")
SRM_GRAM_TOL = 1e-8


def make_rng(*entropy):
    """Philox generator keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(entropy))))


@dataclass
class Detector:
    """A POVM with ``d`` elements stacked as an array of shape ``(d, d, d)``."""

    elements: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=np.complex128)

    @property
    def dim(self):
        return self.elements.shape[-1]

    def check(self, tol=1e-9, psd_tol=1e-10):
        """Return a list of violated POVM invariants."""
        el = self.elements
        problems = []
        herm = np.max(np.abs(el - np.conj(np.swapaxes(el, -1, -2))))
        if herm > 1e-10:
            problems.append(f"element not Hermitian ({herm:.2e})")
        min_eig = np.min(np.linalg.eigvalsh(0.5 * (el + np.conj(np.swapaxes(el, -1, -2)))))
        if min_eig < -psd_tol:
            problems.append(f"element not PSD ({min_eig:.2e})")
        comp = np.max(np.abs(el.sum(axis=0) - np.eye(self.dim)))
        if comp > tol:
            problems.append(f"elements do not sum to identity ({comp:.2e})")
        return problems


@dataclass
class MeasurementSet:
    detectors: list
    n_qubits: int
    _ops: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        d = 2 ** self.n_qubits
        for det in self.detectors:
            if det.elements.shape != (d, d, d):
                raise DimensionMismatch(
                    f"detector {det.label!r} has shape {det.elements.shape}, expected {(d, d, d)}")

    @classmethod
    def from_operators(cls, ops, labels=None):
        ops = np.asarray(ops, dtype=np.complex128)
        if ops.ndim != 4 or not (ops.shape[1] == ops.shape[2] == ops.shape[3]):
            raise DimensionMismatch(f"operator tensor must be (d_G, d, d, d), got {ops.shape}")
        d = ops.shape[-1]
        n = int(round(np.log2(d)))
        if 2 ** n != d:
            raise DimensionMismatch(f"dimension {d} is not a power of two")
        labels = labels or [str(i) for i in range(ops.shape[0])]
        return cls([Detector(o, lab) for o, lab in zip(ops, labels)], n)

    @property
    def dim(self):
        return 2 ** self.n_qubits

    @property
    def n_detectors(self):
        return len(self.detectors)

    @property
    def operators(self):
        """All elements as an array of shape ``(d_G, d, d, d)``."""
        if self._ops is None:
            self._ops = np.stack([det.elements for det in self.detectors])
        return self._ops

    @property
    def labels(self):
        return [det.label for det in self.detectors]


def cube_measurement(n_qubits):
    """The ``3**n`` tensor-product Pauli eigenbasis detectors."""
    if not 1 <= n_qubits <= 4:
        raise UnsupportedSize(f"cube measurement supports 1..4 qubits, got {n_qubits}")
    detectors = []
    for axes in itertools.product(CUBE_AXES, repeat=n_qubits):
        elements = []
        for signs in itertools.product((0, 1), repeat=n_qubits):
            vec = np.ones(1, dtype=complex)
            for ax, s in zip(axes, signs):
                vec = np.kron(vec, PAULI_EIGENVECTORS[ax][s])
            elements.append(np.outer(vec, vec.conj()))
        detectors.append(Detector(np.array(elements), "".join(axes)))
    return MeasurementSet(detectors, n_qubits)


def srm_detector(states, label="srm"):
    """Square-root measurement ``Λ^{-1/2}|ψ><ψ|Λ^{-1/2}`` built from ``d`` kets."""
    states = np.asarray(states, dtype=np.complex128)
    if states.ndim != 2 or states.shape[0] != states.shape[1]:
        raise DimensionMismatch(f"need d state vectors of length d, got shape {states.shape}")
    projectors = np.einsum("ki,kj->kij", states, states.conj())
    gram = projectors.sum(axis=0)
    w, v = np.linalg.eigh(0.5 * (gram + gram.conj().T))
    if w[0] <= SRM_GRAM_TOL:
        raise SingularGram(f"state frame is degenerate (min Gram eigenvalue {w[0]:.3e})")
    elements = _whiten(projectors, w, v)
    # one refinement pass: ill-conditioned frames leave ~1e-12 completeness residue
    total = elements.sum(axis=0)
    w, v = np.linalg.eigh(0.5 * (total + total.conj().T))
    return Detector(_whiten(elements, w, v), label)


def _whiten(elements, w, v):
    inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    out = inv_sqrt @ elements @ inv_sqrt
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


def born_probabilities(rho, ms, tol=1e-10):
    """Exact outcome probabilities ``Re Tr(O ρ)``.

    ``rho`` may be a single state ``(d, d)`` giving a ``(d_G, d)`` table or a
    stack ``(n, d, d)`` giving ``(n, d_G, d)``.
    """
    ops = ms.operators if isinstance(ms, MeasurementSet) else np.asarray(ms)
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape[-1] != ops.shape[-1] or rho.shape[-2] != ops.shape[-1]:
        raise DimensionMismatch(f"state of shape {rho.shape} vs operators of dim {ops.shape[-1]}")
    probs = np.real(np.einsum("gkij,...ji->...gk", ops, rho))
    low, high = probs.min(), probs.max()
    if low < -tol or high > 1.0 + tol:
        raise NotPositive(f"Born probabilities outside [0, 1] by more than {tol}: [{low}, {high}]")
    return np.clip(probs, 0.0, 1.0)


def sample_frequencies(probs, copies, rng):
    """Multinomially sample each row with ``copies`` trials; return counts/copies.

    ``copies`` of ``None`` or ``inf`` returns ``probs`` unchanged.  ``rng`` is
    a Generator or an integer seed.  Each row is drawn as a chain of binomials
    (outcome k gets ``Binomial(remaining, p_k / remaining mass)``).
    """
    probs = np.asarray(probs, dtype=np.float64)
    if copies is None or (isinstance(copies, float) and np.isinf(copies)):
        return probs.copy()
    copies = int(copies)
    if copies < 1:
        raise ValueError("copies must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(int(rng))
    flat = probs.reshape(-1, probs.shape[-1])
    counts = np.zeros(flat.shape, dtype=np.int64)
    remaining = np.full(flat.shape[0], copies, dtype=np.int64)
    mass = np.ones(flat.shape[0])
    k_last = flat.shape[1] - 1
    for k in range(k_last):
        pk = flat[:, k]
        with np.errstate(divide="ignore", invalid="ignore"):
            cond = np.where(mass > 0, pk / mass, 0.0)
        cond = np.clip(cond, 0.0, 1.0)
        counts[:, k] = rng.binomial(remaining, cond)
        remaining -= counts[:, k]
        mass = mass - pk
    counts[:, k_last] = remaining
    return (counts / copies).reshape(probs.shape)
