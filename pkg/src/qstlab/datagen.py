"""Random states, dataset assembly and the on-disk dataset container.

Seeding: sample ``i`` of a dataset draws its state and its measurement
record from ``make_rng(seed + i)``; dataset-level square-root detectors are
drawn from ``make_rng(seed, OPS_STREAM)``.

Container layout (a directory)::

    manifest.json   format_version, shapes, config, CRC-64/XZ per array file
    freqs.f64       (n_samples, d_G, d)      little-endian float64
    alphas.f64      (n_samples, d*d)         little-endian float64
    rhos.c128       (n_samples, d, d)        little-endian (re, im) float64 pairs
    ops.c128        (d_G, d, d, d)           little-endian (re, im) float64 pairs
"""

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from fastcrc import crc64

from . import povm, qcore
from .errors import ChecksumError, ConfigError, FormatError, OutputExists, ShapeMismatch, SingularGram

FORMAT_VERSION = 1
OPS_STREAM = 0x5352
SRM_MAX_RETRIES = 10
ARRAY_FILES = {
    "freqs": ("freqs.f64", "<f8"),
    "alphas": ("alphas.f64", "<f8"),
    "rhos": ("rhos.c128", "<c16"),
    "ops": ("ops.c128", "<c16"),
}


def haar_unitary(dim, rng):
    """Haar-random unitary: QR of a complex Ginibre matrix, R's diagonal phases removed."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def haar_state_vector(dim, rng):
    return haar_unitary(dim, rng)[:, 0]


def haar_pure_state(dim, rng, unitary=None):
    """``U|0><0|U†`` with ``U`` Haar distributed (or the given ``unitary``)."""
    if dim < 2:
        raise ValueError("dimension must be >= 2")
    u = haar_unitary(dim, rng) if unitary is None else np.asarray(unitary, dtype=complex)
    psi = u[:, 0]
    rho = np.outer(psi, psi.conj())
    return rho / np.real(np.trace(rho))


def ginibre_mixed_state(dim, rng):
    """Hilbert-Schmidt random state ``G G† / Tr(G G†)``, ``G`` with N(0,1) + iN(0,1) entries."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    rho = rho / np.real(np.trace(rho))
    return 0.5 * (rho + rho.conj().T)


def random_srm_measurement(n_qubits, n_detectors, rng):
    """``n_detectors`` square-root detectors from Haar-random state frames."""
    d = 2 ** n_qubits
    detectors = []
    for k in range(n_detectors):
        for attempt in range(SRM_MAX_RETRIES + 1):
            states = np.stack([haar_state_vector(d, rng) for _ in range(d)])
            try:
                detectors.append(povm.srm_detector(states, label=f"srm{k}"))
                break
            except SingularGram:
                if attempt == SRM_MAX_RETRIES:
                    raise
    return povm.MeasurementSet(detectors, n_qubits)


@dataclass
class DatasetConfig:
    n_qubits: int = 2
    state_kind: str = "pure"
    measurement_kind: str = "cube"
    n_samples: int = 1000
    copies: int | None = 10000
    seed: int = 0
    srm_detectors: int = 5

    def validate(self):
        if self.state_kind not in ("pure", "mixed"):
            raise ConfigError(f"state_kind must be pure|mixed, got {self.state_kind!r}")
        if self.measurement_kind not in ("cube", "srm"):
            raise ConfigError(f"measurement_kind must be cube|srm, got {self.measurement_kind!r}")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.copies is not None and self.copies < 1:
            raise ConfigError("copies must be >= 1 or None (infinite)")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass
class Dataset:
    n_qubits: int
    state_kind: str
    measurement_kind: str
    copies: int | None
    seed: int
    freqs: np.ndarray
    alphas: np.ndarray
    rhos: np.ndarray
    ops: np.ndarray

    @property
    def n_samples(self):
        return self.freqs.shape[0]

    @property
    def dim(self):
        return 2 ** self.n_qubits

    @property
    def n_detectors(self):
        return self.ops.shape[0]

    @property
    def measurement(self):
        return povm.MeasurementSet.from_operators(self.ops)

    def subset(self, index):
        return Dataset(self.n_qubits, self.state_kind, self.measurement_kind, self.copies,
                       self.seed, self.freqs[index], self.alphas[index], self.rhos[index],
                       self.ops)

    def split(self, test_size):
        """Last ``test_size`` samples are held out."""
        n = self.n_samples
        if not 0 <= test_size < n:
            raise ConfigError(f"test_size {test_size} must be in [0, {n})")
        return self.subset(slice(0, n - test_size)), self.subset(slice(n - test_size, n))


def build_measurement(cfg):
    if cfg.measurement_kind == "cube":
        return povm.cube_measurement(cfg.n_qubits)
    return random_srm_measurement(cfg.n_qubits, cfg.srm_detectors, povm.make_rng(cfg.seed, OPS_STREAM))


def _generate_samples(args):
    n_qubits, state_kind, copies, ops, seed, start, stop = args
    d = 2 ** n_qubits
    rhos = np.empty((stop - start, d, d), dtype=np.complex128)
    freqs = np.empty((stop - start, ops.shape[0], d))
    for j, i in enumerate(range(start, stop)):
        rng = povm.make_rng(seed + i)
        if state_kind == "pure":
            rho = haar_pure_state(d, rng)
        else:
            rho = ginibre_mixed_state(d, rng)
        rhos[j] = rho
        freqs[j] = povm.sample_frequencies(povm.born_probabilities(rho, ops), copies, rng)
    return rhos, freqs


def build_dataset(cfg, jobs=1):
    """Generate states, measurement records and alpha targets for ``cfg``."""
    cfg.validate()
    ms = build_measurement(cfg)
    ops = ms.operators
    n = cfg.n_samples
    if jobs > 1 and n > 1:
        bounds = np.linspace(0, n, min(jobs, n) + 1).astype(int)
        tasks = [(cfg.n_qubits, cfg.state_kind, cfg.copies, ops, cfg.seed, a, b)
                 for a, b in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_generate_samples, tasks))
        rhos = np.concatenate([p[0] for p in parts])
        freqs = np.concatenate([p[1] for p in parts])
    else:
        rhos, freqs = _generate_samples((cfg.n_qubits, cfg.state_kind, cfg.copies, ops, cfg.seed, 0, n))
    alphas = qcore.rho_to_alpha(rhos)
    return Dataset(cfg.n_qubits, cfg.state_kind, cfg.measurement_kind, cfg.copies, cfg.seed,
                   freqs, alphas, rhos, ops)


def _crc(data):
    return f"{crc64.xz(data):016x}"


def _expected_shapes(n_samples, d_G, d):
    return {
        "freqs": (n_samples, d_G, d),
        "alphas": (n_samples, d * d),
        "rhos": (n_samples, d, d),
        "ops": (d_G, d, d, d),
    }


def save_dataset(ds, path, force=False):
    if os.path.exists(os.path.join(path, "manifest.json")) and not force:
        raise OutputExists(f"{path} already holds a dataset (use force)")
    os.makedirs(path, exist_ok=True)
    checksums = {}
    for key, (fname, dtype) in ARRAY_FILES.items():
        raw = np.ascontiguousarray(getattr(ds, key), dtype=dtype).tobytes()
        with open(os.path.join(path, fname), "wb") as fh:
            fh.write(raw)
        checksums[fname] = _crc(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_qubits": ds.n_qubits,
        "state_kind": ds.state_kind,
        "measurement_kind": ds.measurement_kind,
        "n_samples": ds.n_samples,
        "d_G": ds.n_detectors,
        "d": ds.dim,
        "copies_per_detector": -1 if ds.copies is None else int(ds.copies),
        "seed": ds.seed,
        "checksum_algorithm": "crc64-xz",
        "checksums": checksums,
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path):
    mpath = os.path.join(path, "manifest.json")
    try:
        with open(mpath, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"no manifest.json in {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest.json is not valid JSON: {exc}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {manifest.get('format_version')!r}")
    try:
        n, d_G, d = int(manifest["n_samples"]), int(manifest["d_G"]), int(manifest["d"])
        n_qubits = int(manifest["n_qubits"])
        checksums = manifest["checksums"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"manifest missing or malformed field: {exc}") from None
    if 2 ** n_qubits != d:
        raise ShapeMismatch(f"d={d} inconsistent with n_qubits={n_qubits}")
    shapes = _expected_shapes(n, d_G, d)
    arrays = {}
    for key, (fname, dtype) in ARRAY_FILES.items():
        try:
            with open(os.path.join(path, fname), "rb") as fh:
                raw = fh.read()
        except FileNotFoundError:
            raise FormatError(f"missing array file {fname}") from None
        if _crc(raw) != checksums.get(fname):
            raise ChecksumError(f"{fname}: checksum mismatch")
        arr = np.frombuffer(raw, dtype=dtype)
        expected = int(np.prod(shapes[key]))
        if arr.size != expected:
            raise ShapeMismatch(f"{fname}: {arr.size} values, manifest implies {shapes[key]}")
        arrays[key] = arr.reshape(shapes[key]).astype(np.dtype(dtype).newbyteorder("="))
    copies = int(manifest["copies_per_detector"])
    return Dataset(n_qubits, manifest["state_kind"], manifest["measurement_kind"],
                   None if copies < 0 else copies, int(manifest["seed"]), **arrays)


def dataset_config_dict(cfg):
    return asdict(cfg)
