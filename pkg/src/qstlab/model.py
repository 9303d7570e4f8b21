"""Quantum-aware transformer (QAT) and fully connected (FCN) reconstructors.

Both map a frequency table (plus, for the QAT, the detector operators) to an
unnormalised alpha vector of length ``d**2``; :func:`qstlab.qcore.alpha_to_rho`
turns it into a density matrix.

QAT layout, per layer (pre-norm residual blocks)::

    x <- x + CrossAttn(LN1(x), query = O')
    x <- x + SelfAttn(LN2(x))
    x <- x + W2 GELU(W1 LN3(x) + b1) + b2

with ``x0 = f Θ_f + PE`` and ``O' = O Θ_m``.  The head flattens the final
``(d_G, d_S)`` representation and applies one affine map to ``d**2``.
"""

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeMismatch
from .povm import MeasurementSet, make_rng

INIT_STREAM = 0x494E


@dataclass
class QatConfig:
    n_qubits: int
    d_G: int
    d_S: int = 32
    d_L: int = 8
    d_H: int = 16
    d_rate: int = 8
    seed: int = 0
    operator_embedding: bool = True
    position_encoding: bool = True

    @property
    def d(self):
        return 2 ** self.n_qubits

    def validate(self):
        for name in ("n_qubits", "d_G", "d_S", "d_L", "d_H", "d_rate"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_S % self.d_H:
            raise ConfigError(f"d_S={self.d_S} is not divisible by d_H={self.d_H}")


@dataclass
class FcnConfig:
    n_qubits: int
    d_G: int
    hidden: int = 256
    depth: int = 5
    seed: int = 0

    @property
    def d(self):
        return 2 ** self.n_qubits


def qat_parameter_count(cfg):
    """Closed-form number of trainable scalars in a QAT."""
    d, s, r = cfg.d, cfg.d_S, cfg.d_rate
    per_layer = 3 * 2 * s + 2 * 4 * s * s + (s * s * r + s * r) + (s * r * s + s)
    return d * s + 2 * d ** 3 * s + cfg.d_L * per_layer + cfg.d_G * s * d * d + d * d


def fcn_parameter_count(cfg):
    widths = [cfg.d_G * cfg.d] + [cfg.hidden] * cfg.depth + [cfg.d * cfg.d]
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def position_encoding(n_positions, width):
    """Sinusoidal table: ``PE[η, 2i] = sin(η / 10000**(2i/width))``, odd columns cosine."""
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    two_i = np.arange(0, width, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, two_i / width)
    pe = np.zeros((n_positions, width))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : width // 2])
    return pe


def flatten_operators(ops):
    """``(..., d_G, d, d, d)`` complex -> ``(..., d_G, 2 d**3)`` real.

    Per detector the ``d`` elements are concatenated; each element contributes
    its real part (row-major) followed by its imaginary part.
    """
    ops = np.asarray(ops.operators if isinstance(ops, MeasurementSet) else ops)
    lead = ops.shape[:-3]
    d = ops.shape[-1]
    re = ops.real.reshape(lead + (d, d * d))
    im = ops.imag.reshape(lead + (d, d * d))
    return np.concatenate([re, im], axis=-1).reshape(lead[:-1] + (lead[-1], 2 * d ** 3))


def _uniform(rng, fan_in, shape):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def embed_frequencies(freqs, theta_f):
    return ad.matmul(freqs, theta_f)


def embed_operators(ops, theta_m):
    return ad.matmul(Tensor(flatten_operators(ops)), theta_m)


def attention_block(x, query_source, wq, wk, wv, wp, n_heads):
    """Multi-head attention; queries from ``query_source``, keys/values from ``x``.

    ``wq``, ``wk``, ``wv`` are ``(d_S, d_S)`` with head ``h`` owning columns
    ``h*N_e:(h+1)*N_e`` (``N_e = d_S / n_heads``); ``wp`` is ``(d_S, d_S)``.
    """
    x, query_source = ad.as_tensor(x), ad.as_tensor(query_source)
    if x.shape[-1] != wq.shape[0] or query_source.shape[-1] != wq.shape[0]:
        raise ShapeMismatch(f"attention width mismatch: {x.shape}, {query_source.shape}, {wq.shape}")
    if x.shape[-2] != query_source.shape[-2]:
        raise ShapeMismatch("query and key sequences differ in length")
    width = wq.shape[1]
    ne = width // n_heads

    def heads(t):
        # (..., G, d_S) -> (..., H, G, N_e)
        lead = t.shape[:-2]
        t = t.reshape(lead + (t.shape[-2], n_heads, ne))
        n = len(lead)
        return ad.permute(t, tuple(range(n)) + (n + 1, n, n + 2))

    q = heads(ad.matmul(query_source, wq))
    k = heads(ad.matmul(x, wk))
    v = heads(ad.matmul(x, wv))
    scores = ad.scale(ad.matmul(q, ad.transpose_last2(k)), 1.0 / np.sqrt(ne))
    out = ad.matmul(ad.softmax_lastdim(scores), v)
    lead = out.shape[:-3]
    n = len(lead)
    out = ad.permute(out, tuple(range(n)) + (n + 1, n, n + 2))
    out = out.reshape(lead + (out.shape[-3], width))
    return ad.matmul(out, wp)


class QatModel:
    kind = "qat"

    def __init__(self, cfg, params=None):
        cfg.validate()
        self.cfg = cfg
        self.params = self._init_params() if params is None else {
            k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
        self._check_shapes()
        self._pe = position_encoding(cfg.d_G, cfg.d_S)

    def _shapes(self):
        c = self.cfg
        d, s = c.d, c.d_S
        shapes = {"embed.freq": (d, s), "embed.op": (2 * d ** 3, s)}
        for i in range(c.d_L):
            p = f"layers.{i}."
            for nrm in ("norm1", "norm2", "norm3"):
                shapes[p + nrm + ".gain"] = (s,)
                shapes[p + nrm + ".bias"] = (s,)
            for blk in ("cross", "self"):
                for w in ("wq", "wk", "wv", "wp"):
                    shapes[f"{p}{blk}.{w}"] = (s, s)
            shapes[p + "mlp.w1"] = (s, s * c.d_rate)
            shapes[p + "mlp.b1"] = (s * c.d_rate,)
            shapes[p + "mlp.w2"] = (s * c.d_rate, s)
            shapes[p + "mlp.b2"] = (s,)
        shapes["head.w"] = (c.d_G * s, d * d)
        shapes["head.b"] = (d * d,)
        return shapes

    def _init_params(self):
        rng = make_rng(self.cfg.seed, INIT_STREAM)
        params = {}
        for name, shape in self._shapes().items():
            if name.endswith(".gain"):
                data = np.ones(shape)
            elif ".norm" in name and name.endswith(".bias"):
                data = np.zeros(shape)
            elif name.endswith("mlp.b1"):
                data = _uniform(rng, self.cfg.d_S, shape)
            elif name.endswith("mlp.b2"):
                data = _uniform(rng, self.cfg.d_S * self.cfg.d_rate, shape)
            elif name == "head.b":
                data = _uniform(rng, self.cfg.d_G * self.cfg.d_S, shape)
            else:
                data = _uniform(rng, shape[0], shape)
            params[name] = Tensor(data, requires_grad=True, name=name)
        return params

    def _check_shapes(self):
        expected = self._shapes()
        if set(expected) != set(self.params):
            raise ShapeMismatch("parameter names do not match configuration")
        for k, s in expected.items():
            if self.params[k].shape != s:
                raise ShapeMismatch(f"{k}: shape {self.params[k].shape}, expected {s}")

    def parameter_count(self):
        return sum(p.size for p in self.params.values())

    def config_dict(self):
        return {"kind": self.kind, **asdict(self.cfg)}

    def encode(self, freqs, ops):
        """Pre-head representation ``(..., d_G, d_S)``."""
        c, P = self.cfg, self.params
        freqs = ad.as_tensor(freqs)
        if freqs.shape[-2:] != (c.d_G, c.d):
            raise ShapeMismatch(f"frequencies {freqs.shape} vs model (d_G={c.d_G}, d={c.d})")
        x = embed_frequencies(freqs, P["embed.freq"])
        if c.position_encoding:
            x = x + self._pe
        query = None
        if c.operator_embedding:
            ops_arr = ops.operators if isinstance(ops, MeasurementSet) else np.asarray(ops)
            if ops_arr.shape[-4:] != (c.d_G, c.d, c.d, c.d):
                raise ShapeMismatch(f"operators {ops_arr.shape} vs model (d_G={c.d_G}, d={c.d})")
            query = embed_operators(ops_arr, P["embed.op"])
        for i in range(c.d_L):
            p = f"layers.{i}."
            h = ad.layer_norm(x, P[p + "norm1.gain"], P[p + "norm1.bias"])
            q_src = query if query is not None else h
            x = x + attention_block(h, q_src, P[p + "cross.wq"], P[p + "cross.wk"],
                                    P[p + "cross.wv"], P[p + "cross.wp"], c.d_H)
            h = ad.layer_norm(x, P[p + "norm2.gain"], P[p + "norm2.bias"])
            x = x + attention_block(h, h, P[p + "self.wq"], P[p + "self.wk"],
                                    P[p + "self.wv"], P[p + "self.wp"], c.d_H)
            h = ad.layer_norm(x, P[p + "norm3.gain"], P[p + "norm3.bias"])
            h = ad.gelu(ad.matmul(h, P[p + "mlp.w1"]) + P[p + "mlp.b1"])
            x = x + ad.matmul(h, P[p + "mlp.w2"]) + P[p + "mlp.b2"]
        return x

    def forward(self, freqs, ops):
        """Alpha-vector prediction, shape ``(..., d**2)``."""
        x = self.encode(freqs, ops)
        lead = x.shape[:-2]
        flat = x.reshape(lead + (1, self.cfg.d_G * self.cfg.d_S))
        out = ad.matmul(flat, self.params["head.w"]) + self.params["head.b"]
        return out.reshape(lead + (self.cfg.d ** 2,))

    __call__ = forward


def qat_forward(model, freqs, ops):
    return model.forward(freqs, ops)


def ablate_operator_embedding(model):
    """Copy of ``model`` whose cross-attention queries the main stream instead of O'."""
    cfg = replace(model.cfg, operator_embedding=False)
    return QatModel(cfg, {k: p.data.copy() for k, p in model.params.items()})


class FcnModel:
    """``depth`` x (Linear(hidden) + ReLU) followed by Linear to ``d**2``."""

    kind = "fcn"

    def __init__(self, cfg, params=None):
        self.cfg = cfg
        widths = [cfg.d_G * cfg.d] + [cfg.hidden] * cfg.depth + [cfg.d * cfg.d]
        self._widths = widths
        if params is None:
            rng = make_rng(cfg.seed, INIT_STREAM)
            params = {}
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
                params[f"fc.{i}.w"] = _uniform(rng, a, (a, b))
                params[f"fc.{i}.b"] = _uniform(rng, a, (b,))
        self.params = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            if self.params[f"fc.{i}.w"].shape != (a, b) or self.params[f"fc.{i}.b"].shape != (b,):
                raise ShapeMismatch(f"fc.{i} parameters do not match configuration")

    def parameter_count(self):
        return sum(p.size for p in self.params.values())

    def config_dict(self):
        return {"kind": self.kind, **asdict(self.cfg)}

    def forward(self, freqs, ops=None):
        freqs = ad.as_tensor(freqs)
        c = self.cfg
        if freqs.shape[-2:] == (c.d_G, c.d):
            freqs = freqs.reshape(freqs.shape[:-2] + (c.d_G * c.d,))
        if freqs.shape[-1] != c.d_G * c.d:
            raise ShapeMismatch(f"frequencies {freqs.shape} vs FCN input {c.d_G * c.d}")
        lead = freqs.shape[:-1]
        h = freqs.reshape(lead + (1, c.d_G * c.d))
        n = len(self._widths) - 1
        for i in range(n):
            h = ad.matmul(h, self.params[f"fc.{i}.w"]) + self.params[f"fc.{i}.b"]
            if i < n - 1:
                h = ad.relu(h)
        return h.reshape(lead + (c.d * c.d,))

    __call__ = forward


def fcn_forward(model, freqs):
    return model.forward(freqs)


def build_model(kind, n_qubits, d_G, seed=0, **dims):
    """Model factory for ``qat``, ``qat_no_oe`` and ``fcn``."""
    kind = kind.replace("-", "_")
    if kind in ("qat", "qat_no_oe"):
        keys = ("d_S", "d_L", "d_H", "d_rate")
        cfg = QatConfig(n_qubits, d_G, seed=seed, operator_embedding=(kind == "qat"),
                        **{k: dims[k] for k in keys if dims.get(k) is not None})
        return QatModel(cfg)
    if kind == "fcn":
        keys = ("hidden", "depth")
        return FcnModel(FcnConfig(n_qubits, d_G, seed=seed,
                                  **{k: dims[k] for k in keys if dims.get(k) is not None}))
    raise ConfigError(f"unknown model kind {kind!r}")


def model_from_config(config, params):
    config = dict(config)
    kind = config.pop("kind")
    if kind == "qat":
        return QatModel(QatConfig(**config), params)
    if kind == "fcn":
        return FcnModel(FcnConfig(**config), params)
    raise ConfigError(f"unknown model kind {kind!r}")


def save_model(model, path, adam_state=None, extra=None):
    config = {"model": model.config_dict(), **(extra or {})}
    ad.save_checkpoint(path, model.params, config, adam_state)


def load_model(path):
    params, config, _ = ad.load_checkpoint(path)
    return model_from_config(config["model"], params)
