"""Finite-difference gradient suite over every autodiff primitive and the QAT loss.

Each case draws a random configuration (shapes and values) from a seeded
generator and returns ``(build, arrays)`` for
:func:`qstlab.autodiff.check_gradients`.  Inputs to non-smooth or singular
primitives (relu, clamp, sqrt, div) are kept away from the kink.
"""

import time

import numpy as np

from . import autodiff as ad
from . import loss, model
from .povm import cube_measurement, make_rng

GRADCHECK_STREAM = 0x4743
DEFAULT_TOL = 1e-4


def _shape(rng, ndim_range=(1, 3), size_range=(1, 4)):
    ndim = rng.integers(ndim_range[0], ndim_range[1] + 1)
    return tuple(int(s) for s in rng.integers(size_range[0], size_range[1] + 1, size=ndim))


def _away_from(rng, shape, point=0.0, margin=0.1):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x - point) < margin, point + np.sign(x - point + 1e-300) * margin, x)


def _broadcast_pair(rng):
    shape = _shape(rng)
    other = tuple(1 if rng.random() < 0.3 else s for s in shape)
    other = other[int(rng.integers(0, len(other))):]
    pair = [shape, other]
    rng.shuffle(pair)
    return pair


def case_add(rng):
    a, b = _broadcast_pair(rng)
    return ad.add, [rng.standard_normal(a), rng.standard_normal(b)]


def case_sub(rng):
    a, b = _broadcast_pair(rng)
    return ad.sub, [rng.standard_normal(a), rng.standard_normal(b)]


def case_mul(rng):
    a, b = _broadcast_pair(rng)
    return ad.mul, [rng.standard_normal(a), rng.standard_normal(b)]


def case_div(rng):
    a, b = _broadcast_pair(rng)
    den = _away_from(rng, b, margin=0.5)
    return ad.div, [rng.standard_normal(a), den]


def case_scale(rng):
    c = float(rng.standard_normal())
    return (lambda x: ad.scale(x, c)), [rng.standard_normal(_shape(rng))]


def case_matmul(rng):
    m, k, n = (int(v) for v in rng.integers(1, 5, size=3))
    lead = _shape(rng, (0, 2), (1, 3))
    form = rng.integers(0, 3)
    if form == 0:  # batched left, 2-D right (folded path)
        shapes = [lead + (m, k), (k, n)]
    elif form == 1:  # both batched
        shapes = [lead + (m, k), lead + (k, n)]
    else:  # broadcast left
        shapes = [(m, k), lead + (k, n)]
    return ad.matmul, [rng.standard_normal(s) for s in shapes]


def case_transpose_last2(rng):
    return ad.transpose_last2, [rng.standard_normal(_shape(rng, (2, 4)))]


def case_permute(rng):
    shape = _shape(rng, (1, 4))
    axes = tuple(int(i) for i in rng.permutation(len(shape)))
    return (lambda x: ad.permute(x, axes)), [rng.standard_normal(shape)]


def case_reshape(rng):
    shape = _shape(rng, (1, 4))
    target = (-1,) if rng.random() < 0.5 else tuple(reversed(shape))
    return (lambda x: ad.reshape(x, target)), [rng.standard_normal(shape)]


def case_concat_last(rng):
    lead = _shape(rng, (0, 2))
    widths = rng.integers(1, 4, size=int(rng.integers(2, 4)))
    arrays = [rng.standard_normal(lead + (int(w),)) for w in widths]
    return (lambda *ts: ad.concat_last(ts)), arrays


def case_slice(rng):
    shape = _shape(rng, (1, 3), (2, 5))
    index = tuple(slice(int(rng.integers(0, s)), None) for s in shape)
    if rng.random() < 0.5:  # fancy index with repeats
        index = (rng.integers(0, shape[0], size=4),)
    return (lambda x: ad.slice_(x, index)), [rng.standard_normal(shape)]


def case_sum(rng):
    shape = _shape(rng)
    axis = None if rng.random() < 0.3 else int(rng.integers(0, len(shape)))
    keep = bool(rng.random() < 0.5)
    return (lambda x: ad.sum_(x, axis, keep)), [rng.standard_normal(shape)]


def case_mean(rng):
    shape = _shape(rng)
    axis = None if rng.random() < 0.3 else int(rng.integers(0, len(shape)))
    keep = bool(rng.random() < 0.5)
    return (lambda x: ad.mean(x, axis, keep)), [rng.standard_normal(shape)]


def case_sqrt(rng):
    return ad.sqrt, [rng.uniform(0.2, 3.0, _shape(rng))]


def case_clamp_min(rng):
    floor = float(rng.uniform(-0.5, 0.5))
    return (lambda x: ad.clamp_min(x, floor)), [_away_from(rng, _shape(rng), floor)]


def case_relu(rng):
    return ad.relu, [_away_from(rng, _shape(rng))]


def case_gelu(rng):
    return ad.gelu, [2.0 * rng.standard_normal(_shape(rng))]


def case_softmax(rng):
    return ad.softmax_lastdim, [2.0 * rng.standard_normal(_shape(rng, (1, 3), (1, 5)))]


def case_layer_norm(rng):
    # width >= 3 (see case_qat_loss on two-feature normalisation)
    shape = _shape(rng, (1, 3), (3, 6))
    n = shape[-1]
    return ad.layer_norm, [rng.standard_normal(shape), rng.standard_normal(n), rng.standard_normal(n)]


def case_attention(rng):
    heads = int(rng.choice([1, 2]))
    width = heads * int(rng.integers(1, 3))
    g = int(rng.integers(1, 4))
    lead = _shape(rng, (0, 1), (1, 3))
    arrays = [rng.standard_normal(lead + (g, width)), rng.standard_normal(lead + (g, width))]
    arrays += [rng.standard_normal((width, width)) / np.sqrt(width) for _ in range(4)]

    def build(x, q, wq, wk, wv, wp):
        return model.attention_block(x, q, wq, wk, wv, wp, heads)

    return build, arrays


def case_integrated_loss(rng):
    n = int(rng.integers(1, 4))
    dd = int(rng.choice([4, 16]))
    beta = float(rng.uniform())
    target = rng.standard_normal((n, dd))

    def build(pred):
        return loss.integrated_loss(pred, target, loss.LossConfig(beta))

    return build, [rng.standard_normal((n, dd))]


def case_qat_loss(rng):
    """Integrated loss of a tiny one-qubit QAT, differentiated w.r.t. every parameter."""
    heads = int(rng.choice([1, 2]))
    # width >= 4: layer norm over two features is a near step function and
    # central differences at h=1e-5 stop resolving it
    cfg = model.QatConfig(1, 3, d_S=4, d_L=int(rng.integers(1, 3)), d_H=heads,
                          d_rate=2, seed=int(rng.integers(0, 2 ** 31)),
                          operator_embedding=bool(rng.random() < 0.8))
    base = model.QatModel(cfg)
    names = list(base.params)
    ops = cube_measurement(1).operators
    batch = int(rng.integers(1, 4))
    freqs = rng.dirichlet(np.ones(2), size=(batch, 3))
    target = rng.standard_normal((batch, 4))
    beta = float(rng.uniform())

    def build(*tensors):
        base.params = dict(zip(names, tensors))
        return loss.integrated_loss(base(freqs, ops), target, loss.LossConfig(beta))

    # layer-norm gains of exactly one sit at a symmetric point; jitter them
    arrays = [p.data + 0.1 * rng.standard_normal(p.shape) for p in base.params.values()]
    return build, arrays


CASES = {
    "add": case_add, "sub": case_sub, "mul": case_mul, "div": case_div, "scale": case_scale,
    "matmul": case_matmul, "transpose_last2": case_transpose_last2, "permute": case_permute,
    "reshape": case_reshape, "concat_last": case_concat_last, "slice": case_slice,
    "sum": case_sum, "mean": case_mean, "sqrt": case_sqrt, "clamp_min": case_clamp_min,
    "relu": case_relu, "gelu": case_gelu, "softmax": case_softmax, "layer_norm": case_layer_norm,
    "attention": case_attention, "integrated_loss": case_integrated_loss,
    "qat_loss": case_qat_loss,
}


def run_suite(n_configs=20, seed=0, tol=DEFAULT_TOL, h=1e-5, cases=None):
    """Run every case on ``n_configs`` random configurations.

    Returns one dict per case: ``case``, ``n_configs``, ``worst_error``,
    ``passed`` and ``seconds``.
    """
    results = []
    for k, name in enumerate(cases or CASES):
        rng = make_rng(seed, GRADCHECK_STREAM, k)
        t0 = time.perf_counter()
        worst = 0.0
        for j in range(n_configs):
            build, arrays = CASES[name](rng)
            worst = max(worst, ad.check_gradients(build, arrays, h=h, projection_seed=j))
        results.append({"case": name, "n_configs": n_configs, "worst_error": worst,
                        "passed": bool(worst <= tol), "seconds": time.perf_counter() - t0})
    return results
