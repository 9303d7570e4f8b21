"""Central finite differences as an independent oracle for analytic gradients."""

import numpy as np

from .tensor import Tensor


def numerical_grad(fn, arrays, h=1e-5):
    """Central-difference gradient of scalar ``fn(arrays)`` w.r.t. each array."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn(arrays)
            flat[i] = orig - h
            fm = fn(arrays)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), 1e-12)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def check_gradients(build, arrays, h=1e-5, projection_seed=0):
    """Compare analytic and numeric gradients of ``sum(build(*tensors) * R)``.

    ``R`` is a fixed random projection so the whole Jacobian is exercised.
    Returns the worst relative error over all inputs.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    probe = build(*[Tensor(a) for a in arrays])
    proj = np.random.default_rng(projection_seed).standard_normal(probe.shape)

    def scalar(arrs):
        return float(np.sum(build(*[Tensor(a) for a in arrs]).data * proj))

    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    out.backward(proj)
    numeric = numerical_grad(scalar, arrays, h)
    return max(relative_error(t.grad if t.grad is not None else np.zeros_like(t.data), n)
               for t, n in zip(tensors, numeric))
