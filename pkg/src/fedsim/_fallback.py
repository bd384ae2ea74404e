"""Pure-numpy implementation of the dense-network kernels.

Selected by :mod:`fedsim._backend` when the compiled ``_kernels`` extension is
missing or ``FEDSIM_PURE_PYTHON`` is set. Parameter layout, per layer: weight
matrix ``(n_in, n_out)`` row-major, then the ``n_out`` biases.
"""

import numpy as np

NAME = "python"

PROB_FLOOR = 1e-12


def _layers(values, sizes):
    off = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = values[off:off + n_in * n_out].reshape(n_in, n_out)
        off += n_in * n_out
        b = values[off:off + n_out]
        off += n_out
        yield w, b


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def mlp_forward(values, sizes, x):
    h = x
    layers = list(_layers(values, sizes))
    for i, (w, b) in enumerate(layers):
        z = h @ w
        z += b
        if i < len(layers) - 1:
            np.maximum(z, 0.0, out=z)
        h = z
    return _softmax(h)


def mlp_loss_grad(values, sizes, x, y):
    layers = list(_layers(values, sizes))
    n = x.shape[0]
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w
        z += b
        if i < len(layers) - 1:
            np.maximum(z, 0.0, out=z)
        acts.append(z)
        h = z
    p = _softmax(acts.pop())
    rows = np.arange(n)
    loss = -np.log(np.maximum(p[rows, y], PROB_FLOOR)).sum() / n

    dz = p
    dz[rows, y] -= 1.0
    dz /= n
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        h_in = acts[i]
        grads.append((h_in.T @ dz).ravel())
        grads.append(dz.sum(axis=0))
        if i > 0:
            dh = dz @ w.T
            dh *= h_in > 0.0
            dz = dh
    out = np.empty_like(values)
    off = len(values)
    for g_b, g_w in zip(grads[1::2], grads[0::2]):
        off -= g_b.size
        out[off:off + g_b.size] = g_b
        off -= g_w.size
        out[off:off + g_w.size] = g_w
    return float(loss), out


def weighted_average(stack, weights):
    """Row-weighted mean of ``stack`` (k, p), accumulated in row order."""
    acc = np.zeros(stack.shape[1])
    total = 0.0
    for k in range(stack.shape[0]):
        acc += weights[k] * stack[k]
        total += weights[k]
    acc /= total
    return acc
