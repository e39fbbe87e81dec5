"""Pure-Python/numpy twins of the compiled kernels in ``_ckernels.pyx``."""
from itertools import combinations

import numpy as np


def mwu_tail_counts(ranks2, n1, observed):
    ranks2 = [int(r) for r in ranks2]
    n_le = n_ge = total = 0
    for subset in combinations(ranks2, n1):
        s = sum(subset)
        total += 1
        if s <= observed:
            n_le += 1
        if s >= observed:
            n_ge += 1
    return n_le, n_ge, total


def mlp_forward(weights, biases, x, slope):
    a = np.ascontiguousarray(x, dtype=np.float64)
    acts = [a]
    pres = []
    last = len(weights) - 1
    for l, (W, b) in enumerate(zip(weights, biases)):
        z = acts[l] @ W + b
        pres.append(z)
        acts.append(np.where(z > 0.0, z, slope * z) if l < last else z)
    return acts, pres


def mlp_backward(weights, acts, pres, dout, slope, need_dx=True):
    n_layers = len(weights)
    dWs = [None] * n_layers
    dbs = [None] * n_layers
    dz = np.array(dout, dtype=np.float64)
    for l in range(n_layers - 1, -1, -1):
        dWs[l] = acts[l].T @ dz
        dbs[l] = dz.sum(axis=0)
        if l == 0 and not need_dx:
            return dWs, dbs, None
        da = dz @ weights[l].T
        if l > 0:
            da = np.where(pres[l - 1] > 0.0, da, slope * da)
        dz = da
    return dWs, dbs, dz


def damped_rollout(v0, x0, dv, factor, v_max, dt_s):
    n = len(dv)
    v_out = np.empty(n)
    x_out = np.empty(n)
    v, x = float(v0), float(x0)
    for i in range(n):
        v = factor * v + float(dv[i])
        if v < 0.0:
            v = 0.0
        elif v > v_max:
            v = v_max
        x = x + v * dt_s
        v_out[i] = v
        x_out[i] = x
    return v_out, x_out


def adam_step(theta, grad, m, v, lr, beta1, beta2, eps, t):
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
