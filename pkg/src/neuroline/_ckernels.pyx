# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every function here has a twin with the same signature in ``_pykernels``;
``neuroline._backend`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef enum:
    MAX_POOLED = 64


def mwu_tail_counts(const long long[::1] ranks2, Py_ssize_t n1, long long observed):
    """Enumerate every size-``n1`` subset of the pooled doubled midranks.

    Returns ``(n_le, n_ge, total)``: how many subsets have a doubled rank sum
    at most / at least ``observed``, and the number of subsets visited.
    """
    cdef Py_ssize_t n = ranks2.shape[0]
    cdef Py_ssize_t idx[MAX_POOLED]
    cdef Py_ssize_t i, j
    cdef long long s = 0
    cdef long long n_le = 0, n_ge = 0, total = 0

    if n > MAX_POOLED:
        raise ValueError(f"exact enumeration supports at most {MAX_POOLED} pooled values")
    if n1 < 0 or n1 > n:
        raise ValueError("subset size out of range")

    for i in range(n1):
        idx[i] = i
        s += ranks2[i]

    while True:
        total += 1
        if s <= observed:
            n_le += 1
        if s >= observed:
            n_ge += 1
        i = n1 - 1
        while i >= 0 and idx[i] == i + n - n1:
            i -= 1
        if i < 0:
            break
        s -= ranks2[idx[i]]
        idx[i] += 1
        s += ranks2[idx[i]]
        for j in range(i + 1, n1):
            s -= ranks2[idx[j]]
            idx[j] = idx[j - 1] + 1
            s += ranks2[idx[j]]
    return n_le, n_ge, total


cdef enum:
    MAX_WIDTH = 1024


cdef inline void _dense_row(const double* a, const double* W, const double* b, double* out,
                            Py_ssize_t n_in, Py_ssize_t n_out) noexcept nogil:
    # out[c] = b[c] + sum_k a[k] W[k, c], with k ascending; the local row keeps
    # the c loop free of aliasing so it vectorizes without reordering any sum
    cdef double acc[MAX_WIDTH]
    cdef Py_ssize_t k, c
    cdef double ak
    for c in range(n_out):
        acc[c] = b[c]
    for k in range(n_in):
        ak = a[k]
        for c in range(n_out):
            acc[c] = acc[c] + ak * W[k * n_out + c]
    for c in range(n_out):
        out[c] = acc[c]


def _check_width(list weights):
    for W in weights:
        if W.shape[0] > MAX_WIDTH or W.shape[1] > MAX_WIDTH:
            raise ValueError(f"layer widths above {MAX_WIDTH} are not supported")


def mlp_forward(list weights, list biases, x, double slope):
    """Dense stack with leaky-ReLU hidden layers and a linear output.

    Returns ``(acts, pres)``; ``acts[0]`` is the input, ``acts[-1]`` the
    output, ``pres[l]`` the pre-activation of layer ``l``. Each output
    element accumulates bias first, then inputs in ascending order.
    """
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t l, r, i, n_in, n_out, batch
    cdef const double[:, ::1] a
    cdef const double[:, ::1] W
    cdef const double[::1] b
    cdef double[:, ::1] z
    cdef double[:, ::1] h
    cdef const double* ap
    cdef double* zp
    cdef double* hp

    _check_width(weights)
    a_arr = np.ascontiguousarray(x, dtype=np.float64)
    acts = [a_arr]
    pres = []
    for l in range(n_layers):
        a = acts[l]
        W = weights[l]
        b = biases[l]
        batch = a.shape[0]
        n_in = W.shape[0]
        n_out = W.shape[1]
        if a.shape[1] != n_in:
            raise ValueError("input width does not match the first layer")
        z_arr = np.empty((batch, n_out), dtype=np.float64)
        pres.append(z_arr)
        if batch == 0:
            acts.append(z_arr)
            continue
        z = z_arr
        ap = &a[0, 0]
        zp = &z[0, 0]
        for r in range(batch):
            _dense_row(ap + r * n_in, &W[0, 0], &b[0], zp + r * n_out, n_in, n_out)
        if l < n_layers - 1:
            h_arr = np.empty((batch, n_out), dtype=np.float64)
            h = h_arr
            hp = &h[0, 0]
            for i in range(batch * n_out):
                hp[i] = zp[i] if zp[i] > 0.0 else slope * zp[i]
            acts.append(h_arr)
        else:
            acts.append(z_arr)
    return acts, pres


def mlp_backward(list weights, list acts, list pres, dout, double slope, bint need_dx=True):
    """Backpropagate ``dout`` (gradient w.r.t. the output) through the stack.

    Batch sums run in ascending batch index. Returns ``(dWs, dbs, dx)``;
    ``dx`` is None when ``need_dx`` is false.
    """
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t l, r, c, k, n_in, n_out, batch
    cdef double ark, g
    cdef const double[:, ::1] a
    cdef const double[:, ::1] WT
    cdef const double[:, ::1] zprev
    cdef double[:, ::1] dz
    cdef double[:, ::1] da
    cdef double[:, ::1] dW
    cdef double[::1] db
    cdef const double* ap
    cdef const double* dzp
    cdef const double* wtp
    cdef const double* zpp = NULL
    cdef double* dWp
    cdef double* dbp
    cdef double* dap
    cdef double acc[MAX_WIDTH]

    _check_width(weights)
    dz_arr = np.array(dout, dtype=np.float64, order="C", copy=True)
    dWs = [None] * n_layers
    dbs = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        W_l = weights[l]
        n_in = W_l.shape[0]
        n_out = W_l.shape[1]
        a = acts[l]
        batch = a.shape[0]
        dW_arr = np.zeros((n_in, n_out), dtype=np.float64)
        db_arr = np.zeros(n_out, dtype=np.float64)
        dWs[l] = dW_arr
        dbs[l] = db_arr
        da_arr = np.zeros((batch, n_in), dtype=np.float64)
        if batch == 0:
            dz_arr = da_arr
            continue
        dz = dz_arr
        dW = dW_arr
        db = db_arr
        ap = &a[0, 0]
        dzp = &dz[0, 0]
        dWp = &dW[0, 0]
        dbp = &db[0]
        for r in range(batch):
            for c in range(n_out):
                dbp[c] = dbp[c] + dzp[r * n_out + c]
            for k in range(n_in):
                ark = ap[r * n_in + k]
                for c in range(n_out):
                    dWp[k * n_out + c] = dWp[k * n_out + c] + ark * dzp[r * n_out + c]
        if l == 0 and not need_dx:
            dz_arr = None
            break

        # da[r, k] = sum_c dz[r, c] W[k, c], c ascending, through a transposed copy
        WT = np.ascontiguousarray(W_l.T)
        wtp = &WT[0, 0]
        da = da_arr
        dap = &da[0, 0]
        if l > 0:
            zprev = pres[l - 1]
            zpp = &zprev[0, 0]
        for r in range(batch):
            for k in range(n_in):
                acc[k] = 0.0
            for c in range(n_out):
                g = dzp[r * n_out + c]
                for k in range(n_in):
                    acc[k] = acc[k] + g * wtp[c * n_in + k]
            if l > 0:
                for k in range(n_in):
                    dap[r * n_in + k] = acc[k] if zpp[r * n_in + k] > 0.0 else slope * acc[k]
            else:
                for k in range(n_in):
                    dap[r * n_in + k] = acc[k]
        dz_arr = da_arr
    return dWs, dbs, dz_arr


def adam_step(double[::1] theta, const double[::1] grad, double[::1] m, double[::1] v,
              double lr, double beta1, double beta2, double eps, long t):
    """In-place Adam update of a flat parameter vector (step count ``t`` >= 1)."""
    cdef Py_ssize_t i, n = theta.shape[0]
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef double g
    for i in range(n):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        theta[i] = theta[i] - lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def damped_rollout(double v0, double x0, const double[::1] dv, double factor,
                   double v_max, double dt_s):
    """Explicit-Euler damped velocity integration with clamping to [0, v_max].

    ``factor`` is ``1 - gamma * dt`` precomputed by the caller so the result
    matches the scalar Python step exactly.
    """
    cdef Py_ssize_t n = dv.shape[0]
    cdef Py_ssize_t i
    cdef double v = v0, x = x0
    v_arr = np.empty(n, dtype=np.float64)
    x_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] vo = v_arr
    cdef double[::1] xo = x_arr
    for i in range(n):
        v = factor * v + dv[i]
        if v < 0.0:
            v = 0.0
        elif v > v_max:
            v = v_max
        x = x + v * dt_s
        vo[i] = v
        xo[i] = x
    return v_arr, x_arr
