"""Numba-compiled batch kernels (NHWC).

Every kernel parallelises over the batch axis only, and cross-sample
reductions run sequentially in ascending sample order, so results do not
depend on the worker count.

Accumulation order is fixed: bias first, then kernel taps in row-major
``(a, b, c)`` order. The numpy fallback follows the same order.
"""
import numpy as np

from ._accel import njit, prange


@njit(parallel=True, cache=True)
def conv2d_forward(x, k, bias):
    n, h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    ho = h - kh + 1
    wo = w - kw + 1
    out = np.empty((n, ho, wo, cout), dtype=x.dtype)
    for s in prange(n):
        for i in range(ho):
            for j in range(wo):
                for o in range(cout):
                    out[s, i, j, o] = bias[o]
                for a in range(kh):
                    for b in range(kw):
                        for c in range(cin):
                            xv = x[s, i + a, j + b, c]
                            for o in range(cout):
                                out[s, i, j, o] += xv * k[a, b, c, o]
    return out


@njit(parallel=True, cache=True)
def _conv2d_backward_per_sample(x, k, d_out, need_dx):
    n, h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    ho = d_out.shape[1]
    wo = d_out.shape[2]
    dx = np.zeros((n, h, w, cin) if need_dx else (n, 1, 1, 1), dtype=x.dtype)
    dk = np.zeros((n, kh, kw, cin, cout), dtype=x.dtype)
    db = np.zeros((n, cout), dtype=x.dtype)
    # [kh, kw, cout, cin] turns the input-gradient update into an axpy over
    # channels, which vectorises; a dot product over cout would not
    kt = np.ascontiguousarray(k.transpose(0, 1, 3, 2))
    for s in prange(n):
        for i in range(ho):
            for j in range(wo):
                for o in range(cout):
                    db[s, o] += d_out[s, i, j, o]
                for a in range(kh):
                    for b in range(kw):
                        for c in range(cin):
                            xv = x[s, i + a, j + b, c]
                            for o in range(cout):
                                dk[s, a, b, c, o] += xv * d_out[s, i, j, o]
                if need_dx:
                    for a in range(kh):
                        for b in range(kw):
                            for o in range(cout):
                                go = d_out[s, i, j, o]
                                for c in range(cin):
                                    dx[s, i + a, j + b, c] += go * kt[a, b, o, c]
    return dx, dk, db


@njit(cache=True)
def _reduce_samples(per_sample):
    total = per_sample[0].copy()
    for s in range(1, per_sample.shape[0]):
        total += per_sample[s]
    return total


def conv2d_backward(x, k, d_out, need_dx=True):
    dx, dk, db = _conv2d_backward_per_sample(x, k, d_out, need_dx)
    return (dx if need_dx else None), _reduce_samples(dk), _reduce_samples(db)


@njit(parallel=True, cache=True)
def maxpool_forward(x, ph, pw):
    n, h, w, c = x.shape
    ho = (h - ph) // ph + 1
    wo = (w - pw) // pw + 1
    out = np.empty((n, ho, wo, c), dtype=x.dtype)
    arg = np.empty((n, ho, wo, c), dtype=np.int64)
    for s in prange(n):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    r0 = i * ph
                    c0 = j * pw
                    best = x[s, r0, c0, ch]
                    best_idx = r0 * w + c0
                    for a in range(ph):
                        for b in range(pw):
                            v = x[s, r0 + a, c0 + b, ch]
                            # strict '>' keeps the first row-major maximum
                            if v > best:
                                best = v
                                best_idx = (r0 + a) * w + (c0 + b)
                    out[s, i, j, ch] = best
                    arg[s, i, j, ch] = best_idx
    return out, arg


@njit(parallel=True, cache=True)
def maxpool_backward(arg, d_out, h, w):
    n, ho, wo, c = d_out.shape
    dx = np.zeros((n, h, w, c), dtype=d_out.dtype)
    for s in prange(n):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    idx = arg[s, i, j, ch]
                    dx[s, idx // w, idx % w, ch] += d_out[s, i, j, ch]
    return dx


@njit(cache=True)
def dense_forward(x, wt, bias):
    n, n_in = x.shape
    n_out = wt.shape[1]
    out = np.empty((n, n_out), dtype=x.dtype)
    for s in range(n):
        for j in range(n_out):
            out[s, j] = bias[j]
        for i in range(n_in):
            xi = x[s, i]
            for j in range(n_out):
                out[s, j] += xi * wt[i, j]
    return out


@njit(cache=True)
def dense_backward(x, wt, d_out):
    n, n_in = x.shape
    n_out = wt.shape[1]
    dx = np.zeros((n, n_in), dtype=x.dtype)
    dw = np.zeros((n_in, n_out), dtype=x.dtype)
    db = np.zeros(n_out, dtype=x.dtype)
    for s in range(n):
        for i in range(n_in):
            xi = x[s, i]
            acc = dx[s, i]
            for j in range(n_out):
                g = d_out[s, j]
                dw[i, j] += xi * g
                acc += wt[i, j] * g
            dx[s, i] = acc
        for j in range(n_out):
            db[j] += d_out[s, j]
    return dx, dw, db
