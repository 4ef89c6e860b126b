"""Pure-numpy batch kernels (NHWC), used when numba is unavailable or disabled.

Forward convolution and pooling reproduce the compiled kernels bit for bit.
Backward convolution and dense layers lower onto matrix products, so they
agree with the compiled path to rounding only.
"""
import numpy as np


def conv2d_forward(x, k, bias):
    n, h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    ho = h - kh + 1
    wo = w - kw + 1
    out = np.empty((n, ho, wo, cout), dtype=x.dtype)
    out[...] = bias
    for a in range(kh):
        for b in range(kw):
            for c in range(cin):
                out += x[:, a:a + ho, b:b + wo, c, None] * k[a, b, c]
    return out


def conv2d_backward(x, k, d_out, need_dx=True):
    n, h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    ho, wo = d_out.shape[1:3]
    dk = np.zeros_like(k)
    db = np.zeros(cout, dtype=x.dtype)
    for s in range(n):
        dk_s = np.empty_like(k)
        for a in range(kh):
            for b in range(kw):
                patch = x[s, a:a + ho, b:b + wo, :].reshape(-1, cin)
                dk_s[a, b] = patch.T @ d_out[s].reshape(-1, cout)
        dk += dk_s
        db += d_out[s].sum(axis=(0, 1))
    dx = None
    if need_dx:
        dx = np.zeros_like(x)
        for a in range(kh):
            for b in range(kw):
                dx[:, a:a + ho, b:b + wo, :] += d_out @ k[a, b].T
    return dx, dk, db


def _windows(x, ph, pw):
    n, h, w, c = x.shape
    ho = (h - ph) // ph + 1
    wo = (w - pw) // pw + 1
    crop = x[:, :ho * ph, :wo * pw, :]
    win = crop.reshape(n, ho, ph, wo, pw, c).transpose(0, 1, 3, 5, 2, 4)
    return win.reshape(n, ho, wo, c, ph * pw), ho, wo


def maxpool_forward(x, ph, pw):
    n, h, w, c = x.shape
    win, ho, wo = _windows(x, ph, pw)
    # np.argmax returns the first occurrence, i.e. the smallest row-major index
    k = win.argmax(axis=-1)
    out = np.take_along_axis(win, k[..., None], axis=-1)[..., 0]
    rows = np.arange(ho)[None, :, None, None] * ph + k // pw
    cols = np.arange(wo)[None, None, :, None] * pw + k % pw
    arg = (rows * w + cols).astype(np.int64)
    return np.ascontiguousarray(out), arg


def maxpool_backward(arg, d_out, h, w):
    n, ho, wo, c = d_out.shape
    dx = np.zeros((n, h * w, c), dtype=d_out.dtype)
    s_idx = np.arange(n)[:, None, None, None]
    c_idx = np.arange(c)[None, None, None, :]
    np.add.at(dx, (s_idx, arg, c_idx), d_out)
    return dx.reshape(n, h, w, c)


def dense_forward(x, wt, bias):
    return x @ wt + bias


def dense_backward(x, wt, d_out):
    dx = d_out @ wt.T
    dw = np.zeros_like(wt)
    db = np.zeros(wt.shape[1], dtype=x.dtype)
    for s in range(x.shape[0]):
        dw += np.outer(x[s], d_out[s])
        db += d_out[s]
    return dx, dw, db
