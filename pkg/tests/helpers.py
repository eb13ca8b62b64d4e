"""Independent reference implementations and shared fixtures for the test suite.

Everything here is written against numpy/python scalars so it shares no
code path with the torch implementations under test.
"""
from __future__ import annotations

import math

import numpy as np
import torch

from dgn.inter_sim import LshConfig, rotation_matrix
from dgn.intra_sim import WindowSet
from dgn.model import DgnConfig


def windowset(arr, win_size):
    """Wrap a ``(num_windows, win_area, C)`` array as an unpadded WindowSet."""
    t = torch.as_tensor(arr)
    n = t.shape[0]
    return WindowSet(t, win_size, 0, 0, win_size, win_size * n)


# ---------------------------------------------------------------- attention


def ssc_oracle(q, v, bias=None):
    """Per window ``(Q V^T / sqrt(d) + B) V`` with explicit index sums."""
    nw, area, d = q.shape
    out = np.zeros_like(v)
    b = np.zeros((area, area)) if bias is None else bias
    for w in range(nw):
        corr = np.einsum("pk,qk->pq", q[w], v[w]) / math.sqrt(d) + b
        out[w] = np.einsum("pq,qc->pc", corr, v[w])
    return out


def csc_oracle(q, v):
    """Per window ``V (Q^T V / sqrt(area))``."""
    nw, area, d = q.shape
    out = np.zeros_like(v)
    for w in range(nw):
        m = np.einsum("pi,pj->ij", q[w], v[w]) / math.sqrt(area)
        out[w] = np.einsum("pi,ij->pj", v[w], m)
    return out


def conv1x1_numpy(x, conv):
    """Apply a 1x1 conv's parameters to a ``(N, C)`` position matrix."""
    w = conv.weight.detach().double().numpy()[:, :, 0, 0]
    b = conv.bias.detach().double().numpy()
    return x @ w.T + b


def _softmax_rows(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def dense_attention_oracle(x, conv):
    """``x + softmax(E E^T / sqrt(C)) E`` for a single ``(C, H, W)`` map."""
    c = x.shape[0]
    seq = x.reshape(c, -1).T
    e = conv1x1_numpy(seq, conv)
    a = _softmax_rows(e @ e.T / math.sqrt(c))
    return (seq + a @ e).T.reshape(x.shape)


def cross_polytope(e, rotation):
    """Bucket ids and winning scores, computed one position at a time."""
    buckets, scores = [], []
    for row in e:
        n = math.sqrt(sum(float(t) * float(t) for t in row))
        if n == 0:
            buckets.append(0)
            scores.append(0.0)
            continue
        r = (row / n) @ rotation
        cand = list(r) + list(-r)
        best = 0
        for k in range(1, len(cand)):
            if cand[k] > cand[best]:
                best = k
        buckets.append(best)
        scores.append(float(cand[best]))
    return buckets, scores


def sparse_attention_oracle(x, conv, cfg: LshConfig):
    """Slow path: hash, sort, chunk and attend with python loops (no lookback)."""
    c = x.shape[0]
    seq = x.reshape(c, -1).T
    e = conv1x1_numpy(seq, conv)
    n = e.shape[0]
    acc = np.zeros_like(e)
    for rnd in range(cfg.num_rounds):
        buckets, scores = cross_polytope(e, rotation_matrix(cfg, rnd, c))
        order = sorted(range(n), key=lambda i: (buckets[i], scores[i], i))
        out = np.zeros_like(e)
        for start in range(0, n, cfg.chunk_size):
            members = order[start : start + cfg.chunk_size]
            block = e[members]
            a = _softmax_rows(block @ block.T / math.sqrt(c))
            out[members] = a @ block
        acc += out
    return (seq + acc / cfg.num_rounds).T.reshape(x.shape)


# ------------------------------------------------------------------ metrics


def lower_median(values):
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def aid_oracle(pred, target, eps=1e-8):
    total = 0.0
    for b in range(pred.shape[0]):
        p = [float(t) for t in pred[b, 0].ravel()]
        t = [float(u) for u in target[b, 0].ravel()]
        pm, tm = lower_median(p), lower_median(t)
        ps = sum(abs(u - pm) for u in p) / len(p)
        ts = sum(abs(u - tm) for u in t) / len(t)
        if ps <= eps or ts <= eps:
            continue
        total += sum(abs((a - pm) / ps - (b_ - tm) / ts) for a, b_ in zip(p, t)) / len(p)
    return total / pred.shape[0]


def ssim_oracle(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Sliding-window SSIM over a pair of ``(3, H, W)`` images, one pixel at a time."""
    wts = (0.299, 0.587, 0.114)
    ga = sum(wts[i] * a[i] for i in range(3))
    gb = sum(wts[i] * b[i] for i in range(3))
    ax = [math.exp(-((i - (size - 1) / 2) ** 2) / (2 * sigma**2)) for i in range(size)]
    s = sum(ax)
    g = [[ax[i] * ax[j] / (s * s) for j in range(size)] for i in range(size)]
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    h, w = ga.shape
    vals = []
    for y in range(h - size + 1):
        for x in range(w - size + 1):
            ma = mb = saa = sbb = sab = 0.0
            for i in range(size):
                for j in range(size):
                    wt = g[i][j]
                    pa, pb = float(ga[y + i, x + j]), float(gb[y + i, x + j])
                    ma += wt * pa
                    mb += wt * pb
                    saa += wt * pa * pa
                    sbb += wt * pb * pb
                    sab += wt * pa * pb
            va, vb, cov = saa - ma * ma, sbb - mb * mb, sab - ma * mb
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return sum(vals) / len(vals)


# ---------------------------------------------------------- gradient checks


def _scalarize(fn, weights):
    outs = fn()
    outs = outs if isinstance(outs, (tuple, list)) else (outs,)
    outs = [o for o in outs if o is not None]
    if not weights:
        gen = torch.Generator().manual_seed(1234)
        weights.extend(torch.randn(o.shape, generator=gen, dtype=torch.float64) for o in outs)
    return sum((o * w).sum() for o, w in zip(outs, weights))


def fd_max_relative_error(fn, full=(), directional=(), h=1e-5, num_dirs=2, seed=0):
    """Worst relative error between autograd and central finite differences.

    ``full`` tensors are checked coordinate by coordinate (norm-wise relative
    error); ``directional`` tensors along ``num_dirs`` random unit directions.
    Outputs are reduced with fixed random weights.
    """
    weights = []
    tensors = list(full) + list(directional)
    loss = _scalarize(fn, weights)
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    grads = [torch.zeros_like(t) if g is None else g for g, t in zip(grads, tensors)]

    def value():
        with torch.no_grad():
            return float(_scalarize(fn, weights))

    worst = 0.0
    for t, g in zip(full, grads[: len(full)]):
        num = torch.zeros_like(t)
        flat, nflat = t.data.view(-1), num.view(-1)
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + h
            fp = value()
            flat[i] = orig - h
            fm = value()
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * h)
        denom = max(float(g.norm()), float(num.norm()))
        err = float((g - num).norm())
        worst = max(worst, 0.0 if err < 1e-10 else err / denom)

    gen = torch.Generator().manual_seed(seed)
    for t, g in zip(directional, grads[len(full) :]):
        for _ in range(num_dirs):
            u = torch.randn(t.shape, generator=gen, dtype=torch.float64)
            u /= u.norm()
            orig = t.data.clone()
            t.data.copy_(orig + h * u)
            fp = value()
            t.data.copy_(orig - h * u)
            fm = value()
            t.data.copy_(orig)
            num = (fp - fm) / (2 * h)
            ana = float((g * u).sum())
            err = abs(ana - num)
            worst = max(worst, 0.0 if err < 1e-10 else err / max(abs(ana), abs(num)))
    return worst


# ------------------------------------------------------------------- models


def tiny_config(**overrides):
    base = dict(
        num_groups=2,
        blocks_per_group=2,
        channels=16,
        base_window=4,
        ratios=(0.5, 1),
        lsh=LshConfig(num_rounds=2, num_buckets=4, chunk_size=16),
    )
    base.update(overrides)
    return DgnConfig(**base)


def overfit_config():
    return DgnConfig(
        num_groups=2,
        blocks_per_group=2,
        channels=16,
        ratios=(0.5, 1),
        lsh=LshConfig(num_rounds=2, chunk_size=64),
    )


def randomize_group_convs(model, seed=0, std=0.05):
    """Give the zero-initialized residual-group convs random weights."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for g in model.groups:
            for conv in (g.conv, getattr(g, "conv_d", None)):
                if conv is None:
                    continue
                for p in conv.parameters():
                    p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * std)


# ------------------------------------------------------------------- images


def natural_crop(seed=0, size=64, alpha=1.0):
    """Synthetic RGB crop with 1/f^alpha spectrum and a darkened disk, values in [0.1, 0.9]."""
    rng = np.random.Generator(np.random.PCG64(seed))
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    f = np.sqrt(fx**2 + fy**2)
    f[0, 0] = 1
    img = np.empty((3, size, size))
    base = np.real(np.fft.ifft2(np.exp(2j * np.pi * rng.uniform(size=(size, size))) / f**alpha))
    for c in range(3):
        tint = np.real(np.fft.ifft2(np.exp(2j * np.pi * rng.uniform(size=(size, size))) / f**alpha))
        ch = base + 0.3 * tint
        img[c] = (ch - ch.min()) / (ch.max() - ch.min())
    yy, xx = np.mgrid[0:size, 0:size]
    img[:, (xx - 20) ** 2 + (yy - 36) ** 2 < 150] *= 0.6
    return torch.tensor(np.clip(0.1 + 0.8 * img, 0, 1), dtype=torch.float32)


def adam_scalar_reference(params, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam on a list of python floats."""
    p = list(params)
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    for t in range(1, steps + 1):
        g = grad_fn(p)
        for i in range(len(p)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
            mhat = m[i] / (1 - b1**t)
            vhat = v[i] / (1 - b2**t)
            p[i] -= lr * mhat / (math.sqrt(vhat) + eps)
    return p
