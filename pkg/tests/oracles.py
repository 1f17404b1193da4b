"""Independent reference implementations used by the tests.

Everything here is written with plain loops or numpy.fft so that it shares no
code with the library.
"""
import math

import numpy as np


def conv_loop(x, k, stride=1, pad=0):
    H, W, cin = x.shape
    kk, _, _, cout = k.shape
    xp = np.zeros((H + 2 * pad, W + 2 * pad, cin))
    xp[pad : pad + H, pad : pad + W] = x
    ho = (H + 2 * pad - kk) // stride + 1
    wo = (W + 2 * pad - kk) // stride + 1
    out = np.zeros((ho, wo, cout))
    for i in range(ho):
        for j in range(wo):
            win = xp[i * stride : i * stride + kk, j * stride : j * stride + kk]
            for o in range(cout):
                out[i, j, o] = sum(
                    win[a, b, c] * k[a, b, c, o] for a in range(kk) for b in range(kk) for c in range(cin)
                )
    return out


def polar(z):
    amp = np.abs(z)
    pha = np.arctan2(z.imag, z.real)
    pha = np.where(pha <= -math.pi, math.pi, pha)
    return amp, np.where(amp == 0, 0.0, pha)


def channel_attention(base, guide):
    out = np.empty_like(base)
    H, W, C = base.shape
    for i in range(H):
        for j in range(W):
            b, g = base[i, j], guide[i, j]
            nb, ng = math.sqrt(sum(v * v for v in b)), math.sqrt(sum(v * v for v in g))
            s = [(b[c] / nb if nb > 1e-12 else 0.0) * (g[c] / ng if ng > 1e-12 else 0.0) for c in range(C)]
            m = max(s)
            e = [math.exp(v - m) for v in s]
            tot = sum(e)
            out[i, j] = [(e[c] / tot) * b[c] + b[c] for c in range(C)]
    return out


def highpass(n, m, sigma):
    out = np.zeros((n, m))
    for u in range(n):
        for v in range(m):
            du, dv = min(u, n - u), min(v, m - v)
            out[u, v] = 1.0 - math.exp(-(du * du + dv * dv) / (2 * sigma * sigma))
    return out


def dapa_reference(rgb, evt, w, sigma_hp, use_ffc=True):
    """Staged fusion reference; returns a dict of every intermediate."""
    leaky = lambda a: np.where(a > 0, a, 0.01 * a)
    S0, S1 = rgb.shape[:2]
    st = {}
    st["F_rgb"] = np.fft.fft2(rgb, axes=(0, 1), norm="ortho")
    st["F_evt"] = np.fft.fft2(evt, axes=(0, 1), norm="ortho") * highpass(S0, S1, sigma_hp)[:, :, None]
    a_r, p_r = polar(st["F_rgb"])
    a_e, p_e = polar(st["F_evt"])
    st["A_rgb"] = leaky(conv_loop(a_r, w.amp_rgb, pad=1))
    st["P_rgb"] = leaky(conv_loop(p_r, w.pha_rgb, pad=1))
    st["A_evt"] = leaky(conv_loop(a_e, w.amp_evt, pad=1))
    st["P_evt"] = leaky(conv_loop(p_e, w.pha_evt, pad=1))
    st["A"] = channel_attention(st["A_rgb"], st["A_evt"])
    st["P"] = channel_attention(st["P_rgb"], st["P_evt"])
    z = st["A"] * np.exp(1j * st["P"])
    if use_ffc:
        blk = lambda part: conv_loop(np.maximum(conv_loop(part, w.ffc1), 0), w.ffc2)
        z = blk(z.real) + 1j * blk(z.imag)
    st["Z"] = z
    st["out"] = np.fft.ifft2(z, axes=(0, 1), norm="ortho").real
    return st


def attention_loop(Q, K, V):
    n, d = Q.shape
    out = np.zeros((n, V.shape[1]))
    for i in range(n):
        s = [sum(Q[i, c] * K[j, c] for c in range(d)) / math.sqrt(d) for j in range(n)]
        m = max(s)
        e = [math.exp(v - m) for v in s]
        tot = sum(e)
        for j in range(n):
            out[i] += e[j] / tot * V[j]
    return out


def giou_ref(a, b):
    """GIoU of two (x0, y0, x1, y1) boxes."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    area = lambda r: (r[2] - r[0]) * (r[3] - r[1])
    union = area(a) + area(b) - inter
    hull = (max(a[2], b[2]) - min(a[0], b[0])) * (max(a[3], b[3]) - min(a[1], b[1]))
    return inter / union - (hull - union) / hull
