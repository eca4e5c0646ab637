"""numba kernels for soft rasterization and its vector-Jacobian product.

Parallel over pixel rows. Gradient reductions go through per-row partial
buffers that are summed serially afterwards, so results are bit-identical
for any thread count.
"""

import math

import numpy as np
from numba import njit, prange

_OPTS = dict(cache=True, fastmath=False, nogil=True)


@njit(inline="always", **_OPTS)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(inline="always", **_OPTS)
def _softplus(x):
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


@njit(**_OPTS)
def _texture(an, bn, freqs, phases, amps, along):
    norm = 0.0
    stripe = 0.0
    dstripe = 0.0
    for k in range(freqs.shape[0]):
        arg = 2.0 * math.pi * freqs[k] * bn + phases[k]
        norm += amps[k]
        stripe += amps[k] * (0.5 + 0.5 * math.sin(arg))
        dstripe += amps[k] * math.pi * freqs[k] * math.cos(arg)
    stripe /= norm
    dstripe /= norm
    garg = 2.0 * math.pi * along[0] * an + along[1] + along[2] * bn
    lengthwise = 0.5 + 0.5 * math.sin(garg)
    dl = 0.5 * math.cos(garg)
    value = 1.0 - 0.15 * stripe - 0.05 * lengthwise
    d_an = -0.05 * dl * 2.0 * math.pi * along[0]
    d_bn = -0.15 * dstripe - 0.05 * dl * along[2]
    return value, d_an, d_bn


@njit(parallel=True, **_OPTS)
def rect_forward(R, geom, c0, c2, textured, kappa, freqs, phases, amps, along, box):
    cx, cy, hh, hw, theta = geom[0], geom[1], geom[2], geom[3], geom[4]
    i0, i1, j0, j1 = box[0], box[1], box[2], box[3]
    fg = np.zeros((R, R, 3))
    alpha = np.zeros((R, R))
    c = math.cos(theta)
    s = math.sin(theta)
    for i in prange(i0, i1):
        dy = i + 0.5 - cy
        for j in range(j0, j1):
            dx = j + 0.5 - cx
            u = c * dx + s * dy
            v = -s * dx + c * dy
            sil = (_sigmoid(kappa * (hw - u)) * _sigmoid(kappa * (hw + u))
                   * _sigmoid(kappa * (hh - v)) * _sigmoid(kappa * (hh + v)))
            t = 0.0
            tex = 1.0
            if textured:
                t = (_softplus(kappa * (u + hw)) - _softplus(kappa * (u - hw))) / (kappa * 2.0 * hw)
                tb = (_softplus(kappa * (v + hh)) - _softplus(kappa * (v - hh))) / (kappa * 2.0 * hh)
                tex, _, _ = _texture(t, tb, freqs, phases, amps, along)
            for ch in range(3):
                fg[i, j, ch] = (c0[ch] + t * (c2[ch] - c0[ch])) * tex * sil
            alpha[i, j] = sil
    return fg, alpha


@njit(parallel=True, **_OPTS)
def rect_vjp(R, geom, c0, c2, textured, kappa, freqs, phases, amps, along, box, g_fg, g_alpha):
    cx, cy, hh, hw, theta = geom[0], geom[1], geom[2], geom[3], geom[4]
    i0, i1, j0, j1 = box[0], box[1], box[2], box[3]
    nrows = max(i1 - i0, 0)
    part = np.zeros((nrows, 11))
    c = math.cos(theta)
    s = math.sin(theta)
    W = 2.0 * hw
    Hh = 2.0 * hh
    for r in prange(nrows):
        i = i0 + r
        dy = i + 0.5 - cy
        acc = np.zeros(11)
        for j in range(j0, j1):
            dx = j + 0.5 - cx
            u = c * dx + s * dy
            v = -s * dx + c * dy
            e1 = _sigmoid(kappa * (hw - u))
            e2 = _sigmoid(kappa * (hw + u))
            e3 = _sigmoid(kappa * (hh - v))
            e4 = _sigmoid(kappa * (hh + v))
            sil = e1 * e2 * e3 * e4
            t = 0.0
            tex = 1.0
            tda = 0.0
            tdb = 0.0
            tb = 0.0
            s1 = 0.0
            s2 = 0.0
            s3 = 0.0
            s4 = 0.0
            if textured:
                a1 = kappa * (u + hw)
                a2 = kappa * (u - hw)
                b1 = kappa * (v + hh)
                b2 = kappa * (v - hh)
                t = (_softplus(a1) - _softplus(a2)) / (kappa * W)
                tb = (_softplus(b1) - _softplus(b2)) / (kappa * Hh)
                s1 = _sigmoid(a1)
                s2 = _sigmoid(a2)
                s3 = _sigmoid(b1)
                s4 = _sigmoid(b2)
                tex, tda, tdb = _texture(t, tb, freqs, phases, amps, along)
            ga = g_alpha[i, j]
            gfc = 0.0
            g_t = 0.0
            for ch in range(3):
                col = c0[ch] + t * (c2[ch] - c0[ch])
                gf = g_fg[i, j, ch]
                gfc += gf * col
                g_col = gf * tex * sil
                acc[5 + ch] += (1.0 - t) * g_col
                acc[8 + ch] += t * g_col
                g_t += g_col * (c2[ch] - c0[ch])
            g_sil = ga + tex * gfc
            k = g_sil * sil * kappa
            f1 = 1.0 - e1
            f2 = 1.0 - e2
            f3 = 1.0 - e3
            f4 = 1.0 - e4
            g_u = k * (f2 - f1)
            g_v = k * (f4 - f3)
            g_hw = k * (f1 + f2)
            g_hh = k * (f3 + f4)
            if textured:
                g_tex = sil * gfc
                g_t += g_tex * tda
                g_tb = g_tex * tdb
                g_u += g_t * (s1 - s2) / W
                g_hw += g_t * ((s1 + s2) - 2.0 * t) / W
                g_v += g_tb * (s3 - s4) / Hh
                g_hh += g_tb * ((s3 + s4) - 2.0 * tb) / Hh
            acc[0] += -c * g_u + s * g_v
            acc[1] += -s * g_u - c * g_v
            acc[2] += g_hh
            acc[3] += g_hw
            acc[4] += g_u * v - g_v * u
        for q in range(11):
            part[r, q] = acc[q]
    out = np.zeros(11)
    for r in range(nrows):
        for q in range(11):
            out[q] += part[r, q]
    return out


@njit(parallel=True, **_OPTS)
def curve_forward(R, bx, by, radii, ts, c0, c2, A, kappa, eps, box):
    i0, i1, j0, j1 = box[0], box[1], box[2], box[3]
    S = bx.shape[0]
    fg = np.zeros((R, R, 3))
    alpha = np.zeros((R, R))
    for i in prange(i0, i1):
        py = i + 0.5
        z = np.empty(S)
        for j in range(j0, j1):
            px = j + 0.5
            m = -np.inf
            for k in range(S):
                ddx = px - bx[k]
                ddy = py - by[k]
                zk = kappa * (radii[k] - math.sqrt(ddx * ddx + ddy * ddy + eps * eps))
                z[k] = zk
                if zk > m:
                    m = zk
            Z = 0.0
            tw = 0.0
            for k in range(S):
                ek = math.exp(z[k] - m)
                Z += ek
                tw += ek * ts[k]
            tc = tw / Z
            sil = _sigmoid(m + math.log(Z))
            for ch in range(3):
                fg[i, j, ch] = (c0[ch] + tc * (c2[ch] - c0[ch])) * sil
            alpha[i, j] = A * sil
    return fg, alpha


@njit(parallel=True, **_OPTS)
def curve_vjp(R, bx, by, radii, ts, c0, c2, A, kappa, eps, box, g_fg, g_alpha):
    i0, i1, j0, j1 = box[0], box[1], box[2], box[3]
    S = bx.shape[0]
    nrows = max(i1 - i0, 0)
    part_s = np.zeros((nrows, 3, S))
    part_c = np.zeros((nrows, 7))
    for r in prange(nrows):
        i = i0 + r
        py = i + 0.5
        z = np.empty(S)
        dist = np.empty(S)
        for j in range(j0, j1):
            px = j + 0.5
            m = -np.inf
            for k in range(S):
                ddx = px - bx[k]
                ddy = py - by[k]
                dk = math.sqrt(ddx * ddx + ddy * ddy + eps * eps)
                dist[k] = dk
                zk = kappa * (radii[k] - dk)
                z[k] = zk
                if zk > m:
                    m = zk
            Z = 0.0
            tw = 0.0
            for k in range(S):
                ek = math.exp(z[k] - m)
                z[k] = ek
                Z += ek
                tw += ek * ts[k]
            tc = tw / Z
            sil = _sigmoid(m + math.log(Z))
            ga = g_alpha[i, j]
            gfc = 0.0
            g_tc = 0.0
            for ch in range(3):
                col = c0[ch] + tc * (c2[ch] - c0[ch])
                gf = g_fg[i, j, ch]
                gfc += gf * col
                g_col = gf * sil
                part_c[r, ch] += (1.0 - tc) * g_col
                part_c[r, 3 + ch] += tc * g_col
                g_tc += g_col * (c2[ch] - c0[ch])
            part_c[r, 6] += ga * sil
            g_y = (A * ga + gfc) * sil * (1.0 - sil)
            for k in range(S):
                wk = z[k] / Z
                gz = kappa * wk * (g_y + g_tc * (ts[k] - tc))
                part_s[r, 2, k] += gz
                part_s[r, 0, k] += gz * (px - bx[k]) / dist[k]
                part_s[r, 1, k] += gz * (py - by[k]) / dist[k]
    gs = np.zeros((3, S))
    gc = np.zeros(7)
    for r in range(nrows):
        for q in range(3):
            for k in range(S):
                gs[q, k] += part_s[r, q, k]
        for q in range(7):
            gc[q] += part_c[r, q]
    return gs[0], gs[1], gs[2], gc[0:3].copy(), gc[3:6].copy(), gc[6]


@njit(parallel=True, **_OPTS)
def adam_update(p, g, m, v, b1, b2, step_scale, denom_scale, eps):
    """One fused Adam step over flat arrays, in place. Elementwise, so the
    result does not depend on the thread count."""
    for k in prange(p.shape[0]):
        gk = g[k]
        mk = b1 * m[k] + (1.0 - b1) * gk
        vk = b2 * v[k] + (gk * gk) * (1.0 - b2)
        m[k] = mk
        v[k] = vk
        p[k] -= mk / (math.sqrt(vk) * denom_scale + eps) * step_scale
