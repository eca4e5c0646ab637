"""Vectorized numpy kernels (reference backend and fallback).

Signatures mirror :mod:`strokepaint._kernels_numba`. Every kernel works on
the pixel window ``rows x cols`` = ``[i0, i1) x [j0, j1)`` and leaves the
rest of the canvas at zero.
"""

import numpy as np
from scipy.special import expit


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _texture(an, bn, tex):
    freqs, phases, amps, along = tex[0], tex[1], tex[2], tex[3]
    arg = 2.0 * np.pi * freqs[None, :] * bn[:, None] + phases[None, :]
    norm = amps.sum()
    stripe = (amps * (0.5 + 0.5 * np.sin(arg))).sum(axis=1) / norm
    dstripe = (amps * np.pi * freqs * np.cos(arg)).sum(axis=1) / norm
    garg = 2.0 * np.pi * along[0] * an + along[1] + along[2] * bn
    lengthwise = 0.5 + 0.5 * np.sin(garg)
    dl = 0.5 * np.cos(garg)
    value = 1.0 - 0.15 * stripe - 0.05 * lengthwise
    d_an = -0.05 * dl * 2.0 * np.pi * along[0]
    d_bn = -0.15 * dstripe - 0.05 * dl * along[2]
    return value, d_an, d_bn


def _window(R, box):
    i0, i1, j0, j1 = box
    ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
    return ii.ravel(), jj.ravel()


def _rect_fields(R, geom, textured, kappa, tex, box):
    cx, cy, hh, hw, theta = geom
    ii, jj = _window(R, box)
    dx = jj + 0.5 - cx
    dy = ii + 0.5 - cy
    c, s = np.cos(theta), np.sin(theta)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    e = [expit(kappa * (hw - u)), expit(kappa * (hw + u)), expit(kappa * (hh - v)), expit(kappa * (hh + v))]
    sil = e[0] * e[1] * e[2] * e[3]
    f = dict(ii=ii, jj=jj, u=u, v=v, c=c, s=s, e=e, sil=sil)
    if textured:
        W = 2.0 * hw
        a1 = kappa * (u + hw)
        a2 = kappa * (u - hw)
        Hh = 2.0 * hh
        b1 = kappa * (v + hh)
        b2 = kappa * (v - hh)
        f["t"] = (_softplus(a1) - _softplus(a2)) / (kappa * W)
        f["tb"] = (_softplus(b1) - _softplus(b2)) / (kappa * Hh)
        f["sig12"] = (expit(a1), expit(a2), expit(b1), expit(b2))
        f["tex"], f["tex_da"], f["tex_db"] = _texture(f["t"], f["tb"], tex)
    else:
        f["t"] = np.zeros_like(u)
        f["tex"] = np.ones_like(u)
    return f


def rect_forward(R, geom, c0, c2, textured, kappa, tex, box):
    fg = np.zeros((R, R, 3))
    alpha = np.zeros((R, R))
    if box[1] <= box[0] or box[3] <= box[2]:
        return fg, alpha
    f = _rect_fields(R, geom, textured, kappa, tex, box)
    col = c0[None, :] + f["t"][:, None] * (c2 - c0)[None, :]
    fg[f["ii"], f["jj"]] = col * (f["tex"] * f["sil"])[:, None]
    alpha[f["ii"], f["jj"]] = f["sil"]
    return fg, alpha


def rect_vjp(R, geom, c0, c2, textured, kappa, tex, box, g_fg, g_alpha):
    """Gradient w.r.t. (cx, cy, hh, hw, theta, c0[3], c2[3])."""
    out = np.zeros(11)
    if box[1] <= box[0] or box[3] <= box[2]:
        return out
    cx, cy, hh, hw, theta = geom
    f = _rect_fields(R, geom, textured, kappa, tex, box)
    gf = g_fg[f["ii"], f["jj"]]
    ga = g_alpha[f["ii"], f["jj"]]
    t, tex_v, sil = f["t"], f["tex"], f["sil"]
    col = c0[None, :] + t[:, None] * (c2 - c0)[None, :]
    gfc = (gf * col).sum(axis=1)
    g_sil = ga + tex_v * gfc
    g_col = gf * (tex_v * sil)[:, None]
    out[5:8] = ((1.0 - t)[:, None] * g_col).sum(axis=0)
    out[8:11] = (t[:, None] * g_col).sum(axis=0)
    g_t = g_col @ (c2 - c0)

    k = g_sil * sil * kappa
    f1, f2, f3, f4 = (1.0 - e for e in f["e"])
    g_u = k * (f2 - f1)
    g_v = k * (f4 - f3)
    g_hw = k * (f1 + f2)
    g_hh = k * (f3 + f4)
    if textured:
        u, v = f["u"], f["v"]
        W = 2.0 * hw
        Hh = 2.0 * hh
        s1, s2, s3, s4 = f["sig12"]
        g_tex = sil * gfc
        g_t = g_t + g_tex * f["tex_da"]
        g_tb = g_tex * f["tex_db"]
        g_u = g_u + g_t * (s1 - s2) / W
        g_hw = g_hw + g_t * ((s1 + s2) - 2.0 * t) / W
        g_v = g_v + g_tb * (s3 - s4) / Hh
        g_hh = g_hh + g_tb * ((s3 + s4) - 2.0 * f["tb"]) / Hh
    c, s, u, v = f["c"], f["s"], f["u"], f["v"]
    out[0] = (-c * g_u + s * g_v).sum()
    out[1] = (-s * g_u - c * g_v).sum()
    out[2] = g_hh.sum()
    out[3] = g_hw.sum()
    out[4] = (g_u * v - g_v * u).sum()
    return out


def _curve_fields(R, bx, by, radii, kappa, eps, box):
    ii, jj = _window(R, box)
    dxk = (jj + 0.5)[:, None] - bx[None, :]
    dyk = (ii + 0.5)[:, None] - by[None, :]
    dist = np.sqrt(dxk * dxk + dyk * dyk + eps * eps)
    z = kappa * (radii[None, :] - dist)
    m = z.max(axis=1)
    ez = np.exp(z - m[:, None])
    Z = ez.sum(axis=1)
    w = ez / Z[:, None]
    y = m + np.log(Z)
    return ii, jj, dxk, dyk, dist, w, expit(y)


def curve_forward(R, bx, by, radii, ts, c0, c2, A, kappa, eps, box):
    fg = np.zeros((R, R, 3))
    alpha = np.zeros((R, R))
    if box[1] <= box[0] or box[3] <= box[2]:
        return fg, alpha
    ii, jj, _, _, _, w, sil = _curve_fields(R, bx, by, radii, kappa, eps, box)
    tc = w @ ts
    col = c0[None, :] + tc[:, None] * (c2 - c0)[None, :]
    fg[ii, jj] = col * sil[:, None]
    alpha[ii, jj] = A * sil
    return fg, alpha


def curve_vjp(R, bx, by, radii, ts, c0, c2, A, kappa, eps, box, g_fg, g_alpha):
    """Returns (g_bx[S], g_by[S], g_radii[S], g_c0[3], g_c2[3], g_A)."""
    S = bx.shape[0]
    if box[1] <= box[0] or box[3] <= box[2]:
        return np.zeros(S), np.zeros(S), np.zeros(S), np.zeros(3), np.zeros(3), 0.0
    ii, jj, dxk, dyk, dist, w, sil = _curve_fields(R, bx, by, radii, kappa, eps, box)
    gf = g_fg[ii, jj]
    ga = g_alpha[ii, jj]
    tc = w @ ts
    col = c0[None, :] + tc[:, None] * (c2 - c0)[None, :]
    g_sil = A * ga + (gf * col).sum(axis=1)
    g_A = float((ga * sil).sum())
    g_col = gf * sil[:, None]
    g_c0 = ((1.0 - tc)[:, None] * g_col).sum(axis=0)
    g_c2 = (tc[:, None] * g_col).sum(axis=0)
    g_tc = g_col @ (c2 - c0)
    g_y = g_sil * sil * (1.0 - sil)
    g_z = w * (g_y[:, None] + g_tc[:, None] * (ts[None, :] - tc[:, None]))
    g_r = kappa * g_z.sum(axis=0)
    g_bx = kappa * (g_z * dxk / dist).sum(axis=0)
    g_by = kappa * (g_z * dyk / dist).sum(axis=0)
    return g_bx, g_by, g_r, g_c0, g_c2, g_A


def adam_update(p, g, m, v, b1, b2, step_scale, denom_scale, eps, tmp=None):
    """In-place Adam step over flat arrays; same arithmetic as the numba kernel."""
    tmp = np.empty_like(p) if tmp is None else tmp
    m *= b1
    np.multiply(g, 1.0 - b1, out=tmp)
    m += tmp
    v *= b2
    np.multiply(g, g, out=tmp)
    tmp *= 1.0 - b2
    v += tmp
    np.sqrt(v, out=tmp)
    tmp *= denom_scale
    tmp += eps
    np.divide(m, tmp, out=tmp)
    tmp *= step_scale
    p -= tmp
