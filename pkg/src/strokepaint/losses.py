"""Canvas-vs-reference losses: pixel l1, entropic optimal transport, and
their weighted sum. Every loss returns its gradient w.r.t. the canvas.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp


@dataclass(frozen=True)
class SinkhornConfig:
    ot_resolution: int = 48
    epsilon: float = 0.01
    n_iter: int = 5
    marginal_floor: float = 1e-6

    def __post_init__(self):
        if self.ot_resolution < 4:
            raise ValueError("ot_resolution must be >= 4")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")
        if not self.marginal_floor > 0:
            raise ValueError("marginal_floor must be positive")


@dataclass(frozen=True)
class LossWeights:
    beta_l1: float = 1.0
    beta_ot: float = 0.1

    def __post_init__(self):
        if self.beta_l1 < 0 or self.beta_ot < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class LossReport:
    l1: float
    ot: float
    total: float


def _check_shapes(h, ref):
    if h.shape != ref.shape:
        raise ValueError(f"shape mismatch: {h.shape} vs {ref.shape}")


def l1_loss(h: np.ndarray, ref: np.ndarray) -> tuple[float, np.ndarray]:
    _check_shapes(h, ref)
    diff = h - ref
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


# --- Sinkhorn on explicit cost matrices ---------------------------------------


def _check_marginals(p, q, D):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if p.sum() <= 0 or q.sum() <= 0:
        raise ValueError("marginals must have positive total mass")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("marginals must be nonnegative")
    if D.shape != (p.size, q.size):
        raise ValueError(f"cost matrix shape {D.shape} does not match marginals ({p.size}, {q.size})")
    return p, q, D


def _log_potentials(p, q, D, eps, n_iter):
    with np.errstate(divide="ignore"):
        log_p, log_q = np.log(p), np.log(q)
    f = np.zeros(p.size)
    fs, gs = [f], []
    for _ in range(n_iter):
        g = eps * (log_q - logsumexp((f[:, None] - D) / eps, axis=0))
        f = eps * (log_p - logsumexp((g[None, :] - D) / eps, axis=1))
        gs.append(g)
        fs.append(f)
    return fs, gs


def sinkhorn_plan(p, q, D, cfg: SinkhornConfig) -> tuple[np.ndarray, float]:
    """Entropic transport plan after ``cfg.n_iter`` log-domain scaling rounds.

    Each round updates the column potential, then the row potential, so the
    returned plan always has row sums equal to ``p``.
    """
    p, q, D = _check_marginals(p, q, D)
    fs, gs = _log_potentials(p, q, D, cfg.epsilon, cfg.n_iter)
    P = np.exp((fs[-1][:, None] + gs[-1][None, :] - D) / cfg.epsilon)
    return P, float((P * D).sum())


def sinkhorn_loss_and_grad(p, q, D, eps: float, n_iter: int) -> tuple[float, np.ndarray]:
    """<D, P> and its gradient w.r.t. ``p``, through the unrolled iterations."""
    p, q, D = _check_marginals(p, q, D)
    fs, gs = _log_potentials(p, q, D, eps, n_iter)
    P = np.exp((fs[-1][:, None] + gs[-1][None, :] - D) / eps)
    loss = float((P * D).sum())
    DP = D * P / eps
    f_bar = DP.sum(axis=1)
    g_bar = DP.sum(axis=0)
    p_bar = np.zeros_like(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(n_iter, 0, -1):
            f_prev, g = fs[k - 1], gs[k - 1]
            # f_k = eps*log p - eps*LSE_j((g_j - D_ij)/eps)
            p_bar += np.where(p > 0, eps * f_bar / p, 0.0)
            Z = (g[None, :] - D) / eps
            Q = np.exp(Z - logsumexp(Z, axis=1, keepdims=True))
            g_bar = g_bar - Q.T @ f_bar
            # g_k = eps*log q - eps*LSE_i((f_i - D_ij)/eps)
            Z = (f_prev[:, None] - D) / eps
            Rm = np.exp(Z - logsumexp(Z, axis=0, keepdims=True))
            f_bar = -(Rm @ g_bar)
            g_bar = np.zeros_like(g_bar)
    return loss, p_bar


def exact_ot_oracle(p, q, D) -> float:
    """Exact optimal transport cost by linear programming (test-scale only)."""
    p, q, D = _check_marginals(p, q, D)
    n, m = D.shape
    if n > 64 or m > 64:
        raise ValueError("exact oracle is limited to 64 bins per marginal")
    if not np.isclose(p.sum(), q.sum(), rtol=1e-9, atol=1e-12):
        raise ValueError("infeasible: marginals have different total mass")
    rows = np.kron(np.eye(n), np.ones((1, m)))
    cols = np.kron(np.ones((1, n)), np.eye(m))
    res = linprog(
        D.ravel(),
        A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([p, q]),
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise ValueError(f"transport LP failed: {res.message}")
    return float(res.fun)


# --- image transport ------------------------------------------------------------


@lru_cache(maxsize=16)
def area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix of exact area averaging."""
    scale = n_in / n_out
    edges_in = np.arange(n_in + 1, dtype=np.float64)
    lo = np.arange(n_out)[:, None] * scale
    hi = lo + scale
    overlap = np.clip(np.minimum(hi, edges_in[None, 1:]) - np.maximum(lo, edges_in[None, :-1]), 0.0, None)
    A = overlap / overlap.sum(axis=1, keepdims=True)
    A.flags.writeable = False
    return A


def area_resize(img: np.ndarray, size: int) -> np.ndarray:
    """Area-average a square (H, H[, C]) image to (size, size[, C])."""
    A = area_matrix(img.shape[0], size)
    return np.einsum("ai,ij...,bj->ab...", A, img, A, optimize=True)


@lru_cache(maxsize=8)
def grid_cost(n: int) -> np.ndarray:
    """Euclidean distances between the n*n cell centers of the unit square."""
    c = (np.arange(n) + 0.5) / n
    y, x = np.meshgrid(c, c, indexing="ij")
    pts = np.stack([x.ravel(), y.ravel()], axis=1)
    return np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))


class _GridTransport:
    """Sinkhorn on an n*n grid using the block-Toeplitz structure of K.

    K[(y, x), (y', x')] = k(|y - y'|, |x - x'|), so K @ v is one
    (n, n) x (n, n*n) product followed by a gather-sum over y'. Unlike an
    FFT convolution this sums nonnegative terms directly, which keeps full
    relative precision: the scalings u and v routinely span 1e+-60 when
    paint and target are far apart, and the small entries matter.
    """

    def __init__(self, n: int, eps: float):
        self.n = n
        off = np.arange(n) / n
        dist = np.hypot(off[:, None], off[None, :])  # (dy, dx)
        kern = np.exp(-dist / eps)
        dx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])  # (x', x)
        # T[x', dy, x] = k(dy, |x - x'|)
        self.tk = np.ascontiguousarray(kern[:, dx].transpose(1, 0, 2).reshape(n, n * n))
        self.tkd = np.ascontiguousarray((kern * dist)[:, dx].transpose(1, 0, 2).reshape(n, n * n))
        self.dy = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])  # (y, y')
        self.yp = np.broadcast_to(np.arange(n)[None, :], (n, n))

    def _apply(self, table, x):
        n = self.n
        W = (x.reshape(n, n) @ table).reshape(n, n, n)  # (y', dy, x)
        return W[self.yp, self.dy].sum(axis=1).ravel()

    def K(self, x):
        return self._apply(self.tk, x)

    def KD(self, x):
        return self._apply(self.tkd, x)

    def loss_and_grad(self, a, b, n_iter):
        u = np.ones_like(a)
        hist = []
        for _ in range(n_iter):
            Ku = self.K(u)
            v = b / Ku
            Kv = self.K(v)
            u_new = a / Kv
            hist.append((Ku, v, Kv, u_new))
            u = u_new
        Mv = self.KD(v)
        loss = float(u @ Mv)
        u_bar = Mv
        v_bar = self.KD(u)
        a_bar = np.zeros_like(a)
        for Ku, v, Kv, u_k in reversed(hist):
            a_bar += u_bar / Kv
            v_bar = v_bar + self.K(-u_bar * u_k / Kv)
            u_bar = self.K(-v_bar * v / Ku)
            v_bar = np.zeros_like(v_bar)
        return loss, a_bar


@lru_cache(maxsize=8)
def _grid_transport(n: int, eps: float) -> _GridTransport:
    return _GridTransport(n, eps)


def _kernel_representable(eps: float) -> bool:
    # smallest Gibbs kernel entry exp(-sqrt(2)/eps) must stay a normal double
    return np.sqrt(2.0) / eps < 700.0


def image_marginal(h: np.ndarray, cfg: SinkhornConfig) -> np.ndarray:
    """Paint-darkness mass of the downsampled canvas, as a probability vector."""
    A = area_matrix(h.shape[0], cfg.ot_resolution)
    m = 1.0 - A @ h.mean(axis=2) @ A.T
    m = m.ravel() + cfg.marginal_floor
    return m / m.sum()


def ot_loss(h: np.ndarray, ref: np.ndarray, cfg: SinkhornConfig = SinkhornConfig()) -> tuple[float, np.ndarray]:
    _check_shapes(h, ref)
    n = cfg.ot_resolution
    A = area_matrix(h.shape[0], n)
    dark = 1.0 - A @ h.mean(axis=2) @ A.T
    mass = dark.ravel() + cfg.marginal_floor
    total = mass.sum()
    a = mass / total
    b = image_marginal(ref, cfg)
    loss = None
    if _kernel_representable(cfg.epsilon):
        with np.errstate(all="ignore"):
            loss, a_bar = _grid_transport(n, cfg.epsilon).loss_and_grad(a, b, cfg.n_iter)
        if not (np.isfinite(loss) and np.all(np.isfinite(a_bar))):
            loss = None  # scalings left the double range; redo in log domain
    if loss is None:
        loss, a_bar = sinkhorn_loss_and_grad(a, b, grid_cost(n), cfg.epsilon, cfg.n_iter)
    mass_bar = (a_bar - a_bar @ a) / total
    g_dark = mass_bar.reshape(n, n)
    g_h = -(A.T @ g_dark @ A) / 3.0
    return loss, np.repeat(g_h[:, :, None], 3, axis=2)


def total_loss(
    h: np.ndarray,
    ref: np.ndarray,
    weights: LossWeights = LossWeights(),
    cfg: SinkhornConfig = SinkhornConfig(),
) -> tuple[LossReport, np.ndarray]:
    l1, g1 = l1_loss(h, ref)
    ot, g2 = ot_loss(h, ref, cfg)
    total = weights.beta_l1 * l1 + weights.beta_ot * ot
    return LossReport(l1, ot, total), weights.beta_l1 * g1 + weights.beta_ot * g2
