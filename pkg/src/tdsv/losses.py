"""Additive angular margin softmax with subcenters and an Inter-TopK penalty.

Single-sample reference numerics with analytic gradients, for checking
against finite differences.  Not a training loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ZeroNormError


@dataclass(frozen=True)
class LossConfig:
    scale: float = 32.0
    margin: float = 0.2
    subcenters: int = 2
    topk: int = 5
    penalty_margin: float = 0.06

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not 0 <= self.margin < math.pi / 2:
            raise ValueError("margin must lie in [0, pi/2)")
        if self.subcenters < 1:
            raise ValueError("subcenters must be >= 1")
        if self.topk < 0:
            raise ValueError("topk must be >= 0")
        if self.penalty_margin < 0:
            raise ValueError("penalty_margin must be >= 0")


@dataclass
class LossResult:
    loss: float
    grad_x: np.ndarray
    grad_weights: np.ndarray | None = None
    logits: np.ndarray | None = None


def _unit(v, axis=-1):
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(n == 0):
        raise ZeroNormError("zero-norm vector")
    return v / n, n


def subcenter_cosines(x, weights, return_argmax: bool = False):
    """Per-class cosine: max over each class's subcenter prototypes.

    ``weights`` has shape ``(C, K, F)``.  Ties between subcenters go to the
    lowest index.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 3 or w.shape[2] != x.shape[-1]:
        raise ValueError(f"weights must have shape (C, K, {x.shape[-1]}), got {w.shape}")
    xh, _ = _unit(x)
    wh, _ = _unit(w)
    cos_all = wh @ xh  # (C, K)
    k = np.argmax(cos_all, axis=1)
    cos = cos_all[np.arange(len(k)), k]
    if return_argmax:
        return cos, k
    return cos


def _target_logit(c, m):
    """cos(theta + m) and its derivative in c, with the usual fallback
    ``c - m sin m`` once theta + m passes pi."""
    if m == 0:
        return c, 1.0
    if c > math.cos(math.pi - m):
        sin = math.sqrt(max(1.0 - c * c, 0.0))
        val = c * math.cos(m) - sin * math.sin(m)
        d = math.cos(m) + (c * math.sin(m) / sin if sin > 0 else 0.0)
        return val, d
    return c - m * math.sin(m), 1.0


def _penalized_logit(c, mp):
    """cos(max(theta - mp, 0)) and its derivative in c."""
    if c >= math.cos(mp):
        return 1.0, 0.0
    sin = math.sqrt(max(1.0 - c * c, 0.0))
    val = c * math.cos(mp) + sin * math.sin(mp)
    d = math.cos(mp) - (c * math.sin(mp) / sin if sin > 0 else 0.0)
    return val, d


def hardest_nontargets(cos, label: int, topk: int) -> np.ndarray:
    """Indices of the ``topk`` highest-cosine non-target classes (ties to the
    lower class index)."""
    if topk == 0:
        return np.empty(0, dtype=np.intp)
    order = np.argsort(-cos, kind="stable")
    return order[order != label][:topk]


def aam_softmax(x, weights, label: int, config: LossConfig = LossConfig(),
                weight_grad: bool = False) -> LossResult:
    """Loss and gradient for one sample.

    Target logit is ``s·cos(θ_y + m)``; the ``topk`` hardest non-targets get
    ``s·cos(θ_j − m')`` (angle clipped at 0); the rest ``s·cos θ_j``.  The
    loss is softmax cross-entropy over those logits.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    n_classes, n_sub = w.shape[:2]
    if n_sub != config.subcenters:
        raise ValueError(f"weights have {n_sub} subcenters, config says {config.subcenters}")
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} outside [0, {n_classes})")
    if config.topk >= n_classes:
        raise ValueError(f"topk={config.topk} must be below the number of classes ({n_classes})")

    cos, sub = subcenter_cosines(x, w, return_argmax=True)
    s = float(config.scale)
    logits = s * cos
    dlogit_dcos = np.full(n_classes, s, dtype=np.float64)

    val, d = _target_logit(float(cos[label]), config.margin)
    logits[label] = s * val
    dlogit_dcos[label] = s * d

    if config.penalty_margin > 0:
        for j in hardest_nontargets(cos, label, config.topk):
            val, d = _penalized_logit(float(cos[j]), config.penalty_margin)
            logits[j] = s * val
            dlogit_dcos[j] = s * d

    shifted = logits - logits.max()
    log_z = math.log(np.exp(shifted).sum())
    loss = log_z - shifted[label]
    p = np.exp(shifted - log_z)
    p[label] -= 1.0
    g_cos = p * dlogit_dcos  # dL/dcos_j

    xh, xn = _unit(x)
    rows = np.arange(n_classes)
    wsel = w[rows, sub]
    wh, wn = _unit(wsel)
    # d cos_j / d x = (ŵ_j − cos_j x̂) / ‖x‖
    grad_x = (g_cos[:, None] * (wh - cos[:, None] * xh)).sum(axis=0) / xn[0]

    grad_w = None
    if weight_grad:
        grad_w = np.zeros_like(w)
        grad_w[rows, sub] = g_cos[:, None] * (xh - cos[:, None] * wh) / wn
    return LossResult(float(loss), grad_x, grad_w, logits)


def softmax_cross_entropy(logits, label: int) -> float:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    return float(math.log(np.exp(z).sum()) - z[label])


def finite_difference_grad(f, x, step: float = 1e-4) -> np.ndarray:
    """Central differences of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        g[i] = (hi - lo) / (2 * step)
    return grad


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def gradient_check(n_instances: int = 50, seed: int = 0, step: float = 1e-4,
                   config: LossConfig | None = None, weights_too: bool = False) -> list[float]:
    """Relative errors of the analytic input gradient against central
    differences on random instances (C <= 6, F <= 10)."""
    rng = np.random.default_rng(seed)
    errors = []
    while len(errors) < n_instances:
        n_classes = int(rng.integers(3, 7))
        dim = int(rng.integers(2, 11))
        cfg = config or LossConfig(
            scale=float(rng.uniform(1, 32)), margin=float(rng.uniform(0.05, 0.5)),
            subcenters=int(rng.integers(1, 4)), topk=int(rng.integers(1, n_classes)),
            penalty_margin=float(rng.uniform(0.01, 0.2)))
        w = rng.standard_normal((n_classes, cfg.subcenters, dim))
        x = rng.standard_normal(dim)
        y = int(rng.integers(n_classes))
        if not _well_separated(x, w, y, cfg, step):
            continue
        res = aam_softmax(x, w, y, cfg, weight_grad=weights_too)
        num = finite_difference_grad(lambda v: aam_softmax(v, w, y, cfg).loss, x, step)
        err = relative_error(res.grad_x, num)
        if weights_too:
            num_w = finite_difference_grad(lambda v: aam_softmax(x, v, y, cfg).loss, w, step)
            err = max(err, relative_error(res.grad_weights, num_w))
        errors.append(err)
    return errors


def _well_separated(x, w, y, cfg, step) -> bool:
    """Reject instances whose finite-difference stencil would straddle a
    kink (subcenter switch, top-k membership change, clip boundary)."""
    gap = 50 * step * math.sqrt(x.size) / np.linalg.norm(x)
    xh = x / np.linalg.norm(x)
    wh = w / np.linalg.norm(w, axis=-1, keepdims=True)
    cos_all = np.sort(wh @ xh, axis=1)
    if cos_all.shape[1] > 1 and np.min(cos_all[:, -1] - cos_all[:, -2]) < gap:
        return False
    cos = cos_all[:, -1]
    others = np.sort(np.delete(cos, y))[::-1]
    k = cfg.topk
    if 0 < k < len(others) and others[k - 1] - others[k] < gap:
        return False
    if abs(cos[y] - math.cos(math.pi - cfg.margin)) < gap:
        return False
    if cfg.penalty_margin > 0 and np.min(np.abs(others[:k] - math.cos(cfg.penalty_margin)), initial=1.0) < gap:
        return False
    return True
