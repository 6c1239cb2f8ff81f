"""SINR, link rates and the weighted sum-rate objective.

Powers are ``p[b, n]`` in watts. A link is a triple ``(b, k, n)``: BS ``b``
serving UE ``k`` on subchannel ``n``. Rates are in bit/s/Hz.

The per-link functions (:func:`sinr`, :func:`mrc_sinr`, :func:`irc_sinr`)
evaluate the textbook expressions directly and serve as references for the
vectorized :func:`link_sinr`.
"""

from __future__ import annotations

import numpy as np

from .scenario import ChannelState

__all__ = [
    "RECEIVERS",
    "rate",
    "sinr",
    "mrc_sinr",
    "irc_sinr",
    "link_sinr",
    "link_rates",
    "scheduled_sinr",
    "validate_weights",
    "weighted_sum_rate",
    "per_ue_rates",
    "throughput",
]

RECEIVERS = ("single", "mrc", "irc")


def rate(sinr_value):
    """Shannon rate ``log2(1 + sinr)``."""
    s = np.asarray(sinr_value, dtype=float)
    if np.any(s < 0):
        raise ValueError("sinr must be nonnegative")
    out = np.log2(1.0 + s)
    return float(out) if out.ndim == 0 else out


def sinr(p: np.ndarray, ch: ChannelState, link) -> float:
    b, k, n = link
    g = ch.scalar_gain[:, k, n]
    others = np.delete(np.arange(len(g)), b)
    interference = float(np.sum(p[others, n] * g[others]))
    return float(p[b, n] * g[b] / (interference + ch.noise_power))


def mrc_sinr(p: np.ndarray, ch: ChannelState, link) -> float:
    """MRC SINR, with the combined noise replaced by its mean ``N0 * ||h||^2``."""
    b, k, n = link
    h = ch.h[:, k, n, :]
    own = h[b]
    num = p[b, n] * abs(np.vdot(own, own)) ** 2
    den = ch.noise_power * np.vdot(own, own).real
    for c in range(h.shape[0]):
        if c != b:
            den += p[c, n] * abs(np.vdot(own, h[c])) ** 2
    return float(num / den)


def irc_sinr(p: np.ndarray, ch: ChannelState, link) -> float:
    """IRC SINR: combine with ``w = R^{-1} h``, R the interference-plus-noise covariance."""
    b, k, n = link
    h = ch.h[:, k, n, :]
    na = h.shape[1]
    cov = ch.noise_power * np.eye(na, dtype=complex)
    for c in range(h.shape[0]):
        if c != b:
            cov += p[c, n] * np.outer(h[c], h[c].conj())
    w = np.linalg.solve(cov, h[b])
    num = p[b, n] * abs(np.vdot(w, h[b])) ** 2
    den = ch.noise_power * np.vdot(w, w).real
    for c in range(h.shape[0]):
        if c != b:
            den += p[c, n] * abs(np.vdot(w, h[c])) ** 2
    return float(num / den)


def _others_sum(x):
    """``out[b] = sum_{c != b} x[c]`` from prefix and suffix sums, so nothing cancels."""
    zero = np.zeros_like(x[:1])
    before = np.concatenate([zero, np.cumsum(x[:-1], axis=0)])
    after = np.concatenate([np.cumsum(x[:0:-1], axis=0)[::-1], zero])
    return before + after


def _single_sinr_all(p, gain, noise):
    rx = p[:, None, :] * gain  # (B, K, N)
    return rx / (_others_sum(rx) + noise)


def _mrc_sinr_all(p, h, noise):
    B, K, N, _ = h.shape
    out = np.empty((B, K, N))
    off = ~np.eye(B, dtype=bool)[:, :, None]
    for n in range(N):
        hn = h[:, :, n, :]
        inner = np.einsum("bka,cka->bck", hn.conj(), hn)
        cross = np.where(off, np.abs(inner) ** 2, 0.0)  # (B, C, K)
        norm = np.einsum("bbk->bk", inner).real
        interf = np.einsum("bck,c->bk", cross, p[:, n])
        out[:, :, n] = p[:, n, None] * norm**2 / (interf + noise * norm)
    return out


def _irc_sinr_all(p, h, noise):
    B, K, N, A = h.shape
    out = np.empty((B, K, N))
    eye = np.eye(A)
    for n in range(N):
        hn = h[:, :, n, :]  # (B, K, A)
        outer = hn[:, :, :, None] * hn[:, :, None, :].conj()  # (B, K, A, A)
        # interference-plus-noise covariance seen by the UE of each (b, k)
        cov = _others_sum(p[:, n, None, None, None] * outer) + noise * eye
        x = np.linalg.solve(cov, hn[..., None])[..., 0]
        out[:, :, n] = p[:, n, None] * np.einsum("bka,bka->bk", hn.conj(), x).real
    return out


def link_sinr(p: np.ndarray, ch: ChannelState, receiver: str = "single") -> np.ndarray:
    """SINR of every candidate link (b, k, n) at powers ``p``, shape (B, K, N)."""
    if receiver == "single":
        return _single_sinr_all(p, ch.scalar_gain, ch.noise_power)
    if receiver == "mrc":
        return _mrc_sinr_all(p, ch.h, ch.noise_power)
    if receiver == "irc":
        return _irc_sinr_all(p, ch.h, ch.noise_power)
    raise ValueError(f"unknown receiver {receiver!r}; expected one of {RECEIVERS}")


def link_rates(p: np.ndarray, ch: ChannelState, receiver: str = "single") -> np.ndarray:
    """Rate table R[b, k, n]; zero wherever ``p[b, n] == 0``."""
    return np.log2(1.0 + link_sinr(p, ch, receiver))


def validate_weights(weights, n_ues: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_ues,):
        raise ValueError(f"weights must have shape ({n_ues},), got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    return w


def scheduled_sinr(p: np.ndarray, kstar: np.ndarray, ch: ChannelState,
                   receiver: str = "single"):
    """SINR of the scheduled links only.

    ``kstar[b, n]`` is the UE served by BS ``b`` on subchannel ``n`` or -1.
    Returns ``(b_idx, k_idx, n_idx, sinr)`` as flat arrays.
    """
    b_idx, n_idx = np.nonzero(kstar >= 0)
    k_idx = kstar[b_idx, n_idx]
    noise = ch.noise_power
    own_p = p[b_idx, n_idx]
    lines = np.arange(len(b_idx))
    # powers of the other BSs on each link's subchannel
    pn = np.where(np.arange(p.shape[0])[:, None] == b_idx[None, :], 0.0, p[:, n_idx])  # (B, L)
    if receiver == "single":
        g = ch.scalar_gain[:, k_idx, n_idx]  # (B, L)
        own = g[b_idx, lines]
        interf = np.einsum("bl,bl->l", pn, g)
        return b_idx, k_idx, n_idx, own_p * own / (interf + noise)
    hl = ch.h[:, k_idx, n_idx, :]  # (B, L, A)
    own_h = hl[b_idx, lines]  # (L, A)
    if receiver == "mrc":
        inner = np.einsum("la,bla->bl", own_h.conj(), hl)
        norm = np.einsum("la,la->l", own_h.conj(), own_h).real
        interf = np.einsum("bl,bl->l", pn, np.abs(inner) ** 2)
        return b_idx, k_idx, n_idx, own_p * norm**2 / (interf + noise * norm)
    if receiver == "irc":
        na = hl.shape[2]
        outer = hl[..., :, None] * hl[..., None, :].conj()  # (B, L, A, A)
        cov = np.einsum("bl,blij->lij", pn, outer) + noise * np.eye(na)
        x = np.linalg.solve(cov, own_h[..., None])[..., 0]
        return b_idx, k_idx, n_idx, own_p * np.einsum("la,la->l", own_h.conj(), x).real
    raise ValueError(f"unknown receiver {receiver!r}; expected one of {RECEIVERS}")


def _scheduled_rates(p, assignment, ch, receiver):
    assignment.validate()
    _, k_idx, _, s = scheduled_sinr(p, assignment.kstar, ch, receiver)
    return k_idx, np.log2(1.0 + s)


def weighted_sum_rate(p, assignment, weights, ch: ChannelState, receiver: str = "single") -> float:
    """Sum over scheduled links of ``w_k * R[b, k, n]``."""
    w = validate_weights(weights, ch.n_ues)
    k_idx, rates = _scheduled_rates(p, assignment, ch, receiver)
    return float(np.sum(w[k_idx] * rates))


def per_ue_rates(p, assignment, ch: ChannelState, receiver: str = "single") -> np.ndarray:
    """Total rate delivered to each UE over all its links, shape (K,)."""
    k_idx, rates = _scheduled_rates(p, assignment, ch, receiver)
    return np.bincount(k_idx, weights=rates, minlength=ch.n_ues)


def throughput(p, assignment, ch: ChannelState, receiver: str = "single") -> float:
    """Unweighted network sum-rate."""
    return float(per_ue_rates(p, assignment, ch, receiver).sum())
