"""Joint user association and subchannel allocation at fixed power.

For a fixed power allocation the problem separates per subchannel into a
maximum weighted bipartite matching between BSs and UEs with edge weights
``w_k * R[b, k, m]``. Each matching is solved exactly with the Hungarian
method (shortest augmenting paths with dual potentials).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .rates import link_rates, validate_weights
from .scenario import ChannelState

__all__ = [
    "Assignment",
    "RATE_FLOOR",
    "build_weight_matrix",
    "solve_mwbm",
    "matching_value",
    "brute_force_mwbm",
    "brute_force_assignment",
    "assign_all_subchannels",
]

# Rates below this are treated as numerical noise and never matched.
RATE_FLOOR = 1e-12


class InfeasibleAssignment(ValueError):
    pass


@dataclass(frozen=True)
class Assignment:
    """Schedule ``kstar[b, n]``: the UE served by BS ``b`` on subchannel ``n``, or -1.

    Storing one UE per (BS, subchannel) enforces the one-UE-per-BS constraint
    by construction; :meth:`validate` checks the one-BS-per-UE constraint.
    """

    kstar: np.ndarray
    n_ues: int

    @classmethod
    def empty(cls, n_bs: int, n_subchannels: int, n_ues: int) -> "Assignment":
        return cls(np.full((n_bs, n_subchannels), -1, dtype=int), n_ues)

    @classmethod
    def from_rho(cls, rho: np.ndarray) -> "Assignment":
        rho = np.asarray(rho).astype(bool)
        B, K, N = rho.shape
        if np.any(rho.sum(axis=1) > 1):
            raise InfeasibleAssignment("a BS serves more than one UE on a subchannel")
        kstar = np.where(rho.any(axis=1), rho.argmax(axis=1), -1)
        out = cls(kstar, K)
        out.validate()
        return out

    @property
    def n_bs(self) -> int:
        return self.kstar.shape[0]

    @property
    def n_subchannels(self) -> int:
        return self.kstar.shape[1]

    @property
    def rho(self) -> np.ndarray:
        """Binary tensor rho[b, k, n]."""
        B, N = self.kstar.shape
        out = np.zeros((B, self.n_ues, N), dtype=bool)
        b, n = np.nonzero(self.kstar >= 0)
        out[b, self.kstar[b, n], n] = True
        return out

    @property
    def association(self) -> np.ndarray:
        """u[b, k] = 1 iff UE k is served by BS b on at least one subchannel."""
        return self.rho.any(axis=2)

    @property
    def active(self) -> np.ndarray:
        return self.kstar >= 0

    def validate(self) -> None:
        k = self.kstar
        if k.ndim != 2 or np.any(k < -1) or np.any(k >= self.n_ues):
            raise InfeasibleAssignment("schedule entries must be -1 or a valid UE index")
        for n in range(k.shape[1]):
            served = k[:, n][k[:, n] >= 0]
            if len(served) != len(np.unique(served)):
                raise InfeasibleAssignment(
                    f"a UE is served by more than one BS on subchannel {n}")

    def links(self) -> list[tuple[int, int, int]]:
        b, n = np.nonzero(self.kstar >= 0)
        return [(int(bi), int(self.kstar[bi, ni]), int(ni)) for bi, ni in zip(b, n)]


def _weights_from_rates(rates: np.ndarray, weights: np.ndarray) -> np.ndarray:
    r = np.where(rates < RATE_FLOOR, 0.0, rates)
    return weights.reshape((1, -1) + (1,) * (r.ndim - 2)) * r


def build_weight_matrix(p, ch: ChannelState, weights, m: int, receiver: str = "single") -> np.ndarray:
    """Edge weights ``w[b, k] = omega_k * R[b, k, m]`` at the current powers."""
    w = validate_weights(weights, ch.n_ues)
    rates = link_rates(p, ch, receiver)[:, :, m]
    return _weights_from_rates(rates, w)


def _hungarian_min(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost assignment of every row, ``rows <= cols``. Returns column per row."""
    n, m = cost.shape
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=int)  # row (1-based) holding column j; 0 = free
    way = np.zeros(m + 1, dtype=int)
    a = np.zeros((n + 1, m + 1))
    a[1:, 1:] = cost
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used
            cur = a[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            masked = np.where(free, minv, inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=int)
    for j in range(1, m + 1):
        if owner[j]:
            col_of_row[owner[j] - 1] = j - 1
    return col_of_row


def solve_mwbm(w: np.ndarray) -> list[tuple[int, int]]:
    """Maximum weighted bipartite matching on a nonnegative (BS x UE) matrix.

    Rectangular inputs are handled by assigning every vertex of the smaller
    side; with nonnegative weights this loses nothing, and zero-weight edges
    are dropped from the returned matching afterwards.

    Returns
    -------
    list of (row, col)
        Matched pairs sorted by row, all with strictly positive weight.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("weight matrix must be 2-D")
    if w.size == 0:
        return []
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weight matrix must be finite and nonnegative")
    transposed = w.shape[0] > w.shape[1]
    mat = w.T if transposed else w
    cols = _hungarian_min(mat.max() - mat)
    pairs = [(r, int(c)) for r, c in enumerate(cols)]
    if transposed:
        pairs = [(c, r) for r, c in pairs]
    return sorted((r, c) for r, c in pairs if w[r, c] > 0)


def matching_value(w: np.ndarray, pairs) -> float:
    return float(sum(w[r, c] for r, c in pairs))


def brute_force_mwbm(w: np.ndarray, max_side: int = 5) -> list[tuple[int, int]]:
    """Exhaustive maximum matching; the first maximum in enumeration order wins."""
    w = np.asarray(w, dtype=float)
    n_rows, n_cols = w.shape
    if n_rows > max_side or n_cols > max_side:
        raise ValueError(f"brute force limited to {max_side}x{max_side}, got {w.shape}")
    best, best_pairs = 0.0, []
    # each row picks a distinct column or stays unmatched (None)
    for choice in itertools.product([None, *range(n_cols)], repeat=n_rows):
        picked = [c for c in choice if c is not None]
        if len(picked) != len(set(picked)):
            continue
        pairs = [(r, c) for r, c in enumerate(choice) if c is not None and w[r, c] > 0]
        value = matching_value(w, pairs)
        if value > best:
            best, best_pairs = value, pairs
    return best_pairs


def brute_force_assignment(p, ch: ChannelState, weights, m: int,
                           receiver: str = "single") -> list[tuple[int, int]]:
    if ch.n_bs > 5 or ch.n_ues > 5:
        raise ValueError("brute_force_assignment requires at most 5 BSs and 5 UEs")
    return brute_force_mwbm(build_weight_matrix(p, ch, weights, m, receiver))


def assign_all_subchannels(p, ch: ChannelState, weights, receiver: str = "single",
                           solver=solve_mwbm) -> Assignment:
    """Optimal schedule for fixed powers: one independent matching per subchannel."""
    w = validate_weights(weights, ch.n_ues)
    all_w = _weights_from_rates(link_rates(p, ch, receiver), w)
    kstar = np.full((ch.n_bs, ch.n_subchannels), -1, dtype=int)
    for m in range(ch.n_subchannels):
        for b, k in solver(all_w[:, :, m]):
            kstar[b, m] = k
    return Assignment(kstar, ch.n_ues)
