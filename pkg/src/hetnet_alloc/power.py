"""Power allocation for a fixed schedule.

The weighted sum-rate at a fixed schedule is ``g(p) - h(p)`` with

    g(p) = sum_{b,n} w[b,n] * log2(T[b,n])      T = total received power + N0
    h(p) = sum_{b,n} w[b,n] * log2(I[b,n])      I = interference + N0

both concave. The DC approximation linearizes ``h`` at a reference point and
solves the resulting concave surrogate, either with a Lagrange-dual method
(subgradient on the multipliers around an inner fixed point) or with the
low-complexity method that finds each BS's multiplier by bisection and
updates all powers simultaneously.

Everything here works on a :class:`LinkGains` view of the channel: for each
scheduled link ``(b, n)`` the gain from every BS ``c`` into the receiver of
that link. Unscheduled (b, n) pairs carry zero weight and zero power.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import Assignment
from .rates import validate_weights
from .scenario import ChannelState, NetworkTopology

__all__ = [
    "LN2",
    "PowerLimits",
    "LinkGains",
    "SolverReport",
    "link_gains",
    "link_state",
    "objective",
    "dc_objective_parts",
    "grad_g",
    "grad_h",
    "surrogate_objective",
    "taxation_term",
    "fixed_point_power",
    "lambda_bisection",
    "water_filling",
    "solve_convex_dual",
    "solve_convex_lowcomplexity",
    "convex_step",
    "dca",
    "kkt_residual",
    "INNER_SOLVERS",
]

LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class PowerLimits:
    """Per-BS total power budgets (watts) and per-subchannel spectral masks (watts)."""

    budgets: np.ndarray  # (B,)
    masks: np.ndarray  # (B, N)

    def __post_init__(self):
        budgets = np.asarray(self.budgets, dtype=float)
        masks = np.asarray(self.masks, dtype=float)
        if masks.ndim != 2 or masks.shape[0] != budgets.shape[0]:
            raise ValueError("masks must have shape (B, N) matching budgets (B,)")
        if np.any(budgets < 0) or np.any(masks < 0):
            raise ValueError("budgets and masks must be nonnegative")
        object.__setattr__(self, "budgets", budgets)
        object.__setattr__(self, "masks", masks)

    @classmethod
    def from_topology(cls, topology: NetworkTopology, n_subchannels: int,
                      mask_fraction: float = 1.0) -> "PowerLimits":
        budgets = np.asarray(topology.bs_power, dtype=float)
        masks = np.repeat((mask_fraction * budgets)[:, None], n_subchannels, axis=1)
        return cls(budgets, masks)

    @property
    def n_subchannels(self) -> int:
        return self.masks.shape[1]

    def uniform(self) -> np.ndarray:
        """``P_b / N`` on every subchannel, capped by the mask."""
        return np.minimum(self.budgets[:, None] / self.n_subchannels, self.masks)

    def is_feasible(self, p: np.ndarray, atol: float = 1e-9) -> bool:
        return bool(np.all(p >= 0) and np.all(p <= self.masks + atol)
                    and np.all(p.sum(axis=1) <= self.budgets + atol))

    def check(self, p: np.ndarray, atol: float = 1e-9) -> None:
        if not self.is_feasible(p, atol):
            raise ValueError("power allocation violates budget or mask constraints")


@dataclass(frozen=True)
class LinkGains:
    """Channel seen by the scheduled links.

    ``gain[b, c, n]`` is the effective power gain from BS ``c`` into the
    receiver of link ``(b, n)``; rows of unscheduled links are zero.
    """

    gain: np.ndarray  # (B, B, N)
    weight: np.ndarray  # (B, N)
    active: np.ndarray  # (B, N) bool
    noise: float
    own: np.ndarray = field(init=False, repr=False)
    cross: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        B = self.gain.shape[0]
        eye = np.eye(B, dtype=bool)[:, :, None]
        own = np.einsum("bbn->bn", self.gain).copy()
        cross = np.where(eye, 0.0, self.gain)
        object.__setattr__(self, "own", own)
        object.__setattr__(self, "cross", cross)

    @property
    def n_bs(self) -> int:
        return self.gain.shape[0]

    @property
    def n_subchannels(self) -> int:
        return self.gain.shape[2]


def link_gains(assignment: Assignment, weights, ch: ChannelState,
               receiver: str = "single") -> LinkGains:
    """Build the per-link gain view of ``ch`` for a schedule.

    ``receiver='mrc'`` (also used for IRC users) gives the MRC-combined gains
    ``|h_b^H h_c|^2 / ||h_b||^2``, which keep the single-antenna SINR form.
    """
    w = validate_weights(weights, ch.n_ues)
    kstar = assignment.kstar
    active = kstar >= 0
    kk = np.where(active, kstar, 0)
    B, N = kstar.shape
    n_idx = np.arange(N)
    if receiver == "single":
        gain = ch.scalar_gain[np.arange(B)[None, :, None], kk[:, None, :], n_idx[None, None, :]]
    elif receiver in ("mrc", "irc"):
        hv = ch.h[:, kk, n_idx[None, :], :]  # (C, B, N, A): BS c to the UE of link (b, n)
        own_h = hv[np.arange(B), np.arange(B)]  # (B, N, A)
        inner = np.einsum("bna,cbna->bcn", own_h.conj(), hv)
        norm = np.einsum("bna,bna->bn", own_h.conj(), own_h).real
        gain = np.abs(inner) ** 2 / norm[:, None, :]
    else:
        raise ValueError(f"unknown receiver {receiver!r}")
    gain = np.where(active[:, None, :], gain, 0.0)
    weight = np.where(active, w[kk], 0.0)
    return LinkGains(gain=gain, weight=weight, active=active, noise=ch.noise_power)


@dataclass
class SolverReport:
    """Iteration counts and traces of one power solve.

    ``iterations`` is K_T for the low-complexity solver and K_lambda for the
    dual one; ``inner_iterations`` holds the fixed-point counts per multiplier
    update (their mean is K_P).
    """

    method: str
    iterations: int = 0
    inner_iterations: list[int] = field(default_factory=list)
    objective_trace: list[float] = field(default_factory=list)
    lam: np.ndarray | None = None
    converged: bool = False
    safeguarded: bool = False
    kkt: float | None = None
    block_sweeps: int = 0

    @property
    def k_p(self) -> float:
        return float(np.mean(self.inner_iterations)) if self.inner_iterations else 0.0


def link_state(p: np.ndarray, links: LinkGains):
    """Interference-plus-noise ``I`` and total received power ``T`` for every link."""
    interference = np.einsum("bcn,cn->bn", links.cross, p) + links.noise
    return interference, interference + links.own * p


def objective(p: np.ndarray, links: LinkGains) -> float:
    """Weighted sum-rate of the scheduled links at powers ``p``."""
    interference, _ = link_state(p, links)
    return float(np.sum(links.weight * np.log1p(links.own * p / interference)) / LN2)


def dc_objective_parts(p: np.ndarray, links: LinkGains) -> tuple[float, float]:
    interference, total = link_state(p, links)
    w = links.weight
    act = links.active
    g = float(np.sum(w[act] * np.log2(total[act])))
    h = float(np.sum(w[act] * np.log2(interference[act])))
    return g, h


def grad_g(p: np.ndarray, links: LinkGains) -> np.ndarray:
    _, total = link_state(p, links)
    return np.einsum("bn,bcn->cn", links.weight / (total * LN2), links.gain)


def grad_h(p: np.ndarray, links: LinkGains) -> np.ndarray:
    interference, _ = link_state(p, links)
    return np.einsum("bn,bcn->cn", links.weight / (interference * LN2), links.cross)


def surrogate_objective(p: np.ndarray, p_ref: np.ndarray, links: LinkGains) -> float:
    """Concave minorant of the objective, tight at ``p_ref``."""
    g, _ = dc_objective_parts(p, links)
    _, h_ref = dc_objective_parts(p_ref, links)
    return g - h_ref - float(np.sum(grad_h(p_ref, links) * (p - p_ref)))


def taxation_term(p_current: np.ndarray, p_ref: np.ndarray, links: LinkGains,
                  grad_h_ref: np.ndarray | None = None) -> np.ndarray:
    """Interference price ``d[c, n]`` that BS ``c`` pays towards the other scheduled links.

    The first part uses interference at the linearization point ``p_ref``,
    the second the total received power at ``p_current``.
    """
    if grad_h_ref is None:
        grad_h_ref = grad_h(p_ref, links)
    _, total = link_state(p_current, links)
    return grad_h_ref - np.einsum("bn,bcn->cn", links.weight / (total * LN2), links.cross)


def fixed_point_power(lam, d, interference, own_gain, weight, mask):
    """Stationary power ``[w / ((lam + d) ln 2) - I / G]`` clipped to ``[0, mask]``.

    A nonpositive price ``lam + d`` means the water level is unbounded and
    the mask is used.
    """
    price = np.asarray(lam + d, dtype=float)
    own_gain = np.asarray(own_gain, dtype=float)
    weight = np.asarray(weight, dtype=float)
    mask = np.asarray(mask, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        level = weight / (np.where(price > 0, price, 1.0) * LN2)
        floor = np.where(own_gain > 0, interference / np.where(own_gain > 0, own_gain, 1.0),
                         np.inf)
        p = np.clip(level - floor, 0.0, mask)
    p = np.where(price > 0, p, mask)
    return np.where((weight > 0) & (own_gain > 0), p, 0.0)


def lambda_bisection(d, interference, own_gain, weight, mask, budget, rtol=1e-12,
                     max_halvings=200, halvings_per_round=None):
    """Per-BS multiplier meeting the budget, vectorized over BSs.

    The summed power is nonincreasing in the multiplier, so zero is returned
    whenever it already fits the budget. Otherwise the bracket ``[0, hi]`` is
    found by doubling ``hi`` from 1 and halved until the budget is met within
    ``rtol`` from below; the feasible end is returned.

    Both phases are batched: 16 doublings are evaluated in one call, and a round
    of halving evaluates the ``2**halvings_per_round - 1`` interior points of a
    uniform grid on the bracket, which selects the same sub-bracket as that many
    successive halvings. The default grid is 31 points for small problems and 7
    for large ones, which measured fastest.

    Returns
    -------
    lam : (B,) ndarray
    p : (B, N) ndarray
        Powers at ``lam``; always within budget.
    """
    budget = np.asarray(budget, dtype=float)
    B = len(budget)
    valid = (weight > 0) & (own_gain > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        floor = np.where(valid, interference / np.where(own_gain > 0, own_gain, 1.0), 0.0)
    level = np.where(valid, weight / LN2, 0.0)
    cap = np.where(valid, mask, 0.0)

    def power(rows, lam):
        # fixed_point_power at multipliers lam (len(rows), M) -> (len(rows), M, N)
        price = lam[:, :, None] + dd[rows][:, None, :]
        pos = price > 0
        m = mm[rows][:, None, :]
        with np.errstate(divide="ignore", over="ignore"):
            p = np.minimum(np.maximum(ll[rows][:, None, :] / np.where(pos, price, 1.0)
                                      - ff[rows][:, None, :], 0.0), m)
        return np.where(pos, p, m)

    dd, ll, ff, mm = d, level, floor, cap
    lam = np.zeros(B)
    p = power(np.arange(B), lam[:, None])[:, 0]
    binding = p.sum(axis=1) > budget
    if not binding.any():
        return lam, p
    ix = np.nonzero(binding)[0]
    dd, ll, ff, mm = d[ix], level[ix], floor[ix], cap[ix]
    n = len(ix)
    target = budget[ix]
    rows = np.arange(n)

    doublings = 2.0 ** np.arange(16)
    base = np.ones(n)
    hi = np.ones(n)
    found = np.zeros(n, dtype=bool)
    p_hi = np.zeros((n, d.shape[1]))
    for _ in range(132):
        cand = base[:, None] * doublings[None, :]
        pc = power(rows, cand)
        below = pc.sum(axis=2) < target[:, None]
        new = below.any(axis=1) & ~found
        first = np.argmax(below, axis=1)
        hi = np.where(new, cand[rows, first], hi)
        p_hi[new] = pc[rows[new], first[new]]
        found |= new
        if found.all():
            break
        base = np.where(found, base, 2.0 * cand[:, -1])

    lo = np.zeros(n)
    s_hi = p_hi.sum(axis=1)
    if halvings_per_round is None:
        halvings_per_round = 5 if n * d.shape[1] <= 256 else 3
    k = 2**halvings_per_round
    frac = np.arange(1, k) / k
    for _ in range(0, max_halvings, halvings_per_round):
        live = np.nonzero(target - s_hi > rtol * target)[0]
        if live.size == 0:
            break
        l, h = lo[live], hi[live]
        grid = l[:, None] + (h - l)[:, None] * frac[None, :]
        pg = power(live, grid)
        feasible = pg.sum(axis=2) <= target[live, None]  # a suffix of the grid
        j = np.argmax(feasible, axis=1)
        any_f = feasible.any(axis=1)
        r = np.arange(live.size)
        hi[live] = np.where(any_f, grid[r, j], h)
        lo[live] = np.where(any_f, np.where(j > 0, grid[r, np.maximum(j - 1, 0)], l),
                            grid[:, -1])
        upd = live[any_f]
        p_hi[upd] = pg[r[any_f], j[any_f]]
        s_hi[upd] = p_hi[upd].sum(axis=1)
    lam[ix] = hi
    p[ix] = p_hi
    return lam, p


def water_filling(gains, noise, budget, masks=None, return_level=False):
    """Classical water-filling ``p_n = [mu - noise / g_n]`` clipped to ``[0, mask_n]``.

    ``noise`` may be a scalar or per-channel array. The level ``mu`` is found by
    bisection and then solved exactly on the set of unclipped channels.
    """
    gains = np.atleast_1d(np.asarray(gains, dtype=float))
    noise_arr = np.broadcast_to(np.asarray(noise, dtype=float), gains.shape)
    masks = np.full(gains.shape, np.inf) if masks is None else np.broadcast_to(
        np.asarray(masks, dtype=float), gains.shape)
    with np.errstate(divide="ignore"):
        floor = np.where(gains > 0, noise_arr / np.where(gains > 0, gains, 1.0), np.inf)
    usable = np.isfinite(floor) & (masks > 0)
    p = np.zeros(gains.shape)
    if budget <= 0 or not usable.any():
        return (p, 0.0) if return_level else p
    if masks[usable].sum() <= budget:
        p[usable] = masks[usable]
        return (p, np.inf) if return_level else p
    f, m = floor[usable], masks[usable]

    def total(mu):
        return np.clip(mu - f, 0.0, m).sum()

    lo = f.min()
    hi = (f + np.minimum(m, budget)).max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) > budget:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(abs(hi), 1e-300):
            break
    mu = 0.5 * (lo + hi)
    pu = np.clip(mu - f, 0.0, m)
    interior = (pu > 0) & (pu < m)
    if interior.any():
        capped = pu >= m
        mu_exact = (budget - m[capped].sum() + f[interior].sum()) / interior.sum()
        pu_exact = np.clip(mu_exact - f, 0.0, m)
        if abs(pu_exact.sum() - budget) <= abs(pu.sum() - budget):
            mu, pu = mu_exact, pu_exact
    p[usable] = pu
    return (p, float(mu)) if return_level else p


def _lambda_converged(lam_new, lam_old, eps):
    return bool(np.all(np.abs(lam_new - lam_old) <= eps * lam_new))


def _relative_change(p_new, p_old, budgets):
    scale = np.where(budgets > 0, budgets, 1.0)[:, None]
    return float(np.max(np.abs(p_new - p_old) / scale)) if p_new.size else 0.0


def _start_point(p_ref, links, limits):
    masks = np.where(links.active, limits.masks, 0.0)
    return np.where(links.active, np.minimum(p_ref, masks), 0.0), masks


def _merit_gradient(links, gh_ref, lam=None):
    """Gradient of the surrogate, or of its Lagrangian at fixed ``lam``."""
    shift = gh_ref if lam is None else gh_ref + lam[:, None]

    def grad(p):
        return grad_g(p, links) - shift

    return grad


def _ascent_step(p, target, grad, max_evals=40):
    """Exact line search from ``p`` towards ``target`` on the concave merit.

    ``target - p`` is an ascent direction: each BS's KKT target maximizes a
    tangent majorant of its own block. The full step is the plain
    simultaneous update and is taken whenever the merit still rises at it;
    otherwise the slope along the segment is driven to zero by a safeguarded
    false-position search.
    """
    direction = target - p
    slope0 = float(np.sum(grad(p) * direction))
    if slope0 <= 0.0:
        return p, 0.0
    slope1 = float(np.sum(grad(target) * direction))
    if slope1 >= 0.0:
        return target, 1.0
    lo, hi, s_lo, s_hi = 0.0, 1.0, slope0, slope1
    side = 0
    for _ in range(max_evals):
        t = (lo * s_hi - hi * s_lo) / (s_hi - s_lo)
        s_t = float(np.sum(grad(p + t * direction) * direction))
        if abs(s_t) <= 1e-10 * slope0 or hi - lo <= 1e-12:
            break
        if s_t > 0:
            lo, s_lo = t, s_t
            if side == 1:
                s_hi *= 0.5
            side = 1
        else:
            hi, s_hi = t, s_t
            if side == -1:
                s_lo *= 0.5
            side = -1
    return p + t * direction, t


def solve_convex_lowcomplexity(p_ref, links: LinkGains, limits: PowerLimits, eps: float = 0.01,
                               max_iter: int = 1000, block_fallback: float = 0.5):
    """Solve the surrogate around ``p_ref`` by simultaneous KKT updates.

    Each iteration prices interference with the taxation term at the previous
    iterate, finds every BS's multiplier by bisection and moves all powers
    towards the resulting KKT point at once. Stops when every multiplier moved
    by at most ``eps`` relative and no power target differs from the iterate by
    more than ``eps`` of its BS budget.

    Under strong coupling the joint step can be cut far short by the line
    search, and progress becomes sublinear. Whenever the accepted fraction is
    below ``block_fallback`` the iteration finishes with one sweep of per-BS
    updates (counted in ``report.block_sweeps``).
    """
    p_ref = np.asarray(p_ref, dtype=float)
    gh_ref = grad_h(p_ref, links)
    p, masks = _start_point(p_ref, links, limits)
    report = SolverReport("lowcomplexity")
    lam_prev = None
    for it in range(1, max_iter + 1):
        interference, _ = link_state(p, links)
        d = taxation_term(p, p_ref, links, gh_ref)
        lam, target = lambda_bisection(d, interference, links.own, links.weight, masks,
                                       limits.budgets)
        change = _relative_change(target, p, limits.budgets)
        # line search on the Lagrangian so the bisection slack in sum(target) cannot stall it
        p, t = _ascent_step(p, target, _merit_gradient(links, gh_ref, lam))
        if t < block_fallback:
            p = _block_sweep(p, p_ref, gh_ref, links, masks, limits.budgets)
            report.block_sweeps += 1
        report.objective_trace.append(surrogate_objective(p, p_ref, links))
        report.iterations = it
        report.lam = lam
        if lam_prev is not None and _lambda_converged(lam, lam_prev, eps) and change <= eps:
            report.converged = True
            break
        lam_prev = lam
    return p, report


def _block_sweep(p, p_ref, gh_ref, links, masks, budgets):
    """One Gauss-Seidel pass: each BS in turn moves towards its own KKT target."""
    B = p.shape[0]
    for c in range(B):
        if not links.active[c].any():
            continue
        sl = slice(c, c + 1)
        interference, _ = link_state(p, links)
        d = taxation_term(p, p_ref, links, gh_ref)
        lam_c, target_c = lambda_bisection(d[sl], interference[sl], links.own[sl],
                                           links.weight[sl], masks[sl], budgets[sl])
        lam = np.zeros(B)
        lam[c] = lam_c[0]
        target = p.copy()
        target[c] = target_c[0]
        p, _ = _ascent_step(p, target, _merit_gradient(links, gh_ref, lam))
    return p


def _inner_fixed_point(p, lam, gh_ref, p_ref, links, masks, budgets, tol, max_iter):
    grad = _merit_gradient(links, gh_ref, lam)
    for it in range(1, max_iter + 1):
        interference, _ = link_state(p, links)
        d = taxation_term(p, p_ref, links, gh_ref)
        target = fixed_point_power(lam[:, None], d, interference, links.own, links.weight, masks)
        change = _relative_change(target, p, budgets)
        p, _ = _ascent_step(p, target, grad)
        if change <= tol:
            break
    return p, it


def _dual_step_scale(p, lam, lam_hat, wsum, gh_ref, p_ref, links, masks):
    d = taxation_term(p, p_ref, links, gh_ref)
    price = lam[:, None] + d
    # links clipped at their mask do not respond to the multiplier
    live = links.active & (links.weight > 0) & (price > 0) & (p < masks)
    with np.errstate(divide="ignore"):
        slope = np.where(live, links.weight / (np.where(live, price, 1.0) ** 2 * LN2), 0.0).sum(1)
    fallback = np.maximum(lam, lam_hat) ** 2 * LN2 / np.where(wsum > 0, wsum, 1.0)
    return np.where(slope > 0, 1.0 / np.where(slope > 0, slope, 1.0), fallback)


def solve_convex_dual(p_ref, links: LinkGains, limits: PowerLimits, step: float = 1.0,
                      eps: float = 0.01, max_outer: int = 10_000, max_inner: int = 500):
    """Solve the surrogate around ``p_ref`` by the Lagrange dual method.

    The inner loop iterates the stationarity condition to a fixed point at
    fixed multipliers; the outer loop takes projected subgradient steps
    ``lam <- [lam + step_b / sqrt(l) * (sum_n p - P_b)]^+``. The per-BS step is
    the inverse slope of the unclipped power sum at the current multiplier and
    taxation, so ``step`` is dimensionless and ``step = 1`` starts as a Newton
    step on the budget equation.
    """
    p_ref = np.asarray(p_ref, dtype=float)
    budgets = limits.budgets
    gh_ref = grad_h(p_ref, links)
    p, masks = _start_point(p_ref, links, limits)
    interference, _ = link_state(p, links)
    with np.errstate(divide="ignore", invalid="ignore"):
        floors = np.where(links.active & (links.own > 0), interference / links.own, 0.0)
    wsum = links.weight.sum(axis=1)
    has_links = wsum > 0
    lam_hat = np.where(has_links, wsum / (LN2 * (budgets + floors.sum(axis=1))), 0.0)
    lam = lam_hat.copy()
    report = SolverReport("dual")
    for outer in range(1, max_outer + 1):
        p, k_inner = _inner_fixed_point(p, lam, gh_ref, p_ref, links, masks, budgets,
                                        eps / 10.0, max_inner)
        report.inner_iterations.append(k_inner)
        report.objective_trace.append(surrogate_objective(p, p_ref, links))
        scale = _dual_step_scale(p, lam, lam_hat, wsum, gh_ref, p_ref, links, masks)
        lam_new = np.maximum(lam + step * scale / np.sqrt(outer) * (p.sum(axis=1) - budgets), 0.0)
        converged = _lambda_converged(lam_new, lam, eps)
        lam = lam_new
        report.iterations = outer
        if converged:
            report.converged = True
            break
    # inner iterates are dual points; pull any residual budget excess back
    total = p.sum(axis=1)
    over = total > budgets
    if over.any():
        p[over] *= (budgets[over] / total[over])[:, None]
    report.lam = lam
    return p, report


INNER_SOLVERS = {
    "lowcomplexity": solve_convex_lowcomplexity,
    "dual": solve_convex_dual,
}


def convex_step(p_ref, links: LinkGains, limits: PowerLimits, inner: str = "lowcomplexity",
                eps: float = 0.01, **solver_kw):
    """One DC linearization around ``p_ref`` solved by the chosen inner solver.

    The surrogate minorizes the objective and is tight at ``p_ref``, so an
    exact solve never lowers the objective. An inexact solve can, by a little;
    in that case the step is backtracked towards ``p_ref`` (the segment stays
    feasible) and dropped if no fraction of it helps. Drops within rounding
    noise of the objective do not trigger the backtracking.
    """
    p_ref = np.asarray(p_ref, dtype=float)
    p_new, report = INNER_SOLVERS[inner](p_ref, links, limits, eps=eps, **solver_kw)
    f_ref = objective(p_ref, links)
    if objective(p_new, links) < f_ref - 1e-12 * abs(f_ref):
        report.safeguarded = True
        direction = p_new - p_ref
        for j in range(1, 31):
            cand = p_ref + 0.5**j * direction
            if objective(cand, links) >= f_ref:
                return cand, report
        return p_ref.copy(), report
    return p_new, report


def dca(links: LinkGains, limits: PowerLimits, p0=None, eps: float = 0.01,
        inner: str = "lowcomplexity", inner_eps: float | None = None, max_iter: int = 200,
        **solver_kw):
    """DC approximation loop: re-linearize and re-solve until the objective settles.

    Returns the final powers and a report whose ``objective_trace`` holds the
    true objective at the start point and after each linearization.
    """
    p = limits.uniform() if p0 is None else np.asarray(p0, dtype=float).copy()
    inner_eps = eps if inner_eps is None else inner_eps
    report = SolverReport("dca")
    f = objective(p, links)
    report.objective_trace.append(f)
    for s in range(1, max_iter + 1):
        p, step_report = convex_step(p, links, limits, inner, inner_eps, **solver_kw)
        report.inner_iterations.append(step_report.iterations)
        report.lam = step_report.lam
        report.safeguarded |= step_report.safeguarded
        f_new = objective(p, links)
        report.objective_trace.append(f_new)
        report.iterations = s
        if abs(f_new - f) <= eps * abs(f_new):
            report.converged = True
            break
        f = f_new
    return p, report


def kkt_residual(p, lam, links: LinkGains, limits: PowerLimits, p_ref=None) -> float:
    """Projected stationarity violation plus complementary-slackness violation.

    Without ``p_ref`` the conditions are those of the (nonconvex) power
    problem; with ``p_ref`` they are those of the surrogate linearized there.
    Only scheduled links are checked.
    """
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float)
    budgets = limits.budgets
    lin = p if p_ref is None else np.asarray(p_ref, dtype=float)
    grad = grad_g(p, links) - grad_h(lin, links) - lam[:, None]
    atol = 1e-12 * np.maximum(budgets, 1e-300)[:, None]
    masks = limits.masks
    at_zero = p <= atol
    at_mask = p >= masks - atol
    viol = np.abs(grad)
    viol = np.where(at_zero, np.maximum(grad, 0.0), viol)
    viol = np.where(at_mask & ~at_zero, np.maximum(-grad, 0.0), viol)
    viol = np.where(links.active, viol, 0.0)
    stationarity = float(viol.max()) if viol.size else 0.0
    slack = float(np.max(np.abs(lam * (budgets - p.sum(axis=1))))) if len(budgets) else 0.0
    return stationarity + slack
