"""Reference allocation schemes.

* range-expansion association: every UE picks the BS with the strongest
  average received power, micros boosted by a bias;
* SFSR: that association, uniform power, greedy subchannel choice;
* IW: the same schedule with iterative water-filling power;
* SS: orthogonal macro/micro bands inside each cell, water-filling per BS;
* SCSI: the joint optimizer fed large-scale means for inter-cell links;
* a grid-plus-enumeration global optimizer for desk-sized instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .assignment import Assignment
from .joint import JointConfig, JointSolution, OptimizerReport, optimize_joint
from .power import PowerLimits, link_gains, link_state, water_filling
from .rates import link_rates, validate_weights, weighted_sum_rate
from .scenario import ChannelState

__all__ = [
    "BaselineConfig",
    "range_expansion_association",
    "association_map",
    "greedy_schedule",
    "iw_power",
    "sfsr",
    "iw",
    "spectrum_partition",
    "spectrum_splitting",
    "scsi",
    "global_opt_tiny",
]


@dataclass(frozen=True)
class BaselineConfig:
    bias: float = 6.0  # dB added to micro BSs in range expansion
    ss_micro_ratio: float = 18 / 50
    grid_levels: int = 8
    iw_eps: float = 0.01
    iw_max_rounds: int = 500

    def __post_init__(self):
        if not 0.0 <= self.ss_micro_ratio <= 1.0:
            raise ValueError("ss_micro_ratio must lie in [0, 1]")
        if self.grid_levels < 2:
            raise ValueError("grid_levels must be at least 2")
        if not math.isfinite(self.bias):
            raise ValueError("bias must be finite")


def range_expansion_association(ch: ChannelState, bias: float = 6.0,
                                allowed: np.ndarray | None = None) -> np.ndarray:
    """Serving BS of every UE, shape (K,).

    Each UE takes the BS maximizing ``P_b * mean_n gain`` in dB, plus ``bias``
    for micro BSs. ``allowed`` (B,) excludes BSs that may not serve anyone.
    Ties go to the lower BS index.
    """
    top = ch.topology
    with np.errstate(divide="ignore"):
        rx_db = 10.0 * np.log10(top.bs_power[:, None] * ch.scalar_gain.mean(axis=2))
    rx_db = rx_db + np.where(top.bs_is_macro, 0.0, bias)[:, None]
    if allowed is not None:
        rx_db = np.where(np.asarray(allowed, dtype=bool)[:, None], rx_db, -np.inf)
    return np.argmax(rx_db, axis=0)


def association_map(serving: np.ndarray, n_bs: int) -> np.ndarray:
    """u[b, k] from a serving-BS vector."""
    u = np.zeros((n_bs, len(serving)), dtype=bool)
    u[serving, np.arange(len(serving))] = True
    return u


def greedy_schedule(ch: ChannelState, weights, serving: np.ndarray, p: np.ndarray,
                    receiver: str = "single") -> Assignment:
    """On every subchannel with power, each BS serves its associated UE with the largest ``w * R``."""
    w = validate_weights(weights, ch.n_ues)
    score = w[None, :, None] * link_rates(p, ch, receiver)  # (B, K, N)
    own = association_map(serving, ch.n_bs)
    score = np.where(own[:, :, None], score, -1.0)
    best = np.argmax(score, axis=1)  # lowest index on ties
    usable = own.any(axis=1)[:, None] & (p > 0)
    return Assignment(np.where(usable, best, -1), ch.n_ues)


def _restrict(limits: PowerLimits, assignment: Assignment) -> np.ndarray:
    return np.where(assignment.active, limits.masks, 0.0)


def _uniform_on_active(limits: PowerLimits, assignment: Assignment) -> np.ndarray:
    """Budget spread evenly over the subchannels each BS actually uses."""
    act = assignment.active
    count = act.sum(axis=1, keepdims=True)
    share = limits.budgets[:, None] / np.maximum(count, 1)
    return np.where(act, np.minimum(share, limits.masks), 0.0)


def iw_power(links, limits: PowerLimits, eps: float = 0.01, max_rounds: int = 500):
    """Iterative water-filling for a fixed schedule.

    Starting from uniform power on the scheduled subchannels, BSs water-fill
    one after another against the current interference plus noise, until no
    power moves by more than ``eps`` relative (to the BS budget).

    Returns
    -------
    p : (B, N) ndarray
    rounds : int
    converged : bool
    """
    act = links.active
    masks = np.where(act, limits.masks, 0.0)
    count = act.sum(axis=1, keepdims=True)
    p = np.where(act, np.minimum(limits.budgets[:, None] / np.maximum(count, 1), masks), 0.0)
    scale = np.where(limits.budgets > 0, limits.budgets, 1.0)[:, None]
    for rounds in range(1, max_rounds + 1):
        before = p.copy()
        for b in range(links.n_bs):
            if not act[b].any():
                continue
            interference, _ = link_state(p, links)
            cols = act[b]
            p[b] = 0.0
            p[b, cols] = water_filling(links.own[b, cols], interference[b, cols],
                                       limits.budgets[b], masks[b, cols])
        if np.max(np.abs(p - before) / scale) <= eps:
            return p, rounds, True
    return p, max_rounds, False


def _solution(p, asg, w, ch, receiver, report=None) -> JointSolution:
    return JointSolution(asg, p, weighted_sum_rate(p, asg, w, ch, receiver),
                         report or OptimizerReport(), receiver)


def sfsr(ch: ChannelState, weights, limits: PowerLimits, config: BaselineConfig = BaselineConfig(),
         receiver: str = "single") -> JointSolution:
    """Static full spectral reuse: biased association, uniform ``P_b / N`` power, greedy subchannels.

    A BS with no associated UE stays silent.
    """
    w = validate_weights(weights, ch.n_ues)
    serving = range_expansion_association(ch, config.bias)
    serves = association_map(serving, ch.n_bs).any(axis=1)
    p = np.where(serves[:, None], limits.uniform(), 0.0)
    asg = greedy_schedule(ch, w, serving, p, receiver)
    return _solution(p, asg, w, ch, receiver)


def iw(ch: ChannelState, weights, limits: PowerLimits, config: BaselineConfig = BaselineConfig(),
       receiver: str = "single") -> JointSolution:
    """SFSR's association and schedule with iterative water-filling power."""
    w = validate_weights(weights, ch.n_ues)
    base = sfsr(ch, w, limits, config, receiver)
    links = link_gains(base.assignment, w, ch, "single" if receiver == "single" else "mrc")
    p, rounds, converged = iw_power(links, limits, config.iw_eps, config.iw_max_rounds)
    report = OptimizerReport(k_j=rounds, converged=converged)
    return _solution(p, base.assignment, w, ch, receiver, report)


def spectrum_partition(n_subchannels: int, n_bs_per_cell: int, micro_ratio: float) -> np.ndarray:
    """Subchannels each BS of a cell may use, shape (n_bs_per_cell, N), macro first.

    The macro keeps ``ceil((1 - ratio) N)`` subchannels; the rest are split
    evenly among the micros and any remainder returns to the macro.
    """
    n_micro = n_bs_per_cell - 1
    n_macro = math.ceil((1.0 - micro_ratio) * n_subchannels - 1e-9) if n_micro else n_subchannels
    n_macro = min(max(n_macro, 0), n_subchannels)
    rest = n_subchannels - n_macro
    each = rest // n_micro if n_micro else 0
    n_macro += rest - each * n_micro
    allowed = np.zeros((n_bs_per_cell, n_subchannels), dtype=bool)
    allowed[0, :n_macro] = True
    start = n_macro
    for j in range(1, n_bs_per_cell):
        allowed[j, start:start + each] = True
        start += each
    return allowed


def spectrum_splitting(ch: ChannelState, weights, limits: PowerLimits,
                       config: BaselineConfig = BaselineConfig(), ratio: float | None = None,
                       receiver: str = "single") -> JointSolution:
    """Orthogonal bands within each cell (same partition in every cell).

    UEs associate by range expansion among BSs that own at least one
    subchannel; each BS schedules greedily at uniform power on its band and
    then water-fills its scheduled subchannels against noise.
    """
    w = validate_weights(weights, ch.n_ues)
    ratio = config.ss_micro_ratio if ratio is None else ratio
    top = ch.topology
    part = spectrum_partition(ch.n_subchannels, top.n_bs_per_cell, ratio)
    allowed = part[np.arange(ch.n_bs) % top.n_bs_per_cell]  # (B, N)
    serving = range_expansion_association(ch, config.bias, allowed.any(axis=1))
    n_own = allowed.sum(axis=1, keepdims=True)
    serves = association_map(serving, ch.n_bs).any(axis=1)[:, None]
    p_uniform = np.where(allowed & serves,
                         np.minimum(limits.budgets[:, None] / np.maximum(n_own, 1), limits.masks),
                         0.0)
    asg = greedy_schedule(ch, w, serving, p_uniform, receiver)
    links = link_gains(asg, w, ch, "single" if receiver == "single" else "mrc")
    p = np.zeros_like(p_uniform)
    for b in range(ch.n_bs):
        cols = asg.active[b]
        if cols.any():
            p[b, cols] = water_filling(links.own[b, cols], ch.noise_power, limits.budgets[b],
                                       limits.masks[b, cols])
    return _solution(p, asg, w, ch, receiver)


def scsi(ch: ChannelState, weights, limits: PowerLimits, config: JointConfig = JointConfig()
         ) -> JointSolution:
    """Joint optimization when only large-scale statistics of inter-cell links are known.

    The allocation is computed on the statistical channel and scored on the
    true one.
    """
    w = validate_weights(weights, ch.n_ues)
    sol = optimize_joint(ch.statistical_intercell(), w, limits, config)
    return _solution(sol.power, sol.assignment, w, ch, config.receiver, sol.report)


# ---------------------------------------------------------------- tiny oracle

_TINY_LIMITS = {"n_bs": 2, "n_ues": 3, "n_subchannels": 3, "grid_levels": 16}


def _matchings(n_bs: int, n_ues: int):
    """Every partial matching as a tuple of UE indices per BS (-1 = idle)."""
    for choice in itertools.product(range(-1, n_ues), repeat=n_bs):
        served = [k for k in choice if k >= 0]
        if len(served) == len(set(served)):
            yield choice


def _subchannel_tables(ch, w, n, levels):
    """Best matching value and its index for every combination of per-BS power levels.

    ``levels`` is (B, L); the tables have shape (L,) * B.
    """
    B, L = levels.shape
    gain = ch.scalar_gain[:, :, n]  # (B, K)
    grids = np.meshgrid(*levels, indexing="ij")  # B arrays of shape (L,)*B
    matchings = list(_matchings(B, ch.n_ues))
    values = np.zeros((len(matchings),) + (L,) * B)
    for m, choice in enumerate(matchings):
        for b, k in enumerate(choice):
            if k < 0:
                continue
            signal = grids[b] * gain[b, k]
            interference = sum(grids[c] * gain[c, k] for c in range(B) if c != b)
            values[m] += w[k] * np.log2(1.0 + signal / (interference + ch.noise_power))
    best = values.argmax(axis=0)
    return values.max(axis=0), best, matchings


def _feasible_vectors(levels_b, budget, n_sub, tol):
    """Index vectors (M, N) over a BS's per-subchannel level sets with total power within budget."""
    L = levels_b.shape[1]
    idx = np.array(list(itertools.product(range(L), repeat=n_sub)), dtype=int).reshape(-1, n_sub)
    total = levels_b[np.arange(n_sub)[None, :], idx].sum(axis=1)
    return idx[total <= budget * (1 + tol) + tol]


def _search(ch, w, level_sets, budgets, chunk=4096):
    """Exhaustive maximum over the product of per-BS feasible level vectors.

    ``level_sets`` is (B, N, L): the candidate powers of BS ``b`` on subchannel ``n``.
    """
    B, N, L = level_sets.shape
    tables, argbest, matchings = [], [], None
    for n in range(N):
        v, a, matchings = _subchannel_tables(ch, w, n, level_sets[:, n, :])
        tables.append(v)
        argbest.append(a)
    feasible = [_feasible_vectors(level_sets[b], budgets[b], N, 1e-12) for b in range(B)]
    best_val, best_idx = -np.inf, None
    if B == 1:
        total = sum(tables[n][feasible[0][:, n]] for n in range(N))
        i = int(np.argmax(total))
        best_val, best_idx = float(total[i]), (feasible[0][i],)
    else:
        f0, f1 = feasible
        for start in range(0, len(f0), chunk):
            block = f0[start:start + chunk]
            total = sum(tables[n][block[:, n][:, None], f1[:, n][None, :]] for n in range(N))
            flat = int(np.argmax(total))
            i, j = divmod(flat, total.shape[1])
            if total[i, j] > best_val:
                best_val, best_idx = float(total[i, j]), (block[i], f1[j])
    p = np.stack([level_sets[b, np.arange(N), best_idx[b]] for b in range(B)])
    kstar = np.full((B, N), -1, dtype=int)
    for n in range(N):
        m = argbest[n][tuple(best_idx[b][n] for b in range(B))]
        kstar[:, n] = matchings[m]
    return p, Assignment(kstar, ch.n_ues), best_val


def global_opt_tiny(ch: ChannelState, weights, limits: PowerLimits, grid_levels: int = 8,
                    refine_points: int = 9) -> JointSolution:
    """Exhaustive joint optimum over a power grid, refined once around the incumbent.

    Every BS's powers range over ``grid_levels`` equally spaced levels from 0 to
    its budget (capped by the mask), subject to the total budget; for each
    power point the schedule is the best matching per subchannel, found by
    enumeration. A second pass searches a finer lattice of ``refine_points``
    levels per subchannel spanning one coarse step either side of the best
    point. Single-antenna scoring.
    """
    w = validate_weights(weights, ch.n_ues)
    B, K, N = ch.n_bs, ch.n_ues, ch.n_subchannels
    if (B > _TINY_LIMITS["n_bs"] or K > _TINY_LIMITS["n_ues"] or N > _TINY_LIMITS["n_subchannels"]
            or not 2 <= grid_levels <= _TINY_LIMITS["grid_levels"]):
        raise ValueError(f"global_opt_tiny is limited to {_TINY_LIMITS}; got B={B}, K={K}, "
                         f"N={N}, grid_levels={grid_levels}")
    budgets, masks = limits.budgets, limits.masks
    step = budgets / (grid_levels - 1)
    coarse = np.minimum(step[:, None, None] * np.arange(grid_levels)[None, None, :],
                        masks[:, :, None])
    p, asg, val = _search(ch, w, coarse, budgets)
    if refine_points >= 2:
        half = (refine_points - 1) // 2
        offsets = np.arange(-half, half + 1) * (step / max(half, 1))[:, None]  # (B, R)
        fine = np.clip(p[:, :, None] + offsets[:, None, :], 0.0, masks[:, :, None])
        p_f, asg_f, val_f = _search(ch, w, fine, budgets)
        if val_f >= val:
            p, asg = p_f, asg_f
    return _solution(p, asg, w, ch, "single")
