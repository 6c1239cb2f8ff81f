"""Small-instance self checks behind ``hetnet-alloc oracle-check``.

Each suite compares a production routine against an independent route on
random desk-sized instances and returns ``{"passed": bool, "detail": str}``.
"""

from __future__ import annotations

import numpy as np

from .assignment import assign_all_subchannels, brute_force_mwbm, matching_value, solve_mwbm
from .power import (
    PowerLimits,
    dc_objective_parts,
    grad_g,
    grad_h,
    kkt_residual,
    link_gains,
    link_state,
    solve_convex_dual,
    solve_convex_lowcomplexity,
    surrogate_objective,
    water_filling,
)
from .scenario import ScenarioConfig, generate_channels, generate_topology


def random_instance(seed: int, n_cells=2, n_bs_per_cell=2, n_ues_per_cell=3, n_subchannels=3):
    """Channels, schedule at uniform power and the scheduled-link gains."""
    cfg = ScenarioConfig(n_cells=n_cells, n_bs_per_cell=n_bs_per_cell,
                         n_ues_per_cell=n_ues_per_cell, n_subchannels=n_subchannels)
    top = generate_topology(cfg, seed)
    ch = generate_channels(top, cfg, seed)
    limits = PowerLimits.from_topology(top, n_subchannels)
    w = np.ones(ch.n_ues)
    asg = assign_all_subchannels(limits.uniform(), ch, w)
    return ch, limits, link_gains(asg, w, ch)


def fd_gradients(p, links, rel_step=1e-4):
    """Central differences of both DC parts.

    The step of component ``(c, n)`` is ``rel_step`` times the smallest
    ``T / gain`` (or ``I / cross`` for the second part) over the links that
    component reaches, i.e. the scale on which the logarithms curve.
    """
    interference, total = link_state(p, links)
    B, N = p.shape
    out_g = np.zeros_like(p)
    out_h = np.zeros_like(p)
    for c in range(B):
        for n in range(N):
            for which, mat, level, out in ((0, links.gain, total, out_g),
                                           (1, links.cross, interference, out_h)):
                g = mat[:, c, n]
                hit = links.active[:, n] & (g > 0)
                if not hit.any():
                    continue
                step = rel_step * np.min(level[hit, n] / g[hit])
                up, dn = p.copy(), p.copy()
                up[c, n] += step
                dn[c, n] -= step
                with np.errstate(invalid="ignore"):  # only part `which` is used
                    out[c, n] = (dc_objective_parts(up, links)[which]
                                 - dc_objective_parts(dn, links)[which]) / (2 * step)
    return out_g, out_h


def _suite_assignment(rng, n):
    worst = 0.0
    for _ in range(n):
        rows, cols = rng.integers(1, 5, size=2)
        w = rng.exponential(size=(rows, cols)) * (rng.random((rows, cols)) > 0.2)
        worst = max(worst, abs(matching_value(w, solve_mwbm(w))
                               - matching_value(w, brute_force_mwbm(w))))
    return {"passed": worst <= 1e-9, "detail": f"max |hungarian - enumeration| = {worst:.2e}"}


def _suite_gradient(seed, n):
    worst = 0.0
    for s in range(n):
        ch, limits, links = random_instance(seed + s)
        rng = np.random.default_rng(seed + s)
        p = limits.uniform() * rng.uniform(0.1, 1.0, size=limits.masks.shape)
        fd_g, fd_h = fd_gradients(p, links)
        for an, fd in ((grad_g(p, links), fd_g), (grad_h(p, links), fd_h)):
            scale = np.maximum(np.abs(fd), 1e-300)
            worst = max(worst, float(np.max(np.where(fd != 0, np.abs(an - fd) / scale,
                                                     np.abs(an)))))
    return {"passed": worst <= 1e-5, "detail": f"max relative error = {worst:.2e}"}


def _suite_water_filling(seed, n):
    worst = 0.0
    for s in range(n):
        ch, limits, links = random_instance(seed + s, n_cells=1, n_bs_per_cell=1,
                                            n_ues_per_cell=3, n_subchannels=4)
        cols = links.active[0]
        ref = np.zeros_like(limits.masks)
        ref[0, cols] = water_filling(links.own[0, cols], links.noise, limits.budgets[0],
                                     limits.masks[0, cols])
        for solver in (solve_convex_lowcomplexity, solve_convex_dual):
            p, _ = solver(limits.uniform(), links, limits, eps=1e-8)
            worst = max(worst, float(np.max(np.abs(p - ref))))
    return {"passed": worst <= 1e-6, "detail": f"max |p - water-filling| = {worst:.2e} W"}


def _suite_kkt_and_equivalence(seed, n):
    worst_kkt, worst_gap, feasible = 0.0, 0.0, True
    for s in range(n):
        ch, limits, links = random_instance(seed + s, n_ues_per_cell=4, n_subchannels=4)
        p_ref = limits.uniform()
        p3, r3 = solve_convex_lowcomplexity(p_ref, links, limits, eps=1e-6)
        p2, _ = solve_convex_dual(p_ref, links, limits, eps=1e-6)
        feasible &= limits.is_feasible(p3) and limits.is_feasible(p2)
        worst_kkt = max(worst_kkt, kkt_residual(p3, r3.lam, links, limits, p_ref))
        f3 = surrogate_objective(p3, p_ref, links)
        f2 = surrogate_objective(p2, p_ref, links)
        worst_gap = max(worst_gap, abs(f3 - f2) / max(abs(f3), 1e-300))
    passed = feasible and worst_kkt <= 1e-4 and worst_gap <= 1e-4
    return {"passed": bool(passed),
            "detail": f"max KKT residual = {worst_kkt:.2e}, max solver gap = {worst_gap:.2e}, "
                      f"feasible = {feasible}"}


def run_oracle_suites(seed: int = 0, n: int = 20) -> dict:
    rng = np.random.default_rng(seed)
    return {
        "assignment": _suite_assignment(rng, 10 * n),
        "gradient": _suite_gradient(seed, n),
        "water_filling": _suite_water_filling(seed, n),
        "kkt_and_solver_equivalence": _suite_kkt_and_equivalence(seed, n),
    }
