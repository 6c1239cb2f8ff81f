"""Alternating joint optimization and proportional-fair time slotting.

:func:`optimize_joint` alternates an optimal schedule at fixed power (one
Hungarian matching per subchannel) with one DC power step at that schedule.
Both steps are ascent steps for the weighted sum-rate, so the trace is
monotone.

:func:`run_time_slots` repeats a one-shot allocator over time slots, with
UE weights set to the reciprocal of each UE's running average rate when
proportional fairness is on.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assignment import Assignment, assign_all_subchannels
from .power import (
    PowerLimits,
    SolverReport,
    convex_step,
    link_gains,
    objective,
    solve_convex_dual,
)
from .rates import per_ue_rates, validate_weights, weighted_sum_rate
from .scenario import (
    ChannelState,
    ScenarioConfig,
    generate_channels,
    generate_topology,
    redraw_ues,
)

__all__ = [
    "JointConfig",
    "OptimizerReport",
    "JointSolution",
    "optimize_joint",
    "optimization_model",
    "PF_FLOOR",
    "FairnessState",
    "pf_weights",
    "FairnessMetrics",
    "run_time_slots",
]


@dataclass(frozen=True)
class JointConfig:
    eps: float = 0.01
    max_iter: int = 50
    inner: str = "lowcomplexity"
    inner_eps: float | None = None  # defaults to eps
    receiver: str = "single"  # receiver used for scoring
    shadow_dual: bool = False  # also solve every power step with the dual method, for counts
    dual_step: float = 1.0

    def __post_init__(self):
        if self.eps <= 0 or self.max_iter < 1:
            raise ValueError("eps must be positive and max_iter at least 1")


@dataclass
class OptimizerReport:
    k_j: int = 0
    objective_trace: list[float] = field(default_factory=list)
    power_reports: list[SolverReport] = field(default_factory=list)
    dual_reports: list[SolverReport] = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0

    @property
    def monotone(self) -> bool:
        t = np.asarray(self.objective_trace)
        return bool(np.all(np.diff(t) >= -1e-9 * np.maximum(1.0, np.abs(t[1:]))))

    @property
    def k_t(self) -> float:
        its = [r.iterations for r in self.power_reports]
        return float(np.mean(its)) if its else 0.0

    @property
    def k_lambda(self) -> float:
        its = [r.iterations for r in self.dual_reports]
        return float(np.mean(its)) if its else 0.0

    @property
    def k_p(self) -> float:
        vals = [r.k_p for r in self.dual_reports]
        return float(np.mean(vals)) if vals else 0.0


@dataclass
class JointSolution:
    assignment: Assignment
    power: np.ndarray
    objective: float
    report: OptimizerReport
    receiver: str = "single"


def optimization_model(receiver: str) -> str:
    """Receiver model the optimizer works with: IRC has no DC form, so it is optimized as MRC."""
    return "single" if receiver == "single" else "mrc"


def _score(power, assignment, weights, ch, receiver):
    return weighted_sum_rate(power, assignment, weights, ch, receiver)


def optimize_joint(ch: ChannelState, weights, limits: PowerLimits,
                   config: JointConfig = JointConfig()) -> JointSolution:
    """Alternate optimal scheduling and one power step until the objective settles.

    Iteration ``i`` schedules at the powers of iteration ``i - 1`` and takes one
    DC linearization around them. ``objective_trace[0]`` is the objective at
    the uniform start with the first schedule; entry ``i`` is the objective
    after iteration ``i``. Stops when the relative change is at most ``eps``.
    """
    start = time.perf_counter()
    w = validate_weights(weights, ch.n_ues)
    model = optimization_model(config.receiver)
    inner_eps = config.eps if config.inner_eps is None else config.inner_eps
    report = OptimizerReport()

    p = limits.uniform()
    asg = assign_all_subchannels(p, ch, w, model)
    links = link_gains(asg, w, ch, model)
    f = objective(p, links)
    report.objective_trace.append(f)
    for i in range(1, config.max_iter + 1):
        if i > 1:
            cand = assign_all_subchannels(p, ch, w, model)
            cand_links = link_gains(cand, w, ch, model)
            # the matching is optimal at these powers; on ties and float noise keep the old one
            if objective(p, cand_links) > objective(p, links):
                asg, links = cand, cand_links
        if config.shadow_dual:
            _, dual_report = solve_convex_dual(p, links, limits, step=config.dual_step,
                                               eps=inner_eps)
            report.dual_reports.append(dual_report)
        p, step_report = convex_step(p, links, limits, config.inner, inner_eps)
        report.power_reports.append(step_report)
        f_new = objective(p, links)
        report.objective_trace.append(f_new)
        report.k_j = i
        if abs(f_new - f) <= config.eps * abs(f_new):
            report.converged = True
            break
        f = f_new
    report.wall_time = time.perf_counter() - start
    return JointSolution(asg, p, _score(p, asg, w, ch, config.receiver), report, config.receiver)


PF_FLOOR = 1e-6


@dataclass(frozen=True)
class FairnessState:
    """Running average rate of each UE over slots ``1 .. slot - 1``."""

    average: np.ndarray
    slot: int = 1

    def __post_init__(self):
        avg = np.asarray(self.average, dtype=float)
        if self.slot < 1:
            raise ValueError("slot index starts at 1")
        if np.any(avg < 0) or not np.all(np.isfinite(avg)):
            raise ValueError("average rates must be finite and nonnegative")
        object.__setattr__(self, "average", avg)

    @classmethod
    def initial(cls, n_ues: int) -> "FairnessState":
        return cls(np.zeros(n_ues), 1)

    def update(self, slot_rates) -> "FairnessState":
        r = np.asarray(slot_rates, dtype=float)
        avg = self.average + (r - self.average) / self.slot
        return FairnessState(avg, self.slot + 1)


def pf_weights(state: FairnessState) -> np.ndarray:
    if state.slot == 1:
        return np.ones_like(state.average)
    return 1.0 / np.maximum(state.average, PF_FLOOR)


@dataclass
class FairnessMetrics:
    """Summary of a time-slotted run.

    ``rate_variance`` is the population variance across all UEs of their
    average rate over the run; UEs never served count with rate 0.
    """

    throughput: float
    rate_variance: float
    average_rates: np.ndarray
    slot_throughput: np.ndarray
    k_j: float = 0.0


Allocator = Callable[[ChannelState, np.ndarray, PowerLimits], JointSolution]


def _slot_seed(seed: int, slot: int, stream: int) -> int:
    state = np.random.SeedSequence([seed, stream, slot]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def run_time_slots(config: ScenarioConfig, mode: str = "dynamic", n_slots: int = 100,
                   allocator: Allocator | None = None, use_pf: bool = False,
                   seed: int | None = None, receiver: str = "single") -> FairnessMetrics:
    """Allocate over ``n_slots`` slots and report throughput and rate spread.

    ``dynamic`` redraws UE positions, shadowing and fading every slot;
    ``static`` keeps the first slot's positions and shadowing and redraws
    only the fading.
    """
    if mode not in ("dynamic", "static"):
        raise ValueError(f"mode must be 'dynamic' or 'static', got {mode!r}")
    if n_slots < 1:
        raise ValueError("n_slots must be at least 1")
    seed = config.seed if seed is None else seed
    if allocator is None:
        joint_cfg = JointConfig(eps=config.tolerance, receiver=receiver)

        def allocator(ch, w, lim):
            return optimize_joint(ch, w, lim, joint_cfg)

    topology = generate_topology(config, seed)
    base = generate_channels(topology, config, seed)
    limits = PowerLimits.from_topology(topology, config.n_subchannels,
                                       config.spectral_mask_fraction)
    state = FairnessState.initial(topology.n_ues)
    slot_tp = np.empty(n_slots)
    k_j = np.zeros(n_slots)
    for t in range(n_slots):
        if t == 0:
            ch = base
        elif mode == "dynamic":
            topology = redraw_ues(topology, config, _slot_seed(seed, t, 2))
            ch = generate_channels(topology, config, _slot_seed(seed, t, 1))
        else:
            ch = generate_channels(topology, config, _slot_seed(seed, t, 1),
                                   shadowing_db=base.shadowing_db)
        w = pf_weights(state) if use_pf else np.ones(topology.n_ues)
        sol = allocator(ch, w, limits)
        rates = per_ue_rates(sol.power, sol.assignment, ch, receiver)
        slot_tp[t] = rates.sum()
        k_j[t] = sol.report.k_j
        state = state.update(rates)
    return FairnessMetrics(
        throughput=float(slot_tp.mean()),
        rate_variance=float(np.var(state.average)),
        average_rates=state.average,
        slot_throughput=slot_tp,
        k_j=float(k_j.mean()),
    )
