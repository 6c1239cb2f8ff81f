"""Seeded Monte-Carlo experiment runner.

An experiment is described by a YAML file with four sections::

    scenario:     # any ScenarioConfig field
      n_ues_per_cell: 30
    experiment:
      algorithms: [alg4, iw, sfsr]
      sweep: {var: n_ues_per_cell, values: [10, 30, 50]}
      drops: 50
      seed: 0                 # master seed
      receiver: single        # single | mrc | irc, or a list of them
      mode: single_shot       # or time_slotted
      time_slotted: {scenario: dynamic, slots: 100}
      eps: 0.01
    baselines:    # any BaselineConfig field
      bias: 6.0
    output:
      dir: results

Every (sweep value, drop) pair gets its own seed derived by hashing, so
adding drops or sweep points never changes existing ones. Results are
aggregated in a fixed order, which makes the files independent of
``parallel``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .baselines import BaselineConfig, global_opt_tiny, iw, scsi, sfsr, spectrum_splitting
from .joint import JointConfig, JointSolution, optimize_joint, run_time_slots
from .power import PowerLimits
from .rates import per_ue_rates
from .scenario import ScenarioConfig, generate_channels, generate_topology

__all__ = [
    "ALGORITHMS",
    "RECEIVERS",
    "CSV_COLUMNS",
    "DROP_COLUMNS",
    "ITERATION_COLUMNS",
    "ConfigError",
    "ExperimentSpec",
    "MetricsRow",
    "load_spec",
    "parse_spec",
    "spec_from_manifest",
    "drop_seed",
    "run_drop",
    "run_experiment",
    "emit_iteration_table",
]

ALGORITHMS = ("alg4", "alg4_pf", "alg4_dual_inner", "sfsr", "ss", "iw", "scsi", "global_tiny")
RECEIVERS = ("single", "mrc", "irc")
MODES = ("single_shot", "time_slotted")
SLOT_SCENARIOS = ("dynamic", "static")

CSV_COLUMNS = ("sweep_var", "sweep_value", "algorithm", "receiver", "mean_throughput", "ci95",
               "rate_variance", "k_j", "k_t", "k_lambda", "k_p", "wall_ms")
DROP_COLUMNS = ("sweep_var", "sweep_value", "algorithm", "receiver", "drop", "seed",
                "throughput", "rate_variance", "k_j", "k_t", "k_lambda", "k_p", "wall_ms")
ITERATION_COLUMNS = ("sweep_var", "sweep_value", "drops", "k_t", "k_lambda", "k_p",
                     "ratio")

_SCENARIO_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_BASELINE_FIELDS = {f.name: f for f in dataclasses.fields(BaselineConfig)}
_EXPERIMENT_KEYS = {"algorithms", "sweep", "drops", "seed", "receiver", "mode", "time_slotted",
                    "eps", "inner_eps", "shadow_dual", "dual_step"}
_OUTPUT_KEYS = {"dir", "csv", "drops_csv", "manifest", "iterations_csv"}


class ConfigError(ValueError):
    """Invalid experiment configuration, with the offending location when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 path: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.path = path
        where = f"line {line}, column {column}: " if line is not None else ""
        at = f" (at {path})" if path else ""
        super().__init__(f"{where}{message}{at}")

    def to_dict(self) -> dict:
        return {"error": "config", "message": self.message, "line": self.line,
                "column": self.column, "path": self.path}


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioConfig = ScenarioConfig()
    algorithms: tuple[str, ...] = ("alg4",)
    sweep_var: str = "n_ues_per_cell"
    sweep_values: tuple = (30,)
    drops: int = 1
    seed: int = 0
    receivers: tuple[str, ...] = ("single",)
    mode: str = "single_shot"
    slot_scenario: str = "dynamic"
    n_slots: int = 100
    eps: float = 0.01
    inner_eps: float | None = None
    shadow_dual: bool = False
    dual_step: float = 1.0
    baselines: BaselineConfig = BaselineConfig()
    output: dict = field(default_factory=lambda: {
        "dir": "results", "csv": "metrics.csv", "drops_csv": "drops.csv",
        "manifest": "manifest.json", "iterations_csv": "iterations.csv"})

    def __post_init__(self):
        if self.drops < 1:
            raise ConfigError("drops must be at least 1", path="experiment.drops")
        if not self.sweep_values:
            raise ConfigError("sweep values must be nonempty", path="experiment.sweep.values")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required", path="experiment.algorithms")

    def to_dict(self) -> dict:
        """Nested dict in the YAML layout; ``parse_spec`` inverts it."""
        return {
            "scenario": self.scenario.to_dict(),
            "experiment": {
                "algorithms": list(self.algorithms),
                "sweep": {"var": self.sweep_var, "values": list(self.sweep_values)},
                "drops": self.drops,
                "seed": self.seed,
                "receiver": list(self.receivers),
                "mode": self.mode,
                "time_slotted": {"scenario": self.slot_scenario, "slots": self.n_slots},
                "eps": self.eps,
                "inner_eps": self.inner_eps,
                "shadow_dual": self.shadow_dual,
                "dual_step": self.dual_step,
            },
            "baselines": dataclasses.asdict(self.baselines),
            "output": dict(self.output),
        }

    def config_for(self, value) -> tuple[ScenarioConfig, BaselineConfig]:
        """Scenario and baseline settings at one sweep point."""
        if self.sweep_var in _SCENARIO_FIELDS:
            return self.scenario.replace(**{self.sweep_var: value}), self.baselines
        return self.scenario, dataclasses.replace(self.baselines, **{self.sweep_var: value})


@dataclass(frozen=True)
class MetricsRow:
    sweep_var: str
    sweep_value: object
    algorithm: str
    receiver: str
    mean_throughput: float
    ci95: float
    rate_variance: float
    k_j: float
    k_t: float
    k_lambda: float
    k_p: float
    wall_ms: float

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


# ---------------------------------------------------------------- parsing

def _mark_of(node, path: tuple):
    """Start mark of the YAML node at ``path`` (keys and list indices), or the deepest found."""
    mark = node.start_mark if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    mark, node = k.start_mark, v
                    break
            else:
                return mark
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            mark = node.start_mark
        else:
            return mark
    return mark


class _Locator:
    def __init__(self, root):
        self.root = root

    def error(self, message: str, *path) -> ConfigError:
        mark = _mark_of(self.root, path) if self.root is not None else None
        dotted = ".".join(str(p) for p in path) or None
        if mark is None:
            return ConfigError(message, path=dotted)
        return ConfigError(message, mark.line + 1, mark.column + 1, dotted)


def _convert(value, f: dataclasses.Field, loc: _Locator, *path):
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind == "float":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
    except (TypeError, ValueError):
        raise loc.error(f"{f.name} must be a {kind}, got {value!r}", *path) from None
    return value


def _section(data: dict, name: str, loc: _Locator) -> dict:
    sec = data.get(name) or {}
    if not isinstance(sec, dict):
        raise loc.error(f"section '{name}' must be a mapping", name)
    return sec


def _check_keys(sec: dict, allowed, loc: _Locator, name: str):
    for key in sec:
        if key not in allowed:
            raise loc.error(f"unknown key '{key}' in section '{name}'", name, key)


def parse_spec(data, root_node=None) -> ExperimentSpec:
    """Validate a nested dict (YAML layout) and build an ExperimentSpec."""
    loc = _Locator(root_node)
    if not isinstance(data, dict):
        raise loc.error("configuration must be a mapping")
    _check_keys(data, {"scenario", "experiment", "baselines", "output"}, loc, "top level")
    scen = _section(data, "scenario", loc)
    _check_keys(scen, _SCENARIO_FIELDS, loc, "scenario")
    try:
        scenario = ScenarioConfig(**{k: _convert(v, _SCENARIO_FIELDS[k], loc, "scenario", k)
                                     for k, v in scen.items()})
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise loc.error(str(exc), "scenario") from None

    base = _section(data, "baselines", loc)
    _check_keys(base, _BASELINE_FIELDS, loc, "baselines")
    try:
        baselines = BaselineConfig(**{k: _convert(v, _BASELINE_FIELDS[k], loc, "baselines", k)
                                      for k, v in base.items()})
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise loc.error(str(exc), "baselines") from None

    exp = _section(data, "experiment", loc)
    _check_keys(exp, _EXPERIMENT_KEYS, loc, "experiment")
    kw = {}
    algorithms = exp.get("algorithms", ["alg4"])
    if isinstance(algorithms, str):
        algorithms = [algorithms]
    if not isinstance(algorithms, list) or not algorithms:
        raise loc.error("algorithms must be a nonempty list", "experiment", "algorithms")
    for i, a in enumerate(algorithms):
        if a not in ALGORITHMS:
            raise loc.error(f"unknown algorithm {a!r}; choose from {list(ALGORITHMS)}",
                            "experiment", "algorithms", i)
    kw["algorithms"] = tuple(algorithms)

    sweep = exp.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or set(sweep) - {"var", "values"}:
            raise loc.error("sweep must be a mapping with keys 'var' and 'values'",
                            "experiment", "sweep")
        var = sweep.get("var", "n_ues_per_cell")
        fields = _SCENARIO_FIELDS if var in _SCENARIO_FIELDS else _BASELINE_FIELDS
        if var not in fields:
            raise loc.error(f"sweep variable {var!r} is not a scenario or baselines field",
                            "experiment", "sweep", "var")
        values = sweep.get("values")
        if not isinstance(values, list) or not values:
            raise loc.error("sweep values must be a nonempty list", "experiment", "sweep",
                            "values")
        values = [_convert(v, fields[var], loc, "experiment", "sweep", "values", i)
                  for i, v in enumerate(values)]
        for v in values:
            try:
                if fields is _SCENARIO_FIELDS:
                    scenario.replace(**{var: v})
                else:
                    dataclasses.replace(baselines, **{var: v})
            except ValueError as exc:
                raise loc.error(f"invalid sweep value {v!r}: {exc}", "experiment", "sweep",
                                "values") from None
        kw["sweep_var"], kw["sweep_values"] = var, tuple(values)
    else:
        kw["sweep_values"] = (scenario.n_ues_per_cell,)

    drops = exp.get("drops", 1)
    if isinstance(drops, bool) or not isinstance(drops, int) or drops < 1:
        raise loc.error("drops must be an integer >= 1", "experiment", "drops")
    kw["drops"] = drops
    seed = exp.get("seed", scenario.seed)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise loc.error("seed must be a nonnegative integer", "experiment", "seed")
    kw["seed"] = seed

    receivers = exp.get("receiver", "single")
    receivers = [receivers] if isinstance(receivers, str) else receivers
    if not isinstance(receivers, list) or not receivers:
        raise loc.error("receiver must be a name or a nonempty list", "experiment", "receiver")
    for i, r in enumerate(receivers):
        if r not in RECEIVERS:
            raise loc.error(f"unknown receiver {r!r}; choose from {list(RECEIVERS)}",
                            "experiment", "receiver")
    kw["receivers"] = tuple(receivers)

    mode = exp.get("mode", "single_shot")
    if mode not in MODES:
        raise loc.error(f"mode must be one of {list(MODES)}", "experiment", "mode")
    kw["mode"] = mode
    slotted = exp.get("time_slotted") or {}
    if not isinstance(slotted, dict) or set(slotted) - {"scenario", "slots"}:
        raise loc.error("time_slotted must be a mapping with keys 'scenario' and 'slots'",
                        "experiment", "time_slotted")
    kw["slot_scenario"] = slotted.get("scenario", "dynamic")
    if kw["slot_scenario"] not in SLOT_SCENARIOS:
        raise loc.error(f"time_slotted scenario must be one of {list(SLOT_SCENARIOS)}",
                        "experiment", "time_slotted", "scenario")
    slots = slotted.get("slots", 100)
    if isinstance(slots, bool) or not isinstance(slots, int) or slots < 1:
        raise loc.error("slots must be an integer >= 1", "experiment", "time_slotted", "slots")
    kw["n_slots"] = slots
    if "alg4_pf" in kw["algorithms"] and mode != "time_slotted":
        raise loc.error("alg4_pf needs mode: time_slotted", "experiment", "algorithms")

    for key in ("eps", "dual_step"):
        if key in exp:
            v = exp[key]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise loc.error(f"{key} must be a positive number", "experiment", key)
            kw[key] = float(v)
    if exp.get("inner_eps") is not None:
        v = exp["inner_eps"]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise loc.error("inner_eps must be a positive number", "experiment", "inner_eps")
        kw["inner_eps"] = float(v)
    if "shadow_dual" in exp:
        if not isinstance(exp["shadow_dual"], bool):
            raise loc.error("shadow_dual must be true or false", "experiment", "shadow_dual")
        kw["shadow_dual"] = exp["shadow_dual"]

    out = _section(data, "output", loc)
    _check_keys(out, _OUTPUT_KEYS, loc, "output")
    output = dict(ExperimentSpec().output)
    for k, v in out.items():
        if not isinstance(v, str) or not v:
            raise loc.error(f"output.{k} must be a nonempty string", "output", k)
        output[k] = v
    kw["output"] = output
    return ExperimentSpec(scenario=scenario, baselines=baselines, **kw)


def load_spec(path) -> ExperimentSpec:
    """Read and validate a YAML experiment file; errors carry line and column."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config: {exc}") from None
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        problem = getattr(exc, "problem", None) or str(exc)
        if mark is not None:
            raise ConfigError(f"YAML syntax error: {problem}", mark.line + 1,
                              mark.column + 1) from None
        raise ConfigError(f"YAML syntax error: {problem}") from None
    return parse_spec(data if data is not None else {}, root)


def spec_from_manifest(path) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read manifest: {exc}") from None
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest is not valid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if "spec" not in manifest:
        raise ConfigError("manifest has no 'spec' entry")
    return parse_spec(manifest["spec"])


# ---------------------------------------------------------------- running

def drop_seed(master: int, var: str, value, drop: int) -> int:
    """Seed of one drop: a hash of the master seed, the sweep point and the drop index."""
    digest = hashlib.sha256(f"{master}:{var}:{value!r}:{drop}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _joint_config(spec: ExperimentSpec, receiver: str, inner: str = "lowcomplexity",
                  shadow_dual: bool = False) -> JointConfig:
    return JointConfig(eps=spec.eps, inner=inner, inner_eps=spec.inner_eps, receiver=receiver,
                       shadow_dual=shadow_dual, dual_step=spec.dual_step)


def _allocator(name: str, spec: ExperimentSpec, baselines: BaselineConfig, receiver: str):
    if name in ("alg4", "alg4_pf"):
        cfg = _joint_config(spec, receiver, shadow_dual=spec.shadow_dual)
        return lambda ch, w, lim: optimize_joint(ch, w, lim, cfg)
    if name == "alg4_dual_inner":
        cfg = _joint_config(spec, receiver, inner="dual")
        return lambda ch, w, lim: optimize_joint(ch, w, lim, cfg)
    if name == "scsi":
        cfg = _joint_config(spec, receiver)
        return lambda ch, w, lim: scsi(ch, w, lim, cfg)
    if name == "sfsr":
        return lambda ch, w, lim: sfsr(ch, w, lim, baselines, receiver)
    if name == "iw":
        return lambda ch, w, lim: iw(ch, w, lim, baselines, receiver)
    if name == "ss":
        return lambda ch, w, lim: spectrum_splitting(ch, w, lim, baselines, receiver=receiver)
    if name == "global_tiny":
        return lambda ch, w, lim: global_opt_tiny(ch, w, lim, baselines.grid_levels)
    raise ValueError(f"unknown algorithm {name!r}")


def _iteration_counts(name: str, sol: JointSolution) -> tuple[float, float, float, float]:
    """(K_J, K_T, K_lambda, K_P) of a solution; zeros where a count does not apply."""
    if name not in ("alg4", "alg4_pf", "alg4_dual_inner", "scsi"):
        return 0.0, 0.0, 0.0, 0.0
    rep = sol.report
    if name == "alg4_dual_inner":
        its = [r.iterations for r in rep.power_reports]
        k_lam = float(np.mean(its)) if its else 0.0
        k_p = float(np.mean([r.k_p for r in rep.power_reports])) if its else 0.0
        return float(rep.k_j), 0.0, k_lam, k_p
    return float(rep.k_j), rep.k_t, rep.k_lambda, rep.k_p


def run_drop(spec: ExperimentSpec, value, drop: int, timing: bool = False) -> list[dict]:
    """Run every algorithm and receiver on one drop. Returns one record per pair."""
    config, baselines = spec.config_for(value)
    seed = drop_seed(spec.seed, spec.sweep_var, value, drop)
    config = config.replace(seed=seed % 2**63)
    records = []
    if spec.mode == "single_shot":
        topology = generate_topology(config, seed)
        ch = generate_channels(topology, config, seed)
        limits = PowerLimits.from_topology(topology, config.n_subchannels,
                                           config.spectral_mask_fraction)
        w = np.ones(ch.n_ues)
    for receiver in spec.receivers:
        for name in spec.algorithms:
            alloc = _allocator(name, spec, baselines, receiver)
            start = time.perf_counter()
            if spec.mode == "single_shot":
                sol = alloc(ch, w, limits)
                rates = per_ue_rates(sol.power, sol.assignment, ch, receiver)
                tp, var = float(rates.sum()), float(np.var(rates))
                k_j, k_t, k_lam, k_p = _iteration_counts(name, sol)
            else:
                metrics = run_time_slots(config, spec.slot_scenario, spec.n_slots, alloc,
                                         use_pf=(name == "alg4_pf"), seed=seed,
                                         receiver=receiver)
                tp, var = metrics.throughput, metrics.rate_variance
                k_j = metrics.k_j if name in ("alg4", "alg4_pf", "alg4_dual_inner", "scsi") else 0.0
                k_t = k_lam = k_p = 0.0
            wall = (time.perf_counter() - start) * 1e3 if timing else 0.0
            records.append({
                "sweep_var": spec.sweep_var, "sweep_value": value, "algorithm": name,
                "receiver": receiver, "drop": drop, "seed": seed, "throughput": tp,
                "rate_variance": var, "k_j": k_j, "k_t": k_t, "k_lambda": k_lam, "k_p": k_p,
                "wall_ms": wall,
            })
    return records


def _run_task(args):
    spec, value, drop, timing = args
    return run_drop(spec, value, drop, timing)


def _collect(spec: ExperimentSpec, parallel: int, timing: bool) -> list[dict]:
    tasks = [(spec, v, d, timing) for v in spec.sweep_values for d in range(spec.drops)]
    if parallel > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    v_index = {v: i for i, v in enumerate(spec.sweep_values)}
    a_index = {a: i for i, a in enumerate(spec.algorithms)}
    r_index = {r: i for i, r in enumerate(spec.receivers)}
    records.sort(key=lambda r: (v_index[r["sweep_value"]], a_index[r["algorithm"]],
                                r_index[r["receiver"]], r["drop"]))
    return records


def _aggregate(spec: ExperimentSpec, records: list[dict]) -> list[MetricsRow]:
    rows = []
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        groups.setdefault((r["sweep_value"], r["algorithm"], r["receiver"]), []).append(r)
    for (value, name, receiver), recs in groups.items():
        tp = np.array([r["throughput"] for r in recs])
        ci = 1.96 * float(np.std(tp, ddof=1)) / math.sqrt(len(tp)) if len(tp) > 1 else 0.0

        def mean(key):
            return float(np.mean([r[key] for r in recs]))

        rows.append(MetricsRow(spec.sweep_var, value, name, receiver, float(tp.mean()), ci,
                               mean("rate_variance"), mean("k_j"), mean("k_t"),
                               mean("k_lambda"), mean("k_p"), mean("wall_ms")))
    return rows


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    path.write_text(buf.getvalue())


def _versions() -> dict:
    return {"hetnet_alloc": __version__, "numpy": np.__version__, "pyyaml": yaml.__version__,
            "python": platform.python_version()}


def _manifest(spec: ExperimentSpec) -> dict:
    seeds = {f"{spec.sweep_var}={v!r}": [drop_seed(spec.seed, spec.sweep_var, v, d)
                                         for d in range(spec.drops)]
             for v in spec.sweep_values}
    return {"spec": spec.to_dict(), "master_seed": spec.seed, "seeds": seeds,
            "versions": _versions(),
            "files": {k: spec.output[k] for k in ("csv", "drops_csv")},
            "csv_columns": list(CSV_COLUMNS)}


def run_experiment(spec: ExperimentSpec, out_dir=None, parallel: int = 1,
                   timing: bool = False) -> list[MetricsRow]:
    """Run all drops, write the metrics CSV, the per-drop CSV and the manifest.

    ``wall_ms`` is recorded only with ``timing=True``; otherwise it is 0 so
    reruns are byte-identical.
    """
    out = Path(out_dir if out_dir is not None else spec.output["dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    records = _collect(spec, parallel, timing)
    rows = _aggregate(spec, records)
    _write_csv(out / spec.output["csv"], CSV_COLUMNS, [r.as_tuple() for r in rows])
    _write_csv(out / spec.output["drops_csv"], DROP_COLUMNS,
               [tuple(r[c] for c in DROP_COLUMNS) for r in records])
    text = json.dumps(_manifest(spec), indent=2, sort_keys=True) + "\n"
    (out / spec.output["manifest"]).write_text(text)
    return rows


def emit_iteration_table(spec: ExperimentSpec, out_dir=None, parallel: int = 1) -> list[dict]:
    """Mean K_T (low-complexity solver) and K_lambda, K_P (dual solver) per sweep point.

    Both solvers see the same convex subproblems: each outer iteration of the
    joint optimizer solves its linearization with both, and the low-complexity
    result is the one carried forward. Writes ``output.iterations_csv`` when
    ``out_dir`` is given.
    """
    tasks = [(spec, v, d) for v in spec.sweep_values for d in range(spec.drops)]
    if parallel > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            counts = list(pool.map(_iteration_task, tasks))
    else:
        counts = [_iteration_task(t) for t in tasks]
    table = []
    for i, value in enumerate(spec.sweep_values):
        block = np.array(counts[i * spec.drops:(i + 1) * spec.drops])
        k_t, k_lam, k_p = (float(x) for x in block.mean(axis=0))
        table.append({"sweep_var": spec.sweep_var, "sweep_value": value, "drops": spec.drops,
                      "k_t": k_t, "k_lambda": k_lam, "k_p": k_p,
                      "ratio": k_lam * k_p / k_t if k_t > 0 else float("nan")})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / spec.output["iterations_csv"], ITERATION_COLUMNS,
                   [tuple(row[c] for c in ITERATION_COLUMNS) for row in table])
    return table


def _iteration_task(args):
    spec, value, drop = args
    config, _ = spec.config_for(value)
    seed = drop_seed(spec.seed, spec.sweep_var, value, drop)
    topology = generate_topology(config, seed)
    ch = generate_channels(topology, config, seed)
    limits = PowerLimits.from_topology(topology, config.n_subchannels,
                                       config.spectral_mask_fraction)
    cfg = _joint_config(spec, "single", shadow_dual=True)
    rep = optimize_joint(ch, np.ones(ch.n_ues), limits, cfg).report
    return rep.k_t, rep.k_lambda, rep.k_p
