"""
Monte Carlo harness: generate -> build sets -> correct -> estimate, replicated.

Replication ``i`` of an experiment with scenario seed ``s`` simulates with
seed ``replication_seed(s, i)`` at every sweep point, so sweep points share
populations and modeled choices (common random numbers). Replications are
independent tasks; results are folded in replication order, which makes the
CSV output identical for any number of worker processes.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .core import ChoiceContext, Parameters, softmax
from .corrections import (EmpiricalFrequency, ExactCorrection, KnownImportance, NoCorrection,
                          UniformConditioning, correction_terms)
from .errors import ChoiceLabError, InvalidConfigError, InvalidInputError
from .estimation import EstimationProblem, Observation, estimate
from .scenario import (SAMPLING_STREAM, ChoiceHistory, ScenarioConfig, generate,
                       replication_seed, stream)
from .sets import (IMPORTANCE_SAMPLE, IP, PPH, RANDOM_SAMPLE, build_importance_sample, build_ip,
                   build_pph, build_random_sample)

logger = logging.getLogger(__name__)

CONFIG_SCHEMA_VERSION = 1
CORRECTIONS = ("none", "uniform", "known_importance", "empirical", "exact")
SWEEPABLE = ("R", "attribute_drift_sigma", "behavior_drift_delta", "consideration_churn",
             "cohort_size")
CSV_COLUMNS = ("sweep_value", "coef_index", "bias", "rmse", "mc_se", "mean_set_size",
               "converged_share")
COMPARE_COLUMNS = ("protocol", "correction", "coef_index", "bias", "rmse", "mc_se",
                   "mean_set_size", "converged_share")


@dataclass(frozen=True)
class ProtocolSpec:
    """How the estimation set is formed.

    ``sample_size`` is the set size for ``random_sample``; ``draws`` and
    ``q_column`` drive ``importance_sample``, whose selection weights are
    ``q_j ∝ exp(x_j[q_column])`` over the modeled instance's choice set.
    """

    kind: str = PPH
    sample_size: Optional[int] = None
    draws: Optional[int] = None
    q_column: int = 0

    def __post_init__(self):
        if self.kind not in (PPH, IP, RANDOM_SAMPLE, IMPORTANCE_SAMPLE):
            raise InvalidConfigError(f"unknown protocol {self.kind!r}")
        if self.kind == RANDOM_SAMPLE and (self.sample_size is None or self.sample_size < 1):
            raise InvalidConfigError("random_sample needs a positive sample_size")
        if self.kind == IMPORTANCE_SAMPLE and (self.draws is None or self.draws < 0):
            raise InvalidConfigError("importance_sample needs a nonnegative number of draws")

    @classmethod
    def parse(cls, value) -> "ProtocolSpec":
        if isinstance(value, ProtocolSpec):
            return value
        if isinstance(value, str):
            return cls(kind=value)
        if isinstance(value, dict):
            unknown = set(value) - {"kind", "sample_size", "draws", "q_column"}
            if unknown:
                raise InvalidConfigError(f"unknown protocol fields: {sorted(unknown)}")
            return cls(**value)
        raise InvalidConfigError(f"cannot read protocol from {value!r}")

    @property
    def label(self) -> str:
        if self.kind == RANDOM_SAMPLE:
            return f"random_sample({self.sample_size})"
        if self.kind == IMPORTANCE_SAMPLE:
            return f"importance_sample({self.draws};q=exp(x{self.q_column}))"
        return self.kind


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple

    def __post_init__(self):
        if self.parameter not in SWEEPABLE:
            raise InvalidConfigError(f"cannot sweep {self.parameter!r}; choose from {SWEEPABLE}")
        if len(self.values) == 0:
            raise InvalidConfigError("sweep needs at least one value")
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig
    protocol: ProtocolSpec = field(default_factory=ProtocolSpec)
    correction: str = "none"
    replications: int = 1
    sweep: Optional[Sweep] = None
    output_path: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "protocol", ProtocolSpec.parse(self.protocol))
        if self.correction not in CORRECTIONS:
            raise InvalidConfigError(f"unknown correction {self.correction!r}; "
                                     f"choose from {CORRECTIONS}")
        if self.correction == "known_importance" and self.protocol.kind != IMPORTANCE_SAMPLE:
            raise InvalidConfigError("known_importance needs the importance_sample protocol")
        if self.replications < 1:
            raise InvalidConfigError("replications must be at least 1")
        for value in self.sweep_values:
            self.scenario_at(value).validate()
        if self.protocol.kind == RANDOM_SAMPLE:
            lo, _ = self.scenario.size_range
            if self.protocol.sample_size > lo:
                raise InvalidConfigError(
                    f"sample_size {self.protocol.sample_size} exceeds consideration size {lo}")

    @property
    def sweep_values(self) -> tuple:
        return self.sweep.values if self.sweep is not None else (None,)

    def scenario_at(self, value) -> ScenarioConfig:
        if value is None:
            return self.scenario
        cast = int if self.sweep.parameter in ("R", "cohort_size") else float
        try:
            return replace(self.scenario, **{self.sweep.parameter: cast(value)})
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"bad sweep value {value!r}: {exc}") from None

    @classmethod
    def from_dict(cls, d: dict, seed: Optional[int] = None) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise InvalidConfigError(f"unsupported config schema_version {version}")
        d.pop("experiments", None)
        unknown = set(d) - {"scenario", "protocol", "correction", "replications", "sweep",
                            "output_path"}
        if unknown:
            raise InvalidConfigError(f"unknown config fields: {sorted(unknown)}")
        if "scenario" not in d:
            raise InvalidConfigError("config has no scenario section")
        scenario = ScenarioConfig.from_dict(d.pop("scenario"))
        if seed is not None:
            scenario = scenario.with_seed(seed)
        sweep = d.pop("sweep", None)
        if sweep is not None:
            if not isinstance(sweep, dict) or set(sweep) != {"parameter", "values"}:
                raise InvalidConfigError("sweep must have exactly 'parameter' and 'values'")
            sweep = Sweep(sweep["parameter"], tuple(sweep["values"]))
        return cls(scenario=scenario, sweep=sweep, **d)

    def to_dict(self) -> dict:
        d = {"schema_version": CONFIG_SCHEMA_VERSION,
             "scenario": self.scenario.to_dict(),
             "protocol": {k: v for k, v in asdict(self.protocol).items() if v is not None},
             "correction": self.correction,
             "replications": self.replications}
        if self.sweep is not None:
            d["sweep"] = {"parameter": self.sweep.parameter, "values": list(self.sweep.values)}
        if self.output_path is not None:
            d["output_path"] = self.output_path
        return d


def load_config(path) -> dict:
    with Path(path).open("r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise InvalidConfigError(f"{path}: config must be a mapping")
    return doc


def compare_configs_from_dict(d: dict, seed: Optional[int] = None) -> list:
    """Expand a compare document: shared fields plus an ``experiments`` list."""
    experiments = d.get("experiments")
    if not experiments:
        raise InvalidConfigError("compare config needs a nonempty 'experiments' list")
    base = {k: v for k, v in d.items() if k not in ("experiments", "protocol", "correction")}
    configs = []
    for item in experiments:
        unknown = set(item) - {"protocol", "correction"}
        if unknown:
            raise InvalidConfigError(f"unknown experiment fields: {sorted(unknown)}")
        configs.append(ExperimentConfig.from_dict({**base, **item}, seed=seed))
    return configs


# ---------------------------------------------------------------------------
# Building estimation problems
# ---------------------------------------------------------------------------

def _final_context(entry, J: int) -> ChoiceContext:
    members = entry.final_consideration_set
    if members is None:
        members = np.arange(J)
    return ChoiceContext(members, entry.final_attributes[members])


def correction_spec(name: str, ctx: ChoiceContext = None, q=None, entry=None):
    if name == "none":
        return NoCorrection()
    if name == "uniform":
        return UniformConditioning()
    if name == "empirical":
        return EmpiricalFrequency()
    if name == "known_importance":
        return KnownImportance.from_context(ctx, q)
    if name == "exact":
        if entry is None or entry.betas is None or entry.final_consideration_set is None:
            return ExactCorrection()
        return ExactCorrection.from_oracle(ctx, Parameters(entry.betas[-1]))
    raise InvalidConfigError(f"unknown correction {name!r}")


def build_sets(history: ChoiceHistory, protocol: ProtocolSpec, seed: int,
               cohort_size: int = 1) -> list:
    """One sufficient set per individual, plus the per-individual context and ``q``."""
    out = []
    for n, entry in enumerate(history.individuals):
        ctx, q = None, None
        if protocol.kind == PPH:
            s = build_pph(entry)
        elif protocol.kind == IP:
            c0 = (n // cohort_size) * cohort_size
            cohort = history.individuals[c0:c0 + cohort_size]
            s = build_ip(cohort, entry.individual_id)
        else:
            ctx = _final_context(entry, history.J)
            rng = stream(seed, SAMPLING_STREAM, n)
            if protocol.kind == RANDOM_SAMPLE:
                s = build_random_sample(ctx, entry.final_choice, protocol.sample_size, rng,
                                        individual_id=entry.individual_id)
            else:
                if not 0 <= protocol.q_column < history.K:
                    raise InvalidConfigError(f"q_column {protocol.q_column} outside [0, {history.K})")
                q = softmax(ctx.attributes[:, protocol.q_column])
                s = build_importance_sample(ctx, entry.final_choice, protocol.draws, q, rng,
                                            individual_id=entry.individual_id)
        out.append((s, ctx, q))
    return out


def prepare_problem(history: ChoiceHistory, protocol: ProtocolSpec, correction: str,
                    seed: int, cohort_size: int = 1):
    """Return ``(problem, sets)`` for one simulated or loaded dataset."""
    built = build_sets(history, protocol, seed, cohort_size)
    observations = []
    for (s, ctx, q), entry in zip(built, history.individuals):
        if correction == "exact" and ctx is None:
            ctx = _final_context(entry, history.J)
        spec = correction_spec(correction, ctx, q, entry)
        terms = correction_terms(spec, s)
        observations.append(Observation.from_set(s, entry.final_attributes, terms))
    return EstimationProblem(observations, K=history.K), [b[0] for b in built]


def evaluate(beta_hat, history: ChoiceHistory) -> dict:
    """Compare an estimate with the oracle's true parameters, when available."""
    if not history.oracle_available:
        return {"status": "oracle unavailable"}
    err = np.asarray(beta_hat) - history.beta_true
    return {"status": "ok", "beta_true": history.beta_true.tolist(), "error": err.tolist()}


# ---------------------------------------------------------------------------
# Replications and aggregation
# ---------------------------------------------------------------------------

@dataclass
class ReplicationRecord:
    index: int
    sweep_value: object
    beta_hat: Optional[list]
    converged: bool
    mean_set_size: float
    loglik: float = math.nan
    iterations: int = 0
    n_singletons: int = 0
    error: Optional[str] = None


def run_replication(config: ExperimentConfig, index: int, sweep_value=None) -> ReplicationRecord:
    """Simulate, build sets, correct and estimate for one replication.

    Errors raised by set building or estimation are recorded, not propagated.
    """
    scenario = config.scenario_at(sweep_value)
    seed = replication_seed(config.scenario.seed, index)
    scenario = scenario.with_seed(seed)
    record = ReplicationRecord(index, sweep_value, None, False, math.nan)
    try:
        history = generate(scenario)
        problem, sets = prepare_problem(history, config.protocol, config.correction, seed,
                                        scenario.cohort_size)
        record.mean_set_size = float(np.mean([len(s) for s in sets]))
        record.n_singletons = problem.n_singletons
        result = estimate(problem)
    except ChoiceLabError as exc:
        record.error = f"{type(exc).__name__}: {exc}"
        return record
    record.beta_hat = result.beta_hat.tolist()
    record.converged = result.converged
    record.loglik = result.loglik
    record.iterations = result.iterations
    if not result.converged:
        record.error = result.message
    return record


def _run_task(args):
    config, index, value = args
    return run_replication(config, index, value)


def run_replications(config: ExperimentConfig, threads: int = 1) -> list:
    """All replication records, ordered by (sweep point, replication index)."""
    tasks = [(config, i, v) for v in config.sweep_values for i in range(config.replications)]
    if threads <= 1:
        return [_run_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_task, tasks, chunksize=chunk))


@dataclass
class MetricsRow:
    sweep_value: object
    coef_index: int
    bias: float
    rmse: float
    mc_se: float
    mean_set_size: float
    converged_share: float
    n_converged: int = 0

    @property
    def flagged(self) -> bool:
        return self.n_converged == 0


def aggregate(records: Sequence[ReplicationRecord], beta_true, sweep_value=None) -> list:
    """Bias, RMSE and Monte Carlo SE of the mean estimate, per coefficient."""
    beta_true = np.asarray(beta_true, dtype=float)
    ok = [r for r in records if r.converged and r.beta_hat is not None]
    sizes = [r.mean_set_size for r in records if not math.isnan(r.mean_set_size)]
    mean_size = float(np.mean(sizes)) if sizes else math.nan
    share = len(ok) / len(records) if records else 0.0
    if not ok:
        logger.warning("no converged replications at sweep value %r", sweep_value)
        return [MetricsRow(sweep_value, k, math.nan, math.nan, math.nan, mean_size, share, 0)
                for k in range(beta_true.size)]
    err = np.array([r.beta_hat for r in ok]) - beta_true
    bias = err.mean(axis=0)
    rmse = np.sqrt((err ** 2).mean(axis=0))
    if len(ok) > 1:
        mc_se = err.std(axis=0, ddof=1) / math.sqrt(len(ok))
    else:
        mc_se = np.full(beta_true.size, math.nan)
    return [MetricsRow(sweep_value, k, float(bias[k]), float(rmse[k]), float(mc_se[k]),
                       mean_size, share, len(ok))
            for k in range(beta_true.size)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def run_experiment(config: ExperimentConfig, threads: int = 1, output_path=None,
                   records: Optional[list] = None) -> list:
    """Aggregate replications at every sweep point; write the CSV if a path is given."""
    if records is None:
        records = run_replications(config, threads)
    rows = []
    for value in config.sweep_values:
        at = [r for r in records if r.sweep_value == value]
        scen = config.scenario_at(value)
        rows.extend(aggregate(at, scen.beta_true, value))
    path = output_path or config.output_path
    if path is not None:
        Path(path).write_text(metrics_csv(rows), encoding="utf-8")
    return rows


@dataclass
class CompareRow:
    protocol: str
    correction: str
    coef_index: int
    bias: float
    rmse: float
    mc_se: float
    mean_set_size: float
    converged_share: float


def compare_protocols(configs: Sequence[ExperimentConfig], threads: int = 1,
                      output_path=None) -> list:
    """One block of per-coefficient metrics per (protocol, correction) pair."""
    if not configs:
        raise InvalidInputError("nothing to compare")
    scenario = configs[0].scenario
    for c in configs[1:]:
        if c.scenario != scenario:
            raise InvalidInputError("compared configs must share the same scenario")
    if any(c.sweep is not None for c in configs):
        raise InvalidInputError("compare runs at a single scenario; drop the sweep")
    out = []
    for c in configs:
        for m in run_experiment(c, threads, output_path=None):
            out.append(CompareRow(c.protocol.label, c.correction, m.coef_index, m.bias,
                                  m.rmse, m.mc_se, m.mean_set_size, m.converged_share))
    if output_path is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        for r in out:
            w.writerow([_fmt(getattr(r, col)) for col in COMPARE_COLUMNS])
        Path(output_path).write_text(buf.getvalue(), encoding="utf-8")
    return out
