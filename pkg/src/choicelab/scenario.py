"""
Synthetic populations with latent consideration sets and their choice histories.

Every individual makes ``R`` past choices and one modeled choice (instance
``R + 1``). Three knobs break the invariability of the past relative to the
present: per-instance attribute noise, per-instance taste perturbation and
per-instance resampling of the consideration set. With all knobs at zero the
past choices are iid draws from the logit probabilities over ``C_n``.

Random streams are keyed by ``(seed, purpose, unit)`` so serial and parallel
generation agree exactly. Each individual's history consumes one fixed-width
row of uniforms per instance, modeled instance first, which makes the first
``R`` past instances identical across runs that differ only in ``R``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.special import ndtri

from .core import gumbel_from_uniform
from .errors import DatasetParseError, InvalidConfigError

SCHEMA_VERSION = 1

_POPULATION_STREAM = 0
_HISTORY_STREAM = 1
SAMPLING_STREAM = 2


@dataclass(frozen=True)
class ScenarioConfig:
    N: int
    J: int
    K: int
    consideration_size: Union[int, tuple]
    R: int
    beta_true: tuple
    attribute_drift_sigma: float = 0.0
    behavior_drift_delta: float = 0.0
    consideration_churn: float = 0.0
    cohort_size: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        size = self.consideration_size
        if isinstance(size, (list, tuple)):
            if len(size) != 2:
                raise InvalidConfigError("consideration_size range must be (low, high)")
            size = (int(size[0]), int(size[1]))
        else:
            size = int(size)
        object.__setattr__(self, "consideration_size", size)
        self.validate()

    @property
    def size_range(self) -> tuple:
        s = self.consideration_size
        return s if isinstance(s, tuple) else (s, s)

    def validate(self):
        lo, hi = self.size_range
        if self.N < 1 or self.J < 1 or self.K < 1:
            raise InvalidConfigError("N, J and K must be positive")
        if not 1 <= lo <= hi:
            raise InvalidConfigError(f"consideration size range {self.consideration_size} is empty")
        if hi > self.J:
            raise InvalidConfigError(
                f"consideration size {hi} exceeds universal set size J={self.J}"
            )
        if self.R < 0:
            raise InvalidConfigError("R must be nonnegative")
        if len(self.beta_true) != self.K:
            raise InvalidConfigError(f"beta_true has {len(self.beta_true)} entries, K={self.K}")
        if not all(math.isfinite(b) for b in self.beta_true):
            raise InvalidConfigError("beta_true must be finite")
        if not (self.attribute_drift_sigma >= 0 and self.behavior_drift_delta >= 0):
            raise InvalidConfigError("drift knobs must be nonnegative")
        if not 0.0 <= self.consideration_churn <= 1.0:
            raise InvalidConfigError("consideration_churn must lie in [0, 1]")
        if self.cohort_size < 1:
            raise InvalidConfigError("cohort_size must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfigError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfigError(f"unknown scenario fields: {sorted(unknown)}")
        missing = {"N", "J", "K", "consideration_size", "R", "beta_true"} - set(d)
        if missing:
            raise InvalidConfigError(f"missing scenario fields: {sorted(missing)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["beta_true"] = list(self.beta_true)
        if isinstance(self.consideration_size, tuple):
            d["consideration_size"] = list(self.consideration_size)
        return d

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))


def replication_seed(seed: int, index: int) -> int:
    """Independent 64-bit scenario seed for replication ``index``."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream(seed: int, purpose: int, unit: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), purpose, int(unit)])


@dataclass(frozen=True)
class Population:
    """Latent consideration sets and base attributes.

    Attributes
    ----------
    consideration_masks : ndarray of bool, shape (N, J)
    base_attributes : ndarray, shape (N, J, K)
        Attributes of every universal alternative. Members of the same
        cohort share both their attribute matrix and their consideration set.
    beta_true : ndarray, shape (K,)
    cohorts : ndarray of int, shape (N,)
    """

    consideration_masks: np.ndarray
    base_attributes: np.ndarray
    beta_true: np.ndarray
    cohorts: np.ndarray

    @property
    def N(self):
        return self.base_attributes.shape[0]

    def consideration_set(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.consideration_masks[n])

    @property
    def consideration_sets(self) -> list:
        return [self.consideration_set(n) for n in range(self.N)]


def build_population(config: ScenarioConfig) -> Population:
    config.validate()
    N, J, K = config.N, config.J, config.K
    lo, hi = config.size_range
    masks = np.zeros((N, J), dtype=bool)
    attrs = np.empty((N, J, K))
    cohorts = np.arange(N) // config.cohort_size
    for c in range(int(cohorts[-1]) + 1):
        rng = stream(config.seed, _POPULATION_STREAM, c)
        size = lo if lo == hi else int(rng.integers(lo, hi + 1))
        members = rng.choice(J, size=size, replace=False)
        x = rng.standard_normal((J, K))
        sl = slice(c * config.cohort_size, min((c + 1) * config.cohort_size, N))
        masks[sl, members] = True
        attrs[sl] = x
    return Population(masks, attrs, np.asarray(config.beta_true, dtype=float), cohorts)


@dataclass
class IndividualHistory:
    """Choices of one individual over ``R + 1`` instances; the last one is modeled.

    ``choices`` and ``attributes`` are what a researcher observes. The
    remaining fields are oracle information and may be ``None``.
    """

    individual_id: int
    choices: np.ndarray                    # (R+1,)
    attributes: np.ndarray                 # (R+1, J, K), universal set
    betas: Optional[np.ndarray] = None     # (R+1, K)
    consideration_masks: Optional[np.ndarray] = None  # (R+1, J)
    base_attributes: Optional[np.ndarray] = None      # (J, K)
    consideration_set: Optional[np.ndarray] = None    # base C_n

    @property
    def R(self) -> int:
        return self.choices.shape[0] - 1

    @property
    def past(self) -> np.ndarray:
        return self.choices[:-1]

    @property
    def final_choice(self) -> int:
        return int(self.choices[-1])

    @property
    def final_attributes(self) -> np.ndarray:
        return self.attributes[-1]

    def instance_consideration_set(self, r: int) -> Optional[np.ndarray]:
        """Consideration set at instance ``r`` (1-based), if known."""
        if self.consideration_masks is None:
            return None
        return np.flatnonzero(self.consideration_masks[r - 1])

    @property
    def final_consideration_set(self) -> Optional[np.ndarray]:
        return self.instance_consideration_set(self.R + 1)


@dataclass
class ChoiceHistory:
    N: int
    J: int
    K: int
    R: int
    individuals: list
    beta_true: Optional[np.ndarray] = None
    knobs: Optional[dict] = field(default=None)

    @property
    def oracle_available(self) -> bool:
        return self.beta_true is not None

    def __getitem__(self, n) -> IndividualHistory:
        return self.individuals[n]

    def __len__(self):
        return len(self.individuals)


def _row_width(J: int, K: int) -> int:
    # gumbel uniforms | attribute noise | taste perturbation | churn flag | subset keys
    return J + J * K + K + 1 + J


def simulate_individual(pop: Population, config: ScenarioConfig, n: int) -> IndividualHistory:
    J, K, R = config.J, config.K, config.R
    sigma = config.attribute_drift_sigma
    delta = config.behavior_drift_delta
    churn = config.consideration_churn
    base_x = pop.base_attributes[n]
    base_mask = pop.consideration_masks[n]
    size = int(base_mask.sum())

    rng = stream(config.seed, _HISTORY_STREAM, n)
    u = np.empty((R + 1, _row_width(J, K)))
    u[-1] = rng.random(u.shape[1])
    u[:-1] = rng.random((R, u.shape[1]))
    o = 0
    u_eps = u[:, o:o + J]; o += J
    u_noise = u[:, o:o + J * K]; o += J * K
    u_beta = u[:, o:o + K]; o += K
    u_churn = u[:, o]; o += 1
    u_keys = u[:, o:o + J]

    if sigma > 0:
        attrs = base_x + sigma * ndtri(u_noise).reshape(R + 1, J, K)
    else:
        attrs = np.broadcast_to(base_x, (R + 1, J, K))
    if delta > 0:
        betas = pop.beta_true + delta * (2.0 * u_beta - 1.0)
    else:
        betas = np.broadcast_to(pop.beta_true, (R + 1, K))
    if churn > 0:
        masks = np.repeat(base_mask[None, :], R + 1, axis=0)
        for r in np.flatnonzero(u_churn < churn):
            masks[r] = False
            masks[r, np.argsort(u_keys[r], kind="stable")[:size]] = True
    else:
        masks = np.broadcast_to(base_mask, (R + 1, J))

    if sigma > 0 or delta > 0:
        v = np.einsum("rjk,rk->rj", attrs, betas)
    else:
        v = np.broadcast_to(base_x @ pop.beta_true, (R + 1, J))
    total = np.where(masks, v + gumbel_from_uniform(u_eps), -np.inf)
    choices = np.argmax(total, axis=1)
    return IndividualHistory(
        individual_id=n,
        choices=choices,
        attributes=attrs,
        betas=betas,
        consideration_masks=masks,
        base_attributes=base_x,
        consideration_set=np.flatnonzero(base_mask),
    )


def simulate_history(pop: Population, config: ScenarioConfig) -> ChoiceHistory:
    """Simulate ``R`` past choices and the modeled choice for every individual."""
    if pop.base_attributes.shape[1:] != (config.J, config.K) or pop.N != config.N:
        raise InvalidConfigError("population does not match the scenario dimensions")
    individuals = [simulate_individual(pop, config, n) for n in range(config.N)]
    return ChoiceHistory(
        N=config.N, J=config.J, K=config.K, R=config.R,
        individuals=individuals,
        beta_true=pop.beta_true.copy(),
        knobs=_knobs(config),
    )


def _knobs(config: ScenarioConfig) -> dict:
    return {
        "attribute_drift_sigma": config.attribute_drift_sigma,
        "behavior_drift_delta": config.behavior_drift_delta,
        "consideration_churn": config.consideration_churn,
        "cohort_size": config.cohort_size,
    }


def generate(config: ScenarioConfig) -> ChoiceHistory:
    return simulate_history(build_population(config), config)


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

_HEADER_FIELDS = ("N", "J", "K", "R", "schema_version")
_RECORD_FIELDS = ("individual_id", "instance", "chosen_alt", "attributes")


def oracle_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".oracle.json")


def write_dataset(history: ChoiceHistory, path, oracle_path=None) -> Path:
    """Write the public choice file and, when known, the oracle sidecar.

    The public file is newline-delimited JSON: a header record followed by
    one record per (individual, instance). Returns the public file path.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        header = {"N": history.N, "J": history.J, "K": history.K, "R": history.R,
                  "schema_version": SCHEMA_VERSION}
        fh.write(json.dumps(header) + "\n")
        for ind in history.individuals:
            for r in range(ind.R + 1):
                rec = {
                    "individual_id": int(ind.individual_id),
                    "instance": r + 1,
                    "chosen_alt": int(ind.choices[r]),
                    "attributes": ind.attributes[r].tolist(),
                }
                fh.write(json.dumps(rec) + "\n")
    if history.oracle_available:
        _write_oracle(history, oracle_path or oracle_path_for(path))
    return path


def _write_oracle(history: ChoiceHistory, path) -> None:
    knobs = dict(history.knobs or {})
    people = []
    for ind in history.individuals:
        rec = {"individual_id": int(ind.individual_id),
               "consideration_set": None if ind.consideration_set is None
               else ind.consideration_set.tolist(),
               "beta_true": history.beta_true.tolist(),
               **knobs}
        if ind.base_attributes is not None:
            rec["base_attributes"] = ind.base_attributes.tolist()
        if ind.betas is not None:
            rec["instance_betas"] = np.asarray(ind.betas).tolist()
        if ind.consideration_masks is not None:
            rec["instance_consideration_sets"] = [
                np.flatnonzero(m).tolist() for m in ind.consideration_masks
            ]
        people.append(rec)
    doc = {"schema_version": SCHEMA_VERSION, "beta_true": history.beta_true.tolist(),
           "knobs": knobs, "individuals": people}
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _require(rec: dict, names, line: int):
    for name in names:
        if name not in rec:
            raise DatasetParseError(f"missing required field '{name}'", line)


def read_dataset(path, oracle_path=None) -> ChoiceHistory:
    """Read a public choice file, attaching the oracle sidecar if it exists."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        raise DatasetParseError("empty file", 1)
    header = _parse_json(lines[0], 1)
    _require(header, _HEADER_FIELDS, 1)
    if header["schema_version"] != SCHEMA_VERSION:
        raise DatasetParseError(f"unsupported schema_version {header['schema_version']}", 1)
    N, J, K, R = (int(header[k]) for k in ("N", "J", "K", "R"))

    choices = {}
    attrs = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = _parse_json(line, lineno)
        _require(rec, _RECORD_FIELDS, lineno)
        n, r, c = rec["individual_id"], rec["instance"], rec["chosen_alt"]
        if not all(isinstance(v, int) for v in (n, r, c)):
            raise DatasetParseError("individual_id, instance and chosen_alt must be integers", lineno)
        if not (0 <= n < N and 1 <= r <= R + 1 and 0 <= c < J):
            raise DatasetParseError(f"record out of range (individual {n}, instance {r}, alt {c})",
                                    lineno)
        try:
            x = np.asarray(rec["attributes"], dtype=float)
        except (TypeError, ValueError):
            raise DatasetParseError("attributes must be a numeric J x K array", lineno) from None
        if x.shape != (J, K):
            raise DatasetParseError(f"attributes have shape {x.shape}, expected {(J, K)}", lineno)
        if (n, r) in choices:
            raise DatasetParseError(f"duplicate record for individual {n}, instance {r}", lineno)
        choices[n, r] = c
        attrs[n, r] = x
    if len(choices) != N * (R + 1):
        missing = next((n, r) for n in range(N) for r in range(1, R + 2) if (n, r) not in choices)
        raise DatasetParseError(f"missing record for individual {missing[0]}, instance {missing[1]}")

    individuals = [
        IndividualHistory(
            individual_id=n,
            choices=np.array([choices[n, r] for r in range(1, R + 2)], dtype=np.int64),
            attributes=np.stack([attrs[n, r] for r in range(1, R + 2)]),
        )
        for n in range(N)
    ]
    history = ChoiceHistory(N=N, J=J, K=K, R=R, individuals=individuals)
    oracle_path = Path(oracle_path) if oracle_path is not None else oracle_path_for(path)
    if oracle_path.exists():
        _attach_oracle(history, oracle_path)
    return history


def _parse_json(line: str, lineno: int) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"invalid JSON ({exc.msg})", lineno) from None
    if not isinstance(rec, dict):
        raise DatasetParseError("record is not an object", lineno)
    return rec


def _attach_oracle(history: ChoiceHistory, path: Path) -> None:
    with path.open("r", encoding="utf-8") as fh:
        doc = json.load(fh)
    history.beta_true = np.asarray(doc["beta_true"], dtype=float)
    history.knobs = doc.get("knobs")
    J = history.J
    for rec in doc["individuals"]:
        ind = history.individuals[rec["individual_id"]]
        if rec.get("consideration_set") is not None:
            ind.consideration_set = np.asarray(rec["consideration_set"], dtype=np.int64)
        if "base_attributes" in rec:
            ind.base_attributes = np.asarray(rec["base_attributes"], dtype=float)
        if "instance_betas" in rec:
            ind.betas = np.asarray(rec["instance_betas"], dtype=float)
        if "instance_consideration_sets" in rec:
            masks = np.zeros((len(rec["instance_consideration_sets"]), J), dtype=bool)
            for r, members in enumerate(rec["instance_consideration_sets"]):
                masks[r, members] = True
            ind.consideration_masks = masks
