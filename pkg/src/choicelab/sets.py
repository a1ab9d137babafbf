"""
Practical estimation sets built from observed choices.

Members are always sorted by ascending alternative id. ``counts[j]`` is the
number of times ``members[j]`` appears over the ``R + 1`` instances (pooled
over the cohort for IP sets, draw counts plus the chosen instance for
importance sampling, all ones for random sampling).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ChoiceContext, validate_probabilities
from .errors import InvalidInputError
from .scenario import IndividualHistory

PPH = "pph"
IP = "ip"
RANDOM_SAMPLE = "random_sample"
IMPORTANCE_SAMPLE = "importance_sample"


@dataclass(frozen=True)
class SufficientSet:
    individual_id: int
    members: np.ndarray
    counts: np.ndarray
    chosen_alt: int
    chosen_added: bool
    protocol: str

    def __post_init__(self):
        members = np.asarray(self.members, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if members.shape != counts.shape or members.ndim != 1:
            raise InvalidInputError("members and counts must be matching 1-D arrays")
        if np.any(np.diff(members) <= 0):
            raise InvalidInputError("members must be unique and ascending")
        pos = np.searchsorted(members, self.chosen_alt)
        if pos >= members.size or members[pos] != self.chosen_alt:
            raise InvalidInputError("chosen alternative must belong to the set")
        members.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "chosen_alt", int(self.chosen_alt))
        object.__setattr__(self, "chosen_added", bool(self.chosen_added))

    def __len__(self):
        return self.members.shape[0]

    @property
    def chosen_index(self) -> int:
        return int(np.searchsorted(self.members, self.chosen_alt))

    def to_record(self) -> dict:
        return {
            "individual_id": int(self.individual_id),
            "protocol": self.protocol,
            "members": self.members.tolist(),
            "counts": self.counts.tolist(),
            "chosen_added": self.chosen_added,
        }

    def __eq__(self, other):
        if not isinstance(other, SufficientSet):
            return NotImplemented
        return (self.individual_id == other.individual_id
                and np.array_equal(self.members, other.members)
                and np.array_equal(self.counts, other.counts)
                and self.chosen_alt == other.chosen_alt
                and self.chosen_added == other.chosen_added
                and self.protocol == other.protocol)

    __hash__ = None


def _from_counts(individual_id, counts_full, chosen, chosen_added, protocol):
    members = np.flatnonzero(counts_full)
    return SufficientSet(individual_id, members, counts_full[members], chosen,
                         chosen_added, protocol)


def build_pph(entry: IndividualHistory) -> SufficientSet:
    """Past-purchase-history set: everything chosen in the past plus the final choice."""
    past = np.asarray(entry.past)
    final = entry.final_choice
    size = max(int(entry.choices.max()) + 1, final + 1)
    counts = np.bincount(entry.choices, minlength=size)
    chosen_added = not np.any(past == final)
    return _from_counts(entry.individual_id, counts, final, chosen_added, PPH)


def _base_context(entry: IndividualHistory) -> np.ndarray:
    if entry.base_attributes is not None:
        return entry.base_attributes
    return entry.final_attributes


def build_ip(cohort: Sequence[IndividualHistory], target) -> SufficientSet:
    """Inter-personal set: choices pooled over a cohort facing the same situation.

    ``target`` is an individual id or an entry of ``cohort``. Homogeneity is
    checked on base attribute matrices (on the modeled-instance attributes
    when base attributes are not known).
    """
    if len(cohort) == 0:
        raise InvalidInputError("cohort is empty")
    target_id = target.individual_id if isinstance(target, IndividualHistory) else int(target)
    by_id = {e.individual_id: e for e in cohort}
    if target_id not in by_id:
        raise InvalidInputError(f"target {target_id} is not in the cohort")
    ref = _base_context(by_id[target_id])
    for e in cohort:
        if not np.array_equal(_base_context(e), ref):
            raise InvalidInputError(
                f"individual {e.individual_id} faces a different choice situation than "
                f"target {target_id}"
            )
    t = by_id[target_id]
    final = t.final_choice
    size = max(max(int(e.choices.max()) for e in cohort), final) + 1
    counts = np.zeros(size, dtype=np.int64)
    for e in cohort:
        counts += np.bincount(e.choices, minlength=size)
    seen = np.concatenate([np.asarray(t.past)]
                          + [e.choices for e in cohort if e.individual_id != target_id])
    chosen_added = not np.any(seen == final)
    return _from_counts(target_id, counts, final, chosen_added, IP)


def build_random_sample(ctx: ChoiceContext, chosen, sample_size: int,
                        rng: np.random.Generator, individual_id: int = 0) -> SufficientSet:
    """Chosen alternative plus a simple random sample of ``sample_size - 1`` others."""
    J = len(ctx)
    if not 1 <= sample_size <= J:
        raise InvalidInputError(f"sample size {sample_size} outside [1, {J}]")
    ctx.position(chosen)
    others = ctx.alternatives[ctx.alternatives != chosen]
    drawn = rng.choice(others, size=sample_size - 1, replace=False)
    members = np.sort(np.append(drawn, chosen))
    return SufficientSet(individual_id, members, np.ones(members.size, dtype=np.int64),
                         int(chosen), False, RANDOM_SAMPLE)


def build_importance_sample(ctx: ChoiceContext, chosen, draws: int, q,
                            rng: np.random.Generator, individual_id: int = 0) -> SufficientSet:
    """``draws`` iid draws with probabilities ``q``, plus the chosen alternative.

    The chosen alternative's count is incremented by one so counts add up to
    ``draws + 1``, one per instance.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (len(ctx),):
        raise InvalidInputError(f"q has shape {q.shape}, expected ({len(ctx)},)")
    q = validate_probabilities(q)
    if draws < 0:
        raise InvalidInputError("number of draws must be nonnegative")
    pos = ctx.position(chosen)
    idx = rng.choice(len(ctx), size=draws, p=q) if draws > 0 else np.empty(0, dtype=np.int64)
    counts = np.bincount(idx, minlength=len(ctx))
    chosen_added = counts[pos] == 0
    counts[pos] += 1
    keep = counts > 0
    alts = ctx.alternatives[keep]
    order = np.argsort(alts)
    return SufficientSet(individual_id, alts[order], counts[keep][order], int(chosen),
                         bool(chosen_added), IMPORTANCE_SAMPLE)


def write_sets(sets: Sequence[SufficientSet], path) -> Path:
    """Dump one JSON record per set, one per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for s in sets:
            fh.write(json.dumps(s.to_record()) + "\n")
    return path
