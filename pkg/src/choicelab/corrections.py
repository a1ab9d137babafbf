"""
Sampling corrections ``ln pi(D | j)`` and the corrected choice probability.

Corrections only enter the choice probability through differences across
members, so every provider returns the alternative-varying part and drops
factors common to all members.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import ChoiceContext, Parameters, choice_probabilities, softmax, validate_probabilities
from .errors import InvalidConfigError, InvalidInputError, NumericError
from .sets import SufficientSet

DEFAULT_UNIFORM_TOL = 1e-9


@dataclass(frozen=True)
class NoCorrection:
    name = "none"


@dataclass(frozen=True)
class UniformConditioning:
    """Protocols whose set probability is the same for every member."""

    name = "uniform"


@dataclass(frozen=True, eq=False)
class KnownImportance:
    """Importance sampling with replacement under known selection probabilities.

    ``q[i]`` is the selection probability of ``alternatives[i]``.
    """

    alternatives: np.ndarray
    q: np.ndarray
    name = "known_importance"

    def __post_init__(self):
        alts = np.asarray(self.alternatives, dtype=np.int64)
        q = validate_probabilities(self.q)
        if alts.shape != q.shape:
            raise InvalidInputError("alternatives and q must have the same length")
        object.__setattr__(self, "alternatives", alts)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_context(cls, ctx: ChoiceContext, q) -> "KnownImportance":
        return cls(ctx.alternatives, q)


@dataclass(frozen=True)
class EmpiricalFrequency:
    """Selection probabilities replaced by empirical shares ``n_j / (R + 1)``."""

    name = "empirical"


@dataclass(frozen=True, eq=False)
class ExactCorrection:
    """Importance sampling with the true choice probabilities as selection weights.

    Needs the latent consideration set and true parameters, so it is only
    usable for evaluation. The resulting terms depend on ``beta``.
    """

    oracle: tuple = None   # (ChoiceContext over C_n, Parameters)
    name = "exact"

    @classmethod
    def from_oracle(cls, consideration: ChoiceContext, params: Parameters) -> "ExactCorrection":
        return cls((consideration, params))


@dataclass(frozen=True, eq=False)
class CorrectionTerms:
    """Per-member offsets ``c_j``, meaningful only up to a common constant."""

    values: np.ndarray
    beta_dependent: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float, ndmin=1)
        if not np.all(np.isfinite(v)):
            raise NumericError("correction terms must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    def shifted(self, c: float) -> "CorrectionTerms":
        return CorrectionTerms(self.values + c, self.beta_dependent)

    @property
    def spread(self) -> float:
        return float(self.values.max() - self.values.min())


def _require_counts(s: SufficientSet) -> np.ndarray:
    if np.any(s.counts <= 0):
        raise InvalidInputError("every member needs a positive count under a counting protocol")
    return s.counts.astype(float)


def _lookup(alternatives: np.ndarray, values: np.ndarray, members: np.ndarray, what: str):
    order = np.argsort(alternatives)
    sorted_alts = alternatives[order]
    pos = np.searchsorted(sorted_alts, members)
    pos = np.minimum(pos, sorted_alts.size - 1)
    if not np.array_equal(sorted_alts[pos], members):
        missing = members[sorted_alts[pos] != members]
        raise InvalidInputError(f"members {missing.tolist()} have no {what}")
    return values[order][pos]


def correction_terms(spec, s: SufficientSet) -> CorrectionTerms:
    """Alternative-varying part of ``ln pi(D | j)`` for every member of ``s``."""
    m = len(s)
    if isinstance(spec, (NoCorrection, UniformConditioning)):
        return CorrectionTerms(np.zeros(m))
    if isinstance(spec, EmpiricalFrequency):
        # ln n_j - ln(n_j / (R+1)) = ln(R+1) for every member
        _require_counts(s)
        return CorrectionTerms(np.zeros(m))
    if isinstance(spec, KnownImportance):
        n = _require_counts(s)
        q = _lookup(spec.alternatives, spec.q, s.members, "selection probability")
        if np.any(q <= 0):
            raise InvalidInputError("a member has zero selection probability")
        return CorrectionTerms(np.log(n) - np.log(q))
    if isinstance(spec, ExactCorrection):
        if spec.oracle is None:
            raise InvalidConfigError("exact correction needs the oracle consideration set "
                                     "and parameters")
        ctx, params = spec.oracle
        n = _require_counts(s)
        p = _lookup(ctx.alternatives, choice_probabilities(ctx, params), s.members,
                    "choice probability (outside the consideration set)")
        return CorrectionTerms(np.log(n) - np.log(p), beta_dependent=True)
    raise InvalidConfigError(f"unknown correction {spec!r}")


def corrected_probabilities(v, terms) -> np.ndarray:
    """Logit over the set with per-member offsets: softmax of ``v + c``."""
    v = np.asarray(v, dtype=float)
    c = terms.values if isinstance(terms, CorrectionTerms) else np.asarray(terms, dtype=float)
    if v.shape != c.shape:
        raise InvalidInputError(f"{v.shape[0]} utilities but {c.shape[0]} correction terms")
    return softmax(v + c)


def is_uniform_conditioning(terms, tol: float = DEFAULT_UNIFORM_TOL) -> bool:
    c = terms.values if isinstance(terms, CorrectionTerms) else np.asarray(terms, dtype=float)
    return bool(c.max() - c.min() <= tol)


def random_sample_log_prob(J: int, sample_size: int) -> float:
    """``ln pi(D | j)`` when ``sample_size - 1`` of ``J - 1`` nonchosen are drawn uniformly.

    The same for every member ``j`` of every admissible ``D``.
    """
    if not 1 <= sample_size <= J:
        raise InvalidInputError(f"sample size {sample_size} outside [1, {J}]")
    return float(-(gammaln(J) - gammaln(sample_size) - gammaln(J - sample_size + 1)))


def importance_sample_log_prob(counts, chosen_index: int, q) -> float:
    """Log probability of the augmented count vector given the chosen member.

    ``counts`` are over the members of ``D`` and include the chosen
    instance, so they sum to ``R + 1`` for ``R`` draws. ``q`` holds the
    members' selection probabilities; mass outside ``D`` is never drawn.
    """
    n = np.asarray(counts, dtype=float)
    q = np.asarray(q, dtype=float)
    R = n.sum() - 1
    if n[chosen_index] < 1:
        return -np.inf
    log_k = gammaln(R + 1) - gammaln(n + 1).sum() + (n * np.log(q)).sum()
    return float(np.log(n[chosen_index]) - np.log(q[chosen_index]) + log_k)
