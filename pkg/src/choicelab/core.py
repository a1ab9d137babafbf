"""
Random-utility logit primitives.

Utilities are linear in parameters, ``V = beta' x``, the scale ``mu`` is
normalised to one in every estimation path, and extreme value type I errors
are produced from uniforms with the transform ``-ln(-ln(u)) / mu`` so that a
seeded generator reproduces every draw bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, NumericError

PROB_TOL = 1e-9


def _as_attribute_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError(f"attribute vector must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("attribute vector has non-finite entries")
    return x


@dataclass(frozen=True)
class Parameters:
    """Taste parameters ``beta`` and logit scale ``mu``."""

    beta: np.ndarray
    mu: float = 1.0

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float, ndmin=1)
        if beta.ndim != 1:
            raise InvalidInputError(f"beta must be 1-D, got shape {beta.shape}")
        if not np.all(np.isfinite(beta)):
            raise InvalidInputError("beta has non-finite entries")
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise InvalidInputError(f"mu must be a positive finite number, got {self.mu}")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def K(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class ChoiceContext:
    """A set of alternatives with one attribute row each.

    Parameters
    ----------
    alternatives : sequence of int
        Unique alternative identifiers.
    attributes : array_like, shape (J, K)
        Row ``j`` holds the attributes of ``alternatives[j]``.
    """

    alternatives: np.ndarray
    attributes: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alts = np.array(self.alternatives, dtype=np.int64, ndmin=1)
        attrs = np.array(self.attributes, dtype=float)
        if alts.ndim != 1 or alts.size == 0:
            raise InvalidInputError("a choice context needs at least one alternative")
        if np.unique(alts).size != alts.size:
            raise InvalidInputError("alternative identifiers must be unique")
        if attrs.ndim == 1 and alts.size == 1:
            attrs = attrs[None, :]
        if attrs.ndim != 2 or attrs.shape[0] != alts.size:
            raise InvalidInputError(
                f"need one attribute row per alternative: {alts.size} alternatives, "
                f"attributes of shape {attrs.shape}"
            )
        if not np.all(np.isfinite(attrs)):
            raise InvalidInputError("attributes have non-finite entries")
        alts.setflags(write=False)
        attrs.setflags(write=False)
        object.__setattr__(self, "alternatives", alts)
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "_index", {int(a): i for i, a in enumerate(alts)})

    def __len__(self):
        return self.alternatives.shape[0]

    @property
    def K(self) -> int:
        return self.attributes.shape[1]

    def position(self, alternative) -> int:
        """Row index of an alternative identifier."""
        try:
            return self._index[int(alternative)]
        except KeyError:
            raise InvalidInputError(f"alternative {alternative} not in context") from None

    def rows(self, alternatives: Sequence[int]) -> np.ndarray:
        """Attribute rows for the given identifiers, in the given order."""
        return self.attributes[[self.position(a) for a in alternatives]]


def systematic_utility(x, params: Parameters) -> float:
    """Linear index ``sum_k beta_k x_k``."""
    x = _as_attribute_vector(x)
    if x.shape[0] != params.K:
        raise InvalidInputError(
            f"attribute length {x.shape[0]} does not match parameter length {params.K}"
        )
    return float(x @ params.beta)


def utilities(ctx: ChoiceContext, params: Parameters) -> np.ndarray:
    """Systematic utilities of every alternative in ``ctx``."""
    if ctx.K != params.K:
        raise InvalidInputError(f"context has K={ctx.K}, parameters have K={params.K}")
    return ctx.attributes @ params.beta


def softmax(v, mu: float = 1.0) -> np.ndarray:
    """Logit probabilities ``exp(mu v_i) / sum_j exp(mu v_j)``.

    Computed after subtracting the maximum, so utilities of any finite
    magnitude are safe.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite utility")
    z = mu * v
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def choice_probabilities(ctx: ChoiceContext, params: Parameters) -> np.ndarray:
    return softmax(utilities(ctx, params), params.mu)


def validate_probabilities(probs, tol: float = PROB_TOL) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError("probability vector must be 1-D and nonempty")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidInputError("probabilities must be finite and nonnegative")
    if abs(p.sum() - 1.0) > tol:
        raise InvalidInputError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


def sample_choice(probs, rng: np.random.Generator) -> int:
    """Inverse-CDF draw of an index with probability ``probs[i]``.

    Consumes exactly one uniform from ``rng``.
    """
    p = validate_probabilities(probs)
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    i = int(np.searchsorted(cdf, u, side="right"))
    # guard against u landing on the cdf's rounding tail
    i = min(i, p.size - 1)
    while p[i] == 0:
        i -= 1
    return i


def gumbel_from_uniform(u, mu: float = 1.0) -> np.ndarray:
    """Extreme value type I draws ``-ln(-ln(u)) / mu``.

    With this scale, ``argmax(V + eps)`` follows ``softmax(V, mu)``. ``u = 0``
    maps to ``-inf``, which is never selected while a finite draw exists.
    """
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.log(-np.log(u)) / mu


def gumbel_max_choice(ctx: ChoiceContext, params: Parameters, rng: np.random.Generator) -> int:
    """Simulate the random-utility choice by maximising ``V + eps``.

    Consumes ``len(ctx)`` uniforms from ``rng``.
    """
    v = utilities(ctx, params)
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite utility")
    eps = gumbel_from_uniform(rng.random(len(ctx)), params.mu)
    return int(np.argmax(v + eps))
