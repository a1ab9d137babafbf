"""
Maximum pseudo-likelihood estimation over sufficient sets.

Each observation contributes ``ln softmax(X beta + c)[chosen]`` with fixed
offsets ``c``. With linear utilities the objective is concave, so a BFGS
ascent with Armijo backtracking reaches the global maximum.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from .corrections import CorrectionTerms
from .errors import (InvalidInputError, NoIdentificationError, NumericError,
                     RankDeficiencyError, SeparationError)
from .sets import SufficientSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Observation:
    """Attribute rows over ``D_n``, the chosen row and the correction offsets."""

    X: np.ndarray
    chosen: int
    offsets: np.ndarray

    @classmethod
    def from_set(cls, s: SufficientSet, attributes, terms=None) -> "Observation":
        """Price a sufficient set with universal-set ``attributes`` (rows by alternative id)."""
        X = np.asarray(attributes, dtype=float)[s.members]
        if terms is None:
            offsets = np.zeros(len(s))
        elif isinstance(terms, CorrectionTerms):
            if terms.beta_dependent:
                raise InvalidInputError("correction terms depend on beta; the estimator only "
                                        "accepts fixed offsets")
            offsets = terms.values
        else:
            offsets = np.asarray(terms, dtype=float)
        return cls(X, s.chosen_index, offsets)


class EstimationProblem:
    """Observations stacked into padded arrays.

    Padding rows carry zero attributes and an offset of ``-inf`` so they get
    probability zero.
    """

    def __init__(self, observations: Sequence[Observation], K: Optional[int] = None):
        if len(observations) == 0:
            raise InvalidInputError("no observations")
        K = observations[0].X.shape[1] if K is None else K
        sizes = np.array([o.X.shape[0] for o in observations])
        if np.any(sizes < 1):
            raise InvalidInputError("every observation needs at least one alternative")
        N, M = len(observations), int(sizes.max())
        X = np.zeros((N, M, K))
        offsets = np.full((N, M), -np.inf)
        chosen = np.empty(N, dtype=np.int64)
        for n, o in enumerate(observations):
            m = sizes[n]
            if o.X.shape != (m, K):
                raise InvalidInputError(f"observation {n} has attributes of shape {o.X.shape}")
            if np.shape(o.offsets) != (m,):
                raise InvalidInputError(f"observation {n} has {np.size(o.offsets)} offsets for "
                                        f"{m} alternatives")
            if not 0 <= o.chosen < m:
                raise InvalidInputError(f"observation {n}: chosen index {o.chosen} out of range")
            X[n, :m] = o.X
            offsets[n, :m] = o.offsets
            chosen[n] = o.chosen
        if not np.all(np.isfinite(X)):
            raise NumericError("non-finite attributes")
        if not np.all(np.isfinite(offsets[np.arange(M)[None, :] < sizes[:, None]])):
            raise NumericError("non-finite correction offsets")
        self.X = X
        self.offsets = offsets
        self.chosen = chosen
        self.sizes = sizes
        self.K = K

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def n_singletons(self) -> int:
        return int(np.sum(self.sizes == 1))

    @property
    def chosen_X(self) -> np.ndarray:
        return self.X[np.arange(self.N), self.chosen]

    def _index(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.K,):
            raise InvalidInputError(f"beta has shape {beta.shape}, expected ({self.K},)")
        return self.X @ beta + self.offsets

    def probabilities(self, beta) -> np.ndarray:
        v = self._index(beta)
        v = v - v.max(axis=1, keepdims=True)
        e = np.exp(v)
        return e / e.sum(axis=1, keepdims=True)


def pseudo_loglik(beta, problem: EstimationProblem) -> float:
    v = problem._index(beta)
    ll = v[np.arange(problem.N), problem.chosen] - logsumexp(v, axis=1)
    return float(np.sum(ll))


def gradient(beta, problem: EstimationProblem) -> np.ndarray:
    P = problem.probabilities(beta)
    mean_x = np.einsum("nm,nmk->nk", P, problem.X)
    return np.sum(problem.chosen_X - mean_x, axis=0)


def hessian(beta, problem: EstimationProblem) -> np.ndarray:
    P = problem.probabilities(beta)
    mean_x = np.einsum("nm,nmk->nk", P, problem.X)
    dev = problem.X - mean_x[:, None, :]
    return -np.einsum("nm,nmk,nml->kl", P, dev, dev)


@dataclass
class EstimationResult:
    beta_hat: np.ndarray
    loglik: float
    grad_inf_norm: float
    iterations: int
    converged: bool
    covariance: Optional[np.ndarray] = None
    n_singletons: int = 0
    message: str = field(default="")

    @property
    def se(self) -> Optional[np.ndarray]:
        if self.covariance is None:
            return None
        return np.sqrt(np.diag(self.covariance))

    def to_record(self) -> dict:
        """Plain record for serialisation; standard errors are naive inverse-Hessian ones."""
        se = self.se
        return {
            "beta_hat": self.beta_hat.tolist(),
            "loglik": self.loglik,
            "grad_inf_norm": self.grad_inf_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "se": None if se is None else se.tolist(),
        }


def is_separated(problem: EstimationProblem, tol: float = 1e-9) -> bool:
    """True if some direction weakly raises every chosen utility against its rivals.

    Solves ``max sum(A d)`` subject to ``A d >= 0`` and ``|d| <= 1`` where the
    rows of ``A`` are ``x_chosen - x_j``. A positive optimum means the
    likelihood increases without bound along ``d``.
    """
    N, M, K = problem.X.shape
    valid = np.arange(M)[None, :] < problem.sizes[:, None]
    valid[np.arange(N), problem.chosen] = False
    A = (problem.chosen_X[:, None, :] - problem.X)[valid]
    if A.shape[0] == 0:
        return False
    scale = max(1.0, float(np.abs(A).max()))
    A = A / scale
    res = linprog(-A.sum(axis=0), A_ub=-A, b_ub=np.zeros(A.shape[0]),
                  bounds=[(-1, 1)] * K, method="highs")
    if res.status != 0:
        return False
    return -res.fun > tol * A.shape[0]


def _initial_inverse(beta, problem, g) -> np.ndarray:
    H = -hessian(beta, problem)
    try:
        L = np.linalg.cholesky(H)
        Linv = np.linalg.inv(L)
        return Linv.T @ Linv
    except np.linalg.LinAlgError:
        return np.eye(problem.K) / max(1.0, float(np.abs(g).max()))


def estimate(problem: EstimationProblem, init=None, grad_tol: float = 1e-6,
             max_iter: int = 200, beta_bound: float = 50.0) -> EstimationResult:
    """BFGS ascent on the pseudo-loglikelihood with Armijo backtracking.

    Raises
    ------
    NoIdentificationError
        Every observation has a singleton set.
    SeparationError
        An iterate leaves ``|beta_k| <= beta_bound`` or the converged point
        sits on a direction of unbounded likelihood.
    """
    if np.all(problem.sizes == 1):
        raise NoIdentificationError("every sufficient set is a singleton; the likelihood is flat")
    if problem.n_singletons:
        logger.debug("%d singleton observations contribute nothing", problem.n_singletons)
    beta = np.zeros(problem.K) if init is None else np.array(init, dtype=float)
    if beta.shape != (problem.K,):
        raise InvalidInputError(f"init has shape {beta.shape}, expected ({problem.K},)")

    def f(b):
        return -pseudo_loglik(b, problem)

    fx = f(beta)
    g = -gradient(beta, problem)
    Hinv = _initial_inverse(beta, problem, g)
    c1 = 1e-4
    it = 0
    converged = np.abs(g).max() <= grad_tol
    message = "gradient tolerance met" if converged else ""
    while not converged and it < max_iter:
        p = -Hinv @ g
        slope = g @ p
        if slope >= 0:
            Hinv = np.eye(problem.K) / max(1.0, float(np.abs(g).max()))
            p = -Hinv @ g
            slope = g @ p
        # predicted decrease below rounding noise of f: judge steps by the gradient instead
        flat = -slope <= 1e-10 * (1.0 + abs(fx))
        gnorm = np.abs(g).max()
        alpha = 1.0
        while True:
            trial = beta + alpha * p
            f_trial = f(trial)
            if f_trial <= fx + c1 * alpha * slope:
                g_trial = -gradient(trial, problem)
                break
            if flat:
                g_trial = -gradient(trial, problem)
                if np.abs(g_trial).max() < gnorm:
                    break
            alpha *= 0.5
            if alpha < 1e-10:
                trial = None
                break
        if trial is None:
            message = "line search failed"
            break
        it += 1
        if np.any(np.abs(trial) > beta_bound):
            raise SeparationError(
                f"|beta| exceeded {beta_bound} at iteration {it}; the likelihood appears unbounded"
            )
        s = trial - beta
        y = g_trial - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            I = np.eye(problem.K)
            Hinv = (I - rho * np.outer(s, y)) @ Hinv @ (I - rho * np.outer(y, s)) \
                + rho * np.outer(s, s)
        beta, fx, g = trial, f_trial, g_trial
        converged = np.abs(g).max() <= grad_tol
        if converged:
            message = "gradient tolerance met"
    if not converged and not message:
        message = f"maximum iterations ({max_iter}) reached"
    if converged and np.abs(beta).max() > beta_bound / 5 and is_separated(problem):
        raise SeparationError("the data are separated; the pseudo-likelihood has no finite "
                              "maximiser")
    return EstimationResult(
        beta_hat=beta,
        loglik=-fx,
        grad_inf_norm=float(np.abs(g).max()),
        iterations=it,
        converged=bool(converged),
        n_singletons=problem.n_singletons,
        message=message,
    )


def covariance(beta_hat, problem: EstimationProblem, rcond: float = 1e-10) -> np.ndarray:
    """Inverse of the negative Hessian at ``beta_hat``."""
    info = -hessian(beta_hat, problem)
    info = 0.5 * (info + info.T)
    eig = np.linalg.eigvalsh(info)
    if eig.max() <= 0 or eig.min() <= rcond * eig.max():
        raise RankDeficiencyError(
            f"information matrix is singular (eigenvalues {eig.min():.3g} .. {eig.max():.3g})"
        )
    cov = np.linalg.inv(info)
    return 0.5 * (cov + cov.T)
