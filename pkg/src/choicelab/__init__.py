"""Estimating logit models on sufficient sets built from past choices."""
from .core import (ChoiceContext, Parameters, choice_probabilities, gumbel_max_choice,
                   sample_choice, systematic_utility)
from .corrections import (CorrectionTerms, EmpiricalFrequency, ExactCorrection,
                          KnownImportance, NoCorrection, UniformConditioning,
                          corrected_probabilities, correction_terms, is_uniform_conditioning)
from .estimation import (EstimationProblem, EstimationResult, Observation, covariance,
                         estimate, gradient, hessian, pseudo_loglik)
from .scenario import (ChoiceHistory, Population, ScenarioConfig, build_population,
                       read_dataset, simulate_history, write_dataset)
from .sets import (SufficientSet, build_importance_sample, build_ip, build_pph,
                   build_random_sample)

__version__ = "0.1.0"
