"""Varying-dispersion beta regression with bootstrap model selection."""
from .criteria import (CriterionKind, CriterionReport, Replicates, bcv, bootstrap_replicates,
                       bqcv, classic_criterion, cv632, eic, qcv632)
from .diagnostics import pseudo_r2, residuals_w2, simulated_envelope
from .errors import (BetaselError, ConvergenceError, DomainError, NumericError, ParseError,
                     QuorumError, SelectionError, ValidationError)
from .links import LinkKind, link_deriv, link_eval, link_inverse
from .model import Dataset, FitResult, ModelSpec, ParamVector, fisher_info, fit, loglik, score
from .selection import (INTERCEPT, CandidateSet, SelectionResult, enumerate_candidates, select,
                        select_two_step)
from .simulation import PRESETS, SimulationReport, classify, make_design, run_experiment
from .special import RngStream, digamma, log_gamma, sample_beta, trigamma

__version__ = "0.1.0"

__all__ = [
    "CriterionKind",
    "CriterionReport",
    "Replicates",
    "bcv",
    "bootstrap_replicates",
    "bqcv",
    "classic_criterion",
    "cv632",
    "eic",
    "qcv632",
    "pseudo_r2",
    "residuals_w2",
    "simulated_envelope",
    "BetaselError",
    "ConvergenceError",
    "DomainError",
    "NumericError",
    "ParseError",
    "QuorumError",
    "SelectionError",
    "ValidationError",
    "LinkKind",
    "link_deriv",
    "link_eval",
    "link_inverse",
    "Dataset",
    "FitResult",
    "ModelSpec",
    "ParamVector",
    "fisher_info",
    "fit",
    "loglik",
    "score",
    "INTERCEPT",
    "CandidateSet",
    "SelectionResult",
    "enumerate_candidates",
    "select",
    "select_two_step",
    "PRESETS",
    "SimulationReport",
    "classify",
    "make_design",
    "run_experiment",
    "RngStream",
    "digamma",
    "log_gamma",
    "sample_beta",
    "trigamma",
]
