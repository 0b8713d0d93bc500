"""Monte Carlo harness for selection-frequency experiments.

Each replication simulates a response from a data-generating process over a
fixed uniform design, fits every candidate once, evaluates all requested
criteria on those fits and classifies each criterion's winner as under-,
correctly or over-specified.
"""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .criteria import CriterionKind
from .errors import BetaselError, DomainError
from .links import LinkKind, link_inverse
from .model import Dataset, ModelSpec
from .selection import (DISP_ONLY, INTERCEPT, JOINT, MEAN_ONLY, SEQUENTIAL, CandidateSet,
                        FitCounter, argmin_candidate, enumerate_candidates,
                        evaluate_candidates, make_spec)
from .special import RngStream, sample_beta

UNDER, CORRECT, OVER, FAILED = "under", "correct", "over", "failures"
DEFAULT_POOL = 6


@dataclass(frozen=True)
class DgpPreset:
    name: str
    beta_true: tuple
    gamma_true: tuple
    mean_link: LinkKind = LinkKind.LOGIT
    disp_link: LinkKind = LinkKind.LOGIT

    @property
    def r0(self) -> int:
        return len(self.beta_true)

    @property
    def s0(self) -> int:
        return len(self.gamma_true)

    @property
    def code(self) -> int:
        return int(self.name.removeprefix("model"))

    def moments(self, design: np.ndarray):
        """``(mu, sigma)`` per row of a design whose first column is the intercept."""
        mu = link_inverse(self.mean_link, design[:, :self.r0] @ np.asarray(self.beta_true))
        sigma = link_inverse(self.disp_link, design[:, :self.s0] @ np.asarray(self.gamma_true))
        return np.atleast_1d(mu), np.atleast_1d(sigma)

    def simulate(self, design: np.ndarray, stream: RngStream) -> np.ndarray:
        mu, sigma = self.moments(design)
        phi = (1.0 - sigma ** 2) / sigma ** 2
        return sample_beta(stream, mu * phi, (1.0 - mu) * phi)


PRESETS = {
    "model5": DgpPreset("model5", (-1.5, 1.0, 1.0), (-0.7, -0.6, -0.6)),
    "model6": DgpPreset("model6", (1.0, -0.75, -0.25), (-0.7, -0.5, -0.3)),
    "model7": DgpPreset("model7", (-1.5, 1.0, 1.0), (-1.1, -1.1, -1.1)),
    "model8": DgpPreset("model8", (1.0, -0.75, -0.25), (-1.45, -1.0, -0.5)),
}


def preset(name) -> DgpPreset:
    if isinstance(name, DgpPreset):
        return name
    try:
        return PRESETS[str(name).lower()]
    except KeyError:
        raise DomainError(f"unknown DGP {name!r}; expected one of {', '.join(PRESETS)}") from None


def make_design(n: int, p: int, seed=0, *, stream: RngStream | None = None) -> np.ndarray:
    """``n x p`` design: a column of ones followed by ``p - 1`` Uniform(0, 1) columns."""
    if n < 1 or p < 1:
        raise DomainError("design needs n >= 1 and p >= 1")
    stream = stream or RngStream(seed)
    X = np.ones((n, p))
    if p > 1:
        X[:, 1:] = stream.generator.random((n, p - 1))
    return X


def candidate_set(mode: str, dgp: DgpPreset, pool_size: int = DEFAULT_POOL) -> CandidateSet:
    """Sequentially nested pools over the design columns, intercept first."""
    pool = (INTERCEPT,) + tuple(range(pool_size - 1))
    true_mean = (INTERCEPT,) + tuple(range(dgp.r0 - 1))
    true_disp = (INTERCEPT,) + tuple(range(dgp.s0 - 1))
    return CandidateSet(mode, pool, pool, SEQUENTIAL, dgp.mean_link, dgp.disp_link,
                        fixed_mean=true_mean, fixed_disp=true_disp)


def classify(winner: ModelSpec, dgp: DgpPreset, mode: str) -> str:
    """Compare the nested orders of ``winner`` with the true orders.

    Any submodel below its true order makes the winner ``under``; exact
    orders in every active submodel make it ``correct``; anything else is
    ``over``.
    """
    if mode == JOINT:
        pairs = [(winner.r, dgp.r0), (winner.s, dgp.s0)]
    elif mode == MEAN_ONLY:
        pairs = [(winner.r, dgp.r0)]
    elif mode == DISP_ONLY:
        pairs = [(winner.s, dgp.s0)]
    else:
        raise DomainError(f"unknown simulation mode {mode!r}")
    if any(got < true for got, true in pairs):
        return UNDER
    if all(got == true for got, true in pairs):
        return CORRECT
    return OVER


@dataclass(frozen=True, eq=False)
class SimulationReport:
    dgp: DgpPreset
    n: int
    reps: int
    W: int
    mode: str
    criteria: tuple
    per_criterion: dict
    failures: int
    seed: int
    fits: int = 0
    rep_offset: int = 0
    design: np.ndarray = field(default=None, repr=False)

    def counts(self, kind) -> dict:
        return self.per_criterion[CriterionKind.parse(kind)]

    def proportion(self, kind, outcome: str) -> float:
        return self.counts(kind)[outcome] / self.reps

    def to_dict(self) -> dict:
        return {
            "dgp": {"name": self.dgp.name, "beta": list(self.dgp.beta_true),
                    "gamma": list(self.dgp.gamma_true), "r0": self.dgp.r0, "s0": self.dgp.s0},
            "n": self.n,
            "reps": self.reps,
            "rep_offset": self.rep_offset,
            "W": self.W,
            "mode": self.mode,
            "seed": self.seed,
            "failures": self.failures,
            "fits": self.fits,
            "per_criterion": {k.label: dict(self.per_criterion[k]) for k in self.criteria},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["criterion", UNDER, CORRECT, OVER, FAILED])
        for k in self.criteria:
            c = self.per_criterion[k]
            w.writerow([k.label, c[UNDER], c[CORRECT], c[OVER], c[FAILED]])
        return buf.getvalue()


def _replication(i, dgp, design, data_cols, specs, true_index, criteria, W, mode, root):
    y = dgp.simulate(design, root.child(1, i))
    data = Dataset(y, data_cols)
    counter = FitCounter()
    outcomes = evaluate_candidates(data, specs, criteria, W, root.child(2, i), fitter=counter)
    true_fit = outcomes[true_index].fit
    labels = {}
    if true_fit is None or not true_fit.converged:
        return None, counter.count
    for kind in criteria:
        try:
            pos, _ = argmin_candidate(outcomes, kind)
        except BetaselError:
            labels[kind] = FAILED
            continue
        labels[kind] = classify(outcomes[pos].spec, dgp, mode)
    return labels, counter.count


def run_experiment(dgp, n: int, reps: int = 200, W: int = 100, mode: str = JOINT,
                   criteria="all", seed: int = 0, *, executor=None, rep_offset: int = 0,
                   pool_size: int = DEFAULT_POOL) -> SimulationReport:
    """Selection frequencies of each criterion over ``reps`` replications.

    Replication ``i`` (counted from ``rep_offset``) uses its own stream block,
    so splitting a run into disjoint offset ranges and adding the counts
    gives the same table. A replication whose true-model fit fails counts as
    a failure for every criterion.
    """
    dgp = preset(dgp)
    criteria = tuple(CriterionKind.parse_list(criteria))
    if mode not in (JOINT, MEAN_ONLY, DISP_ONLY):
        raise DomainError(f"unknown simulation mode {mode!r}")
    if pool_size < max(dgp.r0, dgp.s0):
        raise DomainError("candidate pool is smaller than the true model")
    cand = candidate_set(mode, dgp, pool_size)
    specs = enumerate_candidates(cand)
    largest = max(s.k for s in specs)
    if n <= largest:
        raise DomainError(f"n must exceed the largest candidate size k={largest}")
    true_spec = make_spec((INTERCEPT,) + tuple(range(dgp.r0 - 1)),
                          (INTERCEPT,) + tuple(range(dgp.s0 - 1)), dgp.mean_link, dgp.disp_link)
    true_index = specs.index(true_spec)
    root = RngStream(seed)
    design = make_design(n, pool_size, stream=root.child(0, dgp.code, n))
    data_cols = design[:, 1:]

    def task(i):
        return _replication(i, dgp, design, data_cols, specs, true_index, criteria, W, mode, root)

    idx = range(rep_offset, rep_offset + reps)
    results = list(map(task, idx)) if executor is None else list(executor.map(task, idx))
    per = {k: Counter({UNDER: 0, CORRECT: 0, OVER: 0, FAILED: 0}) for k in criteria}
    failures = 0
    fits = 0
    for labels, nfit in results:
        fits += nfit
        if labels is None:
            failures += 1
            for k in criteria:
                per[k][FAILED] += 1
            continue
        for k in criteria:
            per[k][labels[k]] += 1
    per = {k: {o: int(c[o]) for o in (UNDER, CORRECT, OVER, FAILED)} for k, c in per.items()}
    return SimulationReport(dgp, n, reps, W, mode, criteria, per, failures, seed, fits,
                            rep_offset, design)
