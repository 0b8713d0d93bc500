"""Candidate enumeration and winner selection.

A candidate pool is an ordered list of regressors for one submodel. Entries
are covariate column indices, plus optionally the :data:`INTERCEPT` marker.
Sequential nesting takes the first 1, 2, ... entries; exhaustive nesting
takes every subset of the covariates, always keeping the intercept when the
pool has one.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .criteria import (NONPARAMETRIC, PARAMETRIC, CriterionKind,
                       bootstrap_replicates, from_replicates)
from .errors import BetaselError, SelectionError, SpecError
from .links import LinkKind
from .model import Dataset, FitResult, ModelSpec, fit
from .special import RngStream

INTERCEPT = "intercept"

JOINT = "joint"
MEAN_ONLY = "mean_only"
DISP_ONLY = "disp_only"
TWO_STEP = "two_step"
SEQUENTIAL = "sequential"
EXHAUSTIVE = "exhaustive"

# stream sub-block for each resampling mode under a candidate's block
_MODE_BLOCK = {PARAMETRIC: 0, NONPARAMETRIC: 1}


def _norm_pool(pool) -> tuple:
    out = []
    for entry in pool:
        if isinstance(entry, str) and entry.lower() in (INTERCEPT, "(intercept)"):
            out.append(INTERCEPT)
        else:
            out.append(int(entry))
    if len(set(out)) != len(out):
        raise SpecError("candidate pool has repeated entries")
    return tuple(out)


@dataclass(frozen=True)
class CandidateSet:
    """Which candidate specs to compare.

    ``mean_only`` holds the dispersion submodel at ``fixed_disp`` and
    ``disp_only`` holds the mean submodel at ``fixed_mean`` (both pool-style
    tuples). ``two_step`` is only meaningful for :func:`select_two_step`.
    """

    mode: str = JOINT
    mean_pool: tuple = (INTERCEPT,)
    disp_pool: tuple = (INTERCEPT,)
    nesting: str = SEQUENTIAL
    mean_link: LinkKind = LinkKind.LOGIT
    disp_link: LinkKind = LinkKind.LOGIT
    fixed_mean: tuple = (INTERCEPT,)
    fixed_disp: tuple = (INTERCEPT,)

    def __post_init__(self):
        if self.mode not in (JOINT, MEAN_ONLY, DISP_ONLY, TWO_STEP):
            raise SpecError(f"unknown candidate mode {self.mode!r}")
        if self.nesting not in (SEQUENTIAL, EXHAUSTIVE):
            raise SpecError(f"unknown nesting {self.nesting!r}")
        for name in ("mean_pool", "disp_pool", "fixed_mean", "fixed_disp"):
            object.__setattr__(self, name, _norm_pool(getattr(self, name)))
        object.__setattr__(self, "mean_link", LinkKind.parse(self.mean_link))
        object.__setattr__(self, "disp_link", LinkKind.parse(self.disp_link))


def _subsets(pool, nesting):
    if not pool:
        raise SpecError("active candidate pool is empty")
    if nesting == SEQUENTIAL:
        return [pool[:r] for r in range(1, len(pool) + 1)]
    has_int = INTERCEPT in pool
    covs = [c for c in pool if c != INTERCEPT]
    out = []
    for r in range(len(covs) + 1):
        for combo in itertools.combinations(covs, r):
            entries = ((INTERCEPT,) if has_int else ()) + combo
            if entries:
                out.append(entries)
    return out


def _split(entries):
    cols = tuple(c for c in entries if c != INTERCEPT)
    return cols, INTERCEPT in entries


def make_spec(mean_entries, disp_entries, mean_link=LinkKind.LOGIT,
              disp_link=LinkKind.LOGIT) -> ModelSpec:
    mc, mi = _split(_norm_pool(mean_entries))
    dc, di = _split(_norm_pool(disp_entries))
    return ModelSpec(mc, dc, mean_link, disp_link, mi, di)


def enumerate_candidates(candidates: CandidateSet) -> list:
    """Deterministically ordered candidate specs.

    Joint mode varies the dispersion submodel fastest, so sequential pools
    of sizes ``a`` and ``b`` give ``a * b`` specs ordered ``(1,1), (1,2), ...``.
    """
    c = candidates
    if c.mode == JOINT:
        means = _subsets(c.mean_pool, c.nesting)
        disps = _subsets(c.disp_pool, c.nesting)
    elif c.mode in (MEAN_ONLY, TWO_STEP):
        means = _subsets(c.mean_pool, c.nesting)
        disps = [c.fixed_disp]
    else:
        means = [c.fixed_mean]
        disps = _subsets(c.disp_pool, c.nesting)
    return [make_spec(m, d, c.mean_link, c.disp_link) for m in means for d in disps]


def spec_orders(spec: ModelSpec) -> tuple:
    return spec.r, spec.s


@dataclass(frozen=True, eq=False)
class CandidateOutcome:
    spec: ModelSpec
    index: int
    fit: FitResult | None
    reports: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def value(self, kind: CriterionKind) -> float:
        rep = self.reports.get(kind)
        return math.nan if rep is None else rep.value


class FitCounter:
    """Counts calls to the model fitter (one per candidate, never per criterion)."""

    def __init__(self):
        self.count = 0

    def __call__(self, data, spec):
        self.count += 1
        try:
            return fit(data, spec)
        except BetaselError:
            return None


def evaluate_candidates(data: Dataset, specs, criteria, W: int, stream: RngStream,
                        *, executor=None, fitter=None, quorum=None) -> list:
    """Fit every spec once and evaluate every criterion on it.

    Candidate ``j`` draws from ``stream.child(j, m)`` where ``m`` labels the
    resampling mode, so its bootstrap samples do not depend on which other
    candidates are present. Bootstrap replicates are shared by all criteria
    of the same mode. Failures are recorded per criterion, never raised.
    """
    criteria = CriterionKind.parse_list(criteria)
    fitter = fitter or FitCounter()
    modes = sorted({k.mode for k in criteria if k.mode is not None})

    def one(j, spec):
        errors = {}
        if data.n <= spec.k:
            err = f"need n > k (n={data.n}, k={spec.k})"
            return CandidateOutcome(spec, j, None, {}, {k: err for k in criteria})
        f = fitter(data, spec)
        if f is None or not f.converged:
            err = "fit did not converge"
            return CandidateOutcome(spec, j, f, {}, {k: err for k in criteria})
        reps = {}
        for mode in modes:
            try:
                reps[mode] = bootstrap_replicates(
                    data, spec, f, mode, W, stream=stream.child(j, _MODE_BLOCK[mode]))
            except BetaselError as exc:
                reps[mode] = exc
        reports = {}
        for kind in criteria:
            r = reps.get(kind.mode) if kind.mode else None
            if isinstance(r, BetaselError):
                errors[kind] = str(r)
                continue
            try:
                reports[kind] = from_replicates(kind, f, r, quorum)
            except BetaselError as exc:
                errors[kind] = str(exc)
        return CandidateOutcome(spec, j, f, reports, errors)

    jobs = list(enumerate(specs))
    if executor is None:
        return [one(j, s) for j, s in jobs]
    return list(executor.map(lambda js: one(*js), jobs))


def argmin_candidate(outcomes, kind: CriterionKind, exclude=()):
    """Index into ``outcomes`` of the best candidate, and whether a tie was broken.

    Ties on the criterion value go to the smaller ``k``, then to the earlier
    candidate.
    """
    best = None
    for pos, o in enumerate(outcomes):
        if pos in exclude:
            continue
        v = o.value(kind)
        if not math.isfinite(v):
            continue
        key = (v, o.spec.k, o.index)
        if best is None or key < best[0]:
            best = (key, pos)
    if best is None:
        raise SelectionError(f"no candidate could be evaluated under {kind.label}")
    tied = sum(1 for pos, o in enumerate(outcomes)
               if pos not in exclude and o.value(kind) == best[0][0]) > 1
    return best[1], tied


@dataclass(frozen=True, eq=False)
class SelectionResult:
    criterion: CriterionKind
    winner: ModelSpec
    per_candidate: list
    ties_broken: bool = False
    seed: int | None = None
    W: int = 0
    steps: list = field(default_factory=list)
    names: tuple = ()

    @property
    def winner_outcome(self) -> CandidateOutcome:
        for o in self.per_candidate:
            if o.spec == self.winner:
                return o
        raise SelectionError("winner missing from candidate table")

    def to_dict(self) -> dict:
        names = self.names or None

        def spec_json(spec):
            return spec.describe(names)

        def table(outcomes):
            rows = []
            for o in outcomes:
                rep = o.reports.get(self.criterion)
                rows.append({
                    "spec": spec_json(o.spec),
                    "value": None if rep is None else rep.value,
                    "loglik": None if o.fit is None else o.fit.loglik,
                    "k": o.spec.k,
                    "converged": bool(o.fit is not None and o.fit.converged),
                    "W_succeeded": None if rep is None else rep.W_succeeded,
                    "error": o.errors.get(self.criterion),
                })
            return rows

        winner = spec_json(self.winner)
        out = {
            "criterion": self.criterion.label,
            "winner": {
                "mean_cols": winner["mean"],
                "disp_cols": winner["dispersion"],
                "links": {"mean": winner["mean_link"], "dispersion": winner["disp_link"]},
            },
            "ties_broken": self.ties_broken,
            "candidates": table(self.per_candidate),
            "seed": self.seed,
            "W": self.W,
        }
        if self.steps:
            out["steps"] = [{"step": i + 1, "candidates": table(s)}
                            for i, s in enumerate(self.steps)]
        return out


def _result(kind, outcomes, seed, W, names, steps=()):
    pos, tied = argmin_candidate(outcomes, kind)
    return SelectionResult(kind, outcomes[pos].spec, list(outcomes), tied, seed, W,
                           list(steps), tuple(names))


def select(data: Dataset, candidates: CandidateSet, criterion, W: int = 200, seed: int = 0,
           *, executor=None, stream: RngStream | None = None, quorum=None) -> SelectionResult:
    """Fit every candidate and return the one minimizing ``criterion``.

    Candidates whose fit or criterion fails are kept in the table with their
    error and excluded from the argmin.
    """
    kind = CriterionKind.parse(criterion)
    if candidates.mode == TWO_STEP:
        return select_two_step(data, candidates.mean_pool, candidates.disp_pool, kind, W,
                               seed, nesting=candidates.nesting, mean_link=candidates.mean_link,
                               disp_link=candidates.disp_link, executor=executor,
                               stream=stream, quorum=quorum)
    stream = stream or RngStream(seed)
    specs = enumerate_candidates(candidates)
    outcomes = evaluate_candidates(data, specs, [kind], W, stream, executor=executor,
                                   quorum=quorum)
    return _result(kind, outcomes, seed, W, data.names)


def select_two_step(data: Dataset, mean_pool, disp_pool, criterion, W: int = 200,
                    seed: int = 0, *, nesting: str = EXHAUSTIVE,
                    mean_link=LinkKind.LOGIT, disp_link=LinkKind.LOGIT, executor=None,
                    stream: RngStream | None = None, quorum=None) -> SelectionResult:
    """Select the mean submodel under constant dispersion, then the dispersion submodel.

    Step 1 fits each mean candidate with an intercept-only dispersion on the
    identity scale. Step 2 keeps the step-1 mean submodel and enumerates
    ``disp_pool`` with ``disp_link``. An empty ``disp_pool`` stops after step 1.
    """
    kind = CriterionKind.parse(criterion)
    stream = stream or RngStream(seed)
    mean_pool = _norm_pool(mean_pool)
    disp_pool = _norm_pool(disp_pool)
    step1 = []
    for entries in _subsets(mean_pool, nesting):
        cols, icpt = _split(entries)
        step1.append(ModelSpec.constant_dispersion(cols, mean_link, icpt))
    out1 = evaluate_candidates(data, step1, [kind], W, stream.child(0), executor=executor,
                               quorum=quorum)
    pos, tied = argmin_candidate(out1, kind)
    mean_spec = out1[pos].spec
    if not disp_pool:
        return SelectionResult(kind, mean_spec, out1, tied, seed, W, [out1], tuple(data.names))
    step2 = []
    for entries in _subsets(disp_pool, nesting):
        cols, icpt = _split(entries)
        step2.append(ModelSpec(mean_spec.mean_cols, cols, mean_link, disp_link,
                               mean_spec.intercept_mean, icpt))
    out2 = evaluate_candidates(data, step2, [kind], W, stream.child(1), executor=executor,
                               quorum=quorum)
    pos2, tied2 = argmin_candidate(out2, kind)
    return SelectionResult(kind, out2[pos2].spec, out2, tied or tied2, seed, W,
                           [out1, out2], tuple(data.names))
