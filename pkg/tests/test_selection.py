from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

from betasel.criteria import CriterionKind, CriterionReport
from betasel.errors import SelectionError, SpecError
from betasel.model import Dataset, ModelSpec
from betasel.selection import (EXHAUSTIVE, INTERCEPT, CandidateOutcome, CandidateSet,
                               argmin_candidate, enumerate_candidates, evaluate_candidates,
                               select, select_two_step)
from betasel.simulation import make_design, preset
from betasel.special import RngStream

POOL6 = (INTERCEPT, 0, 1, 2, 3, 4)


def test_joint_sequential_36():
    specs = enumerate_candidates(CandidateSet("joint", POOL6, POOL6))
    assert len(specs) == 36
    assert [(s.r, s.s) for s in specs[:3]] == [(1, 1), (1, 2), (1, 3)]
    assert len(set(specs)) == 36


def test_mean_only_sequential():
    specs = enumerate_candidates(CandidateSet("mean_only", POOL6, fixed_disp=(INTERCEPT, 0, 1)))
    assert [s.r for s in specs] == [1, 2, 3, 4, 5, 6]
    assert all(s.s == 3 for s in specs)


@pytest.mark.parametrize("p", [1, 3, 5])
def test_exhaustive_power_set(p):
    pool = (INTERCEPT,) + tuple(range(p))
    specs = enumerate_candidates(CandidateSet("mean_only", pool, nesting=EXHAUSTIVE))
    assert len(specs) == 2 ** p
    assert all(s.intercept_mean for s in specs)


def test_empty_pool():
    with pytest.raises(SpecError):
        enumerate_candidates(CandidateSet("disp_only", POOL6, ()))


def _outcome(spec, j, value):
    rep = CriterionReport(CriterionKind.AIC, value)
    return CandidateOutcome(spec, j, None, {CriterionKind.AIC: rep})


def test_tie_breaking_prefers_small_k_then_order():
    a = ModelSpec((0, 1), ())
    b = ModelSpec((0,), ())
    c = ModelSpec((1,), ())
    outs = [_outcome(a, 0, 5.0), _outcome(b, 1, 5.0), _outcome(c, 2, 5.0)]
    pos, tied = argmin_candidate(outs, CriterionKind.AIC)
    assert pos == 1 and tied


def test_all_failed():
    outs = [_outcome(ModelSpec(), 0, float("nan"))]
    with pytest.raises(SelectionError):
        argmin_candidate(outs, CriterionKind.AIC)


@pytest.fixture(scope="module")
def sim_data():
    dgp = preset("model7")
    X = make_design(60, 6, seed=1)
    return Dataset(dgp.simulate(X, RngStream(1, (5,))), X[:, 1:])


def test_single_candidate(sim_data):
    cand = CandidateSet("mean_only", (INTERCEPT,), fixed_disp=(INTERCEPT,))
    res = select(sim_data, cand, "aic")
    assert res.winner == ModelSpec()


def test_argmin_properties(sim_data):
    cand = CandidateSet("joint", POOL6[:4], POOL6[:4])
    res = select(sim_data, cand, "bqcv", W=30, seed=3)
    outs = res.per_candidate
    kind = res.criterion
    best, _ = argmin_candidate(outs, kind)
    assert outs[best].spec == res.winner
    # shifting every value leaves the winner unchanged
    shifted = [replace(o, reports={k: replace(r, value=r.value + 123.0) for k, r in o.reports.items()})
               for o in outs]
    assert argmin_candidate(shifted, kind)[0] == best
    # dropping the winner yields the runner-up of the original table
    runner, _ = argmin_candidate(outs, kind, exclude={best})
    values = sorted((o.value(kind), o.spec.k, o.index) for o in outs if np.isfinite(o.value(kind)))
    assert outs[runner].index == values[1][2]


def test_parallel_schedule_invariance(sim_data):
    specs = enumerate_candidates(CandidateSet("joint", POOL6[:3], POOL6[:3]))
    kinds = ["aic", "bqcv", "bcv", "eic3np"]
    serial = evaluate_candidates(sim_data, specs, kinds, 20, RngStream(7))
    with ThreadPoolExecutor(4) as ex:
        par = evaluate_candidates(sim_data, specs, kinds, 20, RngStream(7), executor=ex)
    for a, b in zip(serial, par):
        for k in a.reports:
            assert a.reports[k].value == b.reports[k].value


def test_candidate_stream_blocks_are_stable(sim_data):
    specs = enumerate_candidates(CandidateSet("joint", POOL6[:3], POOL6[:3]))
    full = evaluate_candidates(sim_data, specs, ["bqcv"], 15, RngStream(2))
    part = evaluate_candidates(sim_data, specs[:4], ["bqcv"], 15, RngStream(2))
    for a, b in zip(full[:4], part):
        assert a.value(CriterionKind.BQCV) == b.value(CriterionKind.BQCV)


def test_two_step_structure(sim_data):
    res = select_two_step(sim_data, POOL6[:4], POOL6[:4], "aic")
    step1, step2 = res.steps
    assert all(o.spec.is_constant_dispersion for o in step1)
    mean_winner = step1[argmin_candidate(step1, res.criterion)[0]].spec
    assert all(o.spec.mean_cols == mean_winner.mean_cols for o in step2)
    assert res.winner.mean_cols == mean_winner.mean_cols


def test_two_step_without_dispersion_pool(sim_data):
    res = select_two_step(sim_data, POOL6[:4], (), "aic")
    assert res.winner.is_constant_dispersion
    assert len(res.steps) == 1


def test_aic_consistency_against_underfit():
    dgp = preset("model7")
    X = make_design(2000, 3, seed=8)
    true = ModelSpec((0, 1), (0, 1))
    wrong = ModelSpec((0,), (0, 1))
    hits = 0
    for i in range(100):
        data = Dataset(dgp.simulate(X, RngStream(8, (i,))), X[:, 1:])
        outs = evaluate_candidates(data, [wrong, true], ["aic"], 1, RngStream(0))
        hits += outs[argmin_candidate(outs, CriterionKind.AIC)[0]].spec == true
    assert hits >= 95


def test_json_report(sim_data):
    res = select(sim_data, CandidateSet("mean_only", POOL6[:3], fixed_disp=(INTERCEPT,)), "aic")
    d = res.to_dict()
    assert set(d) >= {"criterion", "winner", "candidates", "seed", "W"}
    assert set(d["winner"]) == {"mean_cols", "disp_cols", "links"}
    assert {"spec", "value", "loglik", "k", "converged"} <= set(d["candidates"][0])
