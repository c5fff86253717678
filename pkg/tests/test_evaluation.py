import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spanrca import fixtures
from spanrca.errors import EmptyOutcomeSet, IngestError
from spanrca.evaluation import RankOutcome, match_rank, mrr, recall_at_k, run_benchmark
from spanrca.ingest import load_bundle
from spanrca.model import ComponentRef, TopologyManifest

from oracles import brute_mrr, brute_recall

M = TopologyManifest.from_triples([("svc-0", "svc", "n1"), ("p", "other", "n2")])


def outcomes(ranks):
    return [RankOutcome(f"f{i}", r) for i, r in enumerate(ranks)]


def test_pod_to_service_credit():
    cands = [ComponentRef.pod("svc-0"), ComponentRef.node("n1")]
    assert match_rank(cands, ComponentRef.service("svc"), M).rank == 1


def test_no_service_to_pod_credit():
    cands = [ComponentRef.service("other"), ComponentRef.pod("p")]
    assert match_rank(cands, ComponentRef.pod("p"), M).rank == 2


def test_absent_beyond_top10():
    cands = [ComponentRef.node(f"x{i}") for i in range(10)] + [ComponentRef.pod("p")]
    assert match_rank(cands, ComponentRef.pod("p"), M).absent
    assert match_rank(cands, ComponentRef.pod("p"), M, cutoff=11).rank == 11


def test_recall_hand_cases():
    assert recall_at_k(outcomes([1, 4, None]), 3) == pytest.approx(1 / 3)
    assert recall_at_k(outcomes([1, 1, 1]), 1) == 1.0
    assert recall_at_k(outcomes([2, 3, 5, None]), 5) == 0.75


def test_mrr_hand_cases():
    assert mrr(outcomes([1, 2, None])) == 0.5
    assert mrr(outcomes([1])) == 1.0


def test_empty_outcomes():
    with pytest.raises(EmptyOutcomeSet):
        mrr([])
    with pytest.raises(EmptyOutcomeSet):
        recall_at_k([], 1)


def test_rank_must_be_positive():
    with pytest.raises(ValueError):
        RankOutcome("f", 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.none(), st.integers(1, 10)), min_size=1, max_size=50), st.integers(1, 10))
def test_metrics_match_brute_force(ranks, k):
    o = outcomes(ranks)
    assert abs(mrr(o) - brute_mrr(ranks)) <= 1e-12
    assert abs(recall_at_k(o, k) - brute_recall(ranks, k)) <= 1e-12


@pytest.fixture(scope="module")
def small_suite(tmp_path_factory):
    root = tmp_path_factory.mktemp("suite")
    specs = fixtures.suite_scenarios(4, seed=11)
    return [load_bundle(fixtures.generate(s, root / s.failure_id)) for s in specs]


def test_run_benchmark_report(small_suite, tmp_path):
    rep = run_benchmark(small_suite[0])
    assert set(rep.recall) == {1, 3, 5, 10}
    assert rep.cases[0].rank == 1 and rep.mrr == 1.0
    rep.write_json(tmp_path / "r.json")
    rep.write_csv(tmp_path / "r.csv")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["recall"]["recall@1"] == 1.0 and doc["cutoff"] == 10
    assert (tmp_path / "r.csv").read_text().splitlines()[0].startswith("failure_id,")


def test_benchmark_without_truth(small_suite):
    b = small_suite[0]
    saved, b.ground_truth = b.ground_truth, None
    try:
        with pytest.raises(IngestError):
            run_benchmark(b)
    finally:
        b.ground_truth = saved


def test_failing_case_is_absent(small_suite):
    from spanrca.engine import diagnose_case
    from spanrca.ingest import FailureCase

    b = small_suite[1]
    good = b.ground_truth[0]
    saved = b.ground_truth
    b.ground_truth = [good, FailureCase("broken", "no-such-trace", good.root_cause)]
    try:
        rep = run_benchmark(b)
    finally:
        b.ground_truth = saved
    ranks = {c.failure_id: c for c in rep.cases}
    assert ranks[good.failure_id].rank == 1
    assert ranks["broken"].rank is None and "EmptyTrace" in ranks["broken"].error
    assert rep.mrr == 0.5
