import math

import numpy as np
import pytest

from xmcpw.metrics import (
    dcg_at_k,
    evaluate,
    mean_metric,
    ndcg_at_k,
    normalized_gain,
    precision_at_k,
    psdcg_at_k,
    psndcg_at_k,
    psp_at_k,
)
from xmcpw.ovr import TopK, topk_from_scores

from oracles import brute_metric as brute, brute_rank, random_metric_instance as random_instance


class TestPerExample:
    scores = [0.9, 0.1, 0.8, 0.2]

    def ranked(self):
        return brute_rank(self.scores)

    def test_precision(self):
        assert precision_at_k({0, 2}, self.ranked(), 2) == 1.0
        assert precision_at_k({0, 2}, self.ranked(), 3) == pytest.approx(2 / 3)
        assert precision_at_k(set(), self.ranked(), 3) == 0.0

    def test_ndcg(self):
        assert ndcg_at_k({0}, [0, 1, 2], 3) == 1.0
        assert dcg_at_k({1}, [0, 1], 2) == pytest.approx(1 / math.log(3))
        assert ndcg_at_k({1}, [0, 1], 2) == pytest.approx(math.log(2) / math.log(3))
        assert ndcg_at_k({3}, [0, 1], 2) == 0.0
        assert ndcg_at_k(set(), [0, 1], 2) == 0.0

    def test_psp(self):
        inv = np.array([4.0, 1.0])
        assert psp_at_k({0}, [0, 1], 1, inv) == 4.0
        assert psp_at_k({0, 2}, self.ranked(), 3, np.ones(4)) == precision_at_k({0, 2}, self.ranked(), 3)
        assert psp_at_k({1}, [0, 1], 1, inv) == 0.0

    def test_psndcg(self):
        inv = np.array([2.0, 1.0])
        assert psndcg_at_k({0}, [0, 1], 1, inv) == pytest.approx(2.0)
        assert psdcg_at_k({0}, [0, 1], 1, inv) == pytest.approx(2 / math.log(2))
        for k in (1, 2, 3, 4):
            assert psndcg_at_k({0, 2}, self.ranked(), k, np.ones(4)) == ndcg_at_k({0, 2}, self.ranked(), k)
        assert psndcg_at_k({1}, [0, 1], 1, inv) == 0.0

    @pytest.mark.parametrize("fn", [precision_at_k, ndcg_at_k, dcg_at_k])
    def test_k_must_be_positive(self, fn):
        with pytest.raises(ValueError):
            fn({0}, [0], 0)
        with pytest.raises(ValueError):
            psp_at_k({0}, [0], 0, np.ones(1))
        with pytest.raises(ValueError):
            psndcg_at_k(set(), [0], 0, np.ones(1))


class TestAgainstOracle:
    def test_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            scores, truth, props = random_instance(rng)
            inv = 1.0 / props
            for k in (1, 2, 3, 5):
                labels, _ = topk_from_scores(scores, k)
                for i, y in enumerate(truth):
                    ys = set(y.tolist())
                    for name, fn in (("p", precision_at_k), ("ndcg", ndcg_at_k)):
                        assert fn(ys, labels[i], k) == pytest.approx(brute(name, ys, scores[i], k, props), abs=1e-12)
                    for name, fn in (("psp", psp_at_k), ("psndcg", psndcg_at_k)):
                        got = fn(ys, labels[i], k, inv)
                        assert got == pytest.approx(brute(name, ys, scores[i], k, props), abs=1e-12)

    def test_log_base_cancels_in_normalized_forms(self):
        rng = np.random.default_rng(4)
        log2 = lambda v: math.log(v, 2)
        for _ in range(100):
            scores, truth, props = random_instance(rng)
            for i, y in enumerate(truth):
                ys = set(y.tolist())
                for name in ("ndcg", "psndcg"):
                    a = brute(name, ys, scores[i], 3, props)
                    b = brute(name, ys, scores[i], 3, props, log=log2)
                    assert a == pytest.approx(b, abs=1e-12)


class TestAggregates:
    def test_psp_dominates_precision(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            scores, truth, props = random_instance(rng)
            labels, _ = topk_from_scores(scores, 3)
            inv = 1.0 / props
            for y, row in zip(truth, labels):
                assert psp_at_k(y, row, 3, inv) >= precision_at_k(y, row, 3) - 1e-15

    def test_permutation_invariant(self):
        rng = np.random.default_rng(2)
        scores, truth, props = random_instance(rng)
        labels, vals = topk_from_scores(scores, 3)
        order = rng.permutation(len(truth))
        a = evaluate(TopK(labels, vals), truth, 1 / props, ks=[1, 3])
        b = evaluate(TopK(labels[order], vals[order]), [truth[i] for i in order], 1 / props, ks=[1, 3])
        for key in a.values:
            if math.isnan(a[key]):
                assert math.isnan(b[key])
            else:
                assert a[key] == pytest.approx(b[key], abs=1e-12)

    def test_empty_truth_skipped_in_propensity_means(self):
        truth = [np.array([0]), np.array([], dtype=int)]
        preds = [[0, 1], [0, 1]]
        inv = np.array([2.0, 1.0])
        assert mean_metric("psp", 1, preds, truth, inv) == (2.0, 1)
        assert mean_metric("p", 1, preds, truth, inv) == (0.5, 0)

    def test_report_lines(self):
        report = evaluate([[0]], [np.array([0])], np.ones(1), ks=[1])
        assert "p@1=1.000000" in report.lines()
        assert "norm_psp@1=100.000000" in report.lines()
        assert "psndcg" in report.table()

    def test_bounds(self):
        rng = np.random.default_rng(5)
        scores, truth, props = random_instance(rng)
        labels, vals = topk_from_scores(scores, 5)
        report = evaluate(TopK(labels, vals), truth, 1 / props, ks=[1, 3, 5], normalized=False)
        for k in (1, 3, 5):
            assert 0 <= report[f"p@{k}"] <= 1
            assert 0 <= report[f"ndcg@{k}"] <= 1 + 1e-12
            assert report[f"psp@{k}"] >= 0


class TestNormalizedGain:
    truth = [np.array([0, 2]), np.array([1])]
    inv = np.array([2.0, 3.0, 1.5])

    def test_self_normalization(self):
        preds = [[0, 2, 1], [1, 0, 2]]
        for metric in ("psp", "psndcg"):
            for k in (1, 2, 3):
                assert normalized_gain(metric, k, preds, self.truth, self.inv) == pytest.approx(100.0)

    def test_zero_hits(self):
        preds = [[1], [0]]
        assert normalized_gain("psp", 1, preds, self.truth, self.inv) == 0.0

    def test_hand_value(self):
        # prediction hits label 2 (inv 1.5) instead of label 0 (inv 2) for the first example
        preds = [[2], [1]]
        want = 100 * ((1.5 + 3.0) / 2) / ((2.0 + 3.0) / 2)
        assert normalized_gain("psp", 1, preds, self.truth, self.inv) == pytest.approx(want)

    def test_undefined_reference(self, caplog):
        out = normalized_gain("psp", 1, [[0]], [np.array([], dtype=int)], np.ones(2))
        assert math.isnan(out)
        assert "undefined" in caplog.text

    def test_vanilla_metric_rejected(self):
        with pytest.raises(ValueError):
            normalized_gain("p", 1, [[0]], [np.array([0])], np.ones(1))
