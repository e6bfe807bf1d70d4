import io
import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conceptforge.clients import MockJudgeClient, TextGenClient
from conceptforge.errors import (
    EmptyInput,
    JudgeUnavailable,
    MissingKey,
    NotJson,
    OutOfRange,
)
from conceptforge.evalharness import (
    METRICS,
    EvalItem,
    MetricScores,
    RelativeChoice,
    aggregate,
    cohen_kappa,
    inter_annotator,
    load_annotations_csv,
    parse_absolute,
    parse_relative,
    render_report,
    report_to_dict,
    run_eval,
)
from conceptforge.manifest import read_jsonl

from conftest import FIXTURES

scores_strategy = st.tuples(*([st.integers(min_value=1, max_value=5)] * 4))


class TestParseAbsolute:
    def test_plain_json(self):
        got = parse_absolute('{"Faithfulness":4,"Novelty":5,"Practicality":3,"Coherence":5}')
        assert got == MetricScores(4, 5, 3, 5)

    def test_score_six_out_of_range(self):
        with pytest.raises(OutOfRange):
            parse_absolute('{"Faithfulness":6,"Novelty":5,"Practicality":3,"Coherence":5}')

    def test_score_zero_out_of_range(self):
        with pytest.raises(OutOfRange):
            parse_absolute('{"Faithfulness":0,"Novelty":5,"Practicality":3,"Coherence":5}')

    def test_float_rejected(self):
        with pytest.raises(OutOfRange):
            parse_absolute('{"Faithfulness":4.5,"Novelty":5,"Practicality":3,"Coherence":5}')

    def test_missing_key(self):
        with pytest.raises(MissingKey):
            parse_absolute('{"Faithfulness":4,"Novelty":5,"Practicality":3}')

    def test_no_json(self):
        with pytest.raises(NotJson):
            parse_absolute("I would rate this a solid four out of five.")

    def test_prose_wrapping(self):
        text = (
            "Thanks! After careful review (see notes {draft}), here's my verdict:\n"
            '{"Faithfulness": 2, "Novelty": 3, "Practicality": 4, "Coherence": 1}\n'
            "Happy to elaborate."
        )
        assert parse_absolute(text) == MetricScores(2, 3, 4, 1)

    def test_fixture_corpus_parses_fully(self):
        rows = read_jsonl(FIXTURES / "judge_replies.jsonl")
        assert len(rows) == 50
        for row in rows:
            got = parse_absolute(row["raw"])
            assert got.as_dict() == row["expected"]

    @given(scores_strategy)
    def test_render_parse_roundtrip(self, values):
        scores = MetricScores(*values)
        assert parse_absolute(scores.render()) == scores

    def test_error_carries_raw_text(self):
        raw = "no json here"
        with pytest.raises(NotJson) as exc:
            parse_absolute(raw)
        assert exc.value.raw == raw


class TestParseRelative:
    def test_plain(self):
        got = parse_relative('{"Faithfulness":"A","Novelty":"B","Practicality":"C","Coherence":"A"}')
        assert got == RelativeChoice("A", "B", "C", "A")

    def test_lowercase_normalized(self):
        got = parse_relative('{"Faithfulness":"a","Novelty":"b","Practicality":"c","Coherence":"a"}')
        assert got == RelativeChoice("A", "B", "C", "A")

    def test_bad_choice(self):
        with pytest.raises(OutOfRange):
            parse_relative('{"Faithfulness":"D","Novelty":"B","Practicality":"C","Coherence":"A"}')

    def test_missing_key(self):
        with pytest.raises(MissingKey):
            parse_relative('{"Faithfulness":"A"}')


class ScriptedJudge(TextGenClient):
    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = 0

    def generate(self, prompt, images=()):
        self.calls += 1
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


class TestRunEval:
    def items(self, n, relative=False):
        return [
            EvalItem(
                item_id=f"item-{i:03d}",
                prompt=f"a new design that has functions of f{i}.",
                image=f"mock://gen/{i}",
                image_b=f"mock://ref/{i}" if relative else None,
            )
            for i in range(n)
        ]

    def test_mock_judge_500_absolute(self):
        records = run_eval(self.items(500), MockJudgeClient(), mode="absolute")
        assert len(records) == 500
        assert all(r["scores"] is not None for r in records)
        for r in records:
            assert set(r["scores"]) == set(METRICS)
            assert all(1 <= v <= 5 for v in r["scores"].values())

    def test_deterministic_with_mock(self):
        r1 = run_eval(self.items(20), MockJudgeClient(), mode="absolute")
        r2 = run_eval(self.items(20), MockJudgeClient(), mode="absolute")
        assert r1 == r2

    def test_three_malformed_then_success(self):
        good = '{"Faithfulness":4,"Novelty":4,"Practicality":4,"Coherence":4}'
        judge = ScriptedJudge(["garbage", "still no", "nope", good])
        records = run_eval(self.items(1), judge, mode="absolute", retries=3)
        assert len(records) == 1
        assert records[0]["scores"] == {m: 4 for m in METRICS}
        assert records[0]["retries"] == 3

    def test_parse_failure_recorded_after_budget(self):
        judge = ScriptedJudge(["bad"] * 4)
        records = run_eval(self.items(1), judge, mode="absolute", retries=3)
        assert records[0]["scores"] is None
        assert records[0]["failure"]["error"] == "NotJson"
        assert records[0]["retries"] == 3

    def test_judge_unavailable_after_budget(self):
        from conceptforge.errors import ClientError

        judge = ScriptedJudge([ClientError("down")] * 4)
        with pytest.raises(JudgeUnavailable):
            run_eval(self.items(1), judge, mode="absolute", retries=3)

    def test_resumable_manifest(self, tmp_path):
        path = tmp_path / "eval.jsonl"
        run_eval(self.items(5), MockJudgeClient(), mode="absolute", manifest_path=path)
        counting = MockJudgeClient()
        records = run_eval(self.items(5), counting, mode="absolute", manifest_path=path)
        assert counting.calls == 0
        assert len(records) == 5

    def test_relative_requires_image_b(self):
        with pytest.raises(ValueError):
            run_eval(self.items(1, relative=False), MockJudgeClient(), mode="relative")

    def test_relative_mode_choices(self):
        records = run_eval(self.items(30, relative=True), MockJudgeClient(), mode="relative")
        assert all(r["choice"] is not None for r in records)
        seen = {c for r in records for c in r["choice"].values()}
        assert seen <= {"A", "B", "C"}

    def test_swap_and_rejudge(self):
        records = run_eval(self.items(3, relative=True), MockJudgeClient(),
                           mode="relative", swap_and_rejudge=True)
        for r in records:
            assert r["swapped"]["choice"] is not None


class TestAggregate:
    def rec(self, scores=None, choice=None, model=None):
        return {
            "key": "k", "mode": "absolute" if scores else "relative",
            "model": model, "scores": scores, "choice": choice,
        }

    def test_midpoint_means(self):
        records = [
            self.rec(scores={m: 4 for m in METRICS}),
            self.rec(scores={m: 2 for m in METRICS}),
        ]
        report = aggregate(records)
        assert report.means == {m: 3.00 for m in METRICS}
        assert report.n == 2

    def test_single_record_identity(self):
        records = [self.rec(scores=dict(zip(METRICS, (1, 2, 3, 4))))]
        report = aggregate(records)
        assert report.means == dict(zip(METRICS, (1.0, 2.0, 3.0, 4.0)))

    def test_relative_shares(self):
        seq = ["A", "A", "B", "C"]
        records = [
            self.rec(choice={m: c for m in METRICS}) for c in seq
        ]
        report = aggregate(records)
        for m in METRICS:
            assert report.relative[m] == {"win": 50.0, "tie": 25.0, "loss": 25.0}

    def test_relative_sums_to_100(self):
        rng = np.random.default_rng(5)
        records = [
            self.rec(choice={m: "ABC"[rng.integers(0, 3)] for m in METRICS})
            for _ in range(37)
        ]
        report = aggregate(records)
        for m in METRICS:
            total = sum(report.relative[m].values())
            assert abs(total - 100.0) <= 0.1

    def test_permutation_invariant(self):
        rng = np.random.default_rng(6)
        records = [
            self.rec(scores={m: int(rng.integers(1, 6)) for m in METRICS})
            for _ in range(8)
        ]
        base = aggregate(records).means
        for perm in itertools.islice(itertools.permutations(records), 12):
            assert aggregate(list(perm)).means == base

    def test_rounded_to_two_decimals(self):
        records = [self.rec(scores={m: v for m in METRICS}) for v in (1, 2, 2)]
        report = aggregate(records)
        assert report.means == {m: 1.67 for m in METRICS}

    def test_per_model_breakdown(self):
        records = [
            self.rec(scores={m: 5 for m in METRICS}, model="ours"),
            self.rec(scores={m: 1 for m in METRICS}, model="baseline"),
        ]
        report = aggregate(records)
        assert report.per_model["ours"].means == {m: 5.0 for m in METRICS}
        assert report.per_model["baseline"].means == {m: 1.0 for m in METRICS}

    def test_failures_counted_not_aggregated(self):
        records = [
            self.rec(scores={m: 4 for m in METRICS}),
            {"key": "x", "mode": "absolute", "model": None, "scores": None,
             "choice": None, "failure": {"error": "NotJson"}},
        ]
        report = aggregate(records)
        assert report.n == 1 and report.failures == 1

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            aggregate([])

    def test_render_and_dict(self):
        records = [self.rec(scores={m: 4 for m in METRICS})]
        report = aggregate(records)
        text = render_report(report)
        header = text.splitlines()[0]
        assert list(METRICS) == [m for m in METRICS if m in header]
        assert header.index("Faithfulness") < header.index("Novelty") < \
            header.index("Practicality") < header.index("Coherence")
        doc = report_to_dict(report)
        assert doc["means"]["Coherence"] == 4.0


class TestKappa:
    def test_rater_against_itself(self):
        ratings = [1, 3, 5, 2, 2, 4]
        assert cohen_kappa(ratings, ratings) == 1.0

    def test_constant_raters_degenerate(self):
        assert cohen_kappa([3, 3, 3], [3, 3, 3]) == 1.0

    def test_hand_confusion_table(self):
        # 2x2 confusion on labels {1,2}: 8 exact matches -> po=0.8; both
        # marginals are 0.5/0.5 -> pe=0.5; kappa = (0.8-0.5)/(1-0.5) = 0.6
        r1 = [1] * 5 + [2] * 5
        r2 = [1, 1, 1, 1, 2, 2, 2, 2, 2, 1]
        po = 8 / 10
        pe = 0.5 * 0.5 + 0.5 * 0.5
        expected = (po - pe) / (1 - pe)
        assert cohen_kappa(r1, r2) == pytest.approx(expected, abs=1e-12)

    def test_linear_weights(self):
        r1 = [1, 2, 3, 4, 5]
        r2 = [2, 3, 4, 5, 5]
        unweighted = cohen_kappa(r1, r2)
        weighted = cohen_kappa(r1, r2, weights="linear")
        assert weighted != unweighted
        assert -1.0 <= weighted <= 1.0

    def test_random_raters_near_zero(self):
        rng = np.random.default_rng(1234)
        r1 = list(rng.integers(1, 6, size=1000))
        r2 = list(rng.integers(1, 6, size=1000))
        assert abs(cohen_kappa(r1, r2)) <= 0.1

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            cohen_kappa([], [])


class TestInterAnnotator:
    def test_identical_raters(self):
        pairs = [(MetricScores(4, 3, 2, 5), MetricScores(4, 3, 2, 5))] * 4
        report = inter_annotator(pairs)
        assert report.percent_agreement["overall"] == 100.0
        assert report.kappa["overall"] == 1.0
        assert report.n_items == 4

    def test_eight_item_fixture_matches_hand_computation(self):
        pairs = load_annotations_csv(FIXTURES / "annotations.csv")
        assert len(pairs) == 8
        report = inter_annotator(pairs)
        # frozen from an exact-fraction confusion-table computation
        assert report.percent_agreement["Faithfulness"] == pytest.approx(87.5, abs=1e-9)
        assert report.percent_agreement["Novelty"] == pytest.approx(87.5, abs=1e-9)
        assert report.percent_agreement["Practicality"] == pytest.approx(100.0, abs=1e-9)
        assert report.percent_agreement["Coherence"] == pytest.approx(25.0, abs=1e-9)
        assert report.percent_agreement["overall"] == pytest.approx(75.0, abs=1e-9)
        assert report.kappa["Faithfulness"] == pytest.approx(17 / 49, abs=1e-9)
        assert report.kappa["Novelty"] == pytest.approx(13 / 25, abs=1e-9)
        assert report.kappa["Practicality"] == pytest.approx(1.0, abs=1e-9)
        assert report.kappa["Coherence"] == pytest.approx(1 / 13, abs=1e-9)
        assert report.kappa["overall"] == pytest.approx(13 / 29, abs=1e-9)

    def test_off_by_one_counts_as_agreement(self):
        pairs = [(MetricScores(4, 4, 4, 4), MetricScores(5, 3, 4, 4))]
        report = inter_annotator(pairs)
        assert report.percent_agreement["overall"] == 100.0
        # but kappa sees the disagreement
        assert report.kappa["overall"] < 1.0

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            inter_annotator([])

    @settings(max_examples=25)
    @given(st.lists(st.tuples(scores_strategy, scores_strategy), min_size=1, max_size=12))
    def test_agreement_bounds(self, raw):
        pairs = [(MetricScores(*a), MetricScores(*b)) for a, b in raw]
        report = inter_annotator(pairs)
        for v in report.percent_agreement.values():
            assert 0.0 <= v <= 100.0
        for v in report.kappa.values():
            assert -1.0 <= v <= 1.0 + 1e-12


class TestAnnotationsCsv:
    def test_rejects_three_raters(self):
        text = "item_id,rater_id,metric,score\n"
        for rater in ("r1", "r2", "r3"):
            for m in METRICS:
                text += f"i1,{rater},{m.lower()},3\n"
        with pytest.raises(ValueError):
            load_annotations_csv(io.StringIO(text))

    def test_rejects_missing_metric(self):
        text = "item_id,rater_id,metric,score\ni1,r1,faithfulness,3\ni1,r2,faithfulness,3\n"
        with pytest.raises(ValueError):
            load_annotations_csv(io.StringIO(text))

    def test_unknown_metric(self):
        text = "item_id,rater_id,metric,score\ni1,r1,sparkle,3\n"
        with pytest.raises(ValueError):
            load_annotations_csv(io.StringIO(text))


def test_metric_scores_validation():
    with pytest.raises(OutOfRange):
        MetricScores(0, 3, 3, 3)
    with pytest.raises(OutOfRange):
        MetricScores(1, 3, 3, 6)


def test_mock_judge_emits_parseable_replies():
    judge = MockJudgeClient()
    from conceptforge.prompts import build_absolute_prompt, build_relative_prompt

    abs_reply = judge.generate(build_absolute_prompt(), images=("img-a",))
    assert parse_absolute(abs_reply)
    rel_reply = judge.generate(build_relative_prompt(), images=("img-a", "img-b"))
    assert parse_relative(rel_reply)
