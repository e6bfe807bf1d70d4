"""Template fidelity: goldens pin exact bytes, spot checks pin key wording."""

import pytest

from conceptforge.prompts import (
    build_absolute_prompt,
    build_inference_prompt,
    build_relative_prompt,
    count_word,
    render_caption_prompt,
)

from conftest import GOLDENS

STOCK_POS = ["sit", "store"]
STOCK_NEG = ["chair", "car", "sofa", "bench", "shelve", "drawer"]


def golden(name: str) -> str:
    return (GOLDENS / name).read_text(encoding="utf-8")


class TestCaptionPrompt:
    def test_three_matches_golden_bytes(self):
        assert render_caption_prompt(STOCK_POS, STOCK_NEG, 3) == golden("caption_prompt_three.txt")

    def test_ten_matches_golden_bytes(self):
        got = render_caption_prompt(
            ["brew", "deliver"], ["coffee machine", "trolley", "car"], 10
        )
        assert got == golden("caption_prompt_ten.txt")

    def test_constraint_lists_rendered_exactly(self):
        out = render_caption_prompt(STOCK_POS, STOCK_NEG, 3)
        assert "Positive Constraints: [sit, store]" in out
        assert "Negative Constraints: [chair, car, sofa, bench, shelve, drawer]" in out

    def test_three_description_wording_preserved(self):
        out = render_caption_prompt(STOCK_POS, STOCK_NEG, 3)
        assert "design three different novel concepts" in out
        assert "Generate three different descriptions of three novel concepts" in out
        # the per-caption sentence cap is fixed wording, not the count
        assert "at most three sentences" in out

    def test_count_substitution(self):
        out = render_caption_prompt(STOCK_POS, STOCK_NEG, 10)
        assert "design ten different novel concepts" in out
        assert "three different novel concepts" not in out
        assert "at most three sentences" in out

    def test_separator_instruction_is_literal(self):
        out = render_caption_prompt(STOCK_POS, STOCK_NEG, 3)
        assert "Please separate each description with \\n\\n." in out

    def test_empty_negative_list(self):
        out = render_caption_prompt(["sit"], [], 3)
        assert "Negative Constraints: []" in out

    def test_byte_stable(self):
        a = render_caption_prompt(STOCK_POS, STOCK_NEG, 5)
        b = render_caption_prompt(STOCK_POS, STOCK_NEG, 5)
        assert a == b

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            render_caption_prompt([], ["x"], 3)
        with pytest.raises(ValueError):
            render_caption_prompt(["sit"], [], 0)


class TestJudgePrompts:
    def test_absolute_matches_golden_bytes(self):
        assert build_absolute_prompt() == golden("absolute_judge_prompt.txt")

    def test_relative_matches_golden_bytes(self):
        assert build_relative_prompt() == golden("relative_judge_prompt.txt")

    def test_absolute_coherence_rubric(self):
        out = build_absolute_prompt()
        assert "perfectly showcases one distinct object" in out
        assert "Please act as an impartial evaluator" in out
        for line in (
            '"Faithfulness": [Your Faithfulness Score],',
            '"Novelty": [Your Novelty Score],',
            '"Practicality": [Your Practicality Score],',
            '"Coherence": [Your Coherence Score]',
        ):
            assert line in out

    def test_absolute_has_five_point_scales(self):
        out = build_absolute_prompt()
        assert out.count("Scoring:") == 4
        for metric in ("Faithfulness:", "Novelty:", "Practicality:", "Coherence:"):
            assert metric in out

    def test_relative_choices(self):
        out = build_relative_prompt()
        assert '"A" if the first image is better,' in out
        assert '"B" if the second image is better,' in out
        assert '"C" if both are equally strong.' in out
        assert "two AI concept generators" in out

    def test_stable_across_calls(self):
        assert build_absolute_prompt() == build_absolute_prompt()
        assert build_relative_prompt() == build_relative_prompt()


class TestInferencePrompt:
    def test_brew_deliver(self):
        assert build_inference_prompt(["brew", "deliver"]) == \
            "a new design that has functions of brew, deliver."
        assert build_inference_prompt(["brew", "deliver"]) == \
            golden("inference_prompt_brew_deliver.txt")

    def test_single(self):
        assert build_inference_prompt(["sit"]) == "a new design that has functions of sit."

    def test_four_in_order(self):
        out = build_inference_prompt(["sit", "store", "brew", "drive"])
        assert out == "a new design that has functions of sit, store, brew, drive."

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_inference_prompt([])


def test_count_words():
    assert count_word(3) == "three"
    assert count_word(10) == "ten"
    assert count_word(23) == "23"
