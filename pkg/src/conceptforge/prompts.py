"""Pinned prompt templates: caption generation, judge rubrics, inference.

Every renderer here is byte-stable for identical inputs; golden-file tests
pin the exact output. Do not reflow or "fix" the wording — downstream
parsing and the recorded fixtures assume these exact bytes.
"""

from __future__ import annotations

from typing import Sequence

_NUMBER_WORDS = {
    1: "one", 2: "two", 3: "three", 4: "four", 5: "five", 6: "six",
    7: "seven", 8: "eight", 9: "nine", 10: "ten", 11: "eleven", 12: "twelve",
}

_CAPTION_TEMPLATE = """\
You are a creative assistant who designs diverse novel concepts satisfying given conditions and generates a description of the concept. You should design @COUNT@ different novel concepts where each has all functions in the given positive constraints while the concept is different from the given negative constraints.

Generate @COUNT@ different descriptions of @COUNT@ novel concepts that contain visible unique characteristics to use generated descriptions as image captions to generate images. Each description should consist of at most three sentences and contain given positive constraints but should not contain non-visible characteristics such as sound, smell, and taste. You must not simply combine multiple existing concepts that have each function but creatively design a single concept that has multiple functions at once. Generate @COUNT@ descriptions of @COUNT@ novel concepts that are not similar to each other but distinct, and each description should be clear without unnecessary explanations for generating images. Please separate each description with \\n\\n. Simply follow the format given in the example below.
{
    Positive Constraints: [@POS@]
    Negative Constraints: [@NEG@]
    Image Captions: [“...”]
}"""

ABSOLUTE_JUDGE_PROMPT = """\
Please act as an impartial evaluator to assess the quality of a single concept image generated by an AI, based on the user’s requirements. Your evaluation should use the following three criteria, each scored on a scale of 1 to 5:

Faithfulness: Evaluate how well the object aligns with the provided instructions, including its intended affordances and functionalities. Does the text and image together indicate that the object serves the purpose for which it was designed?
Scoring:
5: Flawlessly combines all specified functionalities as per the instructions. Text and image work in harmony to demonstrate a well-designed and fully functional object.
4: Fulfills most instructions and intended functionalities, with only minor inconsistencies or missing details. The text and image are mostly aligned.
3: Partially fulfills the instructions. Some functionalities are present but not well-integrated or consistent. There may be a minor mismatch between text and image.
2: Struggles to meet the provided instructions, missing key functionalities or combining them poorly. Text and image may conflict.
1: Does not follow the instructions at all. Functionalities are completely missing, irrelevant, or nonsensical.

Novelty: Assess the originality and innovation of the design. Does the object show an exciting, novel design that would surprise or intrigue users?
Scoring:
5: Highly innovative, unique, and impressive. Inspires curiosity or excitement, making it highly desirable to explore.
4: Contains interesting and novel elements, showing clear creative thought and appeal.
3: Displays moderate novelty, with some unique features but remaining relatively conventional or uninspiring.
2: Shows limited novelty, with minimal creativity and overly simplistic or derivative design.
1: Entirely unoriginal and mundane, lacking any creativity and appearing common or uninspiring.

Practicality: Evaluate the real-world applicability of the object. Does the design make sense for human use? Would it align with human preferences and be feasible for production?
Scoring:
5: Extremely practical and human-centric. Highly functional, aligns perfectly with human preferences, and seamlessly fits into real-world scenarios.
4: Mostly practical and applicable, with minor limitations that could be addressed to improve usability.
3: Somewhat practical but with notable flaws or unrealistic elements that may limit usability in real-world scenarios.
2: Largely impractical, with significant flaws or inconsistencies that make it unlikely to be useful.
1: Entirely impractical and unusable, failing to align with human preferences or real-world feasibility.

Coherence: This metric evaluates whether the image generated by the AI model contains only one primary object as instructed, focusing on the object's clarity and functionality without the presence of additional, unintended objects.
Scoring:
5: The image perfectly showcases one distinct object that aligns with the described attributes. There are no extraneous objects or elements that distract from the main object.
4: The primary object is clear and mostly isolated, but there may be minor elements in the background or periphery that do not significantly detract from the main object.
3: The main object is present and identifiable, but there are other elements in the image that somewhat distract from its clarity and functionality.
2: The image contains multiple objects where the main object is not clearly dominant or distinguishable from other unnecessary elements.
1: The image primarily features multiple objects, making it difficult to identify the intended single object; the composition is cluttered or entirely irrelevant to the instruction.

Provide a score for each criterion, followed by a concise explanation justifying your ratings. Your final response should strictly follow this format:
{
    "Faithfulness": [Your Faithfulness Score],
    "Novelty": [Your Novelty Score],
    "Practicality": [Your Practicality Score],
    "Coherence": [Your Coherence Score]
}"""

RELATIVE_JUDGE_PROMPT = """\
Please act as an impartial evaluator to assess the quality of concept images generated by two AI concept generators based on the user’s requirements. The evaluation criteria are as follows:
Faithfulness: Evaluate how well the object aligns with the provided instructions, including its intended affordances and functionalities. Does the text and image together indicate that the object serves the purpose for which it was designed?
Novelty: Assess the originality and innovation of the design. Does the concept demonstrate a surprising or intriguing approach that stands out as fresh and exciting?
Practicality: Evaluate the real-world applicability of the concept. Does the design make sense for human use, align with user preferences, and appear feasible for production?
Coherence: This metric evaluates whether the image generated by the AI model contains only one primary object as instructed, focusing on the object's clarity and functionality without the presence of additional, unintended objects.
Provide your answer based on the following available choices:
"A" if the first image is better,
"B" if the second image is better,
"C" if both are equally strong.
Your final response should strictly follow this format:
{
    "Faithfulness": [Your Faithfulness Choice],
    "Novelty": [Your Novelty Choice],
    "Practicality": [Your Practicality Choice],
    "Coherence": [Your Coherence Choice]
}"""


def count_word(n: int) -> str:
    return _NUMBER_WORDS.get(n, str(n))


def render_caption_prompt(
    positive: Sequence[str], negative: Sequence[str], n_captions: int
) -> str:
    """Caption-generation prompt with the constraint lists substituted in.

    With n_captions=3 and the stock example constraints this reproduces the
    pinned template verbatim.
    """
    if n_captions < 1:
        raise ValueError("n_captions must be >= 1")
    if not positive:
        raise ValueError("positive constraints must be non-empty")
    return (
        _CAPTION_TEMPLATE.replace("@COUNT@", count_word(n_captions))
        .replace("@POS@", ", ".join(positive))
        .replace("@NEG@", ", ".join(negative))
    )


def build_absolute_prompt() -> str:
    return ABSOLUTE_JUDGE_PROMPT


def build_relative_prompt() -> str:
    return RELATIVE_JUDGE_PROMPT


def build_inference_prompt(positives: Sequence[str]) -> str:
    """The affordance-only generation prompt used at inference time."""
    if not positives:
        raise ValueError("positives must be non-empty")
    return f"a new design that has functions of {', '.join(positives)}."
