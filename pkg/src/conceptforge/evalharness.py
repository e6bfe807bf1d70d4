"""Judge-based evaluation: absolute 1-5 scoring, A/B/C comparison, agreement.

Replies are parsed strictly from the first JSON object found in the text
(judges like to wrap their verdict in prose). Aggregation folds parsed
records into a four-metric report matching the standard column order:
Faithfulness, Novelty, Practicality, Coherence. Inter-annotator agreement
reports both the |diff| <= 1 percent-agreement rule and Cohen's kappa over
the five score categories; the two use different notions of agreement on
purpose and are reported side by side.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clients import TextGenClient
from .errors import (
    ClientError,
    EmptyInput,
    JudgeUnavailable,
    MissingKey,
    NotJson,
    OutOfRange,
)
from .manifest import ResumableLog
from .prompts import build_absolute_prompt, build_relative_prompt

METRICS = ("Faithfulness", "Novelty", "Practicality", "Coherence")
CHOICES = ("A", "B", "C")  # first wins / second wins / tie


@dataclass(frozen=True)
class MetricScores:
    faithfulness: int
    novelty: int
    practicality: int
    coherence: int

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not isinstance(value, int) or isinstance(value, bool):
                raise OutOfRange(f"{name} must be an integer, got {value!r}")
            if not 1 <= value <= 5:
                raise OutOfRange(f"{name} must be in [1, 5], got {value}")

    def as_dict(self) -> dict[str, int]:
        return {
            "Faithfulness": self.faithfulness,
            "Novelty": self.novelty,
            "Practicality": self.practicality,
            "Coherence": self.coherence,
        }

    def render(self) -> str:
        return json.dumps(self.as_dict(), indent=4)


@dataclass(frozen=True)
class RelativeChoice:
    faithfulness: str
    novelty: str
    practicality: str
    coherence: str

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if value not in CHOICES:
                raise OutOfRange(f"{name} choice must be A, B, or C, got {value!r}")

    def as_dict(self) -> dict[str, str]:
        return {
            "Faithfulness": self.faithfulness,
            "Novelty": self.novelty,
            "Practicality": self.practicality,
            "Coherence": self.coherence,
        }


def _first_json_object(text: str) -> dict:
    """First balanced {...} span that parses as a JSON object."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : i + 1]
                    try:
                        obj = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(obj, dict):
                        return obj
                    break
        start = text.find("{", start + 1)
    raise NotJson("no JSON object found in reply", raw=text)


def parse_absolute(text: str) -> MetricScores:
    """Extract the four integer scores from a judge reply."""
    obj = _first_json_object(text)
    values = {}
    for metric in METRICS:
        if metric not in obj:
            raise MissingKey(f"reply JSON lacks {metric!r}", raw=text)
        value = obj[metric]
        if isinstance(value, bool) or not isinstance(value, int):
            raise OutOfRange(f"{metric} must be an integer, got {value!r}", raw=text)
        if not 1 <= value <= 5:
            raise OutOfRange(f"{metric} = {value} outside [1, 5]", raw=text)
        values[metric] = value
    return MetricScores(
        faithfulness=values["Faithfulness"],
        novelty=values["Novelty"],
        practicality=values["Practicality"],
        coherence=values["Coherence"],
    )


def parse_relative(text: str) -> RelativeChoice:
    obj = _first_json_object(text)
    values = {}
    for metric in METRICS:
        if metric not in obj:
            raise MissingKey(f"reply JSON lacks {metric!r}", raw=text)
        value = obj[metric]
        if not isinstance(value, str) or value.strip().upper() not in CHOICES:
            raise OutOfRange(f"{metric} choice must be A/B/C, got {value!r}", raw=text)
        values[metric] = value.strip().upper()
    return RelativeChoice(
        faithfulness=values["Faithfulness"],
        novelty=values["Novelty"],
        practicality=values["Practicality"],
        coherence=values["Coherence"],
    )


# ---------------------------------------------------------------------------
# running the judge
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalItem:
    item_id: str
    prompt: str  # the user-requirements prompt the image was generated from
    image: str
    image_b: str | None = None  # second image for relative mode
    model: str | None = None  # optional per-model breakdown tag


def run_eval(
    items: Sequence[EvalItem],
    judge: TextGenClient,
    mode: str = "absolute",
    retries: int = 3,
    manifest_path=None,
    swap_and_rejudge: bool = False,
) -> list[dict]:
    """One judged record per item, resumable, with parse-failure retries.

    A malformed reply is re-asked up to ``retries`` times, then recorded as
    a failure. Transport errors exhaust the same budget and then raise
    JudgeUnavailable. ``swap_and_rejudge`` (relative mode only) judges each
    pair a second time with A/B swapped and keeps both verdicts.
    """
    if mode not in ("absolute", "relative"):
        raise ValueError(f"mode must be 'absolute' or 'relative', got {mode!r}")
    rubric = build_absolute_prompt() if mode == "absolute" else build_relative_prompt()

    log_ctx = ResumableLog(manifest_path, key_field="key") if manifest_path else None
    records: list[dict] = []
    try:
        for item in items:
            if mode == "relative" and item.image_b is None:
                raise ValueError(f"item {item.item_id}: relative mode needs image_b")
            if log_ctx is not None and item.item_id in log_ctx:
                records.append(log_ctx.get(item.item_id))
                continue
            record = _judge_item(item, judge, rubric, mode, retries)
            if swap_and_rejudge and mode == "relative":
                swapped = EvalItem(
                    item_id=item.item_id + "#swap",
                    prompt=item.prompt,
                    image=item.image_b,
                    image_b=item.image,
                    model=item.model,
                )
                record["swapped"] = _judge_item(swapped, judge, rubric, mode, retries)
            if log_ctx is not None:
                log_ctx.append(record)
            records.append(record)
    finally:
        if log_ctx is not None:
            log_ctx.close()
    return records


def _judge_item(item: EvalItem, judge: TextGenClient, rubric: str, mode: str,
                retries: int) -> dict:
    images = (item.image,) if item.image_b is None else (item.image, item.image_b)
    message = f"{rubric}\n\nUser requirements: {item.prompt}"
    prompt_hash = hashlib.sha256(
        "\x00".join((message, *images)).encode("utf-8")
    ).hexdigest()[:16]

    record = {
        "key": item.item_id,
        "mode": mode,
        "model": item.model,
        "prompt_hash": prompt_hash,
        "raw": None,
        "scores": None,
        "choice": None,
        "retries": 0,
        "failure": None,
    }
    attempts = retries + 1
    transport_failures = 0
    for attempt in range(attempts):
        try:
            raw = judge.generate(message, images=images)
        except ClientError as e:
            transport_failures += 1
            record["retries"] = attempt + 1
            if transport_failures >= attempts:
                raise JudgeUnavailable(f"judge failed after {attempts} attempts: {e}") from e
            continue
        record["raw"] = raw
        try:
            if mode == "absolute":
                record["scores"] = parse_absolute(raw).as_dict()
            else:
                record["choice"] = parse_relative(raw).as_dict()
            record["retries"] = attempt
            return record
        except (NotJson, MissingKey, OutOfRange) as e:
            record["failure"] = {"error": type(e).__name__, "detail": str(e)}
            record["retries"] = min(attempt + 1, retries)
    return record


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    mode: str
    n: int
    means: dict[str, float] | None = None
    relative: dict[str, dict[str, float]] | None = None
    per_model: dict[str, "EvalReport"] | None = None
    failures: int = 0


def aggregate(records: Sequence[dict], per_model: bool = True) -> EvalReport:
    """Fold judged records into per-metric means or win/tie/loss shares."""
    records = list(records)
    if not records:
        raise EmptyInput("no records to aggregate")
    mode = records[0].get("mode", "absolute")
    parsed = [r for r in records if r.get("scores") or r.get("choice")]
    failures = len(records) - len(parsed)
    if not parsed:
        raise EmptyInput("no successfully parsed records")

    report = EvalReport(mode=mode, n=len(parsed), failures=failures)
    if mode == "absolute":
        report.means = {
            m: round(float(np.mean([r["scores"][m] for r in parsed])), 2) for m in METRICS
        }
    else:
        report.relative = {}
        for m in METRICS:
            choices = [r["choice"][m] for r in parsed]
            n = len(choices)
            report.relative[m] = {
                "win": 100.0 * choices.count("A") / n,
                "tie": 100.0 * choices.count("C") / n,
                "loss": 100.0 * choices.count("B") / n,
            }

    if per_model:
        groups: dict[str, list[dict]] = {}
        for r in parsed:
            if r.get("model"):
                groups.setdefault(r["model"], []).append(r)
        if groups:
            report.per_model = {
                name: aggregate(group, per_model=False) for name, group in sorted(groups.items())
            }
    return report


def render_report(report: EvalReport) -> str:
    """Plain-text table in the pinned metric column order."""
    header = f"{'Model':<16}" + "".join(f"{m:>14}" for m in METRICS)
    lines = [header, "-" * len(header)]

    def row(label: str, rep: EvalReport) -> str:
        if rep.mode == "absolute":
            cells = [f"{rep.means[m]:.2f}" for m in METRICS]
        else:
            cells = [
                f"{rep.relative[m]['win']:.0f}/{rep.relative[m]['tie']:.0f}/{rep.relative[m]['loss']:.0f}"
                for m in METRICS
            ]
        return f"{label:<16}" + "".join(f"{c:>14}" for c in cells)

    if report.per_model:
        for name, rep in report.per_model.items():
            lines.append(row(name, rep))
    else:
        lines.append(row("all", report))
    lines.append("")
    if report.mode == "relative":
        lines.append("cells: win%/tie%/loss% vs reference")
    lines.append(f"n={report.n} parsed, {report.failures} failures")
    return "\n".join(lines)


def report_to_dict(report: EvalReport) -> dict:
    doc = {
        "mode": report.mode,
        "n": report.n,
        "failures": report.failures,
        "means": report.means,
        "relative": report.relative,
    }
    if report.per_model:
        doc["per_model"] = {k: report_to_dict(v) for k, v in report.per_model.items()}
    return doc


# ---------------------------------------------------------------------------
# inter-annotator agreement
# ---------------------------------------------------------------------------

@dataclass
class AgreementReport:
    percent_agreement: dict[str, float]  # per metric + "overall", in [0, 100]
    kappa: dict[str, float]  # per metric + "overall", in [-1, 1]
    n_items: int


def cohen_kappa(r1: Sequence[int], r2: Sequence[int], categories: int = 5,
                weights: str | None = None) -> float:
    """Cohen's kappa over 1..categories labels.

    ``weights=None`` is the unweighted statistic; ``weights='linear'``
    discounts near-miss disagreements linearly. A pair of raters in perfect
    agreement scores exactly 1.0 even when the marginals are degenerate.
    """
    if len(r1) != len(r2) or not r1:
        raise EmptyInput("need two equal-length non-empty rating vectors")
    n = len(r1)
    observed = np.zeros((categories, categories))
    for a, b in zip(r1, r2):
        observed[a - 1, b - 1] += 1
    observed /= n
    p1 = observed.sum(axis=1)
    p2 = observed.sum(axis=0)
    expected = np.outer(p1, p2)

    if weights is None:
        w = 1.0 - np.eye(categories)  # disagreement indicator
    elif weights == "linear":
        grid = np.arange(categories)
        w = np.abs(grid[:, None] - grid[None, :]) / (categories - 1)
    else:
        raise ValueError(f"unknown weights {weights!r}")

    disagree_obs = float((observed * w).sum())
    disagree_exp = float((expected * w).sum())
    if disagree_obs == 0.0:
        return 1.0
    if disagree_exp == 0.0:
        return 0.0
    return 1.0 - disagree_obs / disagree_exp


def inter_annotator(
    pairs: Sequence[tuple[MetricScores, MetricScores]],
    weights: str | None = None,
) -> AgreementReport:
    """Percent agreement (|r1 - r2| <= 1 rule) and Cohen's kappa, per metric
    and pooled over all (item, metric) cells."""
    if not pairs:
        raise EmptyInput("no rating pairs")
    per_metric_1: dict[str, list[int]] = {m: [] for m in METRICS}
    per_metric_2: dict[str, list[int]] = {m: [] for m in METRICS}
    for r1, r2 in pairs:
        d1, d2 = r1.as_dict(), r2.as_dict()
        for m in METRICS:
            per_metric_1[m].append(d1[m])
            per_metric_2[m].append(d2[m])

    agreement: dict[str, float] = {}
    kappa: dict[str, float] = {}
    all_1: list[int] = []
    all_2: list[int] = []
    for m in METRICS:
        v1, v2 = per_metric_1[m], per_metric_2[m]
        hits = sum(1 for a, b in zip(v1, v2) if abs(a - b) <= 1)
        agreement[m] = 100.0 * hits / len(v1)
        kappa[m] = cohen_kappa(v1, v2, weights=weights)
        all_1.extend(v1)
        all_2.extend(v2)
    hits = sum(1 for a, b in zip(all_1, all_2) if abs(a - b) <= 1)
    agreement["overall"] = 100.0 * hits / len(all_1)
    kappa["overall"] = cohen_kappa(all_1, all_2, weights=weights)
    return AgreementReport(percent_agreement=agreement, kappa=kappa, n_items=len(pairs))


def load_annotations_csv(source) -> list[tuple[MetricScores, MetricScores]]:
    """Import rating pairs from a CSV of item_id, rater_id, metric, score.

    Exactly two rater ids must appear; every item needs all four metrics
    from both raters.
    """
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise EmptyInput("annotation file has no rows")

    raters = sorted({row["rater_id"] for row in rows})
    if len(raters) != 2:
        raise ValueError(f"need exactly 2 raters, found {raters}")
    by_item: dict[str, dict[str, dict[str, int]]] = {}
    metric_names = {m.lower(): m for m in METRICS}
    for row in rows:
        metric = metric_names.get(row["metric"].strip().lower())
        if metric is None:
            raise ValueError(f"unknown metric {row['metric']!r}")
        by_item.setdefault(row["item_id"], {}).setdefault(row["rater_id"], {})[metric] = int(
            row["score"]
        )

    pairs = []
    for item_id in sorted(by_item):
        ratings = by_item[item_id]
        for rater in raters:
            got = ratings.get(rater, {})
            if set(got) != set(METRICS):
                raise ValueError(f"item {item_id!r}: rater {rater!r} missing metrics")
        def scores(rater):
            d = ratings[rater]
            return MetricScores(
                faithfulness=d["Faithfulness"],
                novelty=d["Novelty"],
                practicality=d["Practicality"],
                coherence=d["Coherence"],
            )
        pairs.append((scores(raters[0]), scores(raters[1])))
    return pairs
