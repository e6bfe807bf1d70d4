"""Training-example construction: captions, candidate images, curated sets.

For each affordance pair this module derives the constraint lists from the
ontology, asks the text client for candidate captions, turns each caption
into a candidate image, keeps the top-k positives by scorer similarity, and
curates per-concept negative images. Work is tracked in a resumable JSONL
manifest; a completed manifest is never re-queried.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .clients import ClientBundle, call_with_retries
from .errors import ClientError, NoCaptionsFound, ScorerUnavailable
from .manifest import ResumableLog, read_jsonl
from .ontology import Ontology
from .prompts import build_inference_prompt, render_caption_prompt
from .sampler import AffordancePair, CurriculumStage

log = logging.getLogger(__name__)

PHASES = ("captions", "images", "curate")


@dataclass(frozen=True)
class Constraints:
    """Target affordance names to realize; existing concept names to avoid."""

    positive: tuple[str, ...]
    negative: tuple[str, ...]

    def __post_init__(self):
        if not self.positive:
            raise ValueError("positive constraints must be non-empty")


@dataclass
class GeneratedCandidate:
    caption: str
    image_ref: str = ""
    score: float | None = None


@dataclass
class TrainingExample:
    pair: AffordancePair
    stage: int
    captions: list[str] = field(default_factory=list)
    positives: list[GeneratedCandidate] = field(default_factory=list)
    negatives: dict[str, list[str]] = field(default_factory=dict)


@dataclass(frozen=True)
class DatagenConfig:
    n_captions: int = 10  # one candidate image per caption
    top_k_positives: int = 3
    negatives_per_concept: int = 5
    stock_images_per_concept: int = 60
    sentence_cap: int = 3
    max_retries: int = 3
    backoff_s: float = 0.0
    workers: int = 1
    review: bool = False


def constraints_for_pair(o: Ontology, pair: AffordancePair) -> Constraints:
    """Positive = the pair's affordance names; negative = every concept that
    already has any of them (any-match), rendered to display names."""
    positive = (o.affordance_name(pair.a), o.affordance_name(pair.b))
    concept_ids = o.negative_constraints({pair.a, pair.b}, mode="any")
    negative = tuple(o.concepts[c].name for c in concept_ids)
    return Constraints(positive=positive, negative=negative)


def build_caption_prompt(c: Constraints, n_captions: int) -> str:
    return render_caption_prompt(c.positive, c.negative, n_captions)


_SENTENCE_SPLIT = re.compile(r"[.!?]+(?:\s|$)")


def parse_captions(response: str, sentence_cap: int = 3) -> list[str]:
    """Split a caption reply on blank lines; trim; drop empties.

    Captions longer than the sentence cap are kept but logged — the cap is
    advisory, not a filter.
    """
    segments = [seg.strip() for seg in re.split(r"\n\s*\n", response)]
    captions = [seg for seg in segments if seg]
    if not captions:
        raise NoCaptionsFound("response contains no non-empty caption segments")
    for cap in captions:
        n_sentences = len([s for s in _SENTENCE_SPLIT.split(cap) if s.strip()])
        if n_sentences > sentence_cap:
            log.warning("caption exceeds %d sentences (%d): %.60s...", sentence_cap, n_sentences, cap)
    return captions


def score_and_filter(
    cands: Sequence[GeneratedCandidate],
    scorer,
    reference_text: str,
    k: int,
    max_retries: int = 3,
    backoff_s: float = 0.0,
) -> list[GeneratedCandidate]:
    """Score each candidate against the reference text and keep the top k.

    ScorerUnavailable is retried and re-raised once the budget is spent;
    any other client failure drops just that candidate, with a logged
    reason. Ties keep the earlier input candidate.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scored: list[tuple[int, GeneratedCandidate]] = []
    for idx, cand in enumerate(cands):
        try:
            value, _ = call_with_retries(
                lambda: scorer.score(cand.image_ref, reference_text),
                attempts=max_retries,
                backoff_s=backoff_s,
                retry_on=(ScorerUnavailable,),
            )
        except ScorerUnavailable:
            raise
        except ClientError as e:
            log.warning("dropping candidate %r: %s", cand.image_ref, e)
            continue
        cand.score = float(value)
        scored.append((idx, cand))
    scored.sort(key=lambda item: (-item[1].score, item[0]))
    return [cand for _, cand in scored[:k]]


def curate_negative_images(
    concept_name: str,
    images: Sequence[str],
    scorer,
    k: int = 5,
    max_retries: int = 3,
    backoff_s: float = 0.0,
) -> list[str]:
    """Top-k images by similarity to "a photo of {concept name}"."""
    if not images:
        raise ValueError("images must be non-empty")
    reference = f"a photo of {concept_name}"
    scored = []
    for idx, ref in enumerate(images):
        value, _ = call_with_retries(
            lambda: scorer.score(ref, reference),
            attempts=max_retries,
            backoff_s=backoff_s,
            retry_on=(ScorerUnavailable,),
        )
        scored.append((idx, ref, float(value)))
    scored.sort(key=lambda item: (-item[2], item[0]))
    return [ref for _, ref, _ in scored[:k]]


# ---------------------------------------------------------------------------
# stock images for existing concepts
# ---------------------------------------------------------------------------

class StockImages:
    """Local image-manifest ingestion: concept id -> image refs.

    Replaces external image platforms. In mock mode, refs are synthesized
    deterministically per concept.
    """

    def __init__(self, by_concept: Mapping[str, Sequence[str]] | None = None,
                 mock_count: int = 0):
        self.by_concept = {k: list(v) for k, v in (by_concept or {}).items()}
        self.mock_count = mock_count

    @classmethod
    def from_jsonl(cls, path) -> "StockImages":
        by_concept = {}
        for rec in read_jsonl(path):
            by_concept[rec["concept"]] = list(rec["images"])
        return cls(by_concept)

    def refs(self, concept_id: str) -> list[str]:
        if concept_id in self.by_concept:
            return self.by_concept[concept_id]
        if self.mock_count > 0:
            return [f"mock://stock/{concept_id}/{i:03d}" for i in range(self.mock_count)]
        return []


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def pair_key(pair: AffordancePair) -> str:
    return f"{pair.a}--{pair.b}"


def assemble_examples(
    stages: Sequence[CurriculumStage],
    o: Ontology,
    clients: ClientBundle,
    config: DatagenConfig,
    manifest_path,
    stock: StockImages | None = None,
    phases: Iterable[str] = PHASES,
) -> list[dict]:
    """Run the requested phases for every pair, resumably.

    Each pair's record is appended after a phase completes for it, so an
    interrupted run resumes where it stopped and re-running a complete
    manifest performs zero client calls. A failed pair is recorded with its
    reason and does not stop the run. Returns the folded records in
    canonical pair order.
    """
    phases = [p for p in PHASES if p in set(phases)]
    stock = stock or StockImages(mock_count=config.stock_images_per_concept)
    work = [(stage.index, pair) for stage in stages for pair in stage.pairs]
    work.sort(key=lambda item: (item[1].a, item[1].b))

    with ResumableLog(manifest_path, key_field="key") as manifest:
        for stage_index, pair in work:
            key = pair_key(pair)
            rec = manifest.get(key) or {
                "key": key,
                "a": pair.a,
                "b": pair.b,
                "proximity": pair.proximity,
                "stage": stage_index,
                "status": "pending",
                "constraints": None,
                "captions": None,
                "positives": None,
                "negatives": None,
                "error": None,
            }
            if rec["status"] == "failed":
                continue  # a failed pair stays failed until the record is cleared
            try:
                changed = _run_phases(rec, pair, o, clients, config, stock, phases)
            except ClientError as e:
                rec["status"] = "failed"
                rec["error"] = {"phase": rec.get("_phase", "?"), "reason": str(e)}
                rec.pop("_phase", None)
                manifest.append(rec)
                log.warning("pair %s failed: %s", key, e)
                continue
            rec.pop("_phase", None)
            if _complete(rec):
                rec["status"] = "done"
            if changed:
                manifest.append(rec)
        records = sorted(manifest.records.values(), key=lambda r: r["key"])
    return records


def _run_phases(rec, pair, o, clients, config, stock, phases) -> bool:
    changed = False
    constraints = None

    def get_constraints():
        nonlocal constraints
        if constraints is None:
            if rec["constraints"]:
                constraints = Constraints(
                    positive=tuple(rec["constraints"]["positive"]),
                    negative=tuple(rec["constraints"]["negative"]),
                )
            else:
                constraints = constraints_for_pair(o, pair)
        return constraints

    if "captions" in phases and rec["captions"] is None:
        rec["_phase"] = "captions"
        c = get_constraints()
        rec["constraints"] = {"positive": list(c.positive), "negative": list(c.negative)}
        prompt = build_caption_prompt(c, config.n_captions)
        reply, _ = call_with_retries(
            lambda: clients.textgen.generate(prompt),
            attempts=config.max_retries,
            backoff_s=config.backoff_s,
        )
        rec["captions"] = parse_captions(reply, config.sentence_cap)
        changed = True

    if "images" in phases and rec["positives"] is None and rec["captions"] is not None:
        rec["_phase"] = "images"
        c = get_constraints()
        cands = []
        for caption in rec["captions"]:
            ref, _ = call_with_retries(
                lambda cap=caption: clients.imagegen.generate(cap),
                attempts=config.max_retries,
                backoff_s=config.backoff_s,
            )
            cands.append(GeneratedCandidate(caption=caption, image_ref=ref))
        reference = build_inference_prompt(list(c.positive))
        kept = score_and_filter(
            cands,
            clients.scorer,
            reference,
            k=config.top_k_positives,
            max_retries=config.max_retries,
            backoff_s=config.backoff_s,
        )
        rec["positives"] = [
            {"ref": cand.image_ref, "score": cand.score, "caption": cand.caption}
            for cand in kept
        ]
        changed = True

    if "curate" in phases and rec["negatives"] is None:
        rec["_phase"] = "curate"
        c = get_constraints()
        rec["constraints"] = {"positive": list(c.positive), "negative": list(c.negative)}
        negatives = {}
        for name in c.negative:
            concept = o.concept_by_name(name)
            refs = stock.refs(concept.id)
            if not refs:
                log.warning("no stock images for concept %s; skipping", concept.id)
                continue
            negatives[name] = curate_negative_images(
                name,
                refs,
                clients.scorer,
                k=config.negatives_per_concept,
                max_retries=config.max_retries,
                backoff_s=config.backoff_s,
            )
        rec["negatives"] = negatives
        changed = True

    return changed


def _complete(rec) -> bool:
    return all(rec[field_name] is not None for field_name in ("captions", "positives", "negatives"))


def write_review_checklist(records: Sequence[dict], path) -> None:
    """Optional human-confirmation pass over the automated top-k picks."""
    lines = ["# Review the automated top-k positives; mark [x] to approve.", ""]
    for rec in records:
        if not rec.get("positives"):
            continue
        lines.append(f"## {rec['key']} (stage {rec['stage']})")
        for cand in rec["positives"]:
            score = cand["score"]
            lines.append(f"- [ ] {cand['ref']} score={score:.4f} :: {cand['caption']}")
        lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def examples_from_records(records: Sequence[dict]) -> list[TrainingExample]:
    """Materialize completed manifest records as TrainingExamples."""
    out = []
    for rec in records:
        if rec.get("status") != "done":
            continue
        out.append(
            TrainingExample(
                pair=AffordancePair(rec["a"], rec["b"], float(rec["proximity"])),
                stage=int(rec["stage"]),
                captions=list(rec["captions"]),
                positives=[
                    GeneratedCandidate(
                        caption=c["caption"], image_ref=c["ref"], score=c["score"]
                    )
                    for c in rec["positives"]
                ],
                negatives={k: list(v) for k, v in rec["negatives"].items()},
            )
        )
    return out
