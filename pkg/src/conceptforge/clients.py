"""Narrow client interfaces for caption, image, and similarity services.

Core logic never names a provider; it talks to these three interfaces. Two
offline implementations ship with the package: deterministic mocks (hash
synthesized responses, no state) and recorded-fixture replays keyed by
request hash. Real transports plug in behind the same surface.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .errors import ClientError, FixtureMissing


@dataclass(frozen=True)
class ClientConfig:
    base_url: str = ""
    token_env: str = ""
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_s: float = 0.5
    concurrency: int = 4


class TextGenClient:
    """Prompt -> text. Judges receive image refs as attachments."""

    def generate(self, prompt: str, images: Sequence[str] = ()) -> str:
        raise NotImplementedError


class ImageGenClient:
    """Caption -> opaque image ref."""

    def generate(self, caption: str) -> str:
        raise NotImplementedError


class ScorerClient:
    """Similarity of an image against a reference text, higher is better."""

    def score(self, image_ref: str, text: str) -> float:
        raise NotImplementedError


def stable_digest(*parts: str) -> str:
    h = hashlib.blake2b(digest_size=16)
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def _digest_unit(*parts: str) -> float:
    """Deterministic hash of the inputs mapped into [0, 1)."""
    return int(stable_digest(*parts)[:12], 16) / 16**12


def call_with_retries(
    fn: Callable[[], object],
    attempts: int,
    backoff_s: float = 0.0,
    retry_on: tuple[type[Exception], ...] = (ClientError,),
):
    """Run fn with exponential backoff; re-raise the last error after budget.

    Returns (result, retries_used).
    """
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return fn(), attempt
        except retry_on as e:  # noqa: PERF203 - retry loop is the point
            last = e
            if attempt + 1 < attempts and backoff_s > 0:
                time.sleep(backoff_s * (2**attempt))
    assert last is not None
    raise last


# ---------------------------------------------------------------------------
# deterministic mocks
# ---------------------------------------------------------------------------

_MOCK_MATERIALS = ("woven", "brushed", "molded", "ribbed", "matte", "lacquered")
_MOCK_FORMS = ("shell", "frame", "pod", "column", "ring", "slab")


class MockTextGenClient(TextGenClient):
    """Synthesizes n caption-shaped paragraphs from the prompt hash."""

    def __init__(self, n_captions: int = 10):
        self.n_captions = n_captions
        self.calls = 0

    def generate(self, prompt: str, images: Sequence[str] = ()) -> str:
        self.calls += 1
        seed = stable_digest(prompt, *images)
        captions = []
        for i in range(self.n_captions):
            material = _MOCK_MATERIALS[int(seed[i % len(seed)], 16) % len(_MOCK_MATERIALS)]
            form = _MOCK_FORMS[int(seed[(i + 3) % len(seed)], 16) % len(_MOCK_FORMS)]
            captions.append(
                f"A {material} {form} concept {seed[:8]}-{i} that fuses the requested "
                f"functions into one continuous body."
            )
        return "\n\n".join(captions)


class MockJudgeClient(TextGenClient):
    """Returns well-formed judge replies with hash-derived scores/choices."""

    METRICS = ("Faithfulness", "Novelty", "Practicality", "Coherence")

    def __init__(self):
        self.calls = 0

    def generate(self, prompt: str, images: Sequence[str] = ()) -> str:
        self.calls += 1
        relative = "two AI concept generators" in prompt
        payload = {}
        for metric in self.METRICS:
            u = _digest_unit(prompt, metric, *images)
            if relative:
                payload[metric] = "ABC"[int(u * 3)]
            else:
                payload[metric] = 1 + int(u * 5)
        return json.dumps(payload, indent=4)


class MockImageGenClient(ImageGenClient):
    def __init__(self):
        self.calls = 0

    def generate(self, caption: str) -> str:
        self.calls += 1
        return f"mock://image/{stable_digest(caption)[:16]}"


class MockScorerClient(ScorerClient):
    def __init__(self):
        self.calls = 0

    def score(self, image_ref: str, text: str) -> float:
        self.calls += 1
        return _digest_unit(image_ref, text)


# ---------------------------------------------------------------------------
# recorded fixtures
# ---------------------------------------------------------------------------

def request_hash(kind: str, **fields) -> str:
    canon = json.dumps({"kind": kind, **fields}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:32]


class FixtureStore:
    """Directory of recorded request -> response JSON files."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def lookup(self, key: str):
        path = self.root / f"{key}.json"
        if not path.exists():
            raise FixtureMissing(f"no recorded response for request {key}")
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)["response"]

    def record(self, key: str, request: dict, response) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / f"{key}.json", "w", encoding="utf-8") as fh:
            json.dump({"request": request, "response": response}, fh, indent=2, sort_keys=True)


class FixtureTextGenClient(TextGenClient):
    def __init__(self, store: FixtureStore):
        self.store = store

    def generate(self, prompt: str, images: Sequence[str] = ()) -> str:
        key = request_hash("textgen", prompt=prompt, images=list(images))
        return str(self.store.lookup(key))


class FixtureImageGenClient(ImageGenClient):
    def __init__(self, store: FixtureStore):
        self.store = store

    def generate(self, caption: str) -> str:
        return str(self.store.lookup(request_hash("imagegen", caption=caption)))


class FixtureScorerClient(ScorerClient):
    def __init__(self, store: FixtureStore):
        self.store = store

    def score(self, image_ref: str, text: str) -> float:
        return float(self.store.lookup(request_hash("scorer", image_ref=image_ref, text=text)))


class RecordingTextGenClient(TextGenClient):
    """Wraps a live client and records its replies as replayable fixtures."""

    def __init__(self, inner: TextGenClient, store: FixtureStore):
        self.inner = inner
        self.store = store

    def generate(self, prompt: str, images: Sequence[str] = ()) -> str:
        key = request_hash("textgen", prompt=prompt, images=list(images))
        response = self.inner.generate(prompt, images)
        self.store.record(key, {"prompt": prompt, "images": list(images)}, response)
        return response


@dataclass
class ClientBundle:
    textgen: TextGenClient
    imagegen: ImageGenClient
    scorer: ScorerClient

    @classmethod
    def mock(cls, n_captions: int = 10) -> "ClientBundle":
        return cls(
            textgen=MockTextGenClient(n_captions=n_captions),
            imagegen=MockImageGenClient(),
            scorer=MockScorerClient(),
        )
