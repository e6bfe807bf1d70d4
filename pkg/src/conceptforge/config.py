"""Pipeline configuration: one JSON file, flag overrides win."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .datagen import DatagenConfig
from .metrics import DistanceConfig
from .sampler import SamplePlan
from .trainer import TrainConfig


@dataclass
class PipelineConfig:
    ontology_path: str = ""
    embeddings_path: str = ""
    out_dir: str = "out"
    stock_images_path: str | None = None
    distance: DistanceConfig = field(default_factory=DistanceConfig)
    plan: SamplePlan = field(default_factory=SamplePlan)
    train: TrainConfig = field(default_factory=TrainConfig)
    datagen: DatagenConfig = field(default_factory=DatagenConfig)
    mock: bool = False
    seed: int = 0

    def out(self, *parts: str) -> Path:
        return Path(self.out_dir).joinpath(*parts)

    def as_dict(self) -> dict:
        return {
            "paths": {
                "ontology": self.ontology_path,
                "embeddings": self.embeddings_path,
                "out": self.out_dir,
                "stock_images": self.stock_images_path,
            },
            "distance": dataclasses.asdict(self.distance),
            "plan": dataclasses.asdict(self.plan),
            "train": dataclasses.asdict(self.train),
            "datagen": dataclasses.asdict(self.datagen),
            "mock": self.mock,
            "seed": self.seed,
        }

    def meta(self, extra: dict | None = None) -> dict:
        """Provenance block stamped into every output manifest's sidecar."""
        doc = {"config": self.as_dict(), "seed": self.seed}
        if extra:
            doc.update(extra)
        return doc


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Read the JSON config; later apply flat CLI overrides (which win)."""
    doc: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    overrides = overrides or {}

    paths = doc.get("paths", {})
    seed = overrides.get("seed", doc.get("seed", 0))

    def section(name: str, cls, seeded: bool):
        base = dict(doc.get(name, {}))
        if seeded:
            base.setdefault("seed", seed)
        base.update({k: v for k, v in overrides.get(name, {}).items() if v is not None})
        return cls(**base)

    cfg = PipelineConfig(
        ontology_path=overrides.get("ontology") or paths.get("ontology", ""),
        embeddings_path=overrides.get("embeddings") or paths.get("embeddings", ""),
        out_dir=overrides.get("out") or paths.get("out", "out"),
        stock_images_path=overrides.get("stock_images") or paths.get("stock_images"),
        distance=section("distance", DistanceConfig, seeded=False),
        plan=section("plan", SamplePlan, seeded=True),
        train=section("train", TrainConfig, seeded=True),
        datagen=section("datagen", DatagenConfig, seeded=False),
        mock=bool(overrides.get("mock", doc.get("mock", False))),
        seed=int(seed),
    )
    return cfg


def require_paths(cfg: PipelineConfig, *attrs: str) -> None:
    for attr in attrs:
        value = getattr(cfg, attr)
        if not value:
            raise FileNotFoundError(f"config is missing {attr}")
        if not Path(value).exists():
            raise FileNotFoundError(f"{attr} does not exist: {value}")
