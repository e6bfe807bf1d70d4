import json
from pathlib import Path

import pytest

from conceptforge.embeddings import load_embeddings_file
from conceptforge.metrics import DistanceConfig, build_proximity_matrix
from conceptforge.ontology import load_ontology_file

FIXTURES = Path(__file__).resolve().parent.parent / "src" / "conceptforge" / "fixtures"
GOLDENS = Path(__file__).resolve().parent / "goldens"


@pytest.fixture(scope="session")
def fixture_paths():
    return {
        "ontology": FIXTURES / "ontology.json",
        "embeddings": FIXTURES / "embeddings.jsonl",
        "annotations": FIXTURES / "annotations.csv",
        "judge_replies": FIXTURES / "judge_replies.jsonl",
    }


@pytest.fixture(scope="session")
def ontology(fixture_paths):
    return load_ontology_file(fixture_paths["ontology"])


@pytest.fixture(scope="session")
def store(fixture_paths):
    return load_embeddings_file(fixture_paths["embeddings"])


@pytest.fixture(scope="session")
def distance_config():
    return DistanceConfig()


@pytest.fixture(scope="session")
def matrix(ontology, store, distance_config):
    return build_proximity_matrix(ontology, store, distance_config)


def make_ontology_doc(**overrides):
    """Minimal well-formed ontology document; override sections per test."""
    doc = {
        "version": "test",
        "superordinates": [{"id": "things", "name": "things"}],
        "affordances": [
            {"id": "sit", "name": "sit"},
            {"id": "store", "name": "store"},
            {"id": "drive", "name": "drive"},
        ],
        "parts": [
            {"id": "leg", "name": "leg", "affordances": ["sit"]},
        ],
        "concepts": [
            {"id": "chair", "name": "chair", "superordinate": "things",
             "parts": ["leg"], "affordances": ["sit"]},
            {"id": "shelf", "name": "shelf", "superordinate": "things",
             "parts": [], "affordances": ["store"]},
            {"id": "car", "name": "car", "superordinate": "things",
             "parts": [], "affordances": ["drive"]},
        ],
    }
    doc.update(overrides)
    return doc


def doc_bytes(doc) -> bytes:
    return json.dumps(doc).encode("utf-8")
