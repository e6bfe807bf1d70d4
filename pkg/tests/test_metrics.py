import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conceptforge.embeddings import EmbeddingStore, load_embeddings, save_embeddings, store_from_mapping
from conceptforge.errors import CacheMismatch, EmbeddingFormatError, EmptyConceptSet, MissingEmbedding
from conceptforge.metrics import (
    DistanceConfig,
    affordance_proximity,
    build_proximity_matrix,
    concept_proximity,
    distribution_summary,
    jaccard,
    load_matrix,
    save_matrix,
)
from conceptforge.ontology import load_ontology

from conftest import doc_bytes, make_ontology_doc


class TestJaccard:
    def test_basic(self):
        assert jaccard({"a", "b"}, {"b", "c"}) == pytest.approx(1 / 3)

    def test_identity(self):
        assert jaccard({"x", "y"}, {"x", "y"}) == 1.0

    def test_both_empty(self):
        assert jaccard(set(), set()) == 0.0

    @given(st.sets(st.integers(), max_size=20), st.sets(st.integers(), max_size=20))
    def test_bounds_and_symmetry(self, x, y):
        j = jaccard(x, y)
        assert 0.0 <= j <= 1.0
        assert j == jaccard(y, x)


def two_concept_ontology(affs_i, affs_j, parts_i=(), parts_j=()):
    """Two concepts with prescribed concept/part affordance sets."""
    all_affs = sorted(set(affs_i) | set(affs_j) | set(a for p in (*parts_i, *parts_j) for a in p))
    parts = []
    part_ids_i, part_ids_j = [], []
    for tag, plist, bucket in (("i", parts_i, part_ids_i), ("j", parts_j, part_ids_j)):
        for n, p_affs in enumerate(plist):
            pid = f"part-{tag}{n}"
            parts.append({"id": pid, "name": pid, "affordances": sorted(p_affs)})
            bucket.append(pid)
    doc = make_ontology_doc(
        affordances=[{"id": a, "name": a} for a in all_affs],
        parts=parts,
        concepts=[
            {"id": "ci", "name": "ci", "superordinate": "things",
             "parts": part_ids_i, "affordances": sorted(affs_i)},
            {"id": "cj", "name": "cj", "superordinate": "things",
             "parts": part_ids_j, "affordances": sorted(affs_j)},
        ],
    )
    return load_ontology(doc_bytes(doc))


def orthogonal_store(cos: float, dim: int = 4) -> EmbeddingStore:
    """Two unit vectors with an exact prescribed cosine."""
    u = np.zeros(dim)
    u[0] = 1.0
    v = np.zeros(dim)
    v[0] = cos
    v[1] = math.sqrt(1 - cos * cos)
    return EmbeddingStore(dim=dim, vectors={"ci": u, "cj": v})


class TestConceptProximity:
    def test_self_with_parts_is_1_7(self, ontology, store, distance_config):
        assert concept_proximity(ontology, store, distance_config, "table", "table") == pytest.approx(1.7)

    def test_self_without_parts(self, ontology, store, distance_config):
        # desk has no parts: part-level Jaccard term is 0 by convention
        assert concept_proximity(ontology, store, distance_config, "desk", "desk") == pytest.approx(1.0)

    def test_all_terms_zero(self, distance_config):
        o = two_concept_ontology({"a1"}, {"a2"})
        s = orthogonal_store(0.0)
        assert concept_proximity(o, s, distance_config, "ci", "cj") == 0.0

    def test_hand_computed_half(self, distance_config):
        # concept-level overlap 1/2, no parts, cosine 0.5:
        # 0.7 * (0.5 + 0.0) + 0.3 * 0.5 = 0.5
        o = two_concept_ontology({"a1"}, {"a1", "a2"})
        s = orthogonal_store(0.5)
        got = concept_proximity(o, s, distance_config, "ci", "cj")
        assert got == pytest.approx(0.5)

    def test_symmetric(self, ontology, store, distance_config):
        ids = sorted(ontology.concepts)
        for ci in ids[:4]:
            for cj in ids[:4]:
                assert concept_proximity(ontology, store, distance_config, ci, cj) == \
                    concept_proximity(ontology, store, distance_config, cj, ci)

    def test_negative_cosine_clamped(self):
        o = two_concept_ontology({"a1"}, {"a1"})
        s = orthogonal_store(-0.8)
        clamped = concept_proximity(o, s, DistanceConfig(), "ci", "cj")
        raw = concept_proximity(o, s, DistanceConfig(clamp_negative_sim=False), "ci", "cj")
        assert clamped == pytest.approx(0.7)  # 0.7*1 + 0.3*0
        assert raw == pytest.approx(0.7 - 0.3 * 0.8)

    def test_normalize_flag(self):
        o = two_concept_ontology({"a1"}, {"a1"}, parts_i=({"a1"},), parts_j=({"a1"},))
        s = orthogonal_store(1.0)
        cfg = DistanceConfig(normalize=True)
        assert concept_proximity(o, s, cfg, "ci", "cj") == pytest.approx(1.0)

    def test_missing_embedding(self, ontology, distance_config):
        tiny = store_from_mapping({"table": [1.0, 0.0]})
        with pytest.raises(MissingEmbedding):
            concept_proximity(ontology, tiny, distance_config, "table", "chair")

    def test_bounds_clamped(self, ontology, store, distance_config):
        ids = sorted(ontology.concepts)
        for ci in ids:
            for cj in ids:
                v = concept_proximity(ontology, store, distance_config, ci, cj)
                assert 0.0 <= v <= distance_config.max_score

    @settings(max_examples=50)
    @given(
        affs_i=st.sets(st.sampled_from("abcdef"), min_size=1, max_size=4),
        affs_j=st.sets(st.sampled_from("abcdef"), min_size=1, max_size=4),
        cos=st.floats(min_value=-1, max_value=1),
    )
    def test_monotone_under_shared_affordance(self, affs_i, affs_j, cos):
        """Adding one new shared affordance never decreases proximity."""
        cfg = DistanceConfig()
        o1 = two_concept_ontology(affs_i, affs_j)
        s = orthogonal_store(cos)
        before = concept_proximity(o1, s, cfg, "ci", "cj")
        o2 = two_concept_ontology(affs_i | {"zz"}, affs_j | {"zz"})
        after = concept_proximity(o2, s, cfg, "ci", "cj")
        assert after >= before - 1e-12


class TestAffordanceProximity:
    def test_single_shared_concept(self, distance_config):
        # both affordances held by the same single parts-bearing concept
        doc = make_ontology_doc(
            affordances=[{"id": "a1", "name": "a1"}, {"id": "a2", "name": "a2"}],
            parts=[{"id": "p", "name": "p", "affordances": ["a1"]}],
            concepts=[{"id": "ci", "name": "ci", "superordinate": "things",
                       "parts": ["p"], "affordances": ["a1", "a2"]}],
        )
        o = load_ontology(doc_bytes(doc))
        s = store_from_mapping({"ci": [1.0, 0.0]})
        assert affordance_proximity(o, s, distance_config, "a1", "a2") == pytest.approx(1.7)

    def test_mean_of_cross_product(self, ontology, store, distance_config):
        # independent oracle: explicit double loop over associated concepts
        got = affordance_proximity(ontology, store, distance_config, "sit", "store")
        c_sit = ontology.concepts_with_affordance("sit")
        c_store = ontology.concepts_with_affordance("store")
        total = sum(
            concept_proximity(ontology, store, distance_config, cp, cq)
            for cp in c_sit for cq in c_store
        )
        assert got == pytest.approx(total / (len(c_sit) * len(c_store)), abs=1e-12)

    def test_hand_mean(self, distance_config):
        # C_a1={x}, C_a2={y,z}, engineered so prox(x,y)=0.8 and prox(x,z)=0.4:
        #   J(x,y)=5/7 with cos(x,y)=1 -> 0.7*5/7 + 0.3*1 = 0.8
        #   J(x,z)=4/7 with cos(x,z)=0 -> 0.7*4/7 + 0.3*0 = 0.4
        # mean over the cross product: 0.6
        ks = [f"k{i}" for i in range(1, 6)]
        doc = make_ontology_doc(
            affordances=[{"id": a, "name": a} for a in ("a1", "a2", *ks)],
            parts=[],
            concepts=[
                {"id": "x", "name": "x", "superordinate": "things",
                 "parts": [], "affordances": ["a1", *ks]},
                {"id": "y", "name": "y", "superordinate": "things",
                 "parts": [], "affordances": ["a2", *ks]},
                {"id": "z", "name": "z", "superordinate": "things",
                 "parts": [], "affordances": ["a2", *ks[:4]]},
            ],
        )
        o = load_ontology(doc_bytes(doc))
        s = store_from_mapping({"x": [1, 0], "y": [1, 0], "z": [0, 1]})
        assert concept_proximity(o, s, distance_config, "x", "y") == pytest.approx(0.8)
        assert concept_proximity(o, s, distance_config, "x", "z") == pytest.approx(0.4)
        got = affordance_proximity(o, s, distance_config, "a1", "a2")
        assert got == pytest.approx(0.6, abs=1e-12)

    def test_identical_affordance_rejected(self, ontology, store, distance_config):
        with pytest.raises(ValueError):
            affordance_proximity(ontology, store, distance_config, "sit", "sit")

    def test_empty_concept_set(self, distance_config):
        doc = make_ontology_doc()
        doc["affordances"].append({"id": "float", "name": "float"})
        o = load_ontology(doc_bytes(doc))
        s = store_from_mapping({"chair": [1, 0], "shelf": [0, 1], "car": [1, 1]})
        with pytest.raises(EmptyConceptSet):
            affordance_proximity(o, s, distance_config, "float", "sit")


class TestMatrix:
    def test_matches_per_pair_oracle(self, ontology, store, distance_config, matrix):
        for a, b, score in matrix.entries():
            direct = affordance_proximity(ontology, store, distance_config, a, b)
            assert abs(score - direct) <= 1e-12

    def test_pair_count(self, matrix):
        n = len(matrix.affordance_ids)
        assert n == 10
        assert matrix.pair_count == n * (n - 1) // 2 == 45

    def test_exact_symmetry(self, matrix):
        assert np.array_equal(matrix.scores, matrix.scores.T)

    def test_parallelism_bit_identical(self, ontology, store, distance_config):
        m1 = build_proximity_matrix(ontology, store, distance_config, parallelism=1)
        m8 = build_proximity_matrix(ontology, store, distance_config, parallelism=8)
        assert np.array_equal(m1.scores, m8.scores)
        assert m1.affordance_ids == m8.affordance_ids

    def test_empty_concept_set_excluded_not_fatal(self, store, distance_config, ontology):
        import json as _json
        from conceptforge.ontology import serialize
        doc = _json.loads(serialize(ontology))
        doc["affordances"].append({"id": "float", "name": "float"})
        o = load_ontology(_json.dumps(doc).encode())
        m = build_proximity_matrix(o, store, distance_config)
        assert m.excluded == ["float"]
        assert "float" not in m.affordance_ids

    def test_missing_embedding_fatal(self, ontology, distance_config):
        partial = store_from_mapping({"table": [1.0, 0.0]})
        with pytest.raises(MissingEmbedding):
            build_proximity_matrix(ontology, partial, distance_config)

    def test_score_lookup_and_diagonal(self, matrix):
        a, b, s0 = matrix.entries()[0]
        assert matrix.score(a, b) == matrix.score(b, a) == s0
        with pytest.raises(ValueError):
            matrix.score(a, a)

    def test_cache_roundtrip(self, matrix, distance_config, tmp_path):
        path = tmp_path / "m.npz"
        save_matrix(matrix, path)
        again = load_matrix(path, distance_config)
        assert again.affordance_ids == matrix.affordance_ids
        assert np.array_equal(again.scores, matrix.scores)
        assert again.excluded == matrix.excluded

    def test_cache_refuses_config_mismatch(self, matrix, tmp_path):
        path = tmp_path / "m.npz"
        save_matrix(matrix, path)
        with pytest.raises(CacheMismatch):
            load_matrix(path, DistanceConfig(alpha=0.5, beta=0.5))

    def test_distribution_summary(self, matrix):
        s = distribution_summary(matrix)
        assert s["pairs"] == 45
        assert s["min"] <= s["deciles"]["p50"] <= s["max"]
        assert s["deciles"]["p0"] == pytest.approx(s["min"])
        assert s["deciles"]["p100"] == pytest.approx(s["max"])


class TestEmbeddingIO:
    def test_loader_renormalizes(self):
        text = '{"dim": 2, "normalized": false}\n{"term": "x", "vector": [3.0, 4.0]}\n'
        store = load_embeddings(text)
        assert np.linalg.norm(store.get("x")) == pytest.approx(1.0)

    def test_normalized_claim_enforced(self):
        text = '{"dim": 2, "normalized": true}\n{"term": "x", "vector": [3.0, 4.0]}\n'
        with pytest.raises(EmbeddingFormatError):
            load_embeddings(text)

    def test_dim_mismatch(self):
        text = '{"dim": 3, "normalized": false}\n{"term": "x", "vector": [1.0, 0.0]}\n'
        with pytest.raises(EmbeddingFormatError):
            load_embeddings(text)

    def test_missing_header(self):
        with pytest.raises(EmbeddingFormatError):
            load_embeddings('{"term": "x", "vector": [1.0]}\n')

    def test_save_load_roundtrip(self, store, tmp_path):
        path = tmp_path / "emb.jsonl"
        save_embeddings(store, path)
        again = load_embeddings(path.read_text())
        assert set(again.vectors) == set(store.vectors)
        for term in store.vectors:
            assert np.allclose(again.get(term), store.get(term), atol=1e-12)

    def test_header_json_line(self, store, tmp_path):
        path = tmp_path / "emb.jsonl"
        save_embeddings(store, path)
        header = json.loads(path.read_text().splitlines()[0])
        assert header == {"dim": 8, "normalized": True}
