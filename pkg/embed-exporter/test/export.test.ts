import assert from "node:assert/strict";
import { createHash } from "node:crypto";
import { mkdtemp, readFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import test from "node:test";
import { fileURLToPath } from "node:url";

import type { Encoder, Pooling } from "../src/encoder.js";
import { MissingTermError, cosine, runExport, unitNormalize } from "../src/export.js";
import { readOntologyTerms } from "../src/ontology.js";
import { validateEmbeddingFile } from "../src/validate.js";

// tests run compiled from dist/test/, so reach back into the source tree
const FIXTURE = fileURLToPath(new URL("../../test/fixtures/mini_ontology.json", import.meta.url));

/** Deterministic hash-derived vectors; no model download needed. */
class StubEncoder implements Encoder {
    readonly id = "stub-encoder-v1";
    readonly pooling: Pooling = "mean";
    constructor(private dim = 12) {}

    async encode(texts: string[]): Promise<number[][]> {
        return texts.map((text) => {
            const digest = createHash("sha256").update(text).digest();
            const vec: number[] = [];
            for (let i = 0; i < this.dim; i++) {
                vec.push(digest[i % digest.length] / 127.5 - 1);
            }
            return vec;
        });
    }
}

async function tempOut(): Promise<string> {
    return join(await mkdtemp(join(tmpdir(), "embed-exporter-")), "embeddings.jsonl");
}

test("writes header with dim, normalization claim, and provenance", async () => {
    const out = await tempOut();
    const stats = await runExport({ terms: ["sofa", "chair"], outputPath: out }, new StubEncoder());
    assert.equal(stats.terms, 2);
    const [headerLine] = (await readFile(out, "utf-8")).split("\n");
    const header = JSON.parse(headerLine);
    assert.deepEqual(header, {
        dim: 12,
        normalized: true,
        encoder: "stub-encoder-v1",
        pooling: "mean",
    });
});

test("records are unit-normalized, deduplicated, and ordered by term", async () => {
    const out = await tempOut();
    await runExport(
        { terms: ["sofa", "chair", "sofa", "bench"], outputPath: out },
        new StubEncoder(),
    );
    const lines = (await readFile(out, "utf-8")).trim().split("\n").slice(1);
    const records = lines.map((line) => JSON.parse(line) as { term: string; vector: number[] });
    assert.deepEqual(
        records.map((r) => r.term),
        ["bench", "chair", "sofa"],
    );
    for (const rec of records) {
        const norm = Math.sqrt(rec.vector.reduce((acc, v) => acc + v * v, 0));
        assert.ok(Math.abs(norm - 1) <= 1e-6, `norm ${norm} for ${rec.term}`);
    }
});

test("re-export produces an identical file", async () => {
    const terms = ["sofa", "chair", "vacuum cleaner"];
    const a = await tempOut();
    const b = await tempOut();
    await runExport({ terms, outputPath: a }, new StubEncoder());
    await runExport({ terms, outputPath: b }, new StubEncoder());
    assert.equal(await readFile(a, "utf-8"), await readFile(b, "utf-8"));
});

test("blank terms are rejected", async () => {
    const out = await tempOut();
    await assert.rejects(
        runExport({ terms: ["sofa", "  "], outputPath: out }, new StubEncoder()),
        MissingTermError,
    );
    await assert.rejects(
        runExport({ terms: [], outputPath: out }, new StubEncoder()),
        MissingTermError,
    );
});

test("batching does not change the output", async () => {
    const terms = Array.from({ length: 23 }, (_, i) => `term-${i}`);
    const a = await tempOut();
    const b = await tempOut();
    await runExport({ terms, outputPath: a, batchSize: 4 }, new StubEncoder());
    await runExport({ terms, outputPath: b, batchSize: 100 }, new StubEncoder());
    assert.equal(await readFile(a, "utf-8"), await readFile(b, "utf-8"));
});

test("output passes the embedding-store validation", async () => {
    const out = await tempOut();
    const terms = await readOntologyTerms(FIXTURE);
    await runExport({ terms, outputPath: out }, new StubEncoder());
    const result = await validateEmbeddingFile(out);
    assert.equal(result.dim, 12);
    assert.equal(result.terms, 3); // duplicate concept name collapses
});

test("validator rejects norm violations and duplicates", async () => {
    const out = await tempOut();
    const { writeFile } = await import("node:fs/promises");
    await writeFile(
        out,
        '{"dim": 2, "normalized": true}\n{"term": "x", "vector": [3, 4]}\n',
    );
    await assert.rejects(validateEmbeddingFile(out), /normalized claim/);
    await writeFile(
        out,
        '{"dim": 2, "normalized": true}\n' +
            '{"term": "x", "vector": [1, 0]}\n{"term": "x", "vector": [0, 1]}\n',
    );
    await assert.rejects(validateEmbeddingFile(out), /duplicate/);
});

test("ontology term extraction honors the selection", async () => {
    const conceptsOnly = await readOntologyTerms(FIXTURE);
    assert.deepEqual(new Set(conceptsOnly), new Set(["sofa", "chair", "vacuum cleaner"]));
    const withAffordances = await readOntologyTerms(FIXTURE, {
        concepts: true,
        affordances: true,
        parts: true,
    });
    assert.ok(withAffordances.includes("sit"));
    assert.ok(withAffordances.includes("leg"));
});

test("unitNormalize and cosine behave on known vectors", () => {
    assert.deepEqual(unitNormalize([3, 4]), [0.6, 0.8]);
    assert.equal(cosine([1, 0], [1, 0]), 1);
    assert.equal(cosine([1, 0], [0, 1]), 0);
    assert.throws(() => unitNormalize([0, 0]));
});

// Needs the optional transformers.js dependency plus model weights (hub
// access or a local model dir via EMBED_EXPORTER_MODEL); run with
// EMBED_EXPORTER_MODEL_TEST=1 when those are available.
test(
    "pretrained encoder keeps sofa closer to chair than to vacuum cleaner",
    { skip: process.env.EMBED_EXPORTER_MODEL_TEST !== "1" },
    async () => {
        const { TransformersJsEncoder } = await import("../src/encoder.js");
        const encoder = new TransformersJsEncoder(
            process.env.EMBED_EXPORTER_MODEL ?? "Xenova/all-MiniLM-L6-v2",
        );
        const out = await tempOut();
        await runExport(
            { terms: ["sofa", "chair", "vacuum cleaner"], outputPath: out },
            encoder,
        );
        await validateEmbeddingFile(out);
        const lines = (await readFile(out, "utf-8")).trim().split("\n").slice(1);
        const vecs = new Map(
            lines.map((line) => {
                const rec = JSON.parse(line) as { term: string; vector: number[] };
                return [rec.term, rec.vector] as const;
            }),
        );
        assert.ok(
            cosine(vecs.get("sofa")!, vecs.get("chair")!) >
                cosine(vecs.get("sofa")!, vecs.get("vacuum cleaner")!),
        );
    },
);
