import { mkdir, writeFile } from "node:fs/promises";
import { dirname } from "node:path";

import type { Encoder, Pooling } from "./encoder.js";

export interface ExportJob {
    terms: string[];
    outputPath: string;
    batchSize?: number;
}

export interface ExportStats {
    terms: number;
    dim: number;
    encoder: string;
    pooling: Pooling;
}

export class MissingTermError extends Error {
    constructor(message: string) {
        super(message);
        this.name = "MissingTermError";
    }
}

const DEFAULT_BATCH = 32;

/**
 * Encode every term and write the embedding-store file: one header line
 * declaring dim and normalization, then one JSONL record per term.
 *
 * Terms are deduplicated and records are ordered by term, so re-exporting
 * with the same encoder version produces an identical file. Every vector is
 * unit-normalized before serialization.
 */
export async function runExport(job: ExportJob, encoder: Encoder): Promise<ExportStats> {
    const seen = new Set<string>();
    const terms: string[] = [];
    for (const term of job.terms) {
        if (typeof term !== "string" || term.trim() === "") {
            throw new MissingTermError(`blank term in export list: ${JSON.stringify(term)}`);
        }
        if (!seen.has(term)) {
            seen.add(term);
            terms.push(term);
        }
    }
    if (terms.length === 0) {
        throw new MissingTermError("no terms to export");
    }
    terms.sort();

    const batchSize = job.batchSize ?? DEFAULT_BATCH;
    const vectors: number[][] = [];
    for (let i = 0; i < terms.length; i += batchSize) {
        const batch = terms.slice(i, i + batchSize);
        vectors.push(...(await encoder.encode(batch)));
    }

    const dim = vectors[0].length;
    const lines: string[] = [
        JSON.stringify({ dim, normalized: true, encoder: encoder.id, pooling: encoder.pooling }),
    ];
    for (let i = 0; i < terms.length; i++) {
        const vec = vectors[i];
        if (vec.length !== dim) {
            throw new Error(`encoder returned dim ${vec.length} for ${terms[i]}, expected ${dim}`);
        }
        lines.push(JSON.stringify({ term: terms[i], vector: unitNormalize(vec) }));
    }
    await mkdir(dirname(job.outputPath), { recursive: true });
    await writeFile(job.outputPath, lines.join("\n") + "\n", "utf-8");
    return { terms: terms.length, dim, encoder: encoder.id, pooling: encoder.pooling };
}

export function unitNormalize(vec: number[]): number[] {
    const norm = Math.sqrt(vec.reduce((acc, v) => acc + v * v, 0));
    if (!Number.isFinite(norm) || norm === 0) {
        throw new Error("cannot normalize a zero or non-finite vector");
    }
    return vec.map((v) => v / norm);
}

export function cosine(a: number[], b: number[]): number {
    let dot = 0;
    for (let i = 0; i < a.length; i++) dot += a[i] * b[i];
    return dot;
}
