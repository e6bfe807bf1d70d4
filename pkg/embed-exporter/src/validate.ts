import { readFile } from "node:fs/promises";

export interface ValidationResult {
    dim: number;
    terms: number;
}

const NORM_CLAIM_TOL = 1e-3;

/**
 * Check an embedding file against the store contract the consumer enforces:
 * a header object with a positive integer dim, every record carrying a
 * non-empty term and a dim-length numeric vector with unit norm (within
 * 1e-3 when the header claims normalization). Duplicate terms are rejected.
 */
export async function validateEmbeddingFile(path: string): Promise<ValidationResult> {
    const text = await readFile(path, "utf-8");
    const lines = text.split("\n").filter((line) => line.trim() !== "");
    if (lines.length < 2) {
        throw new Error("embedding file needs a header plus at least one record");
    }
    const header = JSON.parse(lines[0]) as { dim?: unknown; normalized?: unknown };
    if (typeof header.dim !== "number" || !Number.isInteger(header.dim) || header.dim <= 0) {
        throw new Error(`bad header dim: ${JSON.stringify(header.dim)}`);
    }
    const dim = header.dim;
    const claimsNormalized = header.normalized === true;

    const seen = new Set<string>();
    for (let i = 1; i < lines.length; i++) {
        const rec = JSON.parse(lines[i]) as { term?: unknown; vector?: unknown };
        if (typeof rec.term !== "string" || rec.term === "") {
            throw new Error(`line ${i + 1}: bad term`);
        }
        if (seen.has(rec.term)) {
            throw new Error(`line ${i + 1}: duplicate term ${JSON.stringify(rec.term)}`);
        }
        seen.add(rec.term);
        if (!Array.isArray(rec.vector) || rec.vector.length !== dim) {
            throw new Error(`line ${i + 1}: vector is not length ${dim}`);
        }
        const norm = Math.sqrt(
            (rec.vector as number[]).reduce((acc, v) => {
                if (typeof v !== "number" || !Number.isFinite(v)) {
                    throw new Error(`line ${i + 1}: non-finite component`);
                }
                return acc + v * v;
            }, 0),
        );
        if (claimsNormalized && Math.abs(norm - 1) > NORM_CLAIM_TOL) {
            throw new Error(`line ${i + 1}: norm ${norm} violates the normalized claim`);
        }
    }
    return { dim, terms: seen.size };
}
