import { parseArgs } from "node:util";

import { TransformersJsEncoder, type Pooling } from "./encoder.js";
import { runExport } from "./export.js";
import { readOntologyTerms } from "./ontology.js";
import { validateEmbeddingFile } from "./validate.js";

const USAGE = `usage:
  embed-exporter --ontology <ontology.json> --out <embeddings.jsonl>
                 [--model <id-or-local-dir>] [--pooling mean|first]
                 [--include concepts,affordances,parts]
  embed-exporter --validate <embeddings.jsonl>`;

async function main(): Promise<number> {
    const { values } = parseArgs({
        options: {
            ontology: { type: "string" },
            out: { type: "string" },
            model: { type: "string", default: "Xenova/all-MiniLM-L6-v2" },
            pooling: { type: "string", default: "mean" },
            include: { type: "string", default: "concepts" },
            validate: { type: "string" },
            help: { type: "boolean", default: false },
        },
    });
    if (values.help) {
        console.log(USAGE);
        return 0;
    }
    if (values.validate) {
        const result = await validateEmbeddingFile(values.validate);
        console.log(`ok: ${result.terms} terms, dim ${result.dim}`);
        return 0;
    }
    if (!values.ontology || !values.out) {
        console.error(USAGE);
        return 2;
    }
    if (values.pooling !== "mean" && values.pooling !== "first") {
        console.error(`bad --pooling ${values.pooling}; want mean or first`);
        return 2;
    }
    const include = new Set(values.include!.split(",").map((s) => s.trim()));
    const terms = await readOntologyTerms(values.ontology, {
        concepts: include.has("concepts"),
        affordances: include.has("affordances"),
        parts: include.has("parts"),
    });
    const encoder = new TransformersJsEncoder(values.model!, values.pooling as Pooling);
    const stats = await runExport({ terms, outputPath: values.out }, encoder);
    console.log(
        `wrote ${stats.terms} terms (dim ${stats.dim}, ${stats.pooling} pooling, ${stats.encoder}) -> ${values.out}`,
    );
    await validateEmbeddingFile(values.out);
    return 0;
}

main().then(
    (code) => process.exit(code),
    (err) => {
        console.error(err instanceof Error ? err.message : String(err));
        process.exit(1);
    },
);
