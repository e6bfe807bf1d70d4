export type Pooling = "mean" | "first";

export interface Encoder {
    /** Identifier stamped into the output header for provenance. */
    readonly id: string;
    readonly pooling: Pooling;
    encode(texts: string[]): Promise<number[][]>;
}

export class EncoderLoadError extends Error {
    constructor(message: string, options?: { cause?: unknown }) {
        super(message, options);
        this.name = "EncoderLoadError";
    }
}

const DEFAULT_MODEL = "Xenova/all-MiniLM-L6-v2";

/**
 * Pretrained text encoder via transformers.js (feature-extraction pipeline).
 *
 * The model id may be a hub id or a local directory. Mean pooling averages
 * token states under the attention mask; "first" takes the leading token
 * state. The dependency is loaded lazily so offline tooling (and the stub
 * encoder used in tests) works without it.
 */
export class TransformersJsEncoder implements Encoder {
    readonly id: string;
    readonly pooling: Pooling;
    private extractor: ((texts: string[], opts: object) => Promise<{ data: Float32Array | number[]; dims: number[] }>) | null = null;

    constructor(modelId: string = DEFAULT_MODEL, pooling: Pooling = "mean") {
        this.id = modelId;
        this.pooling = pooling;
    }

    private async load() {
        if (this.extractor) return;
        let transformers;
        try {
            transformers = await import("@xenova/transformers");
        } catch (err) {
            throw new EncoderLoadError(
                "@xenova/transformers is not installed; install it or pass a custom encoder",
                { cause: err },
            );
        }
        transformers.env.allowLocalModels = true;
        try {
            this.extractor = (await transformers.pipeline("feature-extraction", this.id)) as never;
        } catch (err) {
            throw new EncoderLoadError(`failed to load encoder ${this.id}: ${String(err)}`, {
                cause: err,
            });
        }
    }

    async encode(texts: string[]): Promise<number[][]> {
        await this.load();
        // transformers.js pooling "cls" is first-token pooling
        const pooling = this.pooling === "mean" ? "mean" : "cls";
        const output = await this.extractor!(texts, { pooling, normalize: false });
        const [n, dim] = output.dims;
        if (n !== texts.length) {
            throw new EncoderLoadError(`encoder returned ${n} rows for ${texts.length} texts`);
        }
        const data = Array.from(output.data as Float32Array);
        const rows: number[][] = [];
        for (let i = 0; i < n; i++) {
            rows.push(data.slice(i * dim, (i + 1) * dim));
        }
        return rows;
    }
}
