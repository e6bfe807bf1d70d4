// Minimal surface of the optional @xenova/transformers dependency; the
// runtime import is dynamic and guarded, so builds succeed without it.
declare module "@xenova/transformers" {
    export const env: {
        allowLocalModels: boolean;
        [key: string]: unknown;
    };

    export interface FeatureExtractionOutput {
        data: Float32Array | number[];
        dims: number[];
    }

    export type FeatureExtractionPipeline = (
        texts: string[],
        options: { pooling: "mean" | "cls" | "none"; normalize: boolean },
    ) => Promise<FeatureExtractionOutput>;

    export function pipeline(
        task: "feature-extraction",
        model?: string,
    ): Promise<FeatureExtractionPipeline>;
}
