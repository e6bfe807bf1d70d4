export { TransformersJsEncoder, EncoderLoadError } from "./encoder.js";
export type { Encoder, Pooling } from "./encoder.js";
export { runExport, MissingTermError, unitNormalize, cosine } from "./export.js";
export type { ExportJob, ExportStats } from "./export.js";
export { readOntologyTerms } from "./ontology.js";
export { validateEmbeddingFile } from "./validate.js";
