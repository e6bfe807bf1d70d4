import { readFile } from "node:fs/promises";

export interface TermSelection {
    concepts?: boolean;
    affordances?: boolean;
    parts?: boolean;
}

interface NamedEntry {
    id: string;
    name: string;
}

interface OntologyDoc {
    concepts: NamedEntry[];
    affordances: NamedEntry[];
    parts: NamedEntry[];
}

/**
 * Pull display names out of an ontology JSON document. Concept names are
 * always included; affordance and part names are opt-in. Duplicates
 * collapse, order is left to the exporter (which sorts).
 */
export async function readOntologyTerms(
    path: string,
    selection: TermSelection = { concepts: true },
): Promise<string[]> {
    const doc = JSON.parse(await readFile(path, "utf-8")) as OntologyDoc;
    for (const key of ["concepts", "affordances", "parts"] as const) {
        if (!Array.isArray(doc[key])) {
            throw new Error(`ontology document lacks a ${key} array`);
        }
    }
    const terms = new Set<string>();
    const take = (entries: NamedEntry[]) => {
        for (const entry of entries) {
            if (typeof entry.name !== "string") {
                throw new Error(`entry ${JSON.stringify(entry.id)} has no name`);
            }
            terms.add(entry.name);
        }
    };
    if (selection.concepts !== false) take(doc.concepts);
    if (selection.affordances) take(doc.affordances);
    if (selection.parts) take(doc.parts);
    return [...terms];
}
