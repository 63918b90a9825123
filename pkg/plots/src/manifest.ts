import * as fs from "node:fs";
import * as path from "node:path";

export type FigureKind = "fig1" | "fig2" | "fig3" | "fig4" | "fig5" | "chaos";

export const FIGURES: FigureKind[] = ["fig1", "fig2", "fig3", "fig4", "fig5", "chaos"];

export interface Manifest {
    scenario: string;
    config_hash: string;
    files: string[];
    seed: number;
    dir: string;
}

export interface FigureSpec {
    manifestPath: string;
    figure: FigureKind;
    outPath: string;
}

export function loadManifest(manifestPath: string): Manifest {
    if (!fs.existsSync(manifestPath)) {
        throw new Error(`missing manifest: ${manifestPath}`);
    }
    const raw = JSON.parse(fs.readFileSync(manifestPath, "utf-8"));
    return { ...raw, dir: path.dirname(manifestPath) };
}

/** Resolve one of the manifest's declared artefacts to an absolute path. */
export function artefact(manifest: Manifest, name: string): string {
    if (!manifest.files.includes(name)) {
        throw new Error(`manifest does not declare '${name}' (has: ${manifest.files.join(", ")})`);
    }
    return path.join(manifest.dir, name);
}

export function loadJson(manifest: Manifest, name: string): any {
    return JSON.parse(fs.readFileSync(artefact(manifest, name), "utf-8"));
}
