import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, describe, expect, it } from "vitest";

import { FIGURES, FigureKind } from "../src/manifest.js";
import { render } from "../src/render.js";

const FIXTURES = path.join(path.dirname(fileURLToPath(import.meta.url)), "fixtures");
const OUT = fs.mkdtempSync(path.join(os.tmpdir(), "mfc-plots-"));

afterAll(() => {
    fs.rmSync(OUT, { recursive: true, force: true });
});

const MANIFEST: Record<FigureKind, string> = {
    fig1: "manifest_fig1.json",
    fig2: "manifest_fig2.json",
    fig3: "manifest_fig3.json",
    fig4: "manifest_fig4.json",
    fig5: "manifest_fig5.json",
    chaos: "manifest_chaos.json",
};

describe("rendering", () => {
    for (const figure of FIGURES) {
        it(`renders ${figure} from its fixture manifest`, () => {
            const out = path.join(OUT, `${figure}.svg`);
            render({
                manifestPath: path.join(FIXTURES, MANIFEST[figure]),
                figure,
                outPath: out,
            });
            const content = fs.readFileSync(out, "utf-8");
            expect(content.length).toBeGreaterThan(500);
            expect(content.startsWith("<svg")).toBe(true);
        });
    }

    it("renders identical bytes on repeated runs", () => {
        const a = path.join(OUT, "rep-a.svg");
        const b = path.join(OUT, "rep-b.svg");
        const spec = { manifestPath: path.join(FIXTURES, "manifest_fig1.json"), outPath: a };
        render({ ...spec, figure: "fig1" });
        render({ ...spec, figure: "fig1", outPath: b });
        expect(fs.readFileSync(a, "utf-8")).toBe(fs.readFileSync(b, "utf-8"));
    });

    it("writes nothing when the input is broken", () => {
        const out = path.join(OUT, "broken.svg");
        expect(() =>
            render({
                manifestPath: path.join(FIXTURES, "empty_dir", "manifest_missing.json"),
                figure: "fig1",
                outPath: out,
            }),
        ).toThrow();
        expect(fs.existsSync(out)).toBe(false);
    });

    it("rejects unknown figure selectors", () => {
        expect(() =>
            render({
                manifestPath: path.join(FIXTURES, "manifest_fig1.json"),
                figure: "fig9" as FigureKind,
                outPath: path.join(OUT, "x.svg"),
            }),
        ).toThrow(/unknown figure/);
    });
});
