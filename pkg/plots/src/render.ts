import * as fs from "node:fs";
import * as path from "node:path";

import * as echarts from "echarts";

import { BUILDERS } from "./figures.js";
import { FigureKind, FIGURES, FigureSpec, loadManifest } from "./manifest.js";

/** The renderer embeds process-global counters in ids and class names;
 * renumber them by first appearance so repeated runs are byte-identical. */
function normalizeSvg(svg: string): string {
    const seen = new Map<string, string>();
    return svg.replace(/\bzr\d+-[A-Za-z]+-?\d*\b/g, (token) => {
        let mapped = seen.get(token);
        if (mapped === undefined) {
            mapped = `zr-n${seen.size}`;
            seen.set(token, mapped);
        }
        return mapped;
    });
}

export function renderOptionToSvg(option: echarts.EChartsOption, width = 1200, height = 480): string {
    const chart = echarts.init(null, null, { renderer: "svg", ssr: true, width, height });
    try {
        chart.setOption(option);
        return normalizeSvg(chart.renderToSVGString());
    } finally {
        chart.dispose();
    }
}

/** Build and write one figure; the output file only appears on success. */
export function render(spec: FigureSpec): string {
    if (!FIGURES.includes(spec.figure)) {
        throw new Error(`unknown figure '${spec.figure}'; choose from ${FIGURES.join("|")}`);
    }
    const manifest = loadManifest(spec.manifestPath);
    const option = BUILDERS[spec.figure as FigureKind](manifest);
    const svg = renderOptionToSvg(option);
    fs.mkdirSync(path.dirname(path.resolve(spec.outPath)), { recursive: true });
    fs.writeFileSync(spec.outPath, svg);
    return spec.outPath;
}
