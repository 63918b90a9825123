#!/usr/bin/env node
// Usage: plot <figure> --manifest <path> --out <file.svg>

import { render } from "./render.js";
import { FIGURES } from "./manifest.js";

function usage(): never {
    console.error(`usage: plot <${FIGURES.join("|")}> --manifest <path> --out <file.svg>`);
    process.exit(2);
}

export function main(argv: string[]): number {
    const args = [...argv];
    const figure = args.shift();
    if (!figure || figure.startsWith("-")) usage();
    let manifest: string | undefined;
    let out: string | undefined;
    while (args.length > 0) {
        const flag = args.shift();
        if (flag === "--manifest") manifest = args.shift();
        else if (flag === "--out") out = args.shift();
        else usage();
    }
    if (!manifest || !out) usage();
    try {
        const written = render({ manifestPath: manifest, figure: figure as any, outPath: out });
        console.log(`wrote ${written}`);
        return 0;
    } catch (err) {
        console.error(`plot failed: ${(err as Error).message}`);
        return 1;
    }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
    process.exit(main(process.argv.slice(2)));
}
