import * as fs from "node:fs";

export interface Table {
    header: string[];
    rows: number[][];
}

/** Read a plain numeric CSV (header row + float rows, no quoting). */
export function readCsv(path: string): Table {
    if (!fs.existsSync(path)) {
        throw new Error(`missing CSV file: ${path}`);
    }
    const text = fs.readFileSync(path, "utf-8").trim();
    const lines = text.split(/\r?\n/);
    if (lines.length < 2) {
        throw new Error(`CSV has no data rows: ${path}`);
    }
    const header = lines[0].split(",");
    const rows = lines.slice(1).map((line, i) => {
        const parts = line.split(",");
        if (parts.length !== header.length) {
            throw new Error(`CSV row ${i + 1} has ${parts.length} fields, expected ${header.length}: ${path}`);
        }
        return parts.map(Number);
    });
    return { header, rows };
}

export function column(table: Table, name: string): number[] {
    const idx = table.header.indexOf(name);
    if (idx < 0) {
        throw new Error(`CSV schema mismatch: missing column '${name}'`);
    }
    return table.rows.map((r) => r[idx]);
}

/** All columns whose names share a prefix like X_ or g_, in index order. */
export function prefixedColumns(table: Table, prefix: string): number[][] {
    const names = table.header.filter((h) => h.startsWith(prefix));
    if (names.length === 0) {
        throw new Error(`CSV schema mismatch: no '${prefix}*' columns`);
    }
    names.sort((a, b) => Number(a.slice(prefix.length)) - Number(b.slice(prefix.length)));
    return names.map((n) => column(table, n));
}
