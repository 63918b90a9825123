import type { EChartsOption, SeriesOption } from "echarts";

import { column, prefixedColumns, readCsv, Table } from "./csv.js";
import { artefact, loadJson, Manifest } from "./manifest.js";

export const HIST_BINS = 30;

export interface Histogram {
    edges: number[];
    counts: number[];
}

/** Counts over [0, 1] with a shared 30-bin edge set. */
export function histogram(values: number[], bins: number = HIST_BINS): Histogram {
    const edges = Array.from({ length: bins + 1 }, (_, i) => i / bins);
    const counts = new Array(bins).fill(0);
    for (const v of values) {
        let idx = Math.floor(v * bins);
        if (idx === bins) idx = bins - 1; // v == 1 lands in the last bin
        if (idx >= 0 && idx < bins) counts[idx] += 1;
    }
    return { edges, counts };
}

/** Split a torus path into segments with nulls at wrap discontinuities. */
export function torusSegments(t: number[], x: number[]): Array<[number, number | null]> {
    const out: Array<[number, number | null]> = [];
    for (let i = 0; i < x.length; i++) {
        if (i > 0 && Math.abs(x[i] - x[i - 1]) > 0.5) {
            out.push([t[i], null]);
        }
        out.push([t[i], x[i]]);
    }
    return out;
}

const BASE: EChartsOption = { animation: false, backgroundColor: "#ffffff" };

function firstPath(table: Table): Table {
    const pid = column(table, "path_id");
    const keep = table.rows.filter((_, i) => pid[i] === pid[0]);
    return { header: table.header, rows: keep };
}

function trajectoryPanels(table: Table, withLeader: boolean, breakpoints: number[] | null): EChartsOption {
    const t = column(table, "t");
    const followers = prefixedColumns(table, "X_");
    const n = followers.length;
    const series: SeriesOption[] = followers.map((xs, i) => ({
        type: "line",
        name: `X_${i}`,
        data: torusSegments(t, xs),
        showSymbol: false,
        lineStyle: { color: "#1a2f6e", width: 0.6, opacity: 0.55 },
        connectNulls: false,
        xAxisIndex: 0,
        yAxisIndex: 0,
        silent: true,
    }));
    if (withLeader) {
        series.push({
            type: "line",
            name: "leader",
            data: torusSegments(t, column(table, "Y")),
            showSymbol: false,
            lineStyle: { color: "#c22a1d", width: 1.8 },
            connectNulls: false,
            xAxisIndex: 0,
            yAxisIndex: 0,
            z: 10,
        });
    }
    if (breakpoints !== null) {
        // dashed vertical markers where the piecewise-constant control changes
        series.push({
            type: "line",
            name: "control-breakpoints",
            data: [],
            xAxisIndex: 0,
            yAxisIndex: 0,
            markLine: {
                silent: true,
                symbol: "none",
                lineStyle: { color: "#000000", type: "dashed", width: 1 },
                data: breakpoints.slice(1, -1).map((b) => ({ xAxis: b })),
            },
        });
    }
    const h0 = histogram(followers.map((xs) => xs[0]));
    const h1 = histogram(followers.map((xs) => xs[xs.length - 1]));
    const centres = h0.counts.map((_, i) => (i + 0.5) / HIST_BINS);
    series.push(
        {
            type: "bar",
            name: "t=0",
            data: centres.map((c, i) => [c, h0.counts[i]]),
            barWidth: "42%",
            itemStyle: { color: "rgba(194,42,29,0.55)" },
            xAxisIndex: 1,
            yAxisIndex: 1,
        },
        {
            type: "bar",
            name: "t=T",
            data: centres.map((c, i) => [c, h1.counts[i]]),
            barWidth: "42%",
            itemStyle: { color: "rgba(20,20,20,0.55)" },
            xAxisIndex: 1,
            yAxisIndex: 1,
        },
    );
    return {
        ...BASE,
        title: [
            { text: `opinion trajectories (N=${n})`, left: "18%", textStyle: { fontSize: 13 } },
            { text: "opinions at t=0 and t=T", left: "72%", textStyle: { fontSize: 13 } },
        ],
        grid: [
            { left: 60, right: "45%", top: 40, bottom: 40 },
            { left: "62%", right: 30, top: 40, bottom: 40 },
        ],
        xAxis: [
            { gridIndex: 0, min: 0, max: 1, name: "t" },
            { gridIndex: 1, min: 0, max: 1, name: "opinion" },
        ],
        yAxis: [
            { gridIndex: 0, min: 0, max: 1, name: "opinion" },
            { gridIndex: 1, name: "count" },
        ],
        series,
    };
}

export function fig1Option(manifest: Manifest): EChartsOption {
    const table = firstPath(readCsv(artefact(manifest, "trajectory.csv")));
    return trajectoryPanels(table, true, null);
}

export function fig2Option(manifest: Manifest): EChartsOption {
    const table = readCsv(artefact(manifest, "iterations.csv"));
    const iters = column(table, "iter");
    const comps = prefixedColumns(table, "a_");
    const J = column(table, "J");
    const decreasing = J[J.length - 1] < J[0];
    const series: SeriesOption[] = comps.map((a, k) => ({
        type: "line",
        name: `a_${k + 1}`,
        data: iters.map((it, i) => [it, a[i]]),
        showSymbol: false,
        xAxisIndex: 0,
        yAxisIndex: 0,
    }));
    series.push({
        type: "line",
        name: "J",
        data: iters.map((it, i) => [it, J[i]]),
        showSymbol: false,
        lineStyle: { color: "#c22a1d", width: 1.8 },
        xAxisIndex: 1,
        yAxisIndex: 1,
    });
    return {
        ...BASE,
        title: [
            { text: "control coefficients per iteration", left: "15%", textStyle: { fontSize: 13 } },
            {
                text: `total cost per iteration (${decreasing ? "decreasing" : "not decreasing"})`,
                left: "62%",
                textStyle: { fontSize: 13 },
            },
        ],
        legend: { bottom: 0, left: "10%" },
        grid: [
            { left: 60, right: "55%", top: 40, bottom: 60 },
            { left: "55%", right: 30, top: 40, bottom: 60 },
        ],
        xAxis: [
            { gridIndex: 0, name: "iteration" },
            { gridIndex: 1, name: "iteration" },
        ],
        yAxis: [
            { gridIndex: 0, name: "a_k" },
            { gridIndex: 1, name: "J", scale: true },
        ],
        series,
    };
}

function markovOption(manifest: Manifest): EChartsOption {
    const table = firstPath(readCsv(artefact(manifest, "trajectory.csv")));
    const summary = loadJson(manifest, "markov_summary.json");
    return trajectoryPanels(table, true, summary.breakpoints as number[]);
}

export const fig3Option = markovOption;
export const fig4Option = markovOption;

export function fig5Option(manifest: Manifest): EChartsOption {
    const table = readCsv(artefact(manifest, "density.csv"));
    const t = column(table, "t");
    const Y = column(table, "Y");
    const cells = prefixedColumns(table, "g_");
    const n = cells.length;
    // cap the heatmap at ~200 time slices to keep the SVG reasonable
    const stride = Math.max(1, Math.floor(t.length / 200));
    const slices: number[] = [];
    for (let j = 0; j < t.length; j += stride) slices.push(j);
    const heat: Array<[number, number, number]> = [];
    slices.forEach((j, sj) => {
        for (let i = 0; i < n; i++) {
            heat.push([sj, i, cells[i][j]]);
        }
    });
    const gmax = Math.max(...cells.map((c) => Math.max(...c)));
    const centres = cells.map((_, i) => (i + 0.5) / n);
    return {
        ...BASE,
        title: [
            { text: "follower density and leader path", left: "15%", textStyle: { fontSize: 13 } },
            { text: "density at t=0 and t=T", left: "72%", textStyle: { fontSize: 13 } },
        ],
        grid: [
            { left: 60, right: "45%", top: 40, bottom: 60 },
            { left: "62%", right: 30, top: 40, bottom: 60 },
        ],
        xAxis: [
            // category axes carry the heatmap; a hidden value-axis pair on the
            // same grid carries the leader overlay in (t, x) coordinates
            {
                gridIndex: 0,
                type: "category",
                data: slices.map((j) => t[j].toFixed(3)),
                name: "t",
                axisLabel: { interval: Math.max(1, Math.floor(slices.length / 6)) },
            },
            { gridIndex: 1, min: 0, max: 1, name: "x" },
            { gridIndex: 0, min: t[0], max: t[t.length - 1], show: false },
        ],
        yAxis: [
            { gridIndex: 0, type: "category", data: centres.map((c) => c.toFixed(3)), name: "x", axisLabel: { interval: Math.max(1, Math.floor(n / 8)) } },
            { gridIndex: 1, name: "g", scale: true },
            { gridIndex: 0, min: 0, max: 1, show: false },
        ],
        visualMap: {
            min: 0,
            max: gmax,
            calculable: false,
            orient: "vertical",
            left: 0,
            bottom: 60,
            seriesIndex: 0,
            inRange: { color: ["#ffffff", "#fde28a", "#e4572e", "#5f0f40"] },
        },
        series: [
            {
                type: "heatmap",
                name: "density",
                data: heat,
                xAxisIndex: 0,
                yAxisIndex: 0,
                progressive: 0,
            },
            {
                type: "line",
                name: "leader",
                data: torusSegments(t, Y),
                showSymbol: false,
                lineStyle: { color: "#c22a1d", width: 1.8 },
                connectNulls: false,
                xAxisIndex: 2,
                yAxisIndex: 2,
                z: 10,
            },
            {
                type: "line",
                name: "g at t=0",
                data: centres.map((c, i) => [c, cells[i][0]]),
                showSymbol: false,
                lineStyle: { color: "#c22a1d", width: 1.5 },
                xAxisIndex: 1,
                yAxisIndex: 1,
            },
            {
                type: "line",
                name: "g at t=T",
                data: centres.map((c, i) => [c, cells[i][t.length - 1]]),
                showSymbol: false,
                lineStyle: { color: "#141414", width: 1.5 },
                xAxisIndex: 1,
                yAxisIndex: 1,
            },
        ],
    };
}

export function chaosOption(manifest: Manifest): EChartsOption {
    const table = readCsv(artefact(manifest, "study.csv"));
    const summary = loadJson(manifest, "summary.json");
    const Ns = column(table, "N");
    const w2 = column(table, "sup_w2_sq");
    const perN = new Map<number, number[]>();
    Ns.forEach((N, i) => {
        if (!perN.has(N)) perN.set(N, []);
        perN.get(N)!.push(w2[i]);
    });
    const means = [...perN.entries()]
        .sort((a, b) => a[0] - b[0])
        .map(([N, vals]) => [N, vals.reduce((s, v) => s + v, 0) / vals.length] as [number, number]);
    return {
        ...BASE,
        title: {
            text: `empirical-to-density transport error, fitted slope ${summary.slope.toFixed(3)}`,
            left: "center",
            textStyle: { fontSize: 13 },
        },
        grid: { left: 70, right: 30, top: 40, bottom: 50 },
        xAxis: { type: "log", name: "N" },
        yAxis: { type: "log", name: "sup W2^2" },
        series: [
            {
                type: "scatter",
                name: "replications",
                data: Ns.map((N, i) => [N, w2[i]]),
                symbolSize: 4,
                itemStyle: { color: "rgba(26,47,110,0.4)" },
            },
            {
                type: "line",
                name: "mean",
                data: means,
                itemStyle: { color: "#c22a1d" },
                lineStyle: { color: "#c22a1d" },
            },
        ],
    };
}

export const BUILDERS = {
    fig1: fig1Option,
    fig2: fig2Option,
    fig3: fig3Option,
    fig4: fig4Option,
    fig5: fig5Option,
    chaos: chaosOption,
} as const;
