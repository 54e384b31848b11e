/**
 * Two-panel figure layouts over scan CSVs.
 *
 * fig2_pair: spectrally resolved singles and coincidences, ungated panel
 * beside gated panel, each annotated with the coincidence-peak ratio
 * computed from its own rows.
 *
 * fig3_pair: fine-grained traces around the coincidence peak with the
 * report window drawn as the unshaded band (everything outside is shaded),
 * plus an efficiency-ratio panel.
 *
 * All plotted series are raw CSV columns; extractSeries() is the test hook
 * proving no smoothing happens between file and figure.
 */

import { readFileSync } from "node:fs";
import { dirname, resolve } from "node:path";

import { CsvError, parseScanCsv, ScanRow, ScanTable } from "./csv.js";
import { axes, fmt, fmtValue, Frame, linearScale, markers, polyline, svgDocument } from "./svg.js";

export type Layout = "fig2_pair" | "fig3_pair";

export interface FigureSpec {
    layout: Layout;
    inputCsv: string;
    output: string;
}

export class FigureError extends Error {}

export function loadSpec(path: string): FigureSpec {
    let raw: unknown;
    try {
        raw = JSON.parse(readFileSync(path, "utf8"));
    } catch (err) {
        throw new FigureError(`cannot read figure spec ${path}: ${(err as Error).message}`);
    }
    const data = raw as Record<string, unknown>;
    const layout = data["layout"];
    if (layout !== "fig2_pair" && layout !== "fig3_pair") {
        throw new FigureError(`spec ${path}: layout must be fig2_pair or fig3_pair`);
    }
    for (const key of ["input_csv", "output"]) {
        if (typeof data[key] !== "string") {
            throw new FigureError(`spec ${path}: missing string field ${key}`);
        }
    }
    const base = dirname(resolve(path));
    return {
        layout,
        inputCsv: resolve(base, data["input_csv"] as string),
        output: resolve(base, data["output"] as string),
    };
}

export interface Series {
    x: number[];
    singles: number[];
    coincidences: number[];
    efficiency: number[];
}

function toSeries(rows: ScanRow[]): Series {
    const sorted = [...rows].sort((a, b) => a.slitCenterNm - b.slitCenterNm);
    return {
        x: sorted.map((r) => r.slitCenterNm),
        singles: sorted.map((r) => r.sTrigger),
        coincidences: sorted.map((r) => r.coincidences),
        efficiency: sorted.map((r) => r.efficiency),
    };
}

function traceRows(table: ScanTable): ScanRow[] {
    // the scan trace is carried by the narrowest window in the file; a
    // wider report row, when present, only provides the band annotation
    const minWindow = Math.min(...table.rows.map((r) => r.windowNm));
    return table.rows.filter((r) => r.windowNm === minWindow);
}

export function extractSeries(table: ScanTable, layout: Layout): Record<string, Series> {
    const rows = traceRows(table);
    if (layout === "fig2_pair") {
        const ungated = rows.filter((r) => !r.gated);
        const gated = rows.filter((r) => r.gated);
        if (ungated.length === 0 || gated.length === 0) {
            throw new FigureError("fig2_pair needs both gated and ungated rows");
        }
        return { ungated: toSeries(ungated), gated: toSeries(gated) };
    }
    const gated = rows.filter((r) => r.gated);
    if (gated.length === 0) throw new FigureError("fig3_pair needs gated rows");
    return { gated: toSeries(gated) };
}

export interface BandAnnotation {
    loNm: number;
    hiNm: number;
    windowNm: number;
    efficiency: number;
    brightness: number;
}

export function reportBand(table: ScanTable): BandAnnotation | null {
    const windows = table.rows.map((r) => r.windowNm);
    const minWindow = Math.min(...windows);
    const maxWindow = Math.max(...windows);
    if (maxWindow === minWindow) return null;
    const report = table.rows.filter((r) => r.windowNm === maxWindow).at(-1)!;
    return {
        loNm: report.slitCenterNm - report.windowNm / 2,
        hiNm: report.slitCenterNm + report.windowNm / 2,
        windowNm: report.windowNm,
        efficiency: report.efficiency,
        brightness: report.brightness,
    };
}

export function peakRatio(series: Series): number {
    // conditional efficiency at the coincidence peak: robust against
    // large ratios from near-empty tail rows
    let best = 0;
    let eff = 0;
    for (let i = 0; i < series.x.length; i++) {
        if (series.coincidences[i] >= best) {
            best = series.coincidences[i];
            eff = series.efficiency[i];
        }
    }
    return eff;
}

const WIDTH = 880;
const HEIGHT = 360;
const PANEL: Frame[] = [
    { x: 70, y: 40, width: 330, height: 250 },
    { x: 510, y: 40, width: 330, height: 250 },
];
const SINGLES_COLOR = "#1f77b4";
const COINC_COLOR = "#d62728";
const EFF_COLOR = "#2ca02c";

function panelBody(frame: Frame, series: Series, title: string, annotation: string,
                   yLabel: string): string {
    const xScale = linearScale([Math.min(...series.x), Math.max(...series.x)],
                               [frame.x, frame.x + frame.width]);
    const yMax = Math.max(...series.singles, ...series.coincidences, 1);
    const yScale = linearScale([0, yMax], [frame.y + frame.height, frame.y]);
    const parts = [
        axes(frame, xScale, yScale, "wavelength (nm)", yLabel),
        polyline(series.x, series.singles, xScale, yScale, SINGLES_COLOR),
        markers(series.x, series.singles, xScale, yScale, SINGLES_COLOR),
        polyline(series.x, series.coincidences, xScale, yScale, COINC_COLOR, "4 3"),
        markers(series.x, series.coincidences, xScale, yScale, COINC_COLOR),
        `<text x="${fmt(frame.x + frame.width / 2)}" y="${fmt(frame.y - 18)}" font-size="12" text-anchor="middle" font-weight="bold">${title}</text>`,
        `<text x="${fmt(frame.x + frame.width / 2)}" y="${fmt(frame.y - 4)}" font-size="11" text-anchor="middle">${annotation}</text>`,
        `<text x="${fmt(frame.x + 8)}" y="${fmt(frame.y + 14)}" font-size="10" fill="${SINGLES_COLOR}">singles</text>`,
        `<text x="${fmt(frame.x + 8)}" y="${fmt(frame.y + 26)}" font-size="10" fill="${COINC_COLOR}">coincidences</text>`,
    ];
    return parts.join("\n");
}

function metadataBlock(table: ScanTable, spec: FigureSpec): string {
    const src = spec.inputCsv;
    return `source-csv=${src} scenario=${table.scenario ?? "?"} seed=${table.seed ?? "?"}`;
}

function renderFig2(table: ScanTable, spec: FigureSpec): string {
    const series = extractSeries(table, "fig2_pair");
    const annU = `peak C/S = ${fmtValue(peakRatio(series.ungated))}`;
    const annG = `peak C/S = ${fmtValue(peakRatio(series.gated))}`;
    const body = [
        panelBody(PANEL[0], series.ungated, "(a) without time gating", annU, "counts"),
        panelBody(PANEL[1], series.gated, "(b) with time gating", annG, "counts"),
    ].join("\n");
    return svgDocument(WIDTH, HEIGHT, metadataBlock(table, spec), body);
}

function renderFig3(table: ScanTable, spec: FigureSpec): string {
    const series = extractSeries(table, "fig3_pair")["gated"];
    const band = reportBand(table);
    if (band === null) {
        throw new FigureError("fig3_pair needs a wide report row for the window band");
    }
    const xLo = Math.min(...series.x);
    const xHi = Math.max(...series.x);
    if (band.loNm < xLo || band.hiNm > xHi) {
        throw new FigureError(
            `window band [${band.loNm}, ${band.hiNm}] nm lies outside the scanned range ` +
            `[${xLo}, ${xHi}] nm`);
    }

    const frameA = PANEL[0];
    const frameB = PANEL[1];
    const xScaleA = linearScale([xLo, xHi], [frameA.x, frameA.x + frameA.width]);
    const yMax = Math.max(...series.singles, ...series.coincidences, 1);
    const yScaleA = linearScale([0, yMax], [frameA.y + frameA.height, frameA.y]);

    // shade everything outside the optimal window
    const shade = (frame: Frame, x0: number, x1: number) =>
        `<rect x="${fmt(x0)}" y="${fmt(frame.y)}" width="${fmt(Math.max(0, x1 - x0))}" ` +
        `height="${fmt(frame.height)}" fill="#bbbbbb" fill-opacity="0.35"/>`;
    const partsA = [
        shade(frameA, frameA.x, xScaleA(band.loNm)),
        shade(frameA, xScaleA(band.hiNm), frameA.x + frameA.width),
        axes(frameA, xScaleA, yScaleA, "wavelength (nm)", "counts"),
        polyline(series.x, series.singles, xScaleA, yScaleA, SINGLES_COLOR),
        markers(series.x, series.singles, xScaleA, yScaleA, SINGLES_COLOR),
        polyline(series.x, series.coincidences, xScaleA, yScaleA, COINC_COLOR, "4 3"),
        markers(series.x, series.coincidences, xScaleA, yScaleA, COINC_COLOR),
        `<text x="${fmt(frameA.x + frameA.width / 2)}" y="${fmt(frameA.y - 18)}" font-size="12" text-anchor="middle" font-weight="bold">(a) traces at the coincidence peak</text>`,
        `<text x="${fmt(frameA.x + frameA.width / 2)}" y="${fmt(frameA.y - 4)}" font-size="11" text-anchor="middle">window ${fmtValue(band.windowNm)} nm, brightness ${fmtValue(band.brightness)} /(s mW)</text>`,
        `<text x="${fmt(frameA.x + 8)}" y="${fmt(frameA.y + 14)}" font-size="10" fill="${SINGLES_COLOR}">singles</text>`,
        `<text x="${fmt(frameA.x + 8)}" y="${fmt(frameA.y + 26)}" font-size="10" fill="${COINC_COLOR}">coincidences</text>`,
    ];

    const xScaleB = linearScale([xLo, xHi], [frameB.x, frameB.x + frameB.width]);
    const yScaleB = linearScale([0, 1], [frameB.y + frameB.height, frameB.y]);
    const partsB = [
        shade(frameB, frameB.x, xScaleB(band.loNm)),
        shade(frameB, xScaleB(band.hiNm), frameB.x + frameB.width),
        axes(frameB, xScaleB, yScaleB, "wavelength (nm)", "C / S ratio"),
        polyline(series.x, series.efficiency, xScaleB, yScaleB, EFF_COLOR),
        markers(series.x, series.efficiency, xScaleB, yScaleB, EFF_COLOR),
        `<text x="${fmt(frameB.x + frameB.width / 2)}" y="${fmt(frameB.y - 18)}" font-size="12" text-anchor="middle" font-weight="bold">(b) conditional detection efficiency</text>`,
        `<text x="${fmt(frameB.x + frameB.width / 2)}" y="${fmt(frameB.y - 4)}" font-size="11" text-anchor="middle">window C/S = ${fmtValue(band.efficiency)}</text>`,
    ];
    return svgDocument(WIDTH, HEIGHT, metadataBlock(table, spec),
                       [...partsA, ...partsB].join("\n"));
}

export function renderTable(table: ScanTable, spec: FigureSpec): string {
    return spec.layout === "fig2_pair" ? renderFig2(table, spec) : renderFig3(table, spec);
}

export function render(spec: FigureSpec): string {
    let text: string;
    try {
        text = readFileSync(spec.inputCsv, "utf8");
    } catch (err) {
        throw new FigureError(`cannot read ${spec.inputCsv}: ${(err as Error).message}`);
    }
    let table: ScanTable;
    try {
        table = parseScanCsv(text);
    } catch (err) {
        if (err instanceof CsvError) throw new FigureError(`${spec.inputCsv}: ${err.message}`);
        throw err;
    }
    return renderTable(table, spec);
}
