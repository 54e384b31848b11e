/**
 * Minimal deterministic SVG plotting primitives: linear scales, tick
 * generation (d3-array), polyline series, bands, and axis rendering.
 * Coordinates are written with fixed precision so identical inputs yield
 * byte-identical documents.
 */

import { ticks as d3ticks } from "d3-array";

export function fmt(x: number): string {
    if (!Number.isFinite(x)) throw new Error(`non-finite coordinate: ${x}`);
    const s = x.toFixed(2);
    return s === "-0.00" ? "0.00" : s;
}

export function fmtValue(x: number): string {
    // axis/annotation labels: compact but unambiguous
    if (x === 0) return "0";
    const a = Math.abs(x);
    if (a >= 10000 || a < 0.01) return x.toExponential(2);
    return String(Number(x.toPrecision(6)));
}

export interface Scale {
    (x: number): number;
    domain: [number, number];
    range: [number, number];
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
    let [d0, d1] = domain;
    if (d0 === d1) {
        // degenerate domain (single-point plots): pad symmetrically
        d0 -= 1;
        d1 += 1;
    }
    const k = (range[1] - range[0]) / (d1 - d0);
    const scale = ((x: number) => range[0] + (x - d0) * k) as Scale;
    scale.domain = [d0, d1];
    scale.range = range;
    return scale;
}

export function niceTicks(scale: Scale, count = 5): number[] {
    return d3ticks(scale.domain[0], scale.domain[1], count);
}

export interface Frame {
    x: number;
    y: number;
    width: number;
    height: number;
}

export function polyline(xs: number[], ys: number[], xScale: Scale, yScale: Scale,
                         stroke: string, dash?: string): string {
    const pts = xs.map((x, i) => `${fmt(xScale(x))},${fmt(yScale(ys[i]))}`).join(" ");
    const dashAttr = dash ? ` stroke-dasharray="${dash}"` : "";
    return `<polyline fill="none" stroke="${stroke}" stroke-width="1.5"${dashAttr} points="${pts}"/>`;
}

export function markers(xs: number[], ys: number[], xScale: Scale, yScale: Scale,
                        fill: string): string {
    return xs
        .map((x, i) =>
            `<circle cx="${fmt(xScale(x))}" cy="${fmt(yScale(ys[i]))}" r="2" fill="${fill}"/>`)
        .join("");
}

export function axes(frame: Frame, xScale: Scale, yScale: Scale,
                     xLabel: string, yLabel: string): string {
    const parts: string[] = [];
    const x0 = frame.x;
    const y0 = frame.y + frame.height;
    parts.push(`<rect x="${fmt(frame.x)}" y="${fmt(frame.y)}" width="${fmt(frame.width)}" ` +
        `height="${fmt(frame.height)}" fill="none" stroke="black" stroke-width="1"/>`);
    for (const t of niceTicks(xScale, 6)) {
        const px = xScale(t);
        parts.push(`<line x1="${fmt(px)}" y1="${fmt(y0)}" x2="${fmt(px)}" y2="${fmt(y0 + 4)}" stroke="black"/>`);
        parts.push(`<text x="${fmt(px)}" y="${fmt(y0 + 16)}" font-size="10" text-anchor="middle">${fmtValue(t)}</text>`);
    }
    for (const t of niceTicks(yScale, 5)) {
        const py = yScale(t);
        parts.push(`<line x1="${fmt(x0 - 4)}" y1="${fmt(py)}" x2="${fmt(x0)}" y2="${fmt(py)}" stroke="black"/>`);
        parts.push(`<text x="${fmt(x0 - 6)}" y="${fmt(py + 3)}" font-size="10" text-anchor="end">${fmtValue(t)}</text>`);
    }
    parts.push(`<text x="${fmt(frame.x + frame.width / 2)}" y="${fmt(y0 + 32)}" font-size="11" text-anchor="middle">${xLabel}</text>`);
    parts.push(`<text x="${fmt(frame.x - 44)}" y="${fmt(frame.y + frame.height / 2)}" font-size="11" text-anchor="middle" ` +
        `transform="rotate(-90 ${fmt(frame.x - 44)} ${fmt(frame.y + frame.height / 2)})">${yLabel}</text>`);
    return parts.join("\n");
}

export function svgDocument(width: number, height: number, metadata: string,
                            body: string): string {
    return [
        `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
            `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
        `<metadata>${metadata}</metadata>`,
        `<rect width="${width}" height="${height}" fill="white"/>`,
        body,
        `</svg>`,
        ``,
    ].join("\n");
}
