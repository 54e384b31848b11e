/**
 * CLI entry point: figures/render --spec PATH
 * Reads a figure spec (JSON), renders the figure, writes the SVG.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { dirname } from "node:path";
import { parseArgs } from "node:util";

import { FigureError, loadSpec, render } from "./figure.js";

export function main(argv: string[]): number {
    let values: { spec?: string };
    try {
        ({ values } = parseArgs({
            args: argv,
            options: { spec: { type: "string" } },
        }));
    } catch (err) {
        console.error(`error: ${(err as Error).message}`);
        return 2;
    }
    if (!values.spec) {
        console.error("usage: render --spec PATH");
        return 2;
    }
    try {
        const spec = loadSpec(values.spec);
        const svg = render(spec);
        mkdirSync(dirname(spec.output), { recursive: true });
        writeFileSync(spec.output, svg);
        console.log(spec.output);
        return 0;
    } catch (err) {
        if (err instanceof FigureError) {
            console.error(`error: ${err.message}`);
            return 2;
        }
        throw err;
    }
}

if (process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").at(-1)!)) {
    process.exit(main(process.argv.slice(2)));
}
