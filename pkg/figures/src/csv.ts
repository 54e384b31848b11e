/**
 * Reader for the simulator's scan CSV schema
 * (heraldsim.scan.v1): versioned comment preamble, a fixed header row,
 * then one row per (slit position, gating state).
 */

export interface ScanRow {
    slitCenterNm: number;
    windowNm: number;
    gated: boolean;
    sTrigger: number;
    sSignal: number;
    coincidences: number;
    accidentals: number;
    efficiency: number;
    brightness: number;
}

export interface ScanTable {
    schema: string | null;
    scenario: string | null;
    seed: string | null;
    rows: ScanRow[];
}

export class CsvError extends Error {}

const REQUIRED_COLUMNS = [
    "slit_center_nm",
    "window_nm",
    "gated",
    "s_trigger",
    "s_signal",
    "coincidences",
    "accidentals",
    "efficiency",
    "brightness",
] as const;

function parseNumber(raw: string, column: string, line: number): number {
    const value = Number(raw);
    if (raw.trim() === "" || Number.isNaN(value)) {
        throw new CsvError(`line ${line}: bad number ${JSON.stringify(raw)} in column ${column}`);
    }
    return value;
}

export function parseScanCsv(text: string): ScanTable {
    const meta: Record<string, string> = {};
    let header: string[] | null = null;
    const rows: ScanRow[] = [];

    const lines = text.split(/\r?\n/);
    for (let i = 0; i < lines.length; i++) {
        const line = lines[i].trim();
        if (line === "") continue;
        if (line.startsWith("#")) {
            const body = line.slice(1).trim();
            const eq = body.indexOf("=");
            if (eq > 0) meta[body.slice(0, eq)] = body.slice(eq + 1);
            continue;
        }
        const parts = line.split(",");
        if (header === null) {
            header = parts.map((p) => p.trim());
            for (const col of REQUIRED_COLUMNS) {
                if (!header.includes(col)) {
                    throw new CsvError(`missing required column ${JSON.stringify(col)}`);
                }
            }
            continue;
        }
        const at = (col: string) => parts[header!.indexOf(col)];
        rows.push({
            slitCenterNm: parseNumber(at("slit_center_nm"), "slit_center_nm", i + 1),
            windowNm: parseNumber(at("window_nm"), "window_nm", i + 1),
            gated: at("gated").trim() === "true",
            sTrigger: parseNumber(at("s_trigger"), "s_trigger", i + 1),
            sSignal: parseNumber(at("s_signal"), "s_signal", i + 1),
            coincidences: parseNumber(at("coincidences"), "coincidences", i + 1),
            accidentals: parseNumber(at("accidentals"), "accidentals", i + 1),
            efficiency: parseNumber(at("efficiency"), "efficiency", i + 1),
            brightness: parseNumber(at("brightness"), "brightness", i + 1),
        });
    }
    if (header === null) throw new CsvError("no header row found");
    if (rows.length === 0) throw new CsvError("scan contains no data rows");
    return {
        schema: meta["schema"] ?? null,
        scenario: meta["scenario"] ?? null,
        seed: meta["seed"] ?? null,
        rows,
    };
}
