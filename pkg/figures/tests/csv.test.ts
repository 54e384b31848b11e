import { describe, expect, it } from "vitest";

import { CsvError, parseScanCsv } from "../src/csv.js";

const HEADER = "slit_center_nm,window_nm,gated,s_trigger,s_signal," +
    "coincidences,accidentals,efficiency,brightness";

const SAMPLE = [
    "# schema=heraldsim.scan.v1",
    "# scenario=demo",
    "# seed=42",
    HEADER,
    "780.0,2.0,false,628,38231,83,0.276,0.132,55551.2",
    "780.0,2.0,true,213,38231,82,0.0936,0.385,54881.9",
].join("\n");

describe("parseScanCsv", () => {
    it("reads metadata and rows", () => {
        const table = parseScanCsv(SAMPLE);
        expect(table.schema).toBe("heraldsim.scan.v1");
        expect(table.scenario).toBe("demo");
        expect(table.seed).toBe("42");
        expect(table.rows).toHaveLength(2);
        expect(table.rows[0].slitCenterNm).toBe(780.0);
        expect(table.rows[0].gated).toBe(false);
        expect(table.rows[1].gated).toBe(true);
        expect(table.rows[1].sTrigger).toBe(213);
    });

    it("names the missing column", () => {
        const broken = SAMPLE.replace("coincidences,", "");
        expect(() => parseScanCsv(broken)).toThrowError(CsvError);
        expect(() => parseScanCsv(broken)).toThrowError(/coincidences/);
    });

    it("rejects an empty scan", () => {
        const empty = SAMPLE.split("\n").slice(0, 4).join("\n");
        expect(() => parseScanCsv(empty)).toThrowError(/no data rows/);
    });

    it("rejects garbage numbers with a line reference", () => {
        const bad = SAMPLE + "\n781.0,2.0,true,oops,1,1,0,0,0";
        expect(() => parseScanCsv(bad)).toThrowError(/line 7/);
    });

    it("tolerates column reordering", () => {
        const reordered = [
            "gated,slit_center_nm,window_nm,s_trigger,s_signal," +
            "coincidences,accidentals,efficiency,brightness",
            "true,801.0,2.0,10,20,5,0.1,0.5,100.0",
        ].join("\n");
        const table = parseScanCsv(reordered);
        expect(table.rows[0].slitCenterNm).toBe(801.0);
        expect(table.rows[0].gated).toBe(true);
        expect(table.rows[0].coincidences).toBe(5);
    });
});
