import { describe, expect, it } from "vitest";
import { decimate, distinctPoints, parseMaze, ViewTransform } from "../src/geometry";

const MAZE_TEXT = "cell_size=1.0\n#####\n#...#\n#.#.#\n#...#\n#####\n";

describe("parseMaze", () => {
  it("reads cell size and occupancy", () => {
    const m = parseMaze(MAZE_TEXT);
    expect(m.cellSize).toBe(1.0);
    expect(m.width).toBe(5);
    expect(m.height).toBe(5);
    expect(m.occupancy[0][0]).toBe(true);
    expect(m.occupancy[1][1]).toBe(false);
    expect(m.occupancy[2][2]).toBe(true);
  });

  it("rejects text without a header", () => {
    expect(() => parseMaze("#####\n")).toThrow();
  });
});

describe("ViewTransform", () => {
  it("round-trips pixels to workspace within half a pixel", () => {
    const view = new ViewTransform(12, 9, 720, 540, 10);
    for (let px = 8; px < 720; px += 37) {
      for (let py = 3; py < 540; py += 41) {
        const ws = view.toWs([px, py]);
        const [qx, qy] = view.toPx(ws);
        expect(Math.hypot(qx - px, qy - py)).toBeLessThan(0.5);
      }
    }
  });

  it("round-trips workspace to pixels and back exactly enough", () => {
    const view = new ViewTransform(12, 12, 720, 720);
    const pts: [number, number][] = [
      [0, 0],
      [12, 12],
      [3.25, 7.5],
      [11.999, 0.001],
    ];
    for (const p of pts) {
      const back = view.toWs(view.toPx(p));
      expect(Math.hypot(back[0] - p[0], back[1] - p[1])).toBeLessThan(1e-9);
    }
  });

  it("is aspect-preserving", () => {
    const view = new ViewTransform(10, 5, 400, 400);
    const [ax] = view.toPx([1, 0]);
    const [bx] = view.toPx([2, 0]);
    const [, ay] = view.toPx([0, 1]);
    const [, by] = view.toPx([0, 2]);
    expect(bx - ax).toBeCloseTo(by - ay, 10);
  });
});

describe("decimate", () => {
  const longStroke = (n: number): [number, number][] =>
    Array.from({ length: n }, (_, i) => [
      Math.cos(i / 40) * 5 + i * 0.01,
      Math.sin(i / 40) * 5,
    ]);

  it("keeps short strokes unchanged", () => {
    const pts = longStroke(100);
    expect(decimate(pts, 256)).toEqual(pts);
  });

  it("caps long strokes at the limit and preserves endpoints", () => {
    const pts = longStroke(900);
    const out = decimate(pts, 256);
    expect(out.length).toBeLessThanOrEqual(256);
    expect(out.length).toBeGreaterThan(100);
    expect(out[0]).toEqual(pts[0]);
    expect(out[out.length - 1]).toEqual(pts[pts.length - 1]);
  });

  it("returns a subset of the original points", () => {
    const pts = longStroke(500);
    const keys = new Set(pts.map((p) => p.join(",")));
    for (const p of decimate(pts, 64)) {
      expect(keys.has(p.join(","))).toBe(true);
    }
  });

  it("counts distinct points", () => {
    expect(
      distinctPoints([
        [1, 1],
        [1, 1],
        [2, 1],
      ]),
    ).toBe(2);
  });
});
