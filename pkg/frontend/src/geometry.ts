// Workspace <-> pixel transforms, maze parsing, and stroke decimation.

export interface Maze {
  cellSize: number;
  width: number; // cells
  height: number;
  occupancy: boolean[][]; // [row][col], row 0 at top
}

export function parseMaze(text: string): Maze {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (!lines[0].startsWith("cell_size=")) {
    throw new Error("maze asset must start with cell_size=");
  }
  const cellSize = parseFloat(lines[0].split("=")[1]);
  const rows = lines.slice(1);
  const occupancy = rows.map((r) => [...r].map((ch) => ch === "#"));
  return { cellSize, width: rows[0].length, height: rows.length, occupancy };
}

/** Affine, invertible map between workspace and canvas pixels (y down). */
export class ViewTransform {
  readonly scale: number;
  readonly ox: number;
  readonly oy: number;

  constructor(
    readonly wsWidth: number,
    readonly wsHeight: number,
    readonly pxWidth: number,
    readonly pxHeight: number,
    margin = 10,
  ) {
    this.scale = Math.min(
      (pxWidth - 2 * margin) / wsWidth,
      (pxHeight - 2 * margin) / wsHeight,
    );
    this.ox = (pxWidth - wsWidth * this.scale) / 2;
    this.oy = (pxHeight - wsHeight * this.scale) / 2;
  }

  toPx([x, y]: [number, number]): [number, number] {
    return [this.ox + x * this.scale, this.oy + y * this.scale];
  }

  toWs([px, py]: [number, number]): [number, number] {
    return [(px - this.ox) / this.scale, (py - this.oy) / this.scale];
  }
}

/** Uniform arc-length subset of a stroke, endpoints preserved, <= maxPoints. */
export function decimate(
  points: [number, number][],
  maxPoints = 256,
): [number, number][] {
  if (points.length <= maxPoints) return points.slice();
  const arcs = [0];
  for (let i = 1; i < points.length; i++) {
    const dx = points[i][0] - points[i - 1][0];
    const dy = points[i][1] - points[i - 1][1];
    arcs.push(arcs[i - 1] + Math.hypot(dx, dy));
  }
  const total = arcs[arcs.length - 1];
  const picked: number[] = [];
  let cursor = 0;
  for (let k = 0; k < maxPoints; k++) {
    const target = (total * k) / (maxPoints - 1);
    while (cursor < arcs.length - 1 && Math.abs(arcs[cursor + 1] - target) <= Math.abs(arcs[cursor] - target)) {
      cursor++;
    }
    if (picked[picked.length - 1] !== cursor) picked.push(cursor);
  }
  if (picked[picked.length - 1] !== points.length - 1) picked.push(points.length - 1);
  return picked.map((i) => points[i]);
}

/** Distinct-point count used to reject degenerate strokes. */
export function distinctPoints(points: [number, number][]): number {
  const seen = new Set(points.map((p) => `${p[0]},${p[1]}`));
  return seen.size;
}
