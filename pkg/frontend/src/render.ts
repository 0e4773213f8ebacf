// Canvas rendering: maze raster, time-gradient batch polylines, overlays.
import { Maze, ViewTransform } from "./geometry";
import type { Interaction, ServerMsg } from "./schema";

export interface Scene {
  maze: Maze;
  goals: { center: [number, number]; radius: number }[];
  trajectories: [number, number][][];
  costs: number[];
  collisions: boolean[];
  ranking: number[];
  preview: boolean; // snapshot frame (denoising still running)
  interaction: Interaction | null;
  agent: [number, number] | null;
  trail: [number, number][];
}

export function emptyScene(maze: Maze): Scene {
  return {
    maze,
    goals: [],
    trajectories: [],
    costs: [],
    collisions: [],
    ranking: [],
    preview: false,
    interaction: null,
    agent: null,
    trail: [],
  };
}

/** Blue (start) to red (end) over trajectory time; collisions tint white. */
export function timeColor(frac: number, collided: boolean, preview: boolean): string {
  const r = Math.round(40 + 200 * frac);
  const g = 60;
  const b = Math.round(240 - 200 * frac);
  const mix = collided ? 0.65 : 0;
  const alpha = preview ? 0.35 : 0.9;
  const mr = Math.round(r + (255 - r) * mix);
  const mg = Math.round(g + (255 - g) * mix);
  const mb = Math.round(b + (255 - b) * mix);
  return `rgba(${mr},${mg},${mb},${alpha})`;
}

/** Stroke width is monotone in rank: best sample drawn thickest. */
export function rankWidth(rankPos: number, batch: number): number {
  if (batch <= 1) return 3.5;
  return 1 + 2.5 * (1 - rankPos / (batch - 1));
}

export function drawScene(ctx: CanvasRenderingContext2D, scene: Scene, view: ViewTransform) {
  const { maze } = scene;
  ctx.fillStyle = "#16161e";
  ctx.fillRect(0, 0, view.pxWidth, view.pxHeight);
  const cellPx = maze.cellSize * view.scale;
  for (let r = 0; r < maze.height; r++) {
    for (let c = 0; c < maze.width; c++) {
      const [px, py] = view.toPx([c * maze.cellSize, r * maze.cellSize]);
      ctx.fillStyle = maze.occupancy[r][c] ? "#3b3b4f" : "#e8e8ef";
      ctx.fillRect(px, py, cellPx + 0.5, cellPx + 0.5);
    }
  }
  for (const g of scene.goals) {
    const [px, py] = view.toPx(g.center);
    ctx.beginPath();
    ctx.arc(px, py, g.radius * view.scale, 0, 2 * Math.PI);
    ctx.strokeStyle = "#2a9d4e";
    ctx.lineWidth = 2;
    ctx.stroke();
  }

  const rankPos: number[] = [];
  scene.ranking.forEach((member, pos) => (rankPos[member] = pos));
  scene.trajectories.forEach((traj, member) => {
    const collided = scene.collisions[member] ?? false;
    const width = scene.preview ? 1 : rankWidth(rankPos[member] ?? member, scene.trajectories.length);
    for (let t = 1; t < traj.length; t++) {
      ctx.beginPath();
      const [ax, ay] = view.toPx(traj[t - 1]);
      const [bx, by] = view.toPx(traj[t]);
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
      ctx.strokeStyle = timeColor(t / (traj.length - 1), collided, scene.preview);
      ctx.lineWidth = width;
      ctx.stroke();
    }
  });

  if (scene.interaction) {
    ctx.lineWidth = 3;
    if (scene.interaction.kind === "point") {
      const [px, py] = view.toPx(scene.interaction.z);
      ctx.strokeStyle = "#111";
      ctx.beginPath();
      ctx.arc(px, py, 7, 0, 2 * Math.PI);
      ctx.moveTo(px - 11, py);
      ctx.lineTo(px + 11, py);
      ctx.moveTo(px, py - 11);
      ctx.lineTo(px, py + 11);
      ctx.stroke();
    } else {
      const pts = scene.interaction.kind === "sketch" ? scene.interaction.points : scene.interaction.prefix;
      ctx.strokeStyle = scene.interaction.kind === "sketch" ? "#777" : "#e76f1a";
      ctx.beginPath();
      pts.forEach((p, i) => {
        const [px, py] = view.toPx(p);
        if (i === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      });
      ctx.stroke();
    }
  }

  if (scene.trail.length > 1) {
    ctx.strokeStyle = "#222";
    ctx.lineWidth = 2;
    ctx.beginPath();
    scene.trail.forEach((p, i) => {
      const [px, py] = view.toPx(p);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
  if (scene.agent) {
    const [px, py] = view.toPx(scene.agent);
    ctx.fillStyle = "#e76f1a";
    ctx.beginPath();
    ctx.arc(px, py, 6, 0, 2 * Math.PI);
    ctx.fill();
    ctx.strokeStyle = "#111";
    ctx.lineWidth = 1.5;
    ctx.stroke();
  }
}

export function applyBatch(scene: Scene, msg: Extract<ServerMsg, { type: "batch" }>): Scene {
  return {
    ...scene,
    trajectories: msg.trajectories as [number, number][][],
    costs: msg.costs,
    collisions: msg.collisions,
    ranking: msg.ranking,
    preview: false,
  };
}

export function applySnapshot(scene: Scene, msg: Extract<ServerMsg, { type: "snapshot" }>): Scene {
  return {
    ...scene,
    trajectories: msg.trajectories as [number, number][][],
    costs: [],
    collisions: [],
    ranking: [],
    preview: true,
  };
}
