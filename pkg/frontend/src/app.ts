// Browser client: draw interactions, stream steering results, execute plans.
import { decimate, distinctPoints, parseMaze, ViewTransform } from "./geometry";
import { applyBatch, applySnapshot, drawScene, emptyScene, Scene } from "./render";
import {
  ClientMessage,
  ClientMsg,
  GuidanceConfig,
  Interaction,
  ServerMessage,
} from "./schema";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function main() {
  const mazeText = await (await fetch("/map")).text();
  const maze = parseMaze(mazeText);
  const goals = (await (await fetch("/goals")).json()) as {
    center: [number, number];
    radius: number;
  }[];

  const canvas = el<HTMLCanvasElement>("scene");
  const ctx = canvas.getContext("2d")!;
  const view = new ViewTransform(
    maze.width * maze.cellSize,
    maze.height * maze.cellSize,
    canvas.width,
    canvas.height,
  );

  let scene: Scene = { ...emptyScene(maze), goals };
  const redraw = () => drawScene(ctx, scene, view);
  redraw();

  const toast = el<HTMLDivElement>("toast");
  const showError = (text: string) => {
    toast.textContent = text;
    toast.style.opacity = "1";
    setTimeout(() => (toast.style.opacity = "0"), 4000);
  };

  const ws = new WebSocket(`ws://${location.host}/ws`);
  let counter = 0;
  const send = (msg: ClientMsg) => {
    ClientMessage.parse(msg); // never ship a malformed frame
    ws.send(JSON.stringify(msg));
  };
  const nextId = () => `ui-${counter++}`;

  const readConfig = (): GuidanceConfig => ({
    method: el<HTMLSelectElement>("method").value as GuidanceConfig["method"],
    beta: parseFloat(el<HTMLInputElement>("beta").value),
    cutoff_step: parseInt(el<HTMLInputElement>("cutoff").value, 10),
    mcmc_steps: parseInt(el<HTMLInputElement>("mcmc").value, 10),
    batch: parseInt(el<HTMLInputElement>("batch").value, 10),
    seed: parseInt(el<HTMLInputElement>("seed").value, 10),
  });

  const sendSteer = (interaction: Interaction) => {
    const config = readConfig();
    if (interaction.kind === "nudge") config.method = "op";
    scene = { ...scene, interaction };
    redraw();
    send({ id: nextId(), type: "steer", interaction, config });
  };

  // pointer handling: click = point, drag = sketch, drag-from-agent = nudge
  let stroke: [number, number][] | null = null;
  let nudging = false;
  canvas.addEventListener("pointerdown", (ev) => {
    const ws_pt = view.toWs([ev.offsetX, ev.offsetY]);
    stroke = [ws_pt];
    nudging = false;
    if (scene.agent) {
      const [ax, ay] = view.toPx(scene.agent);
      nudging = Math.hypot(ev.offsetX - ax, ev.offsetY - ay) < 12;
    }
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!stroke) return;
    stroke.push(view.toWs([ev.offsetX, ev.offsetY]));
  });
  canvas.addEventListener("pointerup", () => {
    if (!stroke) return;
    const pts = decimate(stroke, 256);
    stroke = null;
    if (nudging && pts.length >= 1) {
      send({ id: nextId(), type: "nudge_live", prefix: pts });
      scene = { ...scene, interaction: { kind: "nudge", prefix: pts } };
      redraw();
      return;
    }
    if (distinctPoints(pts) < 2) {
      sendSteer({ kind: "point", z: pts[0] });
    } else {
      sendSteer({ kind: "sketch", points: pts });
    }
  });

  el<HTMLButtonElement>("execute").addEventListener("click", () => {
    const index = scene.ranking.length ? scene.ranking[0] : 0;
    scene = { ...scene, trail: [] };
    send({ id: nextId(), type: "execute", index });
  });
  el<HTMLButtonElement>("reset").addEventListener("click", () => {
    scene = { ...emptyScene(maze), goals };
    redraw();
    send({
      id: nextId(),
      type: "reset",
      seed: parseInt(el<HTMLInputElement>("seed").value, 10),
    });
  });

  const costOut = el<HTMLSpanElement>("best-cost");
  const collOut = el<HTMLSpanElement>("collision-frac");

  ws.onmessage = (ev) => {
    const msg = ServerMessage.parse(JSON.parse(ev.data));
    if (msg.type === "snapshot") {
      scene = applySnapshot(scene, msg);
    } else if (msg.type === "batch") {
      scene = applyBatch(scene, msg);
      const best = Math.min(...msg.costs);
      costOut.textContent = Number.isFinite(best) ? best.toFixed(3) : "-";
      const frac = msg.collisions.filter(Boolean).length / msg.collisions.length;
      collOut.textContent = frac.toFixed(2);
    } else if (msg.type === "tick") {
      scene = { ...scene, agent: msg.state, trail: [...scene.trail, msg.state] };
    } else {
      showError(`${msg.code}: ${msg.detail}`);
    }
    redraw();
  };
  ws.onclose = () => showError("connection closed");
}

main().catch((e) => console.error(e));
