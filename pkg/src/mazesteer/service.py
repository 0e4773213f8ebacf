"""Live steering service: WebSocket protocol over a frozen policy.

One session per WebSocket connection. Requests within a session are
serialized; a new steer request cancels the one in flight. Sampling runs off
the event loop and is abandoned at the next inference-step boundary after
cancellation. Message schema (JSON text frames):

  client -> server:
    {"id", "type": "steer", "interaction": {...}, "config": {...}}
    {"id", "type": "execute", "index": k}
    {"id", "type": "nudge_live", "prefix": [[x, y], ...]}
    {"id", "type": "reset", "state": [x, y], "seed": s}
  server -> client:
    {"id", "type": "snapshot", "step": i, "trajectories": [...]}
    {"id", "type": "batch", "trajectories": [...], "costs": [...],
     "collisions": [...], "ranking": [...], "executed_index": k}
    {"id", "type": "tick", "state": [x, y], "t": n, "collision": b}
    {"id", "type": "error", "code": str, "detail": str}
"""

from __future__ import annotations

import asyncio
import hashlib
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse

from . import diffusion as df
from . import maze as mz
from . import steering as sg
from .objectives import AlignmentObjective, InteractionInput, Nudge, interaction_from_json

FRONTEND_DIST = Path(__file__).resolve().parents[2] / "frontend" / "dist"


@dataclass
class Session:
    state: np.ndarray
    seed: int = 0
    counter: int = 0
    last_interaction: dict | None = None
    last_batch: sg.SteeredBatch | None = None
    steer_task: asyncio.Task | None = None
    exec_task: asyncio.Task | None = None
    cancel_flag: threading.Event = field(default_factory=threading.Event)
    cursor: int = 0

    def next_seed(self) -> int:
        s = self.seed + self.counter
        self.counter += 1
        return s


def _default_state(maze: mz.MazeMap) -> np.ndarray:
    if maze.name == "threegoals":
        return mz.BRANCH_STATE.copy()
    free = maze.free_cells()
    r, c = free[len(free) // 2]
    return maze.cell_center(r, c)


def _in_workspace(pts: np.ndarray, maze: mz.MazeMap) -> bool:
    lo, hi = maze.bounds
    pts = np.atleast_2d(pts)
    return bool((pts >= lo).all() and (pts <= hi).all())


def create_app(
    policy,
    maze: mz.MazeMap,
    goals: list[mz.GoalRegion] | None = None,
    tick_hz: float = 7.0,
    ckpt_hash: str = "",
    default_batch: int = 32,
) -> FastAPI:
    app = FastAPI(title="mazesteer service")
    maze_text = mz.dump_maze_text(maze)

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "build": "mazesteer-0.1.0",
            "checkpoint": ckpt_hash,
            "map_id": maze.name,
            "horizon": policy.horizon,
            "inference_steps": len(policy.schedule.inference_steps),
            "tick_hz": tick_hz,
        }

    @app.get("/map")
    def get_map():
        return PlainTextResponse(maze_text)

    @app.get("/goals")
    def get_goals():
        if goals is None:
            return JSONResponse([])
        return JSONResponse(
            [{"center": g.center.tolist(), "radius": g.radius} for g in goals]
        )

    @app.get("/")
    def index():
        page = FRONTEND_DIST / "index.html"
        if page.exists():
            return FileResponse(page)
        return PlainTextResponse("mazesteer service (frontend not built)")

    @app.get("/app.js")
    def app_js():
        bundle = FRONTEND_DIST / "app.js"
        if bundle.exists():
            return FileResponse(bundle, media_type="text/javascript")
        return PlainTextResponse("// frontend not built", media_type="text/javascript")

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session = Session(state=_default_state(maze))
        out_q: asyncio.Queue = asyncio.Queue()
        loop = asyncio.get_running_loop()

        async def sender():
            while True:
                msg = await out_q.get()
                await ws.send_json(msg)

        send_task = asyncio.create_task(sender())

        def emit(msg: dict):
            out_q.put_nowait(msg)

        def emit_threadsafe(msg: dict):
            loop.call_soon_threadsafe(out_q.put_nowait, msg)

        async def cancel_steer():
            if session.steer_task and not session.steer_task.done():
                session.cancel_flag.set()
                await session.steer_task

        async def cancel_exec():
            if session.exec_task and not session.exec_task.done():
                session.exec_task.cancel()
                try:
                    await session.exec_task
                except asyncio.CancelledError:
                    pass

        def batch_message(req_id, batch: sg.SteeredBatch) -> dict:
            return {
                "id": req_id,
                "type": "batch",
                "trajectories": np.nan_to_num(batch.trajectories).tolist(),
                "costs": [c if np.isfinite(c) else 1e30 for c in batch.costs.tolist()],
                "collisions": [bool(c) for c in batch.collisions],
                "ranking": batch.ranking.tolist(),
                "executed_index": batch.executed_index,
            }

        def run_steer_blocking(req_id, interaction, cfg, cancel_flag) -> sg.SteeredBatch:
            def snapshot(k, i, x_norm):
                trajs = policy.normalizer.denormalize(
                    x_norm.reshape(cfg.batch, policy.horizon, policy.state_dim)
                )
                emit_threadsafe(
                    {
                        "id": req_id,
                        "type": "snapshot",
                        "step": int(i),
                        "trajectories": trajs.tolist(),
                    }
                )

            return sg.steer(
                policy,
                session.state,
                interaction,
                cfg,
                maze=maze,
                snapshot_cb=snapshot,
                cancel_cb=cancel_flag.is_set,
            )

        async def do_steer(req_id, payload):
            try:
                interaction = interaction_from_json(payload.get("interaction", {}))
            except (ValueError, KeyError, TypeError) as e:
                emit({"id": req_id, "type": "error", "code": "bad_interaction", "detail": str(e)})
                return
            pts = (
                interaction.prefix
                if isinstance(interaction, Nudge)
                else interaction.points
                if hasattr(interaction, "points")
                else interaction.z
            )
            if not _in_workspace(pts, maze):
                emit(
                    {
                        "id": req_id,
                        "type": "error",
                        "code": "out_of_bounds",
                        "detail": "interaction coordinates outside the workspace",
                    }
                )
                return
            cfg_doc = dict(payload.get("config", {}))
            cfg_doc.setdefault("batch", default_batch)
            if "seed" not in cfg_doc:
                cfg_doc["seed"] = session.next_seed()
            try:
                cfg = sg.GuidanceConfig.from_json(cfg_doc)
                if isinstance(interaction, Nudge) != (cfg.method == "op"):
                    raise ValueError("nudge requires op")
                steer_input: InteractionInput | AlignmentObjective = interaction
                if not isinstance(interaction, Nudge):
                    steer_input = AlignmentObjective.create(interaction, policy.horizon)
            except ValueError as e:
                emit({"id": req_id, "type": "error", "code": "bad_config", "detail": str(e)})
                return
            session.cancel_flag = threading.Event()
            session.last_interaction = payload.get("interaction")
            try:
                batch = await asyncio.to_thread(
                    run_steer_blocking, req_id, steer_input, cfg, session.cancel_flag
                )
            except df.ChainCancelled:
                emit({"id": req_id, "type": "error", "code": "cancelled",
                      "detail": "superseded by a newer request"})
                return
            except Exception as e:  # sampler divergence and friends
                emit({"id": req_id, "type": "error", "code": "sampler_error", "detail": str(e)})
                return
            session.last_batch = batch
            emit(batch_message(req_id, batch))

        async def do_execute(req_id, payload, start_t: int = 0):
            batch = session.last_batch
            index = payload.get("index", 0)
            if batch is None:
                emit({"id": req_id, "type": "error", "code": "no_batch",
                      "detail": "steer before execute"})
                return
            if not isinstance(index, int) or not (0 <= index < len(batch.trajectories)):
                emit({"id": req_id, "type": "error", "code": "bad_index",
                      "detail": f"index {index!r} out of range"})
                return
            traj = batch.trajectories[index]

            async def ticker():
                for t in range(start_t, len(traj)):
                    state = traj[t]
                    session.state = state
                    session.cursor = t
                    hit = bool(
                        maze.occupied_at(mz.clamp_to_workspace(state, maze))
                    )
                    emit(
                        {
                            "id": req_id,
                            "type": "tick",
                            "state": state.tolist(),
                            "t": t,
                            "collision": hit,
                        }
                    )
                    await asyncio.sleep(1.0 / tick_hz)

            session.exec_task = asyncio.create_task(ticker())

        async def do_nudge_live(req_id, payload):
            await cancel_exec()
            try:
                prefix = np.asarray(payload["prefix"], dtype=float)
                nudge = Nudge(prefix=prefix)
            except (KeyError, ValueError) as e:
                emit({"id": req_id, "type": "error", "code": "bad_interaction", "detail": str(e)})
                return
            if not _in_workspace(nudge.prefix, maze):
                emit({"id": req_id, "type": "error", "code": "out_of_bounds",
                      "detail": "nudge outside the workspace"})
                return
            cfg = sg.GuidanceConfig(
                method="op", batch=default_batch, seed=session.next_seed()
            )
            try:
                batch = await asyncio.to_thread(
                    sg.sample_op, policy, session.state, nudge, cfg, maze
                )
            except ValueError as e:
                emit({"id": req_id, "type": "error", "code": "bad_interaction", "detail": str(e)})
                return
            session.last_batch = batch
            session.state = nudge.prefix[-1].copy()
            emit(batch_message(req_id, batch))
            await do_execute(req_id, {"index": batch.executed_index},
                             start_t=min(nudge.prefix.shape[0], policy.horizon - 1))

        try:
            while True:
                payload = await ws.receive_json()
                req_id = payload.get("id")
                kind = payload.get("type")
                if kind == "steer":
                    await cancel_steer()
                    session.steer_task = asyncio.create_task(do_steer(req_id, payload))
                elif kind == "execute":
                    await cancel_exec()
                    await do_execute(req_id, payload)
                elif kind == "nudge_live":
                    await do_nudge_live(req_id, payload)
                elif kind == "reset":
                    await cancel_steer()
                    await cancel_exec()
                    state = payload.get("state")
                    if state is not None:
                        session.state = np.asarray(state, dtype=float)
                    session.seed = int(payload.get("seed", 0))
                    session.counter = 0
                    session.last_batch = None
                else:
                    emit({"id": req_id, "type": "error", "code": "bad_type",
                          "detail": f"unknown message type {kind!r}"})
        except WebSocketDisconnect:
            pass
        finally:
            session.cancel_flag.set()
            await cancel_exec()
            if session.steer_task and not session.steer_task.done():
                await session.steer_task
            send_task.cancel()

    return app


def serve(ckpt: str, host: str = "127.0.0.1", port: int = 8787, tick_hz: float = 7.0):
    import uvicorn

    policy, _meta = df.load_policy(ckpt)
    maze = mz.load_builtin_maze(policy.map_id)
    goals = mz.builtin_goals(maze.name) if maze.name == "threegoals" else None
    digest = hashlib.sha256(Path(ckpt).read_bytes()).hexdigest()[:16]
    app = create_app(policy, maze, goals=goals, tick_hz=tick_hz, ckpt_hash=digest)
    uvicorn.run(app, host=host, port=port)
