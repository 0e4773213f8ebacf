"""Launch the live steering service and drive it from a script.

For the interactive browser client, build the frontend once and serve:

    cd frontend && npm install && npm run build
    mazesteer serve --ckpt checkpoints/dp_corridors.ckpt --port 8787
    # then open http://127.0.0.1:8787/

This script instead talks to the WebSocket protocol directly (the same wire
format the browser uses), using the in-process test transport.
"""

from pathlib import Path

from starlette.testclient import TestClient

from mazesteer import diffusion as df
from mazesteer import maze as mz
from mazesteer import service as sv

ckpt = Path(__file__).resolve().parents[1] / "checkpoints" / "dp_corridors.ckpt"
if not ckpt.exists():
    raise SystemExit("run scripts/build_checkpoints.py first (or `mazesteer train`)")
policy, _ = df.load_policy(ckpt)
maze = mz.load_builtin_maze(policy.map_id)
app = sv.create_app(policy, maze, tick_hz=60.0, default_batch=16)

with TestClient(app) as client:
    print("health:", client.get("/health").json())
    with client.websocket_connect("/ws") as ws:
        ws.send_json({"id": "r0", "type": "reset", "state": [1.5, 1.5], "seed": 5})
        ws.send_json(
            {
                "id": "r1",
                "type": "steer",
                "interaction": {"kind": "point", "z": [10.5, 10.5]},
                "config": {"method": "ss", "beta": 60, "cutoff_step": 0,
                           "mcmc_steps": 4, "batch": 16},
            }
        )
        snapshots = 0
        while True:
            msg = ws.receive_json()
            if msg["type"] == "snapshot":
                snapshots += 1
            elif msg["type"] == "batch":
                print(f"{snapshots} denoising snapshots, then a batch of "
                      f"{len(msg['trajectories'])} "
                      f"(best cost {min(msg['costs']):.2f}, "
                      f"{sum(msg['collisions'])} collisions)")
                break
        ws.send_json({"id": "r2", "type": "execute", "index": msg["ranking"][0]})
        for _ in range(5):
            tick = ws.receive_json()
            print("tick", tick["t"], "state", [round(v, 2) for v in tick["state"]])
