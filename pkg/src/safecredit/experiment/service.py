"""HTTP service exposing the label queue to a human annotator.

Four endpoints, JSON in and out:

- ``GET /queue``: segments currently selected for labeling (id, rendered path
  or state sequence, per-step summaries, the model's safe-probability and CV,
  status). Never includes ground-truth costs or the budget.
- ``GET /trajectory/{id}``: full per-step detail for one segment.
- ``POST /label`` with ``{"segment_id": int, "label": 0|1}``: idempotent in
  the sense that a second submission for the same segment gets 409.
- ``GET /status``: training iteration, multiplier, model accuracy, cumulative
  labeled count.

CORS headers are set so a browser UI served from another origin can talk to
it directly.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from safecredit.continual import FeedbackBuffer, QueuedSegment
from safecredit.errors import UsageError

FORBIDDEN_KEYS = ("true_cost", "budget", "cost")


def segment_payload(item: QueuedSegment, geometry: dict | None) -> dict:
    """Public view of a queued segment; reads nothing cost-related."""
    segment = item.segment
    obs = segment.observations
    payload = {
        "segment_id": item.segment_id,
        "t_start": segment.t_start,
        "t_end": segment.t_end,
        "length": len(segment),
        "phat": item.phat,
        "cv": item.cv,
        "status": item.status,
        "episode_id": segment.episode_id,
    }
    if geometry and "hazards" in geometry:
        payload["kind"] = "path"
        payload["path"] = [[float(x), float(y)] for x, y in obs[:, :2]]
    else:
        payload["kind"] = "states"
        payload["states"] = [int(i) for i in obs.argmax(axis=1)]
    payload["step_summary"] = [
        {"t": segment.t_start + i,
         "obs_mean": float(obs[i].mean()),
         "obs_max": float(obs[i].max()),
         "action": [float(a) for a in segment.actions[i]]}
        for i in range(len(segment))
    ]
    if item.scores is not None:
        payload["scores"] = [float(s) for s in item.scores]
    return payload


class LabelService:
    """Serves a FeedbackBuffer next to a training loop.

    ``status_fn`` returns a dict snapshot of live training state; the buffer
    provides its own counters. The server thread is a daemon; ``stop()`` shuts
    it down cleanly.
    """

    def __init__(self, buffer: FeedbackBuffer, status_fn=None,
                 geometry: dict | None = None, host: str = "127.0.0.1",
                 port: int = 0):
        self.buffer = buffer
        self.status_fn = status_fn or (lambda: {})
        self.geometry = geometry or {}
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep pytest output clean
                pass

            def _send(self, code: int, body: dict):
                data = json.dumps(body).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.end_headers()
                self.wfile.write(data)

            def do_OPTIONS(self):
                self._send(200, {})

            def do_GET(self):
                if self.path == "/queue":
                    items = [segment_payload(item, service.geometry)
                             for item in service.buffer.selected()]
                    self._send(200, {"items": items,
                                     "geometry": service.geometry})
                elif self.path.startswith("/trajectory/"):
                    raw = self.path[len("/trajectory/"):]
                    try:
                        segment_id = int(raw)
                    except ValueError:
                        self._send(400, {"error": f"bad segment id '{raw}'"})
                        return
                    item = service._find(segment_id)
                    if item is None:
                        self._send(404, {"error": f"unknown segment {segment_id}"})
                        return
                    body = segment_payload(item, service.geometry)
                    body["rewards"] = [float(r) for r in item.segment.rewards]
                    self._send(200, body)
                elif self.path == "/status":
                    body = dict(service.status_fn())
                    body.update(service.buffer.counts())
                    self._send(200, body)
                else:
                    self._send(404, {"error": f"no such endpoint {self.path}"})

            def do_POST(self):
                if self.path != "/label":
                    self._send(404, {"error": f"no such endpoint {self.path}"})
                    return
                length = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    self._send(400, {"error": "body is not valid JSON"})
                    return
                segment_id = body.get("segment_id")
                label = body.get("label")
                if not isinstance(segment_id, int) or label not in (0, 1):
                    self._send(400, {"error": "need integer segment_id and "
                                              "label in {0, 1}"})
                    return
                try:
                    service.buffer.apply_label(segment_id, label,
                                               provenance="human")
                except KeyError:
                    self._send(404, {"error": f"unknown segment {segment_id}"})
                    return
                except UsageError as error:
                    self._send(409, {"error": str(error)})
                    return
                self._send(200, {"status": "ok", "segment_id": segment_id})

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "LabelService":
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self._server.server_close()

    def _find(self, segment_id: int):
        with self.buffer._lock:
            return self.buffer._queue.get(segment_id)
