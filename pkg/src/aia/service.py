"""HTTP telemetry and command service.

Read endpoints reflect live runtime state; command endpoints only enqueue.
Operator actions are drained by the runtime at the next fast tick boundary,
so the HTTP threads never touch world or estimator state directly.

  GET  /api/state          current vehicle state summary
  GET  /api/map            grid summary, obstacle records, geofence, route
  GET  /api/plan/pending   the stage-1 plan awaiting review, if any
  GET  /api/context        the four-channel context snapshot
  GET  /api/events         server-sent event stream of MissionLog events
  POST /api/plan/decision  {plan_id, verdict: Approve|Reject, note}
  POST /api/estop          enqueue an emergency stop
  POST /api/rth            enqueue return-to-home
"""

from __future__ import annotations

import json
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from aia.mission import MissionRuntime, OperatorDecision, PlanGate


class BindError(RuntimeError):
    pass


_SSE_QUEUE_LIMIT = 4096


class TelemetryService:
    def __init__(self, host: str = "127.0.0.1", port: int = 8765,
                 gate: PlanGate | None = None):
        self.gate = gate if gate is not None else PlanGate(auto_approve=False)
        self.runtime: MissionRuntime | None = None
        self._clients: list[queue.Queue] = []
        self._clients_lock = threading.Lock()
        try:
            self._server = ThreadingHTTPServer((host, port), _handler_for(self))
        except OSError as exc:
            raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
        self._server.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        host, port = self._server.server_address[:2]
        return str(host), int(port)

    def start(self) -> "TelemetryService":
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="aia-telemetry", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def attach_log(self, log) -> None:
        log.subscribe(self._broadcast)

    def attach_runtime(self, runtime: MissionRuntime) -> None:
        self.runtime = runtime
        runtime.plan_gate = self.gate

    # -- SSE plumbing ---------------------------------------------------------

    def _register_client(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=_SSE_QUEUE_LIMIT)
        with self._clients_lock:
            self._clients.append(q)
        return q

    def _drop_client(self, q: queue.Queue) -> None:
        with self._clients_lock:
            if q in self._clients:
                self._clients.remove(q)

    def _broadcast(self, event: dict) -> None:
        with self._clients_lock:
            clients = list(self._clients)
        for q in clients:
            try:
                q.put_nowait(event)
            except queue.Full:
                pass


def _plan_payload(gate: PlanGate) -> dict:
    plan = gate.pending
    if plan is None:
        return {"pending": None}
    return {"pending": {
        "plan_id": plan.plan_id,
        "status": plan.status,
        "objectives": plan.objectives,
        "preparation": plan.preparation,
        "planning_items": plan.planning_items,
        "waypoints": [list(w) for w in plan.waypoints],
        "raw_text": plan.raw_text,
    }}


def _handler_for(service: TelemetryService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass

        def _json(self, payload, status: int = 200) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            path = self.path.split("?", 1)[0]
            runtime = service.runtime
            if path == "/api/state":
                if runtime is None:
                    self._json({"status": "stage1", "mode": None})
                else:
                    self._json(runtime.state_snapshot())
            elif path == "/api/map":
                if runtime is None:
                    self._json({"error": "no active runtime"}, 503)
                else:
                    self._json(runtime.map_snapshot())
            elif path == "/api/plan/pending":
                self._json(_plan_payload(service.gate))
            elif path == "/api/context":
                if runtime is None:
                    self._json({})
                else:
                    self._json(runtime.context_snapshot())
            elif path == "/api/events":
                self._serve_events()
            else:
                self._json({"error": f"unknown path {path}"}, 404)

        def _serve_events(self):
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            q = service._register_client()
            try:
                while True:
                    try:
                        event = q.get(timeout=2.0)
                        data = json.dumps(event)
                        self.wfile.write(f"data: {data}\n\n".encode("utf-8"))
                    except queue.Empty:
                        # Comment line keeps the connection alive and lets a
                        # dead socket fail fast.
                        self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            finally:
                service._drop_client(q)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length == 0:
                return {}
            raw = self.rfile.read(length)
            try:
                doc = json.loads(raw.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                return {}
            return doc if isinstance(doc, dict) else {}

        def do_POST(self):
            path = self.path.split("?", 1)[0]
            body = self._read_body()
            runtime = service.runtime
            if path == "/api/plan/decision":
                verdict = body.get("verdict")
                if verdict not in ("Approve", "Reject"):
                    self._json({"error": "verdict must be Approve or Reject"}, 400)
                    return
                decision = OperatorDecision(
                    plan_id=int(body.get("plan_id", -1)),
                    verdict=verdict,
                    note=str(body.get("note", "")))
                accepted = service.gate.submit(decision)
                self._json({"accepted": accepted},
                           200 if accepted else 409)
            elif path == "/api/estop":
                if runtime is None:
                    self._json({"error": "no active runtime"}, 503)
                else:
                    runtime.enqueue_command("estop")
                    self._json({"queued": True})
            elif path == "/api/rth":
                if runtime is None:
                    self._json({"error": "no active runtime"}, 503)
                else:
                    runtime.enqueue_command("rth")
                    self._json({"queued": True})
            else:
                self._json({"error": f"unknown path {path}"}, 404)

    return Handler


def serve_telemetry(bind: str = "127.0.0.1:8765",
                    gate: PlanGate | None = None) -> TelemetryService:
    """Bind and start the service; raises BindError when the port is taken."""
    host, _, port_s = bind.partition(":")
    port = int(port_s) if port_s else 8765
    return TelemetryService(host or "127.0.0.1", port, gate).start()
