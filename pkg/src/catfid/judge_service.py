"""Blinded human-judging sessions over HTTP.

Humans act as the distinguisher family: a session serves the shuffled
union of an original and a generated sample set, collects
original/generated calls, and on close reveals provenance together with
the empirical gap. The only persistence is an append-only JSON-lines
event log; session state is a pure fold over it, so a restart replays to
exactly the state that was acknowledged.

Pre-close responses never carry provenance. Verdicts are idempotent per
(session, judge, item): the first write wins.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .core import (
    Distinguisher,
    DistinguisherFamily,
    DeltaReport,
    Sample,
    SampleSet,
    ScoringFunction,
    delta as core_delta,
)
from .errors import (
    DataError,
    EmptyInput,
    IncompleteJudging,
    SessionClosed,
    UnknownItem,
    UnknownSession,
    UnrenderableCodec,
)
from .harness import sample_from_dict, sample_to_dict

RENDERABLE_CODECS = ("utf8-text", "symbol-sequence")
CALLS = ("original", "generated")

DEFAULT_CONFIG = {
    "items_per_judge": None,  # None = every judge sees all items
    "allow_repeat_judges": True,
    "epsilon": 0.5,
}


@dataclass
class SessionState:
    session_id: str
    items: list[dict]  # {item_id, sample(dict), provenance} in shuffled order
    config: dict
    seed: int
    open: bool = True
    # (judge_id, item_id) -> call, insertion-ordered
    verdicts: dict[tuple[str, str], str] = field(default_factory=dict)
    result: dict | None = None

    def __post_init__(self):
        self.item_id_set = {it["item_id"] for it in self.items}
        self._by_judge: dict[str, set[str]] = {}
        for judge_id, item_id in self.verdicts:
            self._by_judge.setdefault(judge_id, set()).add(item_id)

    def record(self, judge_id: str, item_id: str, call: str):
        self.verdicts[(judge_id, item_id)] = call
        self._by_judge.setdefault(judge_id, set()).add(item_id)

    def answered_by(self, judge_id: str) -> set[str]:
        return self._by_judge.get(judge_id, set())


class JudgeService:
    """Event-sourced session store. Thread-safe; appends are serialized and
    acknowledged only after the log write is durable."""

    def __init__(self, log_path):
        self.log_path = Path(log_path)
        self._lock = threading.RLock()
        self._seq = 0
        self.sessions: dict[str, SessionState] = {}
        if self.log_path.exists():
            self._replay()
        self._log = open(self.log_path, "a", encoding="utf-8")

    def close(self):
        self._log.close()

    # --- event machinery ---

    def _replay(self):
        with open(self.log_path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                self._apply(event)
                self._seq = max(self._seq, event["seq"])

    def _append(self, kind: str, data: dict) -> dict:
        event = {
            "seq": self._seq + 1,
            "kind": kind,
            "data": data,
            "ts": datetime.now(timezone.utc).isoformat(),
        }
        self._log.write(json.dumps(event, sort_keys=True) + "\n")
        self._log.flush()
        os.fsync(self._log.fileno())
        self._seq = event["seq"]
        self._apply(event)
        return event

    def _apply(self, event: dict):
        kind, data = event["kind"], event["data"]
        if kind == "created":
            state = SessionState(
                session_id=data["session_id"],
                items=data["items"],
                config=data["config"],
                seed=data["seed"],
            )
            self.sessions[state.session_id] = state
        elif kind == "verdict":
            state = self.sessions[data["session_id"]]
            if (data["judge_id"], data["item_id"]) not in state.verdicts:
                state.record(data["judge_id"], data["item_id"], data["call"])
        elif kind == "closed":
            state = self.sessions[data["session_id"]]
            state.open = False
            state.result = data["result"]
        else:  # pragma: no cover - log written only by this module
            raise DataError(f"unknown event kind {kind!r}")

    # --- operations ---

    def create_session(
        self,
        original: SampleSet,
        generated: SampleSet,
        config: dict | None = None,
        seed: int = 0,
    ) -> str:
        merged = dict(DEFAULT_CONFIG)
        merged.update(config or {})
        unknown = set(merged) - set(DEFAULT_CONFIG)
        if unknown:
            raise DataError(f"unknown session config keys {sorted(unknown)}")
        for s in list(original) + list(generated):
            if s.codec not in RENDERABLE_CODECS:
                raise UnrenderableCodec(f"codec {s.codec!r} cannot be shown to judges")

        pool = [(x, "original") for x in original] + [(x, "generated") for x in generated]
        order = list(range(len(pool)))
        random.Random(seed).shuffle(order)
        items = []
        for pos, source in enumerate(order):
            sample, provenance = pool[source]
            items.append(
                {
                    "item_id": f"i{pos:04d}",
                    "sample": sample_to_dict(sample),
                    "provenance": provenance,
                }
            )
        with self._lock:
            digest = hashlib.sha256(
                json.dumps([seed, [it["sample"]["id"] for it in items]]).encode()
            ).hexdigest()[:8]
            session_id = f"s{self._seq + 1:06d}-{digest}"
            self._append(
                "created",
                {"session_id": session_id, "seed": seed, "config": merged, "items": items},
            )
        return session_id

    def _session(self, session_id: str) -> SessionState:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise UnknownSession(session_id) from None

    def next_item(self, session_id: str, judge_id: str) -> dict | None:
        """The judge's next unanswered item in shuffled order, or None."""
        with self._lock:
            state = self._session(session_id)
            if not state.open:
                raise SessionClosed(session_id)
            answered = state.answered_by(judge_id)
            cap = state.config.get("items_per_judge") or len(state.items)
            if len(answered) >= cap:
                return None
            for it in state.items:
                if it["item_id"] not in answered:
                    return {
                        "item_id": it["item_id"],
                        "payload": it["sample"]["payload"],
                        "codec": it["sample"]["codec"],
                        "answered": len(answered),
                        "total": min(cap, len(state.items)),
                    }
            return None

    def submit_verdict(self, session_id: str, judge_id: str, item_id: str, call: str) -> bool:
        """True when the verdict was recorded; False for an idempotent replay."""
        if call not in CALLS:
            raise DataError(f"call must be one of {CALLS}")
        if not judge_id:
            raise DataError("judge_id must be nonempty")
        with self._lock:
            state = self._session(session_id)
            if not state.open:
                raise SessionClosed(session_id)
            if item_id not in state.item_id_set:
                raise UnknownItem(item_id)
            if (judge_id, item_id) in state.verdicts:
                return False
            self._append(
                "verdict",
                {
                    "session_id": session_id,
                    "judge_id": judge_id,
                    "item_id": item_id,
                    "call": call,
                },
            )
        return True

    def _fractions(self, state: SessionState) -> dict[str, float]:
        counts: dict[str, list[int]] = {it["item_id"]: [0, 0] for it in state.items}
        for (judge, item_id), call in state.verdicts.items():
            counts[item_id][0] += 1 if call == "original" else 0
            counts[item_id][1] += 1
        return {
            item_id: (orig / total if total else 0.0)
            for item_id, (orig, total) in counts.items()
        }

    def session_delta(self, session_id: str) -> DeltaReport:
        """Gap under the single empirical human distinguisher: per item, the
        fraction of judges who called it original."""
        with self._lock:
            state = self._session(session_id)
            if state.open:
                raise SessionClosed(f"{session_id} is still open")
            return self._compute_delta(state)

    def _compute_delta(self, state: SessionState) -> DeltaReport:
        unanswered = sorted(state.item_id_set - {item for (_, item) in state.verdicts})
        if unanswered:
            raise IncompleteJudging(unanswered)
        fractions = self._fractions(state)
        originals, generateds = [], []
        for it in state.items:
            sample = sample_from_dict(it["sample"])
            relabeled = Sample(
                id=it["item_id"], payload=sample.payload, codec=sample.codec,
                features=dict(sample.features),
            )
            (originals if it["provenance"] == "original" else generateds).append(relabeled)
        if not originals or not generateds:
            raise EmptyInput("session needs items from both sets")
        f = Distinguisher(
            key=f"human-empirical[{state.session_id}]",
            kind="human-empirical",
            fn=lambda x: fractions[x.id],
        )
        family = DistinguisherFamily(key=f"judges[{state.session_id}]", members=[f])
        return core_delta(
            SampleSet(originals, role="original"),
            SampleSet(generateds, role="generated"),
            family,
            ScoringFunction("mean"),
        )

    def close_session(self, session_id: str) -> dict:
        """Close, reveal provenance, and report the gap. Idempotent."""
        with self._lock:
            state = self._session(session_id)
            if not state.open:
                return state.result
            report = self._compute_delta(state)  # raises IncompleteJudging first
            fractions = self._fractions(state)
            epsilon = float(state.config.get("epsilon", 0.5))
            result = {
                "session_id": session_id,
                "delta": report.delta,
                "epsilon": epsilon,
                "pass": report.delta <= epsilon,
                "items": [
                    {
                        "item_id": it["item_id"],
                        "provenance": it["provenance"],
                        "fraction_original": fractions[it["item_id"]],
                    }
                    for it in state.items
                ],
            }
            self._append("closed", {"session_id": session_id, "result": result})
        return result

    def result(self, session_id: str) -> dict:
        with self._lock:
            state = self._session(session_id)
            if state.open:
                raise SessionClosed(f"{session_id} is still open")
            return state.result


# --- HTTP layer ------------------------------------------------------------

_ROUTES = [
    ("POST", re.compile(r"^/sessions$")),
    ("GET", re.compile(r"^/sessions/([^/]+)/next$")),
    ("POST", re.compile(r"^/sessions/([^/]+)/verdicts$")),
    ("POST", re.compile(r"^/sessions/([^/]+)/close$")),
    ("GET", re.compile(r"^/sessions/([^/]+)/result$")),
]


def make_handler(service: JudgeService, ui_dir: Path | None = None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # quiet by default
            pass

        def _send(self, code: int, doc: dict | None = None):
            body = b"" if doc is None else (json.dumps(doc) + "\n").encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            if body:
                self.wfile.write(body)

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b""
            try:
                doc = json.loads(raw.decode("utf-8"))
            except (ValueError, UnicodeDecodeError):
                raise DataError("request body is not valid JSON") from None
            if not isinstance(doc, dict):
                raise DataError("request body must be a JSON object")
            return doc

        def do_GET(self):
            path, _, query = self.path.partition("?")
            if path.startswith("/ui"):
                return self._serve_ui(path)
            m = re.match(r"^/sessions/([^/]+)/next$", path)
            if m:
                params = dict(
                    part.split("=", 1) for part in query.split("&") if "=" in part
                )
                judge = params.get("judge", "")
                return self._run(lambda: self._next(m.group(1), judge))
            m = re.match(r"^/sessions/([^/]+)/result$", path)
            if m:
                return self._run(lambda: self._send(200, service.result(m.group(1))))
            self._send(404, {"error": "not found"})

        def do_POST(self):
            path = self.path.partition("?")[0]
            if path == "/sessions":
                return self._run(self._create)
            m = re.match(r"^/sessions/([^/]+)/verdicts$", path)
            if m:
                return self._run(lambda: self._verdict(m.group(1)))
            m = re.match(r"^/sessions/([^/]+)/close$", path)
            if m:
                return self._run(lambda: self._send(200, service.close_session(m.group(1))))
            self._send(404, {"error": "not found"})

        def _run(self, fn):
            try:
                fn()
            except UnknownSession as e:
                self._send(404, {"error": f"unknown session {e}"})
            except UnknownItem as e:
                self._send(404, {"error": f"unknown item {e}"})
            except SessionClosed as e:
                self._send(409, {"error": str(e)})
            except IncompleteJudging as e:
                self._send(409, {"error": "incomplete judging", "unanswered": e.unanswered})
            except (DataError, UnrenderableCodec, EmptyInput) as e:
                self._send(422, {"error": str(e)})

        def _create(self):
            doc = self._body()
            unknown = set(doc) - {"original", "generated", "config", "seed"}
            if unknown:
                raise DataError(f"unknown request keys {sorted(unknown)}")
            try:
                originals = [sample_from_dict(d) for d in doc["original"]]
                generateds = [sample_from_dict(d) for d in doc["generated"]]
            except (KeyError, TypeError):
                raise DataError("original and generated must be sample arrays") from None
            if not originals or not generateds:
                raise EmptyInput("both sample arrays must be nonempty")
            session_id = service.create_session(
                SampleSet(originals, role="original"),
                SampleSet(generateds, role="generated"),
                doc.get("config"),
                int(doc.get("seed", 0)),
            )
            self._send(201, {"session_id": session_id})

        def _next(self, session_id: str, judge: str):
            if not judge:
                raise DataError("judge query parameter required")
            item = service.next_item(session_id, judge)
            if item is None:
                self._send(204)
            else:
                self._send(200, item)

        def _verdict(self, session_id: str):
            doc = self._body()
            unknown = set(doc) - {"judge_id", "item_id", "call"}
            if unknown:
                raise DataError(f"unknown request keys {sorted(unknown)}")
            try:
                accepted = service.submit_verdict(
                    session_id, doc["judge_id"], doc["item_id"], doc["call"]
                )
            except KeyError as e:
                raise DataError(f"missing key {e}") from None
            self._send(200, {"accepted": accepted})

        def _serve_ui(self, path: str):
            if ui_dir is None:
                return self._send(404, {"error": "ui assets not configured"})
            rel = path[len("/ui") :].lstrip("/") or "index.html"
            target = (ui_dir / rel).resolve()
            if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
                return self._send(404, {"error": "not found"})
            body = target.read_bytes()
            ctype = {
                ".html": "text/html; charset=utf-8",
                ".js": "text/javascript; charset=utf-8",
                ".css": "text/css; charset=utf-8",
            }.get(target.suffix, "application/octet-stream")
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return Handler


def serve(addr: str, log_path, ui_dir=None) -> ThreadingHTTPServer:
    """Bind a threading HTTP server; caller runs serve_forever()."""
    host, _, port = addr.rpartition(":")
    service = JudgeService(log_path)
    handler = make_handler(service, Path(ui_dir) if ui_dir else None)
    server = ThreadingHTTPServer((host or "127.0.0.1", int(port)), handler)
    server.service = service
    return server
