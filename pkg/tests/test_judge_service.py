import json
import threading
from http.client import HTTPConnection

import pytest

from catfid.core import Sample, SampleSet
from catfid.errors import (
    DataError,
    IncompleteJudging,
    SessionClosed,
    UnknownItem,
    UnknownSession,
    UnrenderableCodec,
)
from catfid.judge_service import JudgeService, serve


def text_sets(n=5):
    s = SampleSet([Sample(id=f"o{i}", payload=f"the original line {i}", codec="utf8-text")
                   for i in range(n)])
    s_hat = SampleSet([Sample(id=f"g{i}", payload=f"a generated line {i}", codec="utf8-text")
                       for i in range(n)], role="generated")
    return s, s_hat


@pytest.fixture
def service(tmp_path):
    svc = JudgeService(tmp_path / "events.jsonl")
    yield svc
    svc.close()


def drive_judge(svc, sid, judge, decide):
    """Answer every item the service offers, using decide(payload) -> call."""
    while True:
        item = svc.next_item(sid, judge)
        if item is None:
            return
        svc.submit_verdict(sid, judge, item["item_id"], decide(item["payload"]))


def perfect(payload):
    return "original" if "original" in str(payload) else "generated"


class TestSessionLifecycle:
    def test_create_counts_and_blinds(self, service):
        s, s_hat = text_sets(5)
        sid = service.create_session(s, s_hat, seed=1)
        state = service.sessions[sid]
        assert len(state.items) == 10
        item = service.next_item(sid, "j1")
        assert set(item) == {"item_id", "payload", "codec", "answered", "total"}

    def test_same_seed_same_order(self, tmp_path):
        s, s_hat = text_sets(4)
        a = JudgeService(tmp_path / "a.jsonl")
        b = JudgeService(tmp_path / "b.jsonl")
        sid_a = a.create_session(s, s_hat, seed=9)
        sid_b = b.create_session(s, s_hat, seed=9)
        order_a = [it["sample"]["id"] for it in a.sessions[sid_a].items]
        order_b = [it["sample"]["id"] for it in b.sessions[sid_b].items]
        assert order_a == order_b
        a.close(), b.close()

    def test_opaque_bytes_rejected(self, service):
        bad = SampleSet([Sample(id="x", payload=b"\x00", codec="opaque-bytes")])
        s, _ = text_sets(2)
        with pytest.raises(UnrenderableCodec):
            service.create_session(bad, s, seed=0)

    def test_unknown_config_key_rejected(self, service):
        s, s_hat = text_sets(2)
        with pytest.raises(DataError):
            service.create_session(s, s_hat, {"surprise": 1}, seed=0)


class TestNextItem:
    def test_walks_shuffled_order(self, service):
        s, s_hat = text_sets(3)
        sid = service.create_session(s, s_hat, seed=2)
        expected = [it["item_id"] for it in service.sessions[sid].items]
        seen = []
        while True:
            item = service.next_item(sid, "j1")
            if item is None:
                break
            seen.append(item["item_id"])
            service.submit_verdict(sid, "j1", item["item_id"], "original")
        assert seen == expected

    def test_done_marker_after_all_items(self, service):
        s, s_hat = text_sets(2)
        sid = service.create_session(s, s_hat, seed=2)
        drive_judge(service, sid, "j1", perfect)
        assert service.next_item(sid, "j1") is None

    def test_items_per_judge_cap(self, service):
        s, s_hat = text_sets(3)
        sid = service.create_session(s, s_hat, {"items_per_judge": 2}, seed=2)
        drive_judge(service, sid, "j1", perfect)
        assert len(service.sessions[sid].answered_by("j1")) == 2

    def test_closed_session_rejects(self, service):
        s, s_hat = text_sets(2)
        sid = service.create_session(s, s_hat, seed=2)
        drive_judge(service, sid, "j1", perfect)
        service.close_session(sid)
        with pytest.raises(SessionClosed):
            service.next_item(sid, "j1")

    def test_unknown_session(self, service):
        with pytest.raises(UnknownSession):
            service.next_item("nope", "j1")


class TestSubmit:
    def test_first_write_wins(self, service):
        s, s_hat = text_sets(2)
        sid = service.create_session(s, s_hat, seed=3)
        item = service.next_item(sid, "j1")
        assert service.submit_verdict(sid, "j1", item["item_id"], "original") is True
        assert service.submit_verdict(sid, "j1", item["item_id"], "generated") is False
        assert service.sessions[sid].verdicts[("j1", item["item_id"])] == "original"

    def test_unknown_item(self, service):
        s, s_hat = text_sets(2)
        sid = service.create_session(s, s_hat, seed=3)
        with pytest.raises(UnknownItem):
            service.submit_verdict(sid, "j1", "i9999", "original")

    def test_bad_call_rejected(self, service):
        s, s_hat = text_sets(2)
        sid = service.create_session(s, s_hat, seed=3)
        with pytest.raises(DataError):
            service.submit_verdict(sid, "j1", "i0000", "maybe")

    def test_submit_after_close(self, service):
        s, s_hat = text_sets(2)
        sid = service.create_session(s, s_hat, seed=3)
        drive_judge(service, sid, "j1", perfect)
        service.close_session(sid)
        with pytest.raises(SessionClosed):
            service.submit_verdict(sid, "j1", "i0000", "original")


class TestDeltaAndClose:
    def test_perfect_judge_full_separation(self, service):
        s, s_hat = text_sets(5)
        sid = service.create_session(s, s_hat, seed=4)
        drive_judge(service, sid, "j1", perfect)
        result = service.close_session(sid)
        assert result["delta"] == 1.0
        assert result["pass"] is False  # epsilon defaults to 0.5

    def test_constant_caller_no_separation(self, service):
        s, s_hat = text_sets(5)
        sid = service.create_session(s, s_hat, seed=4)
        drive_judge(service, sid, "j1", lambda payload: "original")
        result = service.close_session(sid)
        assert result["delta"] == 0.0
        assert result["pass"] is True

    def test_close_requires_full_coverage(self, service):
        s, s_hat = text_sets(2)
        sid = service.create_session(s, s_hat, seed=4)
        item = service.next_item(sid, "j1")
        service.submit_verdict(sid, "j1", item["item_id"], "original")
        with pytest.raises(IncompleteJudging) as e:
            service.close_session(sid)
        assert len(e.value.unanswered) == 3

    def test_close_idempotent(self, service):
        s, s_hat = text_sets(2)
        sid = service.create_session(s, s_hat, seed=4)
        drive_judge(service, sid, "j1", perfect)
        first = service.close_session(sid)
        assert service.close_session(sid) == first

    def test_result_matches_session_delta(self, service):
        s, s_hat = text_sets(3)
        sid = service.create_session(s, s_hat, seed=4)
        drive_judge(service, sid, "j1", perfect)
        drive_judge(service, sid, "j2", lambda payload: "generated")
        result = service.close_session(sid)
        assert result["delta"] == service.session_delta(sid).delta
        assert service.result(sid) == result

    def test_session_delta_requires_close(self, service):
        s, s_hat = text_sets(2)
        sid = service.create_session(s, s_hat, seed=4)
        with pytest.raises(SessionClosed):
            service.session_delta(sid)

    def test_fraction_semantics(self, service):
        # two judges disagree on every item: fractions are 0.5 everywhere,
        # so the empirical distinguisher is constant and the gap vanishes
        s, s_hat = text_sets(2)
        sid = service.create_session(s, s_hat, seed=4)
        drive_judge(service, sid, "j1", lambda payload: "original")
        drive_judge(service, sid, "j2", lambda payload: "generated")
        result = service.close_session(sid)
        assert result["delta"] == 0.0
        assert all(row["fraction_original"] == 0.5 for row in result["items"])


class TestDurability:
    def test_replay_reproduces_partial_state(self, tmp_path):
        log = tmp_path / "log.jsonl"
        svc = JudgeService(log)
        s, s_hat = text_sets(3)
        sid = svc.create_session(s, s_hat, seed=5)
        item = svc.next_item(sid, "j1")
        svc.submit_verdict(sid, "j1", item["item_id"], "generated")
        svc.close()

        replayed = JudgeService(log)
        state = replayed.sessions[sid]
        assert state.open is True
        assert state.verdicts == {("j1", item["item_id"]): "generated"}
        assert [it["item_id"] for it in state.items] == [
            it["item_id"] for it in svc.sessions[sid].items
        ]
        replayed.close()

    def test_replay_reproduces_closed_state(self, tmp_path):
        log = tmp_path / "log.jsonl"
        svc = JudgeService(log)
        s, s_hat = text_sets(3)
        sid = svc.create_session(s, s_hat, seed=5)
        drive_judge(svc, sid, "j1", perfect)
        result = svc.close_session(sid)
        svc.close()

        replayed = JudgeService(log)
        assert replayed.sessions[sid].open is False
        assert replayed.result(sid) == result
        replayed.close()

    def test_event_log_schema(self, tmp_path):
        log = tmp_path / "log.jsonl"
        svc = JudgeService(log)
        s, s_hat = text_sets(2)
        sid = svc.create_session(s, s_hat, seed=5)
        drive_judge(svc, sid, "j1", perfect)
        svc.close_session(sid)
        svc.close()
        events = [json.loads(line) for line in log.read_text().splitlines()]
        assert [e["seq"] for e in events] == list(range(1, len(events) + 1))
        assert events[0]["kind"] == "created"
        assert events[-1]["kind"] == "closed"
        assert all({"seq", "kind", "data", "ts"} <= set(e) for e in events)


def _has_provenance(doc) -> bool:
    if isinstance(doc, dict):
        return "provenance" in doc or any(_has_provenance(v) for v in doc.values())
    if isinstance(doc, list):
        return any(_has_provenance(v) for v in doc)
    return False


class HttpClient:
    """Minimal keep-alive JSON client for the scripted judges."""

    def __init__(self, host, port):
        self.conn = HTTPConnection(host, port)

    def request(self, method, path, body=None):
        payload = None if body is None else json.dumps(body)
        headers = {"Content-Type": "application/json"} if payload else {}
        self.conn.request(method, path, body=payload, headers=headers)
        response = self.conn.getresponse()
        raw = response.read()
        doc = json.loads(raw) if raw else None
        return response.status, doc

    def close(self):
        self.conn.close()


@pytest.fixture
def http_server(tmp_path):
    server = serve("127.0.0.1:0", tmp_path / "http.jsonl")
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()
    server.service.close()


def sample_docs(n, kind):
    return [
        {"id": f"{kind[0]}{i}", "codec": "utf8-text",
         "payload": f"{kind} line {i}", "features": {}}
        for i in range(n)
    ]


class TestHttpSurface:
    def test_full_session_with_blinding(self, http_server):
        host, port = http_server.server_address[:2]
        client = HttpClient(host, port)
        status, doc = client.request("POST", "/sessions", {
            "original": sample_docs(3, "original"),
            "generated": sample_docs(3, "generated"),
            "config": {"epsilon": 0.4},
            "seed": 11,
        })
        assert status == 201
        sid = doc["session_id"]

        while True:
            status, item = client.request("GET", f"/sessions/{sid}/next?judge=j1")
            if status == 204:
                break
            assert status == 200
            assert not _has_provenance(item)
            status, ack = client.request(
                "POST", f"/sessions/{sid}/verdicts",
                {"judge_id": "j1", "item_id": item["item_id"],
                 "call": "original" if "original" in item["payload"] else "generated"},
            )
            assert status == 200 and ack["accepted"] is True

        status, _ = client.request("GET", f"/sessions/{sid}/result")
        assert status == 409  # still open
        status, result = client.request("POST", f"/sessions/{sid}/close")
        assert status == 200 and result["delta"] == 1.0 and result["pass"] is False
        status, again = client.request("GET", f"/sessions/{sid}/result")
        assert status == 200 and again == result
        client.close()

    def test_error_codes(self, http_server):
        host, port = http_server.server_address[:2]
        client = HttpClient(host, port)
        status, _ = client.request("GET", "/sessions/nope/next?judge=j1")
        assert status == 404
        status, _ = client.request("POST", "/sessions", {"original": [], "generated": []})
        assert status == 422
        status, doc = client.request("POST", "/sessions", {
            "original": sample_docs(2, "original"),
            "generated": sample_docs(2, "generated"),
            "seed": 1,
        })
        sid = doc["session_id"]
        status, _ = client.request(
            "POST", f"/sessions/{sid}/verdicts",
            {"judge_id": "j1", "item_id": "i9999", "call": "original"},
        )
        assert status == 404
        status, _ = client.request(
            "POST", f"/sessions/{sid}/verdicts",
            {"judge_id": "j1", "item_id": "i0000", "call": "unsure"},
        )
        assert status == 422
        status, _ = client.request("POST", f"/sessions/{sid}/close")
        assert status == 409  # incomplete judging
        client.close()

    def test_duplicate_submissions_idempotent_over_http(self, http_server):
        host, port = http_server.server_address[:2]
        client = HttpClient(host, port)
        _, doc = client.request("POST", "/sessions", {
            "original": sample_docs(2, "original"),
            "generated": sample_docs(2, "generated"),
            "seed": 2,
        })
        sid = doc["session_id"]
        body = {"judge_id": "j1", "item_id": "i0000", "call": "original"}
        _, first = client.request("POST", f"/sessions/{sid}/verdicts", body)
        _, second = client.request("POST", f"/sessions/{sid}/verdicts", dict(body, call="generated"))
        assert first["accepted"] is True and second["accepted"] is False
        state = http_server.service.sessions[sid]
        assert state.verdicts[("j1", "i0000")] == "original"
        client.close()
