import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given
from hypothesis import strategies as st

from prisonsim.errors import (
    BackendTimeout,
    ConfigurationError,
    EmptyCompletionError,
    MalformedResponseError,
    TransportError,
)
from prisonsim.gateway import (
    ChatMessage,
    ChatRequest,
    HttpScorer,
    Lexicon,
    LexiconScorer,
    MockChatBackend,
    ModerationClient,
    OllamaChatClient,
    ScoreRecord,
    TokenBucket,
    ToxicityClient,
    TurnKey,
    backend_from_spec,
    call_with_retry,
    lexicon_score,
)
from prisonsim.gateway.scoring import tokenize
from prisonsim.matrix import DecodingParams, enumerate_scenarios, expand_runs
from prisonsim.prompts import Role


class Server:
    """Local JSON endpoint; ``handler(body, path) -> (status, payload)``."""

    def __init__(self, handler):
        self.handler = handler
        self.bodies = []
        self.headers = []
        outer = self

        class H(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                outer.bodies.append(body)
                outer.headers.append(dict(self.headers))
                status, payload = outer.handler(body, self.path)
                raw = payload.encode() if isinstance(payload, str) else json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), H)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, kwargs={"poll_interval": 0.02}, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


NO_WAIT = {"sleep": lambda s: None}


def request():
    return ChatRequest(
        "llama3",
        (ChatMessage("system", "sys"), ChatMessage("user", "hi"), ChatMessage("assistant", "yo"), ChatMessage("user", "?")),
        DecodingParams(0.7, 40, 0.9),
    )


class TestChatRequest:
    def test_wire_contains_decoding_options(self):
        wire = request().to_wire()
        assert wire["options"] == {"temperature": 0.7, "top_k": 40, "top_p": 0.9}
        assert wire["model"] == "llama3"
        assert wire["stream"] is False

    def test_wire_round_trip(self):
        r = request()
        assert ChatRequest.from_wire(json.loads(json.dumps(r.to_wire()))) == r

    @pytest.mark.parametrize(
        "roles",
        [("user",), ("system", "system"), ("system", "user", "user"), ("system", "tool")],
    )
    def test_invalid_role_sequences(self, roles):
        with pytest.raises(ValueError):
            ChatRequest("m", tuple(ChatMessage(r, "x") for r in roles))

    @given(st.lists(st.text(max_size=20), max_size=8), st.floats(0.01, 2), st.integers(1, 100), st.floats(0.01, 1))
    def test_round_trip_property(self, contents, t, k, p):
        msgs = [ChatMessage("system", "s")] + [
            ChatMessage("user" if i % 2 == 0 else "assistant", c) for i, c in enumerate(contents)
        ]
        r = ChatRequest("m", tuple(msgs), DecodingParams(t, k, p))
        assert ChatRequest.from_wire(json.loads(json.dumps(r.to_wire()))) == r


class TestOllamaClient:
    def test_success_and_wire_body(self):
        with Server(lambda body, path: (200, {"message": {"role": "assistant", "content": "hello"}})) as srv:
            client = OllamaChatClient(srv.url)
            assert client.complete(request()) == "hello"
            assert srv.bodies[0] == request().to_wire()

    def test_http_error_is_transport(self):
        with Server(lambda body, path: (503, {"error": "busy"})) as srv:
            with pytest.raises(TransportError):
                OllamaChatClient(srv.url).complete(request())

    def test_malformed(self):
        with Server(lambda body, path: (200, {"nope": 1})) as srv:
            with pytest.raises(MalformedResponseError):
                OllamaChatClient(srv.url).complete(request())

    def test_not_json(self):
        with Server(lambda body, path: (200, "<html>")) as srv:
            with pytest.raises(MalformedResponseError):
                OllamaChatClient(srv.url).complete(request())

    def test_empty_completion(self):
        with Server(lambda body, path: (200, {"message": {"content": "  "}})) as srv:
            with pytest.raises(EmptyCompletionError):
                OllamaChatClient(srv.url).complete(request())

    def test_unreachable_is_transport(self):
        with pytest.raises(TransportError):
            OllamaChatClient("http://127.0.0.1:9", timeout=2).complete(request())

    def test_timeout(self):
        import time

        def slow(body, path):
            time.sleep(0.5)
            return 200, {"message": {"content": "late"}}

        with Server(slow) as srv:
            with pytest.raises(BackendTimeout):
                OllamaChatClient(srv.url, timeout=0.05).complete(request())


class TestMock:
    @pytest.fixture
    def run(self):
        return expand_runs(enumerate_scenarios(["m"]), 1)[12]

    def test_scripted_completion(self, run):
        backend = MockChatBackend({"completions": {run.scenario.id: {"3": "exact text"}}})
        assert backend.complete(request(), TurnKey(run, 3, Role.GUARD)) == "exact text"

    def test_pool_lookup_prefers_personality(self, run):
        persona = run.scenario.persona
        script = {
            "pools": {
                f"Guard:{persona.guard.value}": ["specific"],
                "Guard": ["generic"],
                "Prisoner": ["p"],
            }
        }
        backend = MockChatBackend(script)
        assert backend.complete(request(), TurnKey(run, 1, Role.GUARD)) == "specific"
        assert backend.complete(request(), TurnKey(run, 2, Role.PRISONER)) == "p"

    def test_default_template(self, run):
        backend = MockChatBackend({"default": "{author}@{turn_index}"})
        assert backend.complete(request(), TurnKey(run, 4, Role.PRISONER)) == "Prisoner@4"

    def test_failures(self, run):
        backend = MockChatBackend({"failures": [{"turn": 2, "kind": "transport", "times": 1}]})
        with pytest.raises(TransportError):
            backend.complete(request(), TurnKey(run, 2, Role.PRISONER))
        assert backend.complete(request(), TurnKey(run, 2, Role.PRISONER))

    def test_unknown_failure_kind(self):
        with pytest.raises(ConfigurationError):
            MockChatBackend({"failures": [{"turn": 1, "kind": "gremlins"}]})

    def test_backend_from_spec(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text("{}")
        assert isinstance(backend_from_spec(f"mock:{p}"), MockChatBackend)
        assert isinstance(backend_from_spec("http://localhost:11434"), OllamaChatClient)
        with pytest.raises(ConfigurationError):
            backend_from_spec("mock:/does/not/exist.json")
        with pytest.raises(ConfigurationError):
            backend_from_spec("ftp://x")


class TestRetry:
    def test_budget_and_backoff(self):
        calls, sleeps = [], []

        def fn():
            calls.append(1)
            raise TransportError("x")

        with pytest.raises(TransportError):
            call_with_retry(fn, sleep=sleeps.append)
        assert len(calls) == 4
        assert sleeps == [1, 2, 4]

    def test_non_retryable_raises_immediately(self):
        calls = []

        def fn():
            calls.append(1)
            raise MalformedResponseError("x")

        with pytest.raises(MalformedResponseError):
            call_with_retry(fn, sleep=lambda s: None)
        assert len(calls) == 1

    def test_success_after_failures(self):
        attempts = iter([TransportError("a"), BackendTimeout("b"), "ok"])

        def fn():
            v = next(attempts)
            if isinstance(v, Exception):
                raise v
            return v

        assert call_with_retry(fn, sleep=lambda s: None) == "ok"


class TestTokenBucket:
    def test_rate(self):
        now = [0.0]
        sleeps = []

        def sleep(s):
            sleeps.append(s)
            now[0] += s

        bucket = TokenBucket(2.0, capacity=1, clock=lambda: now[0], sleep=sleep)
        for _ in range(5):
            bucket.acquire()
        # first token free, then one every 0.5 s
        assert now[0] == pytest.approx(2.0)

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            TokenBucket(0)

    def test_concurrent_acquire_counts(self):
        bucket = TokenBucket(1.0, capacity=100, clock=lambda: 0.0)
        threads = [threading.Thread(target=bucket.acquire) for _ in range(50)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert bucket._tokens == 50


class TestToxicityClient:
    def test_single_passthrough(self):
        with Server(lambda body, path: (200, {"toxic_probability": 0.73})) as srv:
            assert ToxicityClient(srv.url).score("you fool") == 0.73
            assert srv.bodies == [{"text": "you fool"}]

    def test_empty_text_no_request(self):
        with Server(lambda body, path: (200, {"toxic_probability": 0.9})) as srv:
            assert ToxicityClient(srv.url).score("") == 0.0
            assert srv.bodies == []

    def test_batch_order_survives_shuffled_response(self):
        def handler(body, path):
            items = [{"id": it["id"], "toxic_probability": len(it["text"]) / 100} for it in body["items"]]
            random.Random(len(items)).shuffle(items)
            return 200, {"items": items}

        texts = [("x" * n) for n in range(1, 71)]
        texts[5] = ""
        with Server(handler) as srv:
            scores = ToxicityClient(srv.url, batch_size=32).score_batch(texts)
            assert len(srv.bodies) == 3  # 69 non-empty texts in batches of 32
        assert scores == [len(t) / 100 for t in texts]

    @pytest.mark.parametrize("payload", [{}, {"toxic_probability": "high"}, {"toxic_probability": 1.5}])
    def test_malformed(self, payload):
        with Server(lambda body, path: (200, payload)) as srv:
            with pytest.raises(MalformedResponseError):
                ToxicityClient(srv.url, **NO_WAIT).score("x")

    def test_missing_batch_item(self):
        with Server(lambda body, path: (200, {"items": []})) as srv:
            with pytest.raises(MalformedResponseError):
                ToxicityClient(srv.url, **NO_WAIT).score_batch(["a"])

    def test_retries_transient_http_errors(self):
        state = {"n": 0}

        def flaky(body, path):
            state["n"] += 1
            return (500, {}) if state["n"] < 3 else (200, {"toxic_probability": 0.2})

        sleeps = []
        with Server(flaky) as srv:
            assert ToxicityClient(srv.url, sleep=sleeps.append).score("x") == 0.2
        assert sleeps == [1, 2]


class TestModerationClient:
    def test_passthrough_and_auth(self):
        payload = {"results": [{"category_scores": {"harassment": 0.9, "violence": 0.1, "hate": 0.3}}]}
        with Server(lambda body, path: (200, payload)) as srv:
            out = ModerationClient(srv.url, api_key="k").score("text")
            assert srv.headers[0]["Authorization"] == "Bearer k"
        assert out == {"harassment": 0.9, "violence": 0.1}

    def test_missing_category(self):
        payload = {"results": [{"category_scores": {"harassment": 0.9}}]}
        with Server(lambda body, path: (200, payload)) as srv:
            with pytest.raises(MalformedResponseError):
                ModerationClient(srv.url, **NO_WAIT).score("text")

    def test_empty_text(self):
        assert ModerationClient("http://127.0.0.1:9").score(" ") == {"harassment": 0.0, "violence": 0.0}

    def test_batch_in_input_order(self):
        def handler(body, path):
            return 200, {
                "results": [
                    {"category_scores": {"harassment": len(t) / 10, "violence": 0.0}} for t in body["input"]
                ]
            }

        with Server(handler) as srv:
            out = ModerationClient(srv.url).score_batch(["a", "", "abc"])
        assert out == [{"harassment": 0.1, "violence": 0.0}, {"harassment": 0.0, "violence": 0.0},
                       {"harassment": 0.3, "violence": 0.0}]

    def test_http_scorer_combines(self):
        def handler(body, path):
            if "items" in body:
                return 200, {"items": [{"id": i["id"], "toxic_probability": 0.5} for i in body["items"]]}
            return 200, {"results": [{"category_scores": {"harassment": 0.2, "violence": 0.3}} for _ in body["input"]]}

        with Server(handler) as srv:
            scorer = HttpScorer(ToxicityClient(srv.url), ModerationClient(srv.url))
            assert scorer.score_batch(["x"]) == [{"toxicity": 0.5, "harassment": 0.2, "violence": 0.3}]


class TestLexicon:
    LEX = Lexicon.from_mapping(
        {
            "idiot": {"toxicity": 1.0},
            "shut up": {"harassment": 0.5, "toxicity": 0.4},
            "worm": {"harassment": 0.5},
            "hit": {"violence": 0.8},
        }
    )

    def test_no_hits(self):
        assert lexicon_score("Good morning, how are you?", self.LEX) == {
            "toxicity": 0.0, "harassment": 0.0, "violence": 0.0,
        }

    def test_single_token_saturates(self):
        assert lexicon_score("Idiot!", self.LEX)["toxicity"] == 1.0

    def test_two_half_weight_terms_over_ten_tokens(self):
        text = "you worm you worm please go back to your cell"
        assert len(tokenize(text)) == 10
        assert lexicon_score(text, self.LEX)["harassment"] == pytest.approx(2 * 0.5 / 10)

    def test_multi_word_and_whole_word(self):
        s = lexicon_score("Shut up and sit", self.LEX)
        assert s["harassment"] == pytest.approx(0.5 / 4)
        assert s["toxicity"] == pytest.approx(0.4 / 4)
        assert lexicon_score("white hitch", self.LEX)["violence"] == 0.0
        assert lexicon_score("HIT", self.LEX)["violence"] == 0.8

    def test_empty_text(self):
        assert lexicon_score("", self.LEX)["toxicity"] == 0.0

    def test_clamped(self):
        assert lexicon_score("idiot idiot", self.LEX)["toxicity"] == 1.0

    def test_empty_lexicon(self):
        with pytest.raises(ConfigurationError):
            Lexicon.from_mapping({})

    def test_unknown_proxy(self):
        with pytest.raises(ConfigurationError):
            Lexicon.from_mapping({"x": {"hate": 1}})

    def test_builtin_lexicon_loads(self):
        from importlib import resources

        lex = Lexicon.from_file(str(resources.files("prisonsim.resources").joinpath("lexicon.json")))
        assert lexicon_score("Shut up, worm.", lex)["toxicity"] > 0

    @given(st.text(max_size=200))
    def test_pure_and_bounded(self, text):
        a = lexicon_score(text, self.LEX)
        assert a == lexicon_score(text, self.LEX)
        assert all(0.0 <= v <= 1.0 for v in a.values())

    def test_scorer_does_not_mutate(self):
        texts = ["Idiot", "fine"]
        copy = list(texts)
        LexiconScorer(self.LEX).score_batch(texts)
        assert texts == copy


def test_score_record_bounds():
    with pytest.raises(ValueError):
        ScoreRecord("c", 1, 1.2, 0, 0, "s")
    r = ScoreRecord("c", 1, 0.1, 0.2, 0.3, "s")
    assert ScoreRecord.from_dict(r.to_dict()) == r
