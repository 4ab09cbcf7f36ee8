
import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from propirt.annotation import (
    AnnotationRequest,
    ChatClient,
    ResponseCache,
    annotate_batch,
    build_prompt,
    parse_interval,
    render_answer,
)
from propirt.errors import NetworkError, OrderViolation, ParseFailure, RangeViolation, TemplateError
from propirt.model import PropensityWindow

ALL_INTERVALS = [(a, b) for a in range(-3, 4) for b in range(a, 4)]


def req(question="Q1 [-1,2]", rubric="Level 0: neutral."):
    return AnnotationRequest("risk aversion", rubric, question)


class TestPrompt:
    def test_fills_placeholders(self):
        system, user = build_prompt(req())
        assert "cognitive biases" in system
        assert "bias towards risk aversion" in user
        assert "<rubric>\nLevel 0: neutral.\n</rubric>" in user
        assert "<question>\nQ1 [-1,2]\n</question>" in user
        assert user.endswith("'The propensity range is [LOWER BOUND, UPPER BOUND]'")

    def test_braces_in_question_are_literal(self):
        _, user = build_prompt(req(question="Pick {rubric} or {x}"))
        assert "Pick {rubric} or {x}" in user

    @pytest.mark.parametrize("kwargs", [dict(rubric="  "), dict(question="")])
    def test_empty_fields(self, kwargs):
        with pytest.raises(TemplateError):
            build_prompt(req(**kwargs))

    def test_unknown_placeholder(self):
        r = AnnotationRequest("p", "r", "q", template="{nope}")
        with pytest.raises(TemplateError):
            build_prompt(r)

    def test_cache_key(self):
        assert req().cache_key() == req().cache_key()
        assert req().cache_key() != req(question="Q2 [0,0]").cache_key()
        other_model = AnnotationRequest("risk aversion", "Level 0: neutral.", "Q1 [-1,2]", model_name="m2")
        assert other_model.cache_key() != req().cache_key()


class TestParse:
    def test_signed(self):
        w = parse_interval("The propensity range is [-3, +2]")
        assert (w.lower, w.upper) == (-3.0, 2.0)

    def test_order_violation(self):
        with pytest.raises(OrderViolation):
            parse_interval("range is [2, -1]")

    def test_range_violation(self):
        with pytest.raises(RangeViolation):
            parse_interval("The propensity range is [-4, 1]")

    def test_missing(self):
        with pytest.raises(ParseFailure):
            parse_interval("I am not sure.")

    def test_last_match_wins(self):
        text = "First guess: the propensity range is [-3, 3]. Revised: The propensity range is [0, 1]"
        w = parse_interval(text)
        assert (w.lower, w.upper) == (0.0, 1.0)

    def test_unicode_minus_and_zero_width(self):
        w = parse_interval("The propensity range is [−2, −2]")
        assert (w.lower, w.upper) == (-2.0, -2.0)

    def test_round_trip_all_intervals(self):
        assert len(ALL_INTERVALS) == 28
        for a, b in ALL_INTERVALS:
            assert parse_interval(render_answer(a, b)) == PropensityWindow(a, b)

    @given(st.sampled_from(ALL_INTERVALS), st.text(max_size=50))
    def test_round_trip_with_prefix(self, ab, prefix):
        a, b = ab
        w = parse_interval(prefix + "\n" + render_answer(a, b))
        assert (w.lower, w.upper) == (a, b)


class TestCache:
    def test_put_get(self, tmp_path):
        cache = ResponseCache(tmp_path)
        assert cache.get("ab" * 32) is None
        cache.put("ab" * 32, {"response": "x"})
        assert cache.get("ab" * 32) == {"response": "x"}
        assert not list(tmp_path.rglob(".tmp-*"))


class TestClient:
    def test_wire_format(self, mock_chat):
        with ChatClient(mock_chat.url, api_key="k", backoff=0) as client:
            text = client.complete("gpt-test", "sys", "user <question>\nQ [1,2]\n</question>")
        assert text.endswith("The propensity range is [1, 2]")
        sent = mock_chat.requests[0]
        assert sent["path"] == "/v1/chat/completions"
        assert sent["auth"] == "Bearer k"
        assert sent["body"]["model"] == "gpt-test" and sent["body"]["temperature"] == 0.0
        assert [m["role"] for m in sent["body"]["messages"]] == ["system", "user"]

    def test_retries_on_500(self, mock_chat):
        mock_chat.fail_first = 2
        with ChatClient(mock_chat.url, backoff=0) as client:
            client.complete("m", "s", "<question>\n[0,0]\n</question>")
            assert client.calls == 3

    def test_gives_up(self, mock_chat):
        mock_chat.fail_first = 10
        with ChatClient(mock_chat.url, max_retries=2, backoff=0) as client:
            with pytest.raises(NetworkError):
                client.complete("m", "s", "u")
            assert client.calls == 3

    def test_client_error_not_retried(self):
        transport = httpx.MockTransport(lambda request: httpx.Response(401, text="no"))
        with ChatClient("http://x/v1", backoff=0, transport=transport) as client:
            with pytest.raises(NetworkError):
                client.complete("m", "s", "u")
            assert client.calls == 1

    def test_malformed_payload(self):
        transport = httpx.MockTransport(lambda request: httpx.Response(200, json={"oops": 1}))
        with ChatClient("http://x/v1", backoff=0, transport=transport) as client:
            with pytest.raises(NetworkError):
                client.complete("m", "s", "u")


class TestBatch:
    def test_order_and_cache(self, mock_chat, tmp_path):
        reqs = [req(question=f"Q{i} [{a},{b}]") for i, (a, b) in enumerate(ALL_INTERVALS * 2)]
        cache = ResponseCache(tmp_path)
        with ChatClient(mock_chat.url, backoff=0) as client:
            out = annotate_batch(reqs, client, concurrency_limit=8, cache=cache)
            assert [(r.window.lower, r.window.upper) for r in out] == ALL_INTERVALS * 2
            assert not any(r.cached for r in out)
            first_calls = client.calls
            assert first_calls == len(reqs)
            again = annotate_batch(reqs, client, cache=cache)
            assert client.calls == first_calls
        assert all(r.cached for r in again)
        assert [r.window for r in again] == [r.window for r in out]

    def test_duplicates_fetched_once(self, mock_chat):
        with ChatClient(mock_chat.url, backoff=0) as client:
            out = annotate_batch([req()] * 5, client)
            assert client.calls == 1
        assert len(out) == 5 and all(r.ok for r in out)

    def test_endpoint_down(self, tmp_path):
        with ChatClient("http://127.0.0.1:9/v1", max_retries=1, backoff=0, timeout=2) as client:
            out = annotate_batch([req(), req(question="Q2 [0,1]")], client, cache=ResponseCache(tmp_path))
        assert len(out) == 2
        assert all(not r.ok and r.error_type == "NetworkError" for r in out)

    def test_per_item_errors(self, mock_chat):
        reqs = [req(), req(rubric=""), req(question="Q3 [3,-3]")]
        with ChatClient(mock_chat.url, backoff=0) as client:
            out = annotate_batch(reqs, client)
        assert out[0].ok
        assert out[1].error_type == "TemplateError"
        assert out[2].error_type == "OrderViolation" and out[2].raw_response

    def test_no_client_cache_only(self, tmp_path):
        cache = ResponseCache(tmp_path)
        r = req()
        cache.put(r.cache_key(), {"response": render_answer(-1, 2)})
        out = annotate_batch([r, req(question="other [0,0]")], None, cache=cache)
        assert out[0].ok and out[0].cached
        assert out[1].error_type == "NetworkError"

    def test_bad_concurrency(self):
        with pytest.raises(ValueError):
            annotate_batch([], None, concurrency_limit=0)
