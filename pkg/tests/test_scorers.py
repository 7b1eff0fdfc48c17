import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mock_scorer_spec
from nnintent.errors import CapabilityError, ProtocolError, TransportError, ValidationError
from nnintent.scorers import (
    BuiltinScorer,
    LineTransport,
    RemoteScorer,
    hash_embed,
    lexical_score,
    open_scorer,
)

texts = st.text(
    alphabet=st.sampled_from("abcdefgh "), min_size=1, max_size=30
).filter(lambda s: s.strip())


class TestLexicalScore:
    def test_identity(self):
        assert lexical_score("pay my bill", "pay my bill") == 1.0

    def test_disjoint(self):
        assert lexical_score("alpha beta", "gamma delta") == 0.0

    def test_one_of_three(self):
        assert lexical_score("a b", "a c") == pytest.approx(1 / 3)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            lexical_score("", "words here")
        with pytest.raises(ValidationError):
            lexical_score("words here", "   ")

    def test_case_insensitive(self):
        assert lexical_score("Pay My BILL", "pay my bill") == 1.0

    @given(a=texts, b=texts)
    @settings(max_examples=100, deadline=None)
    def test_symmetric_and_self_one(self, a, b):
        assert lexical_score(a, b) == lexical_score(b, a)
        assert lexical_score(a, a) == 1.0
        assert 0.0 <= lexical_score(a, b) <= 1.0


class TestHashEmbed:
    def test_deterministic(self):
        assert hash_embed("freeze my card", 64) == hash_embed("freeze my card", 64)

    def test_single_token_single_bucket(self):
        vec = hash_embed("hello", 16)
        nonzero = [v for v in vec if v != 0.0]
        assert nonzero == [1.0]

    def test_unit_norm(self):
        vec = hash_embed("please freeze my card now", 32)
        assert math.sqrt(sum(v * v for v in vec)) == pytest.approx(1.0)

    def test_reference_golden_dim32(self):
        # Frozen from one reference run of the hasher.
        expected = [0.0] * 32
        expected[8] = expected[11] = expected[18] = expected[26] = 0.35355339059327373
        expected[14] = 0.7071067811865475
        assert hash_embed("freeze my card right now please", 32) == expected

    def test_dim_validated(self):
        with pytest.raises(ValidationError):
            hash_embed("hello", 4)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            hash_embed("  ", 16)

    @given(a=texts, b=texts)
    @settings(max_examples=60, deadline=None)
    def test_cosine_nonnegative(self, a, b):
        va = hash_embed(a, 32)
        vb = hash_embed(b, 32)
        assert sum(x * y for x, y in zip(va, vb)) >= 0.0


class FakeTransport(LineTransport):
    """In-process transport: scripted hello plus a reply function."""

    def __init__(self, batch_limit=900, caps=("score_pairs", "embed"), responder=None,
                 name="fake"):
        self.requests: list[dict] = []
        self._pending: list[str] = []
        self._batch_limit = batch_limit
        self._caps = list(caps)
        self._responder = responder
        self._name = name

    def send_line(self, line: str) -> None:
        record = json.loads(line)
        self.requests.append(record)
        if record["op"] == "hello":
            reply = {
                "id": record["id"],
                "name": self._name,
                "caps": self._caps,
                "batch_limit": self._batch_limit,
            }
        else:
            reply = self._responder(record)
        self._pending.append(json.dumps(reply))

    def recv_line(self) -> str:
        return self._pending.pop(0)

    def close(self) -> None:
        pass


def echo_scores(value=0.5):
    def responder(record):
        return {"id": record["id"], "scores": [value] * len(record["pairs"])}

    return responder


class TestRemoteScorer:
    def test_echo_mock(self):
        scorer = RemoteScorer(FakeTransport(responder=echo_scores()))
        assert scorer.score_pairs([("a b", "c d"), ("e f", "g h")]) == [0.5, 0.5]

    def test_chunking_2500_at_900(self):
        transport = FakeTransport(batch_limit=900, responder=echo_scores())
        scorer = RemoteScorer(transport)
        pairs = [(f"text {i}", "other") for i in range(2500)]
        scores = scorer.score_pairs(pairs)
        assert len(scores) == 2500
        sizes = [len(r["pairs"]) for r in transport.requests if r["op"] == "score_pairs"]
        assert sizes == [900, 900, 700]

    def test_embed_chunking_10_at_4(self):
        def responder(record):
            return {
                "id": record["id"],
                "dim": 8,
                "vectors": [[1.0] + [0.0] * 7 for _ in record["texts"]],
            }

        transport = FakeTransport(batch_limit=4, responder=responder)
        scorer = RemoteScorer(transport)
        vectors = scorer.embed([f"text {i}" for i in range(10)])
        assert len(vectors) == 10
        sizes = [len(r["texts"]) for r in transport.requests if r["op"] == "embed"]
        assert sizes == [4, 4, 2]

    def test_length_mismatch_is_protocol_error(self):
        def responder(record):
            return {"id": record["id"], "scores": [0.5] * (len(record["pairs"]) + 1)}

        scorer = RemoteScorer(FakeTransport(responder=responder))
        with pytest.raises(ProtocolError):
            scorer.score_pairs([("a", "b"), ("c", "d")])

    def test_out_of_range_score_is_protocol_error(self):
        scorer = RemoteScorer(FakeTransport(responder=echo_scores(1.5)))
        with pytest.raises(ProtocolError):
            scorer.score_pairs([("a", "b")])

    def test_id_mismatch_is_protocol_error(self):
        def responder(record):
            return {"id": record["id"] + 7, "scores": [0.5] * len(record["pairs"])}

        scorer = RemoteScorer(FakeTransport(responder=responder))
        with pytest.raises(ProtocolError):
            scorer.score_pairs([("a", "b")])

    def test_error_record_is_protocol_error(self):
        def responder(record):
            return {"id": record["id"], "error": "boom"}

        scorer = RemoteScorer(FakeTransport(responder=responder))
        with pytest.raises(ProtocolError, match="boom"):
            scorer.score_pairs([("a", "b")])

    def test_missing_capability_is_usage_error(self):
        scorer = RemoteScorer(FakeTransport(caps=["embed"], responder=lambda r: {}))
        with pytest.raises(CapabilityError):
            scorer.score_pairs([("a", "b")])

    def test_empty_text_rejected_before_request(self):
        transport = FakeTransport(responder=echo_scores())
        scorer = RemoteScorer(transport)
        with pytest.raises(ValidationError):
            scorer.embed(["fine", "   "])
        assert all(r["op"] == "hello" for r in transport.requests)

    def test_inconsistent_dims_is_protocol_error(self):
        calls = {"n": 0}

        def responder(record):
            calls["n"] += 1
            dim = 8 if calls["n"] == 1 else 9
            return {
                "id": record["id"],
                "dim": dim,
                "vectors": [[0.0] * dim for _ in record["texts"]],
            }

        transport = FakeTransport(batch_limit=1, responder=responder)
        scorer = RemoteScorer(transport)
        with pytest.raises(ProtocolError, match="dim"):
            scorer.embed(["a", "b"])

    def test_ids_strictly_increasing(self):
        transport = FakeTransport(responder=echo_scores())
        scorer = RemoteScorer(transport)
        scorer.score_pairs([("a", "b")])
        scorer.score_pairs([("c", "d")])
        ids = [r["id"] for r in transport.requests]
        assert ids == sorted(ids) and len(set(ids)) == len(ids)


class TestSubprocessTransport:
    def test_end_to_end_ok(self):
        scorer = open_scorer(mock_scorer_spec("ok"))
        try:
            assert scorer.name == "mock-ok"
            assert scorer.score_pairs([("a b", "c d"), ("x", "y")]) == [0.5, 0.5]
            vectors = scorer.embed(["one", "two"])
            assert len(vectors) == 2 and len(vectors[0]) == 8
        finally:
            scorer.close()

    def test_short_reply_protocol_error(self):
        scorer = open_scorer(mock_scorer_spec("short-reply"))
        try:
            with pytest.raises(ProtocolError):
                scorer.score_pairs([("a", "b"), ("c", "d")])
        finally:
            scorer.close()

    def test_out_of_range_protocol_error(self):
        scorer = open_scorer(mock_scorer_spec("out-of-range"))
        try:
            with pytest.raises(ProtocolError):
                scorer.score_pairs([("a", "b")])
        finally:
            scorer.close()

    def test_bad_id_protocol_error(self):
        scorer = open_scorer(mock_scorer_spec("bad-id"))
        try:
            with pytest.raises(ProtocolError):
                scorer.score_pairs([("a", "b")])
        finally:
            scorer.close()

    def test_no_caps_usage_error(self):
        scorer = open_scorer(mock_scorer_spec("no-caps"))
        try:
            with pytest.raises(CapabilityError):
                scorer.score_pairs([("a", "b")])
        finally:
            scorer.close()

    def test_dead_process_transport_error(self):
        with pytest.raises(TransportError):
            open_scorer("cmd:/no/such/binary-xyz")


class TestBuiltinScorer:
    def test_caps(self):
        scorer = BuiltinScorer()
        assert scorer.capabilities == {"score_pairs", "embed"}

    def test_score_and_embed(self, builtin64):
        assert builtin64.score_pairs([("a b", "a b")]) == [1.0]
        assert len(builtin64.embed(["hello there"])[0]) == 64


class TestOpenScorer:
    def test_builtin(self):
        assert isinstance(open_scorer("builtin"), BuiltinScorer)

    def test_bad_specs(self):
        for spec in ("nope", "cmd:", "tcp:missing-port", "tcp:host:notanint"):
            with pytest.raises(ValidationError):
                open_scorer(spec)
