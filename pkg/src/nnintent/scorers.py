"""Scoring backends behind one handle interface.

Two kinds of handle exist: a dependency-free builtin backend (Jaccard token
overlap for pairwise match scores, a hashed bag-of-tokens embedder) and a
remote backend speaking a line-delimited JSON protocol over a subprocess's
stdio or a TCP socket:

    -> {"id": 1, "op": "hello"}
    <- {"id": 1, "name": "...", "caps": ["score_pairs", ...], "batch_limit": 900}
    -> {"id": 2, "op": "score_pairs", "pairs": [["p", "h"], ...]}
    <- {"id": 2, "scores": [0.5, ...]}
    -> {"id": 3, "op": "embed", "texts": ["...", ...]}
    <- {"id": 3, "dim": 64, "vectors": [[...], ...]}
    -> {"id": 4, "op": "classify", "texts": ["...", ...]}
    <- {"id": 4, "labels": ["...", ...], "probs": [[...], ...]}

One record per line, ids strictly increasing per connection, errors
reported as {"id": ..., "error": "..."}. Every reply is validated before
use; malformed replies raise ProtocolError and are never retried.
"""

from __future__ import annotations

import json
import math
import shlex
import socket
import subprocess
from dataclasses import dataclass

from .errors import CapabilityError, ProtocolError, TransportError, ValidationError

CAP_SCORE_PAIRS = "score_pairs"
CAP_EMBED = "embed"
CAP_CLASSIFY = "classify"

# Largest pairwise batch used in practice; also the default request chunk.
DEFAULT_BATCH_LIMIT = 900

# FNV-1a 64-bit with a fixed xor-folded seed; stable across platforms.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_HASH_SEED = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1

DEFAULT_EMBED_DIM = 256


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenization shared by the builtin backends."""
    return text.lower().split()


def lexical_score(a: str, b: str) -> float:
    """Jaccard similarity of the two texts' lowercase token sets.

    Symmetric, deterministic, and exactly 1.0 for texts with equal token
    sets; the builtin stand-in for a trained pairwise matcher.
    """
    tokens_a = set(tokenize(a))
    tokens_b = set(tokenize(b))
    if not tokens_a or not tokens_b:
        raise ValidationError("cannot score empty text")
    return len(tokens_a & tokens_b) / len(tokens_a | tokens_b)


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET ^ _HASH_SEED
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def hash_embed(text: str, dim: int = DEFAULT_EMBED_DIM) -> list[float]:
    """Hash a bag of tokens into ``dim`` buckets and L2-normalize.

    Components are non-negative token counts before normalization, so the
    cosine similarity of any two embeddings lies in [0, 1].
    """
    if dim < 8:
        raise ValidationError("embedding dim must be >= 8")
    tokens = tokenize(text)
    if not tokens:
        raise ValidationError("cannot embed empty text")
    counts = [0.0] * dim
    for token in tokens:
        counts[_fnv1a64(token.encode("utf-8")) % dim] += 1.0
    norm = math.sqrt(sum(c * c for c in counts))
    return [c / norm for c in counts]


def _validate_pair_texts(pairs: list[tuple[str, str]]) -> None:
    if not pairs:
        raise ValidationError("need at least one pair to score")
    for premise, hypothesis in pairs:
        if not premise.strip() or not hypothesis.strip():
            raise ValidationError("cannot score empty text")


def _validate_texts(texts: list[str]) -> None:
    if not texts:
        raise ValidationError("need at least one text")
    for text in texts:
        if not text.strip():
            raise ValidationError("cannot embed empty text")


class BuiltinScorer:
    """Pure in-process backend: Jaccard match scores and hashed embeddings."""

    kind = "builtin-lexical"
    name = "builtin-lexical"
    capabilities = frozenset({CAP_SCORE_PAIRS, CAP_EMBED})

    def __init__(self, embed_dim: int = DEFAULT_EMBED_DIM, batch_limit: int = DEFAULT_BATCH_LIMIT):
        if embed_dim < 8:
            raise ValidationError("embedding dim must be >= 8")
        self.embed_dim = embed_dim
        self.batch_limit = batch_limit

    def score_pairs(self, pairs: list[tuple[str, str]]) -> list[float]:
        _validate_pair_texts(pairs)
        return [lexical_score(p, h) for p, h in pairs]

    def embed(self, texts: list[str]) -> list[list[float]]:
        _validate_texts(texts)
        return [hash_embed(t, self.embed_dim) for t in texts]

    def close(self) -> None:  # symmetry with remote handles
        pass


class LineTransport:
    """One line-delimited JSON connection. Subclasses own the byte streams."""

    def send_line(self, line: str) -> None:
        raise NotImplementedError

    def recv_line(self) -> str:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class SubprocessTransport(LineTransport):
    """Talk to a scorer subprocess over its stdin/stdout."""

    def __init__(self, command: str):
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise TransportError(f"cannot start scorer process {command!r}: {exc}") from exc

    def send_line(self, line: str) -> None:
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise TransportError(f"scorer process write failed: {exc}") from exc

    def recv_line(self) -> str:
        assert self._proc.stdout is not None
        line = self._proc.stdout.readline()
        if line == "":
            raise TransportError("scorer process closed its output")
        return line

    def close(self) -> None:
        if self._proc.stdin is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()


class TcpTransport(LineTransport):
    """Talk to a scorer server over a TCP socket."""

    def __init__(self, host: str, port: int):
        try:
            self._sock = socket.create_connection((host, port), timeout=60)
        except OSError as exc:
            raise TransportError(f"cannot connect to scorer at {host}:{port}: {exc}") from exc
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall((line + "\n").encode("utf-8"))
        except OSError as exc:
            raise TransportError(f"scorer socket write failed: {exc}") from exc

    def recv_line(self) -> str:
        try:
            line = self._reader.readline()
        except OSError as exc:
            raise TransportError(f"scorer socket read failed: {exc}") from exc
        if line == "":
            raise TransportError("scorer closed the connection")
        return line

    def close(self) -> None:
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass


@dataclass
class _ServerInfo:
    name: str
    capabilities: frozenset[str]
    batch_limit: int


class RemoteScorer:
    """Client for the remote scorer protocol.

    Requests are chunked to the server's declared batch limit and issued
    serially over one connection; replies are validated (id match, length,
    value ranges) before results are assembled in request order.
    """

    kind = "remote"

    def __init__(self, transport: LineTransport):
        self._transport = transport
        self._next_id = 1
        info = self._hello()
        self.name = info.name
        self.capabilities = info.capabilities
        self.batch_limit = info.batch_limit

    def _request(self, op: str, payload: dict) -> dict:
        request_id = self._next_id
        self._next_id += 1
        record = {"id": request_id, "op": op, **payload}
        self._transport.send_line(json.dumps(record, ensure_ascii=False))
        line = self._transport.recv_line()
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable reply to {op!r}: {exc.msg}") from exc
        if not isinstance(reply, dict):
            raise ProtocolError(f"reply to {op!r} is not an object")
        if reply.get("id") != request_id:
            raise ProtocolError(
                f"reply id {reply.get('id')!r} does not match request id {request_id}"
            )
        if "error" in reply:
            raise ProtocolError(f"scorer error for {op!r}: {reply['error']}")
        return reply

    def _hello(self) -> _ServerInfo:
        reply = self._request("hello", {})
        name = reply.get("name")
        caps = reply.get("caps")
        batch_limit = reply.get("batch_limit")
        if not isinstance(name, str) or not isinstance(caps, list):
            raise ProtocolError("hello reply missing name/caps")
        known = {CAP_SCORE_PAIRS, CAP_EMBED, CAP_CLASSIFY}
        if not set(caps) <= known:
            raise ProtocolError(f"hello declares unknown capabilities: {sorted(set(caps) - known)}")
        if not isinstance(batch_limit, int) or batch_limit < 1:
            raise ProtocolError("hello reply has invalid batch_limit")
        return _ServerInfo(name=name, capabilities=frozenset(caps), batch_limit=batch_limit)

    def _require_cap(self, cap: str) -> None:
        if cap not in self.capabilities:
            raise CapabilityError(f"scorer {self.name!r} does not declare {cap!r}")

    def _chunks(self, items: list) -> list[list]:
        limit = self.batch_limit
        return [items[i : i + limit] for i in range(0, len(items), limit)]

    def score_pairs(self, pairs: list[tuple[str, str]]) -> list[float]:
        self._require_cap(CAP_SCORE_PAIRS)
        _validate_pair_texts(pairs)
        scores: list[float] = []
        for chunk in self._chunks(list(pairs)):
            reply = self._request("score_pairs", {"pairs": [[p, h] for p, h in chunk]})
            values = reply.get("scores")
            if not isinstance(values, list) or len(values) != len(chunk):
                raise ProtocolError(
                    f"score_pairs returned {0 if not isinstance(values, list) else len(values)}"
                    f" scores for {len(chunk)} pairs"
                )
            for value in values:
                if (
                    isinstance(value, bool)
                    or not isinstance(value, (int, float))
                    or not 0.0 <= float(value) <= 1.0
                ):
                    raise ProtocolError(f"score {value!r} outside [0, 1]")
            scores.extend(float(v) for v in values)
        return scores

    def embed(self, texts: list[str]) -> list[list[float]]:
        self._require_cap(CAP_EMBED)
        _validate_texts(texts)
        vectors: list[list[float]] = []
        dim: int | None = None
        for chunk in self._chunks(list(texts)):
            reply = self._request("embed", {"texts": chunk})
            reply_dim = reply.get("dim")
            rows = reply.get("vectors")
            if not isinstance(reply_dim, int) or not isinstance(rows, list) or len(rows) != len(chunk):
                raise ProtocolError("embed reply malformed or length mismatch")
            if dim is None:
                dim = reply_dim
            elif reply_dim != dim:
                raise ProtocolError(f"embed dim changed from {dim} to {reply_dim}")
            for row in rows:
                if not isinstance(row, list) or len(row) != reply_dim:
                    raise ProtocolError("embed vector length does not match declared dim")
                vectors.append([float(v) for v in row])
        return vectors

    def classify(self, texts: list[str]) -> tuple[list[str], list[list[float]]]:
        self._require_cap(CAP_CLASSIFY)
        _validate_texts(texts)
        labels: list[str] = []
        probs: list[list[float]] = []
        for chunk in self._chunks(list(texts)):
            reply = self._request("classify", {"texts": chunk})
            chunk_labels = reply.get("labels")
            chunk_probs = reply.get("probs")
            if (
                not isinstance(chunk_labels, list)
                or not isinstance(chunk_probs, list)
                or len(chunk_labels) != len(chunk)
                or len(chunk_probs) != len(chunk)
            ):
                raise ProtocolError("classify reply malformed or length mismatch")
            labels.extend(str(l) for l in chunk_labels)
            probs.extend([float(v) for v in row] for row in chunk_probs)
        return labels, probs

    def close(self) -> None:
        self._transport.close()


def open_scorer(spec: str, embed_dim: int = DEFAULT_EMBED_DIM):
    """Create a scorer handle from a spec string.

    ``builtin`` for the in-process backend, ``cmd:<command line>`` for a
    subprocess server, ``tcp:<host>:<port>`` for a socket server.
    """
    if spec == "builtin":
        return BuiltinScorer(embed_dim=embed_dim)
    if spec.startswith("cmd:"):
        command = spec[len("cmd:") :].strip()
        if not command:
            raise ValidationError("empty scorer command")
        return RemoteScorer(SubprocessTransport(command))
    if spec.startswith("tcp:"):
        rest = spec[len("tcp:") :]
        host, sep, port = rest.rpartition(":")
        if not sep or not host:
            raise ValidationError(f"malformed tcp scorer spec {spec!r}")
        try:
            port_num = int(port)
        except ValueError as exc:
            raise ValidationError(f"malformed tcp port in {spec!r}") from exc
        return RemoteScorer(TcpTransport(host, port_num))
    raise ValidationError(f"unknown scorer spec {spec!r}; use builtin, cmd:..., or tcp:host:port")
