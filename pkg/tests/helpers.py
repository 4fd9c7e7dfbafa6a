"""Shared test utilities: independent oracles, instance generators, and a
minimal table-serving bridge for remote-scorer tests.

The enumeration oracle works directly on raw table dictionaries and never
touches the decode engine, so it stays an independent check of the search.
"""

from __future__ import annotations

import json
import math
import socket
import socketserver
import threading

import numpy as np

# --- raw table handling (independent of lexiguide.scorers) -----------------


def table_row(table: dict, prefix: tuple[int, ...]) -> list[float]:
    window = table.get("context_window")
    if window is None:
        key = " ".join(str(t) for t in prefix)
    elif window == 0:
        key = ""
    else:
        key = " ".join(str(t) for t in prefix[-window:])
    row = table.get("contexts", {}).get(key, table["default"])
    return [math.log(p) if p > 0 else float("-inf") for p in row]


def enumerate_terminated(table: dict, max_len: int, prompt: tuple[int, ...] = ()):
    """All content sequences of length <= max_len, each ended by the end
    token, with their summed log probabilities. Pure recursion over the raw
    table: the independent oracle for every decode test."""
    eos = table["eos_id"]
    vocab = range(len(table["tokens"]))
    results: list[tuple[tuple[int, ...], float]] = []

    def walk(tokens: tuple[int, ...], logprob: float) -> None:
        row = table_row(table, prompt + tokens)
        results.append((tokens, logprob + row[eos]))
        if len(tokens) < max_len:
            for t in vocab:
                if t != eos:
                    walk(tokens + (t,), logprob + row[t])

    walk((), 0.0)
    return results


def contains_contiguous(sequence, phrase) -> bool:
    sequence, phrase = list(sequence), list(phrase)
    n = len(phrase)
    return any(sequence[i : i + n] == phrase for i in range(len(sequence) - n + 1))


def oracle_winner(candidates, length_normalization: str = "off"):
    """Argmax under the documented total order: higher score, then fewer
    tokens, then lexicographically smaller ids. Candidates are (tokens,
    logprob) pairs of terminated sequences."""

    def key(item):
        tokens, logprob = item
        score = logprob
        if length_normalization == "divide-by-length":
            score = logprob / max(1, len(tokens) + 1)
        return (-score, len(tokens), tokens)

    return min(candidates, key=key)


def reachable_prefix_count(content_vocab: int, max_len: int) -> int:
    return sum(content_vocab**k for k in range(max_len + 1))


# --- randomized instances ---------------------------------------------------


def random_table(rng: np.random.Generator, vocab_size: int, markov: bool = True) -> dict:
    """Random strictly-positive distribution table keyed by the last token."""

    def random_row() -> list[float]:
        raw = rng.uniform(0.05, 1.0, size=vocab_size)
        return list(raw / raw.sum())

    tokens = [f"w{i}" for i in range(vocab_size - 1)] + ["<eos>"]
    table = {
        "tokens": tokens,
        "eos_id": vocab_size - 1,
        "default": random_row(),
    }
    if markov:
        table["context_window"] = 1
        table["contexts"] = {str(t): random_row() for t in range(vocab_size - 1)}
    return table


def random_constraints(
    rng: np.random.Generator,
    content_vocab: int,
    max_constraints: int = 2,
    max_phrase: int = 3,
    total_budget: int | None = None,
) -> list[tuple[int, ...]]:
    count = int(rng.integers(1, max_constraints + 1))
    phrases: list[tuple[int, ...]] = []
    used = 0
    for _ in range(count):
        length = int(rng.integers(1, max_phrase + 1))
        if total_budget is not None:
            length = min(length, total_budget - used)
            if length < 1:
                break
        phrase = tuple(int(t) for t in rng.integers(0, content_vocab, size=length))
        phrases.append(phrase)
        used += length
    return phrases


def disjoint_constraints(
    rng: np.random.Generator, content_vocab: int, max_constraints: int = 2
) -> list[tuple[int, ...]]:
    """Constraints with all-distinct tokens across the whole set, so plain
    substring containment and the tracker agree exactly."""
    ids = list(rng.permutation(content_vocab))
    count = int(rng.integers(1, max_constraints + 1))
    phrases = []
    for _ in range(count):
        if not ids:
            break
        length = min(int(rng.integers(1, 3)), len(ids))
        phrases.append(tuple(int(ids.pop()) for _ in range(length)))
    return phrases


# --- minimal in-process bridge over TCP -------------------------------------
#
# Protocol re-implemented from the wire format on purpose: these tests
# check the client against an independent peer, not against itself.


def _encode(rows) -> list[list]:
    out = []
    for row in rows:
        out.append(["-inf" if (isinstance(v, float) and math.isinf(v) and v < 0) else v for v in row])
    return out


class _TableBridgeHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        table = self.server.table  # type: ignore[attr-defined]
        attn = getattr(self.server, "attn", None)
        while True:
            line = self.rfile.readline()
            if not line:
                return
            try:
                message = json.loads(line)
                kind = message["type"]
            except (json.JSONDecodeError, KeyError, TypeError):
                self._send({"type": "error", "msg": "malformed request"})
                continue
            if kind == "close":
                return
            if kind == "hello":
                self._send(
                    {"type": "vocab", "tokens": table["tokens"], "eos_id": table["eos_id"]}
                )
            elif kind == "score":
                prefixes = message.get("prefixes")
                if not isinstance(prefixes, list) or not prefixes:
                    self._send({"type": "error", "msg": "bad prefixes"})
                    continue
                if any(
                    not (0 <= t < len(table["tokens"])) for p in prefixes for t in p
                ):
                    self._send({"type": "error", "msg": "token id out of range"})
                    continue
                rows = [table_row(table, tuple(p)) for p in prefixes]
                self._send({"type": "scores", "logprobs": _encode(rows)})
            elif kind == "tokenize":
                words = str(message.get("text", "")).casefold().split()
                index = {tok: i for i, tok in enumerate(table["tokens"])}
                if any(w not in index for w in words):
                    self._send({"type": "error", "msg": "unknown token"})
                    continue
                self._send({"type": "tokens", "ids": [index[w] for w in words]})
            elif kind == "attn" and attn is not None:
                self._send({"type": "attn", "matrix": attn, "provenance": "test-fixture"})
            else:
                self._send({"type": "error", "msg": f"unknown request {kind!r}"})

    def _send(self, message: dict) -> None:
        self.wfile.write((json.dumps(message) + "\n").encode("utf-8"))
        self.wfile.flush()


class TableBridge:
    """Context manager running the minimal bridge on an ephemeral port."""

    def __init__(self, table: dict, attn=None) -> None:
        self._server = socketserver.ThreadingTCPServer(("127.0.0.1", 0), _TableBridgeHandler)
        self._server.daemon_threads = True
        self._server.table = table  # type: ignore[attr-defined]
        self._server.attn = attn  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address
        return f"tcp://{host}:{port}"

    def __enter__(self) -> "TableBridge":
        self._thread.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self._server.shutdown()
        self._server.server_close()


def raw_request(endpoint: str, messages: list[dict]) -> list[dict]:
    """Fire raw protocol messages and gather one reply per message."""
    assert endpoint.startswith("tcp://")
    host, _, port = endpoint[len("tcp://") :].rpartition(":")
    replies = []
    with socket.create_connection((host, int(port))) as sock:
        reader = sock.makefile("rb")
        writer = sock.makefile("wb")
        for message in messages:
            writer.write((json.dumps(message) + "\n").encode())
            writer.flush()
            replies.append(json.loads(reader.readline()))
    return replies
