"""Step scorers: the decode engine's only model dependency.

A scorer maps a batch of token-id prefixes to one log-probability row per
prefix over the whole vocabulary. Three implementations ship here: an
explicit table (tests and fixtures), an add-k smoothed n-gram model
(end-to-end runs without any neural model), and a client for a remote
bridge speaking newline-delimited JSON.

Scores are exchanged as log probabilities; a hypothesis score is the sum
of its step log probabilities.
"""

from __future__ import annotations

import json
import math
import shlex
import socket
import subprocess
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

#: Context-only sentinel used for sequence-start padding. Never a scored column.
BOS_ID = -1

EOS_TOKEN = "<eos>"

ROW_SUM_TOL = 1e-6


class Vocabulary:
    """Ordered token strings with a designated end-of-sequence id."""

    def __init__(self, tokens: Sequence[str], eos_id: int) -> None:
        tokens = tuple(tokens)
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        if not 0 <= eos_id < len(tokens):
            raise ValueError(f"eos_id {eos_id} out of range for {len(tokens)} tokens")
        self.tokens = tokens
        self.eos_id = eos_id
        self._index = {token: i for i, token in enumerate(tokens)}

    @classmethod
    def from_tokens(cls, words: Iterable[str], eos_token: str = EOS_TOKEN) -> "Vocabulary":
        """Sorted unique words plus the end token appended last."""
        uniq = sorted(set(words))
        if eos_token in uniq:
            raise ValueError(f"corpus already contains the reserved token {eos_token!r}")
        return cls(tuple(uniq) + (eos_token,), eos_id=len(uniq))

    def id_of(self, token: str) -> int:
        return self._index[token]

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.tokens == other.tokens
            and self.eos_id == other.eos_id
        )

    def __repr__(self) -> str:
        return f"Vocabulary({len(self.tokens)} tokens, eos_id={self.eos_id})"


def _validate_rows(logprobs: np.ndarray) -> None:
    if logprobs.ndim != 2:
        raise ValueError("step scores must be a 2-D matrix")
    if np.isnan(logprobs).any() or np.isposinf(logprobs).any():
        raise ValueError("step scores must be finite or -inf")
    sums = np.exp(logprobs).sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
    if bad.size:
        raise ValueError(f"row {int(bad[0])} exponentiates to {sums[bad[0]]!r}, not 1")


@dataclass(frozen=True)
class StepScores:
    """One log-probability row per input prefix; rows exp-sum to 1 within 1e-6."""

    logprobs: np.ndarray
    copy_logprobs: np.ndarray | None = None

    def __post_init__(self) -> None:
        _validate_rows(self.logprobs)
        if self.copy_logprobs is not None and self.copy_logprobs.shape != self.logprobs.shape:
            raise ValueError("copy_logprobs shape must mirror logprobs")

    @property
    def num_rows(self) -> int:
        return self.logprobs.shape[0]


class Scorer(Protocol):
    """Contract every scorer satisfies."""

    vocab: Vocabulary

    def score_step(self, prefixes: Sequence[Sequence[int]]) -> StepScores: ...


def _check_prefixes(prefixes: Sequence[Sequence[int]], vocab: Vocabulary) -> None:
    if not prefixes:
        raise ValueError("prefixes must be non-empty")
    size = len(vocab)
    for prefix in prefixes:
        for token in prefix:
            if not 0 <= token < size:
                raise ValueError(f"prefix token id {token} out of vocabulary")


def log_row(probs: Sequence[float]) -> list[float]:
    """Canonical probability-to-log conversion shared by file-backed scorers."""
    return [math.log(p) if p > 0.0 else float("-inf") for p in probs]


class TableScorer:
    """Explicit distribution table: the workhorse for exact decode oracles.

    Rows are keyed by prefix context. With ``context_window=None`` the key
    is the full prefix; with an integer window, the last ``window`` tokens.
    Unknown contexts fall back to the default row.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        default_row: Sequence[float],
        context_rows: dict[tuple[int, ...], Sequence[float]] | None = None,
        context_window: int | None = None,
    ) -> None:
        self.vocab = vocab
        self.context_window = context_window
        self._default = np.array(log_row(default_row), dtype=np.float64)
        self._rows = {
            tuple(key): np.array(log_row(row), dtype=np.float64)
            for key, row in (context_rows or {}).items()
        }
        for row in [self._default, *self._rows.values()]:
            if row.shape != (len(vocab),):
                raise ValueError("table row width must equal vocabulary size")
        _validate_rows(self._default[None, :])
        for row in self._rows.values():
            _validate_rows(row[None, :])

    def _context(self, prefix: Sequence[int]) -> tuple[int, ...]:
        if self.context_window is None:
            return tuple(prefix)
        if self.context_window == 0:
            return ()
        return tuple(prefix[-self.context_window :])

    def score_step(self, prefixes: Sequence[Sequence[int]]) -> StepScores:
        _check_prefixes(prefixes, self.vocab)
        rows = [self._rows.get(self._context(p), self._default) for p in prefixes]
        return StepScores(logprobs=np.stack(rows))

    @classmethod
    def from_dict(cls, spec: dict) -> "TableScorer":
        vocab = Vocabulary(spec["tokens"], eos_id=spec["eos_id"])
        contexts = {
            tuple(int(t) for t in key.split()): row
            for key, row in spec.get("contexts", {}).items()
        }
        return cls(
            vocab,
            default_row=spec["default"],
            context_rows=contexts,
            context_window=spec.get("context_window"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "TableScorer":
        with Path(path).open(encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


class NGramModel:
    """Add-k smoothed n-gram model over engine token ids.

    P(t | ctx) = (count(ctx, t) + k) / (count(ctx, .) + k * |V|), where |V|
    is the vocabulary size (end token included, the start sentinel not).
    Contexts are the last n-1 ids of the start-padded prefix.
    """

    def __init__(
        self,
        n: int,
        k: float,
        vocab: Vocabulary,
        counts: dict[tuple[int, ...], Counter],
    ) -> None:
        if n < 1:
            raise ValueError("n-gram order must be at least 1")
        if k <= 0:
            raise ValueError("smoothing constant k must be positive")
        self.n = n
        self.k = k
        self.vocab = vocab
        self.counts = counts
        self._totals = {ctx: sum(c.values()) for ctx, c in counts.items()}

    def _context(self, prefix: Sequence[int]) -> tuple[int, ...]:
        if self.n == 1:
            return ()
        padded = [BOS_ID] * (self.n - 1) + list(prefix)
        return tuple(padded[-(self.n - 1) :])

    def prob(self, token: int, prefix: Sequence[int]) -> float:
        ctx = self._context(prefix)
        count = self.counts.get(ctx, Counter())[token]
        total = self._totals.get(ctx, 0)
        return (count + self.k) / (total + self.k * len(self.vocab))

    def score_step(self, prefixes: Sequence[Sequence[int]]) -> StepScores:
        _check_prefixes(prefixes, self.vocab)
        size = len(self.vocab)
        rows = np.empty((len(prefixes), size), dtype=np.float64)
        for i, prefix in enumerate(prefixes):
            ctx = self._context(prefix)
            counter = self.counts.get(ctx)
            denom = self._totals.get(ctx, 0) + self.k * size
            row = np.full(size, self.k, dtype=np.float64)
            if counter:
                row[list(counter.keys())] += list(counter.values())
            rows[i] = np.log(row / denom)
        return StepScores(logprobs=rows)

    def save(self, path: str | Path) -> None:
        payload = {
            "n": self.n,
            "k": self.k,
            "tokens": list(self.vocab.tokens),
            "eos_id": self.vocab.eos_id,
            "counts": {
                " ".join(str(t) for t in ctx): {str(t): c for t, c in counter.items()}
                for ctx, counter in self.counts.items()
            },
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NGramModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        vocab = Vocabulary(payload["tokens"], eos_id=payload["eos_id"])
        counts = {
            tuple(int(t) for t in ctx.split()) if ctx else (): Counter(
                {int(t): c for t, c in counter.items()}
            )
            for ctx, counter in payload["counts"].items()
        }
        return cls(n=payload["n"], k=payload["k"], vocab=vocab, counts=counts)


def train_ngram(
    corpus: Sequence[Sequence[int]],
    n: int,
    k: float,
    vocab: Vocabulary,
) -> NGramModel:
    """Count transition events: n-1 start pads per sequence, one end event each."""
    if n < 1:
        raise ValueError("n-gram order must be at least 1")
    if k <= 0:
        raise ValueError("smoothing constant k must be positive")
    if not corpus:
        raise ValueError("cannot train on an empty corpus: no events")
    counts: dict[tuple[int, ...], Counter] = {}
    for sequence in corpus:
        for token in sequence:
            if not 0 <= token < len(vocab):
                raise ValueError(f"corpus token id {token} out of vocabulary")
        context = [BOS_ID] * (n - 1)
        for token in list(sequence) + [vocab.eos_id]:
            key = tuple(context)
            counts.setdefault(key, Counter())[token] += 1
            if n > 1:
                context = context[1:] + [token]
    return NGramModel(n=n, k=k, vocab=vocab, counts=counts)


# --- bridge wire protocol -------------------------------------------------
#
# Newline-delimited JSON over a byte stream. All floats are finite doubles;
# negative infinity travels as the string "-inf".

NEG_INF_WIRE = "-inf"


class RemoteScorerError(RuntimeError):
    """Transport failure or malformed bridge reply; carries the raw reply."""

    def __init__(self, message: str, reply: object = None) -> None:
        super().__init__(message)
        self.reply = reply


def encode_rows(rows: np.ndarray | Sequence[Sequence[float]]) -> list[list[float | str]]:
    return [
        [NEG_INF_WIRE if math.isinf(v) and v < 0 else float(v) for v in row]
        for row in rows
    ]


def decode_rows(rows: object) -> np.ndarray:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise RemoteScorerError("score rows must be a list of lists", rows)
    decoded = []
    for row in rows:
        values = []
        for v in row:
            if v == NEG_INF_WIRE:
                values.append(float("-inf"))
            elif isinstance(v, (int, float)) and math.isfinite(v):
                values.append(float(v))
            else:
                raise RemoteScorerError(f"bad float on the wire: {v!r}", rows)
        decoded.append(values)
    return np.array(decoded, dtype=np.float64)


class _LineChannel:
    """Sequential request/reply over a pair of binary streams."""

    def __init__(self, reader, writer, closer=None) -> None:
        self._reader = reader
        self._writer = writer
        self._closer = closer
        self._lock = threading.Lock()

    def request(self, message: dict) -> dict:
        with self._lock:
            payload = json.dumps(message) + "\n"
            self._writer.write(payload.encode("utf-8"))
            self._writer.flush()
            line = self._reader.readline()
        if not line:
            raise RemoteScorerError("bridge closed the connection", None)
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RemoteScorerError(
                f"malformed bridge reply: {line[:200]!r}", line
            ) from exc
        if not isinstance(reply, dict):
            raise RemoteScorerError("bridge reply is not an object", reply)
        return reply

    def send_only(self, message: dict) -> None:
        with self._lock:
            try:
                self._writer.write((json.dumps(message) + "\n").encode("utf-8"))
                self._writer.flush()
            except (BrokenPipeError, OSError, ValueError):
                pass

    def close(self) -> None:
        if self._closer is not None:
            self._closer()


def _open_channel(endpoint: str) -> _LineChannel:
    if endpoint.startswith("tcp://"):
        host, _, port = endpoint[len("tcp://") :].rpartition(":")
        sock = socket.create_connection((host, int(port)))
        reader = sock.makefile("rb")
        writer = sock.makefile("wb")

        def close() -> None:
            reader.close()
            writer.close()
            sock.close()

        return _LineChannel(reader, writer, close)
    if endpoint.startswith("exec:"):
        argv = shlex.split(endpoint[len("exec:") :])
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)

        def close() -> None:
            for stream in (proc.stdin, proc.stdout):
                try:
                    stream.close()
                except OSError:
                    pass
            proc.wait(timeout=10)

        return _LineChannel(proc.stdout, proc.stdin, close)
    raise ValueError(f"unsupported endpoint {endpoint!r} (use tcp://host:port or exec:cmd)")


class RemoteScorer:
    """Client for a bridge serving the scorer wire protocol.

    Requests are serialized per connection, so one instance may be shared
    by concurrent decodes of different examples.
    """

    def __init__(self, channel: _LineChannel, vocab: Vocabulary) -> None:
        self._channel = channel
        self.vocab = vocab

    @classmethod
    def connect(cls, endpoint: str) -> "RemoteScorer":
        channel = _open_channel(endpoint)
        reply = channel.request({"type": "hello"})
        if reply.get("type") != "vocab":
            raise RemoteScorerError("expected a vocab reply to hello", reply)
        vocab = Vocabulary(reply["tokens"], eos_id=reply["eos_id"])
        return cls(channel, vocab)

    def _roundtrip(self, message: dict, expected: str) -> dict:
        reply = self._channel.request(message)
        if reply.get("type") != expected:
            raise RemoteScorerError(
                f"expected {expected!r} reply, got {reply.get('type')!r}", reply
            )
        return reply

    def score_step(self, prefixes: Sequence[Sequence[int]]) -> StepScores:
        _check_prefixes(prefixes, self.vocab)
        reply = self._roundtrip(
            {"type": "score", "prefixes": [list(p) for p in prefixes]}, "scores"
        )
        logprobs = decode_rows(reply["logprobs"])
        if logprobs.shape != (len(prefixes), len(self.vocab)):
            raise RemoteScorerError("score reply shape mismatch", reply)
        copy = None
        if "copy_logprobs" in reply:
            copy = decode_rows(reply["copy_logprobs"])
        try:
            return StepScores(logprobs=logprobs, copy_logprobs=copy)
        except ValueError as exc:
            raise RemoteScorerError(f"invalid score rows: {exc}", reply) from exc

    def tokenize(self, text: str) -> list[int]:
        reply = self._roundtrip({"type": "tokenize", "text": text}, "tokens")
        ids = reply.get("ids")
        if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
            raise RemoteScorerError("tokenize reply ids malformed", reply)
        return ids

    def fetch_attention(self, text: str | None = None) -> tuple[np.ndarray, str]:
        """Self-attention matrix plus the bridge's declared provenance string."""
        message: dict = {"type": "attn"}
        if text is not None:
            message["text"] = text
        reply = self._roundtrip(message, "attn")
        matrix = decode_rows(reply["matrix"])
        return matrix, str(reply.get("provenance", ""))

    def close(self) -> None:
        self._channel.send_only({"type": "close"})
        self._channel.close()

    def __enter__(self) -> "RemoteScorer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
