"""Scoring backends: a fixed table for conformance testing and an optional
neural language model behind the same interface.

Every backend exposes the frozen session vocabulary, one log-probability
row per requested prefix, tokenization into its own id space, and an
optional self-attention matrix with a declared provenance string.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence


class BackendError(ValueError):
    """Request-level failure; reported to the client, never fatal."""


def log_row(probs: Sequence[float]) -> list[float]:
    return [math.log(p) if p > 0.0 else float("-inf") for p in probs]


class TableBackend:
    """Serves a fixed distribution table; no model is loaded.

    The table format matches the engine's table-scorer files: tokens,
    eos_id, a default probability row, and optional per-context rows keyed
    by space-joined prefix ids (a context_window restricts the key to the
    last N tokens).
    """

    def __init__(
        self,
        spec: dict,
        copy_spec: dict | None = None,
        attn_matrix: list[list[float]] | None = None,
        provenance: str = "fixed-table",
    ) -> None:
        self.tokens: list[str] = list(spec["tokens"])
        self.eos_id: int = int(spec["eos_id"])
        if not 0 <= self.eos_id < len(self.tokens):
            raise ValueError("eos_id out of range")
        self._index = {token: i for i, token in enumerate(self.tokens)}
        self._window = spec.get("context_window")
        self._default = log_row(spec["default"])
        self._rows = {
            key: log_row(row) for key, row in spec.get("contexts", {}).items()
        }
        self._copy = None
        if copy_spec is not None:
            self._copy = {
                "default": log_row(copy_spec["default"]),
                "rows": {k: log_row(r) for k, r in copy_spec.get("contexts", {}).items()},
                "window": copy_spec.get("context_window"),
            }
        self.attn_matrix = attn_matrix
        self.provenance = provenance

    @classmethod
    def from_files(
        cls,
        table_path: str | Path,
        copy_path: str | Path | None = None,
        attn_path: str | Path | None = None,
        provenance: str = "fixed-table",
    ) -> "TableBackend":
        spec = json.loads(Path(table_path).read_text(encoding="utf-8"))
        copy_spec = (
            json.loads(Path(copy_path).read_text(encoding="utf-8")) if copy_path else None
        )
        attn = json.loads(Path(attn_path).read_text(encoding="utf-8")) if attn_path else None
        return cls(spec, copy_spec=copy_spec, attn_matrix=attn, provenance=provenance)

    def _key(self, prefix: Sequence[int], window) -> str:
        if window is None:
            effective = prefix
        elif window == 0:
            effective = []
        else:
            effective = prefix[-window:]
        return " ".join(str(t) for t in effective)

    def _check(self, prefixes) -> None:
        if not isinstance(prefixes, list) or not prefixes:
            raise BackendError("prefixes must be a non-empty list")
        for prefix in prefixes:
            if not isinstance(prefix, list):
                raise BackendError("each prefix must be a list of token ids")
            for token in prefix:
                if not isinstance(token, int) or not 0 <= token < len(self.tokens):
                    raise BackendError(f"token id {token!r} out of range")

    def score(self, prefixes) -> tuple[list[list[float]], list[list[float]] | None]:
        self._check(prefixes)
        rows = [
            self._rows.get(self._key(p, self._window), self._default) for p in prefixes
        ]
        copy_rows = None
        if self._copy is not None:
            copy_rows = [
                self._copy["rows"].get(self._key(p, self._copy["window"]), self._copy["default"])
                for p in prefixes
            ]
        return rows, copy_rows

    def tokenize(self, text: str) -> list[int]:
        ids = []
        for word in str(text).casefold().split():
            if word not in self._index:
                raise BackendError(f"token {word!r} not in vocabulary")
            ids.append(self._index[word])
        return ids

    def attention(self, text: str | None = None):
        if self.attn_matrix is None:
            raise BackendError("no attention matrix configured")
        return self.attn_matrix, self.provenance


class ModelBackend:
    """Causal language model served through the same interface.

    Loads a Hugging Face checkpoint; scoring takes the model's next-token
    distribution after each prefix, and attention is the head-mean of one
    self-attention layer over the tokenized text. Requires the optional
    [model] extra and a downloadable checkpoint, so conformance tests use
    TableBackend instead.
    """

    def __init__(self, model_name: str, attn_layer: int = -1) -> None:
        try:
            import torch
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise RuntimeError(
                "model mode needs the [model] extra (transformers, torch)"
            ) from exc
        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(model_name)
        self._model = AutoModelForCausalLM.from_pretrained(model_name)
        self._model.eval()
        self._attn_layer = attn_layer
        vocab = self._tokenizer.get_vocab()
        self.tokens = [token for token, _ in sorted(vocab.items(), key=lambda kv: kv[1])]
        self.eos_id = int(self._tokenizer.eos_token_id)
        self.provenance = f"{model_name}:self-attn-layer{attn_layer}:mean-heads"

    def _check(self, prefixes) -> None:
        if not isinstance(prefixes, list) or not prefixes:
            raise BackendError("prefixes must be a non-empty list")
        for prefix in prefixes:
            if not isinstance(prefix, list) or not all(
                isinstance(t, int) and 0 <= t < len(self.tokens) for t in prefix
            ):
                raise BackendError("bad prefix token ids")

    def score(self, prefixes):  # pragma: no cover - needs a real checkpoint
        self._check(prefixes)
        torch = self._torch
        rows = []
        bos = self.eos_id if self._tokenizer.bos_token_id is None else int(
            self._tokenizer.bos_token_id
        )
        with torch.no_grad():
            for prefix in prefixes:
                ids = torch.tensor([[bos] + list(prefix)])
                logits = self._model(ids).logits[0, -1]
                rows.append(torch.log_softmax(logits, dim=-1).tolist())
        return rows, None

    def tokenize(self, text: str) -> list[int]:  # pragma: no cover
        return [int(t) for t in self._tokenizer.encode(text, add_special_tokens=False)]

    def attention(self, text: str | None = None):  # pragma: no cover
        if not text:
            raise BackendError("attention needs a text field")
        torch = self._torch
        ids = self._tokenizer(text, return_tensors="pt")
        with torch.no_grad():
            out = self._model(**ids, output_attentions=True)
        # mean over heads, then column-normalize to the expected convention
        layer = out.attentions[self._attn_layer][0].mean(dim=0)
        matrix = layer / layer.sum(dim=0, keepdim=True)
        return matrix.tolist(), self.provenance
