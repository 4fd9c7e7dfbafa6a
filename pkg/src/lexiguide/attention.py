"""Token-importance features from a self-attention graph.

The graph is an n-by-n matrix E with E(i, j) the attention from token i to
token j, column-normalized: every column sums to 1. A producer whose
attention is row-stochastic has to transpose or renormalize before handing
matrices over; nothing here renormalizes silently.

Static features: out-degree centrality (row sums of E) and in-degree
centrality (column sums of the row-normalized transition matrix T).
Dynamic features: the token's step probability in the vocabulary
distribution and, when available, in the copy distribution. Features are
computed and exported for external classifiers only; no classifier ships
here. The conventional labeling downstream is to treat constraint tokens
whose step probability exceeded a threshold at some decoding step as
positives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

COLUMN_SUM_TOL = 1e-6


@dataclass(frozen=True)
class FeatureVector:
    vocab_prob: float
    out_degree: float
    in_degree: float
    copy_prob: float | None = None

    def to_record(self) -> dict:
        record = {
            "vocab_prob": self.vocab_prob,
            "out_degree": self.out_degree,
            "in_degree": self.in_degree,
        }
        if self.copy_prob is not None:
            record["copy_prob"] = self.copy_prob
        return record


def _as_square(E: np.ndarray) -> np.ndarray:
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise ValueError(f"attention graph must be square, got shape {E.shape}")
    if (E < 0).any():
        raise ValueError("attention weights must be non-negative")
    return E


def validate_attention_graph(E: np.ndarray) -> np.ndarray:
    """Check the column-stochastic convention, naming the first bad column."""
    E = _as_square(E)
    sums = E.sum(axis=0)
    bad = np.nonzero(np.abs(sums - 1.0) > COLUMN_SUM_TOL)[0]
    if bad.size:
        raise ValueError(f"column {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")
    return E


def out_degree(E: np.ndarray) -> np.ndarray:
    """Row sums of the validated graph: how much token i contributes to others."""
    return validate_attention_graph(E).sum(axis=1)


def transition_matrix(E: np.ndarray) -> np.ndarray:
    """Rows of E normalized by their sums; requires every row sum positive."""
    E = _as_square(E)
    sums = E.sum(axis=1)
    bad = np.nonzero(sums <= 0)[0]
    if bad.size:
        raise ValueError(f"row {int(bad[0])} sums to {sums[bad[0]]!r}; cannot normalize")
    return E / sums[:, None]


def in_degree_centrality(E: np.ndarray) -> np.ndarray:
    """Column sums of the transition matrix: how much transition mass lands
    on each token."""
    return transition_matrix(E).sum(axis=0)


def constraint_features(
    token: int,
    step_logprob_row: np.ndarray,
    E: np.ndarray,
    position: int,
    copy_logprob_row: np.ndarray | None = None,
) -> FeatureVector:
    """Assemble the four-feature vector for one constraint token.

    ``position`` indexes the token's occurrence in the source that the
    attention graph covers. ``copy_prob`` stays absent (not zero) when no
    copy distribution is provided.
    """
    row = np.asarray(step_logprob_row, dtype=np.float64)
    if not 0 <= token < row.shape[0]:
        raise ValueError(f"token id {token} out of range for the score row")
    out = out_degree(E)
    if not 0 <= position < out.shape[0]:
        raise ValueError(f"position {position} out of range for a {out.shape[0]}-token graph")
    in_deg = in_degree_centrality(E)
    copy_prob = None
    if copy_logprob_row is not None:
        copy_prob = math.exp(float(np.asarray(copy_logprob_row)[token]))
    return FeatureVector(
        vocab_prob=math.exp(float(row[token])),
        out_degree=float(out[position]),
        in_degree=float(in_deg[position]),
        copy_prob=copy_prob,
    )


def write_feature_records(
    path: str | Path,
    records: Iterable[dict],
    provenance: str,
) -> int:
    """Dump feature records as line-delimited JSON for external classifiers.

    The first line is a header carrying the bridge's declared attention
    provenance verbatim. Returns the number of data records written.
    """
    count = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        handle.write(json.dumps({"provenance": provenance}) + "\n")
        for record in records:
            handle.write(json.dumps(record) + "\n")
            count += 1
    return count
