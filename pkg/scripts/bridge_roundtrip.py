#!/usr/bin/env python3
"""Decode through the bridge subprocess and check it against in-process scoring.

Needs the bridge package installed (see bridge/). Spawns
`python -m lexiguide_bridge --table ...` on stdio, runs one constrained
decode remotely and locally, and reports whether the results agree.

Usage:
    python scripts/bridge_roundtrip.py [--table data/table3.json]
"""

import argparse
import sys
from pathlib import Path

from lexiguide import (
    Constraint,
    DecodeConfig,
    RemoteScorer,
    TableScorer,
    decode_dba,
)

REPO = Path(__file__).resolve().parent.parent


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--table", default=REPO / "data" / "table3.json")
    args = parser.parse_args()

    local = TableScorer.from_file(args.table)
    constraints = [Constraint("b", (local.vocab.id_of("b"),))]
    config = DecodeConfig(beam_size=8, max_len=2, mode="dba")

    remote = RemoteScorer.connect(f"exec:{sys.executable} -m lexiguide_bridge --table {args.table}")
    try:
        remote_result = decode_dba(remote, [], constraints, config)
    finally:
        remote.close()
    local_result = decode_dba(local, [], constraints, config)

    def show(name, result):
        text = " ".join(local.vocab.tokens[t] for t in result.tokens)
        print(f'{name:>7}: "{text}"  logprob={result.logprob:.6f}  finished={result.finished}')

    show("local", local_result)
    show("bridge", remote_result)
    agree = (
        local_result.tokens == remote_result.tokens
        and local_result.logprob == remote_result.logprob
    )
    print("bit-identical" if agree else "MISMATCH")
    sys.exit(0 if agree else 1)


if __name__ == "__main__":
    main()
