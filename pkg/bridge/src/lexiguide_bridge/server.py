"""Session loop and transports for the scorer wire protocol.

Newline-delimited JSON over a byte stream, one reply per request:

    {"type":"hello"}                  -> {"type":"vocab","tokens":[...],"eos_id":N}
    {"type":"score","prefixes":[...]} -> {"type":"scores","logprobs":[[...]],
                                          "copy_logprobs":[[...]] when configured}
    {"type":"tokenize","text":...}    -> {"type":"tokens","ids":[...]}
    {"type":"attn"[,"text":...]}      -> {"type":"attn","matrix":[[...]],"provenance":...}
    {"type":"close"}                  -> session ends

All floats are finite doubles; negative infinity is encoded as the string
"-inf". Malformed or failing requests get {"type":"error","msg":...} and
the session stays alive. Within a connection requests are answered
strictly in order; connections are handled concurrently.
"""

from __future__ import annotations

import argparse
import json
import math
import socketserver
import sys

from .backends import BackendError, ModelBackend, TableBackend


def encode_rows(rows):
    return [
        ["-inf" if (isinstance(v, float) and math.isinf(v) and v < 0) else v for v in row]
        for row in rows
    ]


def handle_session(reader, writer, backend) -> None:
    """Serve one connection until close or EOF; errors never end the loop."""

    def send(message: dict) -> None:
        writer.write((json.dumps(message) + "\n").encode("utf-8"))
        writer.flush()

    while True:
        line = reader.readline()
        if not line:
            return
        if not line.strip():
            send({"type": "error", "msg": "blank request line"})
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            send({"type": "error", "msg": f"malformed JSON: {exc.msg}"})
            continue
        if not isinstance(message, dict) or "type" not in message:
            send({"type": "error", "msg": "request must be an object with a type"})
            continue
        kind = message["type"]
        try:
            if kind == "close":
                return
            if kind == "hello":
                send({"type": "vocab", "tokens": backend.tokens, "eos_id": backend.eos_id})
            elif kind == "score":
                rows, copy_rows = backend.score(message.get("prefixes"))
                reply = {"type": "scores", "logprobs": encode_rows(rows)}
                if copy_rows is not None:
                    reply["copy_logprobs"] = encode_rows(copy_rows)
                send(reply)
            elif kind == "tokenize":
                if "text" not in message:
                    raise BackendError("tokenize needs a text field")
                send({"type": "tokens", "ids": backend.tokenize(message["text"])})
            elif kind == "attn":
                matrix, provenance = backend.attention(message.get("text"))
                send({"type": "attn", "matrix": encode_rows(matrix), "provenance": provenance})
            else:
                send({"type": "error", "msg": f"unknown request type {kind!r}"})
        except BackendError as exc:
            send({"type": "error", "msg": str(exc)})


def serve_stdio(backend) -> None:
    handle_session(sys.stdin.buffer, sys.stdout.buffer, backend)


def serve_tcp(backend, host: str, port: int) -> None:
    class Handler(socketserver.StreamRequestHandler):
        def handle(self) -> None:
            handle_session(self.rfile, self.wfile, backend)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server((host, port), Handler) as server:
        bound = server.server_address
        print(f"listening on tcp://{bound[0]}:{bound[1]}", file=sys.stderr, flush=True)
        server.serve_forever()


def build_backend(args: argparse.Namespace):
    if bool(args.table) == bool(args.model):
        raise SystemExit("exactly one of --table or --model is required")
    if args.table:
        return TableBackend.from_files(
            args.table,
            copy_path=args.copy_table,
            attn_path=args.attn,
            provenance=args.provenance or "fixed-table",
        )
    return ModelBackend(args.model, attn_layer=args.attn_layer)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="lexiguide-bridge",
        description="serve step log-probabilities over newline-delimited JSON",
    )
    parser.add_argument("--table", help="fixed distribution table (conformance mode)")
    parser.add_argument("--copy-table", help="optional copy-distribution table")
    parser.add_argument("--attn", help="optional fixed attention matrix JSON")
    parser.add_argument("--provenance", help="attention provenance string")
    parser.add_argument("--model", help="Hugging Face causal LM name (needs [model] extra)")
    parser.add_argument("--attn-layer", type=int, default=-1)
    parser.add_argument("--tcp", type=int, metavar="PORT",
                        help="serve on a TCP port instead of stdio")
    parser.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)

    backend = build_backend(args)
    if args.tcp is not None:
        serve_tcp(backend, args.host, args.tcp)
    else:
        serve_stdio(backend)


if __name__ == "__main__":
    main()
