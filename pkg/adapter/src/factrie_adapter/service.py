"""Local-socket fallback for hosts that cannot bind the engine in-process.

One JSON object per line over a Unix domain socket. Requests carry an
``op`` (``create`` / ``mask`` / ``step`` / ``report``) plus arguments;
responses carry ``ok`` and the result, with negative infinity encoded as
null in logits arrays (the same sentinel the golden fixtures use).

Run the server with::

    python -m factrie_adapter.service --index kb.ftrx --socket /tmp/factrie.sock
"""

from __future__ import annotations

import argparse
import json
import socket
import socketserver
import threading
from pathlib import Path
from typing import Optional

import numpy as np

from factrie.engine import Mode

from .processor import AdapterConfig, AdapterHandle

NEG_INF = float("-inf")


def _encode_logits(values: np.ndarray) -> list:
    return [None if v == NEG_INF else v for v in values.tolist()]


def _decode_logits(values: list) -> np.ndarray:
    return np.array([NEG_INF if v is None else v for v in values], dtype=np.float64)


class _Connection(socketserver.StreamRequestHandler):
    def handle(self):
        sessions = {}
        next_id = 0
        handle: AdapterHandle = self.server.adapter_handle  # type: ignore[attr-defined]
        for line in self.rfile:
            try:
                req = json.loads(line)
                op = req["op"]
                if op == "create":
                    sid = next_id
                    next_id += 1
                    sessions[sid] = handle.new_session()
                    result = {"session": sid, "fingerprint": handle.tokenizer_fingerprint}
                elif op == "step":
                    session = sessions[req["session"]]
                    for tok in req["tokens"]:
                        handle.engine.step(session, int(tok))
                    result = {"mode": session.mode.value}
                elif op == "mask":
                    session = sessions[req["session"]]
                    logits = _decode_logits(req["logits"])
                    if session.mode is Mode.CONSTRAINED:
                        logits = handle.engine.mask_logits(session, logits)
                    result = {"logits": _encode_logits(logits)}
                elif op == "report":
                    session = sessions[req["session"]]
                    result = handle.engine.session_report(session).to_dict()
                else:
                    raise ValueError(f"unknown op {op!r}")
                payload = {"ok": True, "result": result}
            except Exception as exc:  # surfaced to the client, connection stays up
                payload = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
            self.wfile.write(json.dumps(payload).encode("utf-8") + b"\n")
            self.wfile.flush()


class EngineServer(socketserver.ThreadingUnixStreamServer):
    """Serves one index to any number of local clients."""

    daemon_threads = True

    def __init__(self, socket_path: str | Path, handle: AdapterHandle):
        self.adapter_handle = handle
        super().__init__(str(socket_path), _Connection)

    @classmethod
    def start_background(
        cls, socket_path: str | Path, handle: AdapterHandle
    ) -> "EngineServer":
        server = cls(socket_path, handle)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        return server


class RemoteSession:
    """Client-side mirror of one decoding session behind the socket."""

    def __init__(self, socket_path: str | Path):
        self._sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        self._sock.connect(str(socket_path))
        self._file = self._sock.makefile("rwb")
        created = self._call({"op": "create"})
        self.session_id = created["session"]
        self.fingerprint = created["fingerprint"]

    def _call(self, req: dict) -> dict:
        self._file.write(json.dumps(req).encode("utf-8") + b"\n")
        self._file.flush()
        line = self._file.readline()
        if not line:
            raise ConnectionError("engine server closed the connection")
        resp = json.loads(line)
        if not resp["ok"]:
            raise RuntimeError(resp["error"])
        return resp["result"]

    def step(self, tokens) -> str:
        return self._call(
            {"op": "step", "session": self.session_id, "tokens": list(map(int, tokens))}
        )["mode"]

    def mask_logits(self, logits: np.ndarray) -> np.ndarray:
        result = self._call(
            {
                "op": "mask",
                "session": self.session_id,
                "logits": _encode_logits(np.asarray(logits, dtype=np.float64)),
            }
        )
        return _decode_logits(result["logits"])

    def report(self) -> dict:
        return self._call({"op": "report", "session": self.session_id})

    def close(self) -> None:
        self._file.close()
        self._sock.close()


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Serve a factrie index over a Unix socket.")
    parser.add_argument("--index", required=True)
    parser.add_argument("--socket", required=True)
    parser.add_argument("--trigger", default="Fact:")
    args = parser.parse_args(argv)
    handle = AdapterHandle.open(args.index, cfg=AdapterConfig(trigger=args.trigger))
    server = EngineServer(args.socket, handle)
    print(f"serving {args.index} on {args.socket}")
    server.serve_forever()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
