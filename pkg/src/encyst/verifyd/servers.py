"""TCP servers for the model endpoint and the verification authority."""

from __future__ import annotations

import socketserver
import threading

from ..fingerprint import FingerprintPool, PoolExhausted
from ..models import ModelHandle
from . import protocol as proto


class _BaseServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, handler):
        super().__init__(address, handler)
        self.request_count = 0
        self._count_lock = threading.Lock()

    def count_request(self):
        with self._count_lock:
            self.request_count += 1

    @property
    def address(self):
        return self.server_address


class _StreamHandler(socketserver.StreamRequestHandler):
    """Reads framed messages until EOF; one response per request."""

    def handle(self):
        while True:
            try:
                message = proto.read_message(self.rfile)
            except proto.ProtocolError as exc:
                self._reply(proto.error_response(exc.code, str(exc)))
                return
            if message is None:
                return
            self.server.count_request()
            try:
                reply = self.dispatch(message)
            except proto.ProtocolError as exc:
                reply = proto.error_response(exc.code, str(exc))
            except Exception as exc:  # noqa: BLE001 - surfaced as code 4
                reply = proto.error_response(proto.ERR_INTERNAL, repr(exc))
            self._reply(reply)

    def _reply(self, payload):
        try:
            self.wfile.write(proto.encode_message(payload))
            self.wfile.flush()
        except OSError:
            pass

    def dispatch(self, message: dict) -> dict:
        raise NotImplementedError


class ModelServer(_BaseServer):
    """Stateless top-1 prediction endpoint."""

    def __init__(self, handle: ModelHandle, address=("127.0.0.1", 0)):
        self.handle = handle
        super().__init__(address, _ModelHandler)


class _ModelHandler(_StreamHandler):
    def dispatch(self, message):
        if message["type"] != "predict":
            raise proto.ProtocolError(proto.ERR_MALFORMED,
                                      f"unsupported type {message['type']!r}")
        try:
            request_id = message["request_id"]
            image = proto.image_from_wire(message["image"])
        except KeyError as exc:
            raise proto.ProtocolError(proto.ERR_MALFORMED,
                                      f"missing field {exc}") from exc
        label = int(self.server.handle.predict_top1(image)[0])
        return proto.predict_response(label, request_id)


class VerificationServer(_BaseServer):
    """Issues disposable fingerprint sets to authorized clients."""

    def __init__(self, pool: FingerprintPool, tokens,
                 address=("127.0.0.1", 0), max_v: int = 10):
        self.pool = pool
        self.tokens = set(tokens)
        self.max_v = max_v
        super().__init__(address, _VerificationHandler)


class _VerificationHandler(_StreamHandler):
    def dispatch(self, message):
        if message["type"] != "issue":
            raise proto.ProtocolError(proto.ERR_MALFORMED,
                                      f"unsupported type {message['type']!r}")
        token = message.get("token")
        if token not in self.server.tokens:
            raise proto.ProtocolError(proto.ERR_UNAUTHORIZED,
                                      "unknown session token")
        v = message.get("v")
        if not isinstance(v, int) or not 1 <= v <= self.server.max_v:
            raise proto.ProtocolError(
                proto.ERR_MALFORMED,
                f"v must be an integer in [1, {self.server.max_v}]")
        try:
            issued = self.server.pool.issue(v)
        except PoolExhausted as exc:
            raise proto.ProtocolError(proto.ERR_POOL_EXHAUSTED,
                                      str(exc)) from exc
        return proto.issue_response(issued.issuance_id, issued.pairs)


def serve_model(handle: ModelHandle, address=("127.0.0.1", 0)) -> ModelServer:
    """Bind and start serving predictions on a background thread."""
    server = ModelServer(handle, address)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


def serve_verification(pool: FingerprintPool, tokens,
                       address=("127.0.0.1", 0),
                       max_v: int = 10) -> VerificationServer:
    server = VerificationServer(pool, tokens, address, max_v=max_v)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server
