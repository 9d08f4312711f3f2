"""Verifying client: obtain a fingerprint set, query the model API, decide."""

from __future__ import annotations

import socket
import uuid

from . import protocol as proto
from .verify import VerificationResult, verify


class ServerError(RuntimeError):
    def __init__(self, code: int, message: str):
        super().__init__(f"server error {code}: {message}")
        self.code = code


def _request(address, payload) -> dict:
    with socket.create_connection(address, timeout=10) as sock:
        proto.send_message(sock, payload)
        reply = proto.recv_message(sock)
    if reply is None:
        raise ConnectionError("server closed the connection without replying")
    if reply["type"] == "error":
        raise ServerError(reply["code"], reply["message"])
    return reply


def fetch_fingerprint_set(verification_address, token: str, v: int) -> dict:
    return _request(verification_address, proto.issue_request(token, v))


def query_model(model_address, image) -> int:
    reply = _request(model_address,
                     proto.predict_request(image, uuid.uuid4().hex))
    return int(reply["label"])


def client_verify(verification_address, model_address, v: int,
                  token: str) -> VerificationResult:
    """Issue one fingerprint set and spend exactly V model queries on it."""
    if v < 1:
        raise ValueError(f"v must be >= 1, got {v}")
    issued = fetch_fingerprint_set(verification_address, token, v)
    pairs = issued["pairs"]
    expected, observed = [], []
    with socket.create_connection(model_address, timeout=10) as sock:
        for pair in pairs:
            proto.send_message(
                sock, {"type": "predict", "request_id": uuid.uuid4().hex,
                       "image": pair["image"]})
            reply = proto.recv_message(sock)
            if reply is None:
                raise ConnectionError("model server closed mid-verification")
            if reply["type"] == "error":
                raise ServerError(reply["code"], reply["message"])
            expected.append(int(pair["label"]))
            observed.append(int(reply["label"]))
    return verify(expected, observed, queries_used=len(observed))
