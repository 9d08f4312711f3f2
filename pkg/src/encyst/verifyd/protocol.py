"""Length-prefixed JSON wire protocol shared by servers and clients.

Every message is a 4-byte big-endian length followed by a UTF-8 JSON
object with a ``type`` field. Images travel as base64-encoded single-image
IDX payloads, so a verification query is byte-schema-identical to an
ordinary prediction query.
"""

from __future__ import annotations

import base64
import json
import socket
import struct

import numpy as np

from ..data import image_from_idx_bytes, image_to_idx_bytes

ERR_MALFORMED = 1
ERR_UNAUTHORIZED = 2
ERR_POOL_EXHAUSTED = 3
ERR_INTERNAL = 4

MAX_MESSAGE = 16 * 1024 * 1024


class ProtocolError(ValueError):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def encode_message(payload: dict) -> bytes:
    body = json.dumps(payload, sort_keys=True).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def decode_message(data: bytes) -> dict:
    """Inverse of encode_message for a complete framed message."""
    if len(data) < 4:
        raise ProtocolError(ERR_MALFORMED, "frame header incomplete")
    (length,) = struct.unpack_from(">I", data, 0)
    if len(data) - 4 < length:
        raise ProtocolError(ERR_MALFORMED, "frame body incomplete")
    return _parse_body(data[4:4 + length])


def _parse_body(body: bytes) -> dict:
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(ERR_MALFORMED, f"bad JSON payload: {exc}") from exc
    if not isinstance(payload, dict) or "type" not in payload:
        raise ProtocolError(ERR_MALFORMED, "payload must be an object with a type")
    return payload


def read_message(stream) -> dict | None:
    """Read one framed message from a socket file; None on clean EOF."""
    header = stream.read(4)
    if not header:
        return None
    if len(header) < 4:
        raise ProtocolError(ERR_MALFORMED, "frame header incomplete")
    (length,) = struct.unpack(">I", header)
    if length > MAX_MESSAGE:
        raise ProtocolError(ERR_MALFORMED, f"frame of {length} bytes too large")
    body = stream.read(length)
    if len(body) < length:
        raise ProtocolError(ERR_MALFORMED, "frame body incomplete")
    return _parse_body(body)


def image_to_wire(image: np.ndarray) -> str:
    return base64.b64encode(image_to_idx_bytes(image)).decode("ascii")


def image_from_wire(text: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except Exception as exc:
        raise ProtocolError(ERR_MALFORMED, f"bad base64 image: {exc}") from exc
    try:
        return image_from_idx_bytes(raw)
    except ValueError as exc:
        raise ProtocolError(ERR_MALFORMED, f"bad image payload: {exc}") from exc


def predict_request(image: np.ndarray, request_id: str) -> dict:
    return {"type": "predict", "request_id": request_id,
            "image": image_to_wire(image)}


def predict_response(label: int, request_id: str) -> dict:
    return {"type": "predict_response", "request_id": request_id,
            "label": int(label)}


def issue_request(token: str, v: int) -> dict:
    return {"type": "issue", "token": token, "v": int(v)}


def issue_response(issuance_id: str, pairs) -> dict:
    return {"type": "issue_response", "issuance_id": issuance_id,
            "pairs": [{"image": image_to_wire(p.image),
                       "label": int(p.expected_label)} for p in pairs]}


def error_response(code: int, message: str) -> dict:
    return {"type": "error", "code": int(code), "message": message}


def send_message(sock: socket.socket, payload: dict) -> None:
    sock.sendall(encode_message(payload))


def recv_message(sock: socket.socket) -> dict | None:
    return read_message(sock.makefile("rb"))
