"""Length-prefixed JSON message framing.

A frame is a 4-byte little-endian unsigned payload length followed by a
UTF-8 JSON document. Every message is an envelope

    {"id": <u64>, "kind": <string>, "payload": <object>}

and responses echo the request id. Floats are written as decimal with 17
significant digits, which round-trips IEEE double exactly, so a state
serialized on one side and replayed on the other is bit-identical; keys
are emitted sorted for the same reason. Frames above 64 MiB are refused
on both ends.
"""

import json
import struct

import numpy as np

MAX_FRAME = 64 * 1024 * 1024
_LEN = struct.Struct("<I")


class ProtocolError(Exception):
    """Malformed frame or envelope; the session is not recoverable."""


def _write(obj, out):
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        f = float(obj)
        if f != f or f in (float("inf"), float("-inf")):
            raise ProtocolError("non-finite number is not representable")
        if f == int(f) and abs(f) < 1e16:
            # keep integral floats readable and exact
            out.append(f"{f:.1f}")
        else:
            out.append(format(f, ".17g"))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _write(obj.tolist(), out)
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for k, item in enumerate(obj):
            if k:
                out.append(",")
            _write(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for k, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise ProtocolError(f"object keys must be strings, got {type(key).__name__}")
            if k:
                out.append(",")
            out.append(json.dumps(key))
            out.append(":")
            _write(obj[key], out)
        out.append("}")
    else:
        raise ProtocolError(f"cannot serialize {type(obj).__name__}")


def wire_dumps(obj):
    """Serialize to canonical wire bytes (sorted keys, 17-digit floats)."""
    out = []
    _write(obj, out)
    return "".join(out).encode("utf-8")


def wire_loads(data):
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"payload is not UTF-8 JSON: {exc}") from None
    return obj


def check_envelope(msg):
    """Validate the frame-level contract; returns the envelope."""
    if not isinstance(msg, dict):
        raise ProtocolError("envelope must be a JSON object")
    rid = msg.get("id")
    if not isinstance(rid, int) or isinstance(rid, bool) or not (0 <= rid < 2**64):
        raise ProtocolError("envelope id must be a u64")
    if not isinstance(msg.get("kind"), str):
        raise ProtocolError("envelope kind must be a string")
    if not isinstance(msg.get("payload"), dict):
        raise ProtocolError("envelope payload must be an object")
    return msg


def encode_frame(obj):
    payload = wire_dumps(obj)
    if len(payload) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds the 64 MiB cap")
    return _LEN.pack(len(payload)) + payload


def read_frame(rfile):
    """Read one frame from a binary stream; None on clean EOF."""
    head = rfile.read(4)
    if len(head) == 0:
        return None
    if len(head) < 4:
        raise ProtocolError("truncated length prefix")
    (n,) = _LEN.unpack(head)
    if n == 0:
        raise ProtocolError("empty frame")
    if n > MAX_FRAME:
        raise ProtocolError(f"declared length {n} exceeds the 64 MiB cap")
    payload = b""
    while len(payload) < n:
        chunk = rfile.read(n - len(payload))
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        payload += chunk
    return wire_loads(payload)


def write_frame(wfile, obj):
    wfile.write(encode_frame(obj))
    wfile.flush()
