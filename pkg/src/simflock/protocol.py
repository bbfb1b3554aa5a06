"""Line-delimited JSON contract between the orchestrator and simulators.

One request per trial per connection. The simulator answers with zero or
more `report` messages (strictly increasing steps) followed by exactly one
terminal message: `done`, `rejected`, or `error`. Over stdin/stdout the
messages are newline-delimited; over TCP each line travels in a frame with
a 4-byte big-endian length prefix (no trailing newline inside the frame).

Stdlib-only on purpose: simulator executables import this module and must
start fast.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Union

from .errors import MalformedLineError, NonFiniteValueError

PROTO_VERSION = 1


@dataclass(frozen=True)
class SimRequest:
    trial_id: int
    config: dict[str, float | int | str]
    seed: int
    report_steps: int | None = None


@dataclass(frozen=True)
class Report:
    step: int
    metrics: dict[str, float]


@dataclass(frozen=True)
class Done:
    metrics: dict[str, float]


@dataclass(frozen=True)
class Rejected:
    reason: str


@dataclass(frozen=True)
class ErrorMsg:
    detail: str


SimMessage = Union[Report, Done, Rejected, ErrorMsg]


def _check_finite_number(key: str, value: object) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NonFiniteValueError(f"{key!r}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise NonFiniteValueError(f"{key!r} is not finite: {value!r}")


def encode_request(req: SimRequest) -> str:
    """One JSON line, keys in fixed order, newline-terminated."""
    for key, value in req.config.items():
        if isinstance(value, str):
            continue
        _check_finite_number(key, value)
    body: dict[str, object] = {
        "type": "run",
        "trial_id": req.trial_id,
        "config": dict(req.config),
        "seed": req.seed,
    }
    if req.report_steps is not None:
        body["report_steps"] = req.report_steps
    return json.dumps(body, separators=(",", ":")) + "\n"


def parse_request(line: str) -> SimRequest:
    """Simulator-side parse of a request line."""
    obj = _load_object(line)
    if obj.get("type") != "run":
        raise MalformedLineError(f"expected type 'run', got {obj.get('type')!r}")
    _require_keys(obj, {"type", "trial_id", "config", "seed"}, optional={"report_steps"})
    trial_id = _require_int(obj, "trial_id")
    seed = _require_int(obj, "seed")
    config = obj["config"]
    if not isinstance(config, dict):
        raise MalformedLineError("config must be an object")
    for key, value in config.items():
        if not isinstance(value, (int, float, str)) or isinstance(value, bool):
            raise MalformedLineError(f"config value {key!r} must be number or string")
    report_steps = obj.get("report_steps")
    if report_steps is not None:
        report_steps = _require_int(obj, "report_steps")
        if report_steps < 0:
            raise MalformedLineError("report_steps must be nonnegative")
    return SimRequest(trial_id=trial_id, config=dict(config), seed=seed,
                      report_steps=report_steps)


def encode_message(msg: SimMessage) -> str:
    """One JSON line for any simulator-side message."""
    if isinstance(msg, Report):
        if msg.step < 1:
            raise MalformedLineError("report step must be >= 1")
        body = {"type": "report", "step": msg.step, "metrics": _finite_metrics(msg.metrics)}
    elif isinstance(msg, Done):
        body = {"type": "done", "metrics": _finite_metrics(msg.metrics)}
    elif isinstance(msg, Rejected):
        body = {"type": "rejected", "reason": msg.reason}
    elif isinstance(msg, ErrorMsg):
        body = {"type": "error", "detail": msg.detail}
    else:
        raise TypeError(f"unknown message {msg!r}")
    return json.dumps(body, separators=(",", ":")) + "\n"


def _finite_metrics(metrics: dict[str, float]) -> dict[str, float]:
    out = {}
    for key, value in metrics.items():
        _check_finite_number(key, value)
        out[key] = float(value)
    return out


def parse_message(line: str) -> SimMessage:
    """Strict parse of one simulator message line."""
    obj = _load_object(line)
    kind = obj.get("type")
    if kind == "report":
        _require_keys(obj, {"type", "step", "metrics"})
        step = _require_int(obj, "step")
        if step < 1:
            raise MalformedLineError(f"report step must be >= 1, got {step}")
        return Report(step=step, metrics=_parse_metrics(obj))
    if kind == "done":
        _require_keys(obj, {"type", "metrics"})
        return Done(metrics=_parse_metrics(obj))
    if kind == "rejected":
        _require_keys(obj, {"type", "reason"})
        reason = obj["reason"]
        if not isinstance(reason, str):
            raise MalformedLineError("rejected reason must be a string")
        return Rejected(reason=reason)
    if kind == "error":
        _require_keys(obj, {"type", "detail"})
        detail = obj["detail"]
        if not isinstance(detail, str):
            raise MalformedLineError("error detail must be a string")
        return ErrorMsg(detail=detail)
    raise MalformedLineError(f"unknown message type {kind!r}")


def _load_object(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLineError(f"not valid JSON: {exc.msg}", offset=exc.pos) from None
    if not isinstance(obj, dict):
        raise MalformedLineError("message must be a JSON object")
    return obj


def _require_keys(obj: dict, required: set[str], optional: set[str] = frozenset()) -> None:
    keys = set(obj)
    missing = required - keys
    extra = keys - required - optional
    if missing:
        raise MalformedLineError(f"missing keys: {sorted(missing)}")
    if extra:
        raise MalformedLineError(f"unexpected keys: {sorted(extra)}")


def _require_int(obj: dict, key: str) -> int:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedLineError(f"{key} must be an integer, got {value!r}")
    return value


def _parse_metrics(obj: dict) -> dict[str, float]:
    metrics = obj["metrics"]
    if not isinstance(metrics, dict):
        raise MalformedLineError("metrics must be an object")
    out: dict[str, float] = {}
    for key, value in metrics.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MalformedLineError(f"metric {key!r} must be a number")
        if not math.isfinite(value):
            raise MalformedLineError(f"metric {key!r} is not finite")
        out[key] = float(value)
    return out


# TCP framing: 4-byte big-endian length, then the UTF-8 line without its
# trailing newline.

MAX_FRAME = 16 * 1024 * 1024


def write_frame(wfile, line: str) -> None:
    payload = line.rstrip("\n").encode("utf-8")
    wfile.write(struct.pack(">I", len(payload)) + payload)
    wfile.flush()


def read_frame(rfile) -> str | None:
    """Next frame as a line, or None on clean EOF."""
    header = rfile.read(4)
    if not header:
        return None
    if len(header) < 4:
        raise MalformedLineError("truncated frame header")
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise MalformedLineError(f"frame of {length} bytes exceeds limit")
    payload = rfile.read(length)
    if len(payload) < length:
        raise MalformedLineError("truncated frame payload")
    return payload.decode("utf-8")


def encode_hello() -> str:
    return json.dumps({"type": "hello", "proto": PROTO_VERSION}, separators=(",", ":")) + "\n"


def encode_ready(slots: int) -> str:
    return json.dumps({"type": "ready", "slots": slots}, separators=(",", ":")) + "\n"


def parse_handshake(line: str, expected: str) -> dict:
    obj = _load_object(line)
    if obj.get("type") != expected:
        raise MalformedLineError(f"expected {expected!r} handshake, got {obj.get('type')!r}")
    return obj
