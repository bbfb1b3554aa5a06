"""Shared stdin/stdout loop for the demo simulator executables."""

from __future__ import annotations

import sys
from typing import Callable, Iterable

from ..errors import MalformedLineError
from ..protocol import Done, ErrorMsg, Rejected, SimMessage, SimRequest, encode_message, parse_request

Handler = Callable[[SimRequest], Iterable[SimMessage]]


def run_simulator(handler: Handler) -> int:
    """Serve exactly one request from stdin; returns the process exit code."""
    line = sys.stdin.readline()
    if not line.strip():
        sys.stdout.write(encode_message(ErrorMsg("no request received")))
        return 1
    try:
        request = parse_request(line)
    except MalformedLineError as exc:
        sys.stdout.write(encode_message(ErrorMsg(f"bad request: {exc}")))
        return 1

    last: SimMessage | None = None
    try:
        for msg in handler(request):
            sys.stdout.write(encode_message(msg))
            sys.stdout.flush()
            last = msg
    except BrokenPipeError:
        return 1
    except Exception as exc:  # surface crashes as protocol errors
        try:
            sys.stdout.write(encode_message(ErrorMsg(f"{type(exc).__name__}: {exc}")))
            sys.stdout.flush()
        except BrokenPipeError:
            pass
        return 1
    return 0 if isinstance(last, (Done, Rejected)) else 1


def number(config: dict, key: str) -> float:
    """Fetch a required numeric parameter; raises TypeError with a clear message."""
    if key not in config:
        raise TypeError(f"missing required parameter {key!r}")
    value = config[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"parameter {key!r} must be a number, got {value!r}")
    return float(value)
