"""Bounded-concurrency trial dispatch over local subprocesses or TCP workers.

One coordinator thread owns all shared state: it pulls specs from a
(possibly lazy) stream, launches attempts on dispatch threads, and consumes
a single event queue. Intermediate reports therefore reach the caller's
callback serially and in arrival order, and the callback's prune decisions
travel back to the dispatching thread.

Failure taxonomy:
  * attempt failure (crash, timeout, protocol violation, `error` terminal)
    consumes one of the trial's attempts and is retried up to `retries`
    times on any live worker;
  * endpoint failure (cannot spawn or connect) does not consume an attempt;
    the trial is requeued and the endpoint is dropped after three
    consecutive connection failures.
"""

from __future__ import annotations

import os
import queue
import socket
import subprocess
import tempfile
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Union

import numpy as np

from .errors import (
    MalformedLineError,
    NoWorkersError,
    PoolExhaustedError,
    WorkerUnreachableError,
)
from .params import ParamValue
from .protocol import (
    Done,
    ErrorMsg,
    Rejected,
    Report,
    SimRequest,
    encode_hello,
    encode_request,
    parse_handshake,
    parse_message,
    read_frame,
    write_frame,
)
from .scheduling import Decision

DEFAULT_TIMEOUT = 300.0
CONNECT_TIMEOUT = 10.0
EXIT_GRACE = 10.0
MAX_CONSECUTIVE_FAILURES = 3


@dataclass(frozen=True)
class LocalProcess:
    """Simulator spawned as a subprocess per trial attempt."""

    command: tuple[str, ...]
    slots: int | None = None  # None: bounded only by max_concurrent

    def __post_init__(self) -> None:
        if not self.command:
            raise ValueError("command must be nonempty")

    def __str__(self) -> str:
        return f"local:{self.command[0]}"


@dataclass(frozen=True)
class RemoteTcp:
    """Worker reachable at host:port speaking the framed line protocol."""

    address: str

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.address.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"address must be host:port, got {self.address!r}")
        return host, int(port)

    def __str__(self) -> str:
        return f"tcp:{self.address}"


WorkerEndpoint = Union[LocalProcess, RemoteTcp]


@dataclass(frozen=True)
class Resources:
    cpus: int = 1


class TrialStatus(Enum):
    COMPLETED = "completed"
    FAILED = "failed"
    REJECTED = "rejected"
    PRUNED = "pruned"


@dataclass(frozen=True)
class TrialSpec:
    trial_id: int
    config: dict[str, ParamValue]
    seed: int
    resources: Resources = Resources()
    report_steps: int | None = None
    # study-wide constants merged into the wire config but not part of the
    # sampled parameter space (e.g. an output directory)
    wire_extras: dict[str, ParamValue] = field(default_factory=dict)


@dataclass
class TrialRecord:
    trial_id: int
    config: dict[str, ParamValue]
    status: TrialStatus
    metrics: dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0
    attempts: int = 1
    error: str | None = None  # failure detail or rejection reason


def derive_trial_seed(study_seed: int, trial_id: int) -> int:
    """Deterministic 63-bit per-trial seed."""
    state = np.random.SeedSequence((study_seed, trial_id)).generate_state(1, np.uint64)
    return int(state[0] >> 1)


# Events delivered to on_event, in coordinator order.

@dataclass(frozen=True)
class TrialStarted:
    trial_id: int
    attempt: int
    endpoint: str


@dataclass(frozen=True)
class TrialReport:
    trial_id: int
    step: int
    metrics: dict[str, float]


@dataclass(frozen=True)
class AttemptEnded:
    trial_id: int
    attempt: int


@dataclass(frozen=True)
class TrialFinished:
    record: TrialRecord


TrialEvent = Union[TrialStarted, TrialReport, AttemptEnded, TrialFinished]
EventCallback = Callable[[TrialEvent], "Decision | None"]


def dispatch_one(
    spec: TrialSpec,
    endpoint: WorkerEndpoint,
    timeout: float = DEFAULT_TIMEOUT,
    report_cb: Callable[[int, dict[str, float]], Decision] | None = None,
) -> TrialRecord:
    """Run one attempt against one endpoint.

    Returns a record for every simulator-level outcome (Failed covers
    crashes, timeouts, protocol violations, and `error` terminals). Raises
    WorkerUnreachableError when the endpoint cannot be spawned/contacted.
    """
    if isinstance(endpoint, LocalProcess):
        return _attempt_local(spec, endpoint, timeout, report_cb)
    if isinstance(endpoint, RemoteTcp):
        record, _ = _attempt_tcp(spec, endpoint, timeout, report_cb)
        return record
    raise TypeError(f"unknown endpoint {endpoint!r}")


def _request_line(spec: TrialSpec) -> str:
    config = {**spec.config, **spec.wire_extras}
    return encode_request(
        SimRequest(
            trial_id=spec.trial_id,
            config=config,
            seed=spec.seed,
            report_steps=spec.report_steps,
        )
    )


def _consume_messages(
    spec: TrialSpec,
    next_line: Iterator[str | None],
    stop: Callable[[], None],
    report_cb: Callable[[int, dict[str, float]], Decision] | None,
    started: float,
    timed_out: Callable[[], bool],
) -> tuple[TrialRecord | None, str | None]:
    """Shared message loop; returns (record, failure_detail)."""
    last_step = 0
    last_metrics: dict[str, float] = {}
    for line in next_line:
        if line is None:  # EOF before a terminal message
            break
        if not line.strip():
            continue
        try:
            msg = parse_message(line)
        except MalformedLineError as exc:
            stop()
            return None, f"protocol violation: {exc}"
        if isinstance(msg, Report):
            if msg.step <= last_step:
                stop()
                return None, f"protocol violation: report step {msg.step} after {last_step}"
            last_step = msg.step
            last_metrics = msg.metrics
            if report_cb is not None:
                if report_cb(msg.step, msg.metrics) is Decision.PRUNE:
                    stop()
                    return (
                        TrialRecord(
                            trial_id=spec.trial_id,
                            config=spec.config,
                            status=TrialStatus.PRUNED,
                            metrics=last_metrics,
                            wall_time=time.monotonic() - started,
                        ),
                        None,
                    )
            continue
        if isinstance(msg, Done):
            return (
                TrialRecord(
                    trial_id=spec.trial_id,
                    config=spec.config,
                    status=TrialStatus.COMPLETED,
                    metrics=msg.metrics,
                    wall_time=time.monotonic() - started,
                ),
                None,
            )
        if isinstance(msg, Rejected):
            return (
                TrialRecord(
                    trial_id=spec.trial_id,
                    config=spec.config,
                    status=TrialStatus.REJECTED,
                    metrics={},
                    wall_time=time.monotonic() - started,
                    error=msg.reason,
                ),
                None,
            )
        if isinstance(msg, ErrorMsg):
            return None, f"simulator error: {msg.detail}"
    if timed_out():
        return None, f"timed out after {time.monotonic() - started:.1f}s"
    return None, None  # EOF; caller fills in exit detail


def _attempt_local(
    spec: TrialSpec,
    endpoint: LocalProcess,
    timeout: float,
    report_cb: Callable[[int, dict[str, float]], Decision] | None,
) -> TrialRecord:
    started = time.monotonic()
    stderr = tempfile.TemporaryFile()
    try:
        proc = subprocess.Popen(
            endpoint.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=stderr,
            text=True,
        )
    except OSError as exc:
        stderr.close()
        raise WorkerUnreachableError(endpoint, str(exc)) from None

    timed_out = threading.Event()

    def kill() -> None:
        timed_out.set()
        proc.kill()

    timer = threading.Timer(timeout, kill)
    timer.daemon = True
    timer.start()
    try:
        try:
            proc.stdin.write(_request_line(spec))
            proc.stdin.flush()
            proc.stdin.close()
        except (BrokenPipeError, OSError):
            pass  # fall through to the read loop / exit handling

        def lines() -> Iterator[str | None]:
            while True:
                line = proc.stdout.readline()
                if not line:
                    yield None
                    return
                yield line

        record, failure = _consume_messages(
            spec, lines(), proc.kill, report_cb, started, timed_out.is_set
        )
        if record is not None and record.status is TrialStatus.PRUNED:
            proc.wait()
            return record
        if record is not None:
            # terminal seen; exit code 0 is part of the contract
            try:
                code = proc.wait(timeout=EXIT_GRACE)
            except subprocess.TimeoutExpired:
                proc.kill()
                code = proc.wait()
            leftovers = proc.stdout.read()
            if code != 0:
                failure = f"protocol violation: exit code {code} after terminal message"
            elif leftovers.strip():
                failure = "protocol violation: output after terminal message"
            else:
                return record
        else:
            code = proc.wait()
            if failure is None:
                failure = f"exited with code {code} before terminal message"
                tail = _stderr_tail(stderr)
                if tail:
                    failure += f"; stderr: {tail}"
        return TrialRecord(
            trial_id=spec.trial_id,
            config=spec.config,
            status=TrialStatus.FAILED,
            wall_time=time.monotonic() - started,
            error=failure,
        )
    finally:
        timer.cancel()
        if proc.poll() is None:
            proc.kill()
            proc.wait()
        stderr.close()


def _stderr_tail(stderr, limit: int = 300) -> str:
    try:
        stderr.seek(0, os.SEEK_END)
        size = stderr.tell()
        stderr.seek(max(0, size - limit))
        return stderr.read().decode("utf-8", "replace").strip()
    except (OSError, ValueError):
        return ""


def _attempt_tcp(
    spec: TrialSpec,
    endpoint: RemoteTcp,
    timeout: float,
    report_cb: Callable[[int, dict[str, float]], Decision] | None,
) -> tuple[TrialRecord, int | None]:
    """Returns (record, advertised_slots)."""
    started = time.monotonic()
    deadline = started + timeout
    host, port = endpoint.host_port()
    try:
        sock = socket.create_connection((host, port), timeout=CONNECT_TIMEOUT)
    except OSError as exc:
        raise WorkerUnreachableError(endpoint, str(exc)) from None
    slots: int | None = None
    try:
        rfile = sock.makefile("rb")
        wfile = sock.makefile("wb")
        try:
            write_frame(wfile, encode_hello())
            ready_line = read_frame(rfile)
            if ready_line is None:
                raise MalformedLineError("connection closed during handshake")
            ready = parse_handshake(ready_line, "ready")
            slots = int(ready.get("slots", 1))
        except (OSError, MalformedLineError) as exc:
            raise WorkerUnreachableError(endpoint, f"handshake failed: {exc}") from None

        def frames() -> Iterator[str | None]:
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    yield None
                    return
                sock.settimeout(remaining)
                try:
                    frame = read_frame(rfile)
                except OSError:
                    frame = None
                yield frame
                if frame is None:
                    return

        failure: str | None = None
        try:
            write_frame(wfile, _request_line(spec))
            record, failure = _consume_messages(
                spec, frames(), sock.close, report_cb, started,
                lambda: time.monotonic() >= deadline,
            )
        except MalformedLineError as exc:
            record, failure = None, f"protocol violation: {exc}"
        except OSError as exc:
            record, failure = None, f"connection lost: {exc}"
        if record is not None:
            return record, slots
        if failure is None:
            failure = "connection closed before terminal message"
        return (
            TrialRecord(
                trial_id=spec.trial_id,
                config=spec.config,
                status=TrialStatus.FAILED,
                wall_time=time.monotonic() - started,
                error=failure,
            ),
            slots,
        )
    finally:
        sock.close()


class _WorkerHandle:
    def __init__(self, endpoint: WorkerEndpoint) -> None:
        self.endpoint = endpoint
        self.in_use = 0
        self.consecutive_failures = 0
        self.dead = False
        self.slots = endpoint.slots if isinstance(endpoint, LocalProcess) else None

    def fits(self, cpus: int) -> bool:
        if self.dead:
            return False
        if self.slots is None or self.in_use == 0:
            return True  # resources are advisory; an idle worker always accepts
        return self.in_use + cpus <= self.slots


@dataclass
class _Pending:
    spec: TrialSpec
    failures: int = 0  # attempts consumed so far
    last_error: str | None = None


def run_trials(
    specs: Iterable[TrialSpec],
    pool: list[WorkerEndpoint],
    max_concurrent: int = 1,
    retries: int = 0,
    on_event: EventCallback | None = None,
    timeout: float = DEFAULT_TIMEOUT,
) -> list[TrialRecord]:
    """Run every spec; exactly one record per spec, in submission order.

    `specs` may be a lazy generator: the next spec is pulled only when a
    slot frees up, so sequential search algorithms see the freshest history
    their driver has ingested.
    """
    if not pool:
        raise NoWorkersError("worker pool is empty")
    if max_concurrent < 1:
        raise ValueError("max_concurrent must be >= 1")

    workers = [_WorkerHandle(ep) for ep in pool]
    spec_iter = iter(specs)
    stream_done = False
    ready: deque[_Pending] = deque()
    running = 0
    seen_ids: set[int] = set()
    order: list[int] = []
    results: dict[int, TrialRecord] = {}
    events: "queue.Queue[tuple]" = queue.Queue()
    next_worker = 0
    callback_error: BaseException | None = None

    def emit(event: TrialEvent) -> "Decision | None":
        nonlocal callback_error
        if on_event is None or callback_error is not None:
            return None
        try:
            return on_event(event)
        except BaseException as exc:  # drain cleanly, then re-raise
            callback_error = exc
            return Decision.PRUNE

    def pull_next() -> _Pending | None:
        nonlocal stream_done
        if ready:
            return ready.popleft()
        if stream_done:
            return None
        spec = next(spec_iter, None)
        if spec is None:
            stream_done = True
            return None
        if spec.trial_id in seen_ids:
            raise ValueError(f"duplicate trial_id {spec.trial_id}")
        seen_ids.add(spec.trial_id)
        order.append(spec.trial_id)
        return _Pending(spec)

    def pick_worker(cpus: int) -> _WorkerHandle | None:
        nonlocal next_worker
        n = len(workers)
        for i in range(n):
            handle = workers[(next_worker + i) % n]
            if handle.fits(cpus):
                next_worker = (next_worker + i + 1) % n
                return handle
        return None

    def launch(item: _Pending, handle: _WorkerHandle) -> None:
        nonlocal running
        running += 1
        handle.in_use += item.spec.resources.cpus
        emit(TrialStarted(item.spec.trial_id, item.failures + 1, str(handle.endpoint)))

        def report_cb(step: int, metrics: dict[str, float]) -> Decision:
            reply: "queue.Queue[Decision]" = queue.Queue()
            events.put(("report", item.spec.trial_id, step, metrics, reply))
            return reply.get()

        def work() -> None:
            try:
                if isinstance(handle.endpoint, RemoteTcp):
                    record, slots = _attempt_tcp(item.spec, handle.endpoint, timeout, report_cb)
                else:
                    record = _attempt_local(item.spec, handle.endpoint, timeout, report_cb)
                    slots = None
                events.put(("done", item, handle, record, slots))
            except WorkerUnreachableError as exc:
                events.put(("unreachable", item, handle, str(exc)))
            except BaseException as exc:  # keep the coordinator alive
                events.put(("crash", item, handle, exc))

        thread = threading.Thread(target=work, daemon=True, name=f"trial-{item.spec.trial_id}")
        thread.start()

    def finalize(item: _Pending, record: TrialRecord) -> None:
        record.attempts = item.failures + 1
        results[record.trial_id] = record
        emit(TrialFinished(record))

    def live_workers() -> bool:
        return any(not w.dead for w in workers)

    while True:
        # launch while capacity allows
        while running < max_concurrent and callback_error is None:
            item = pull_next()
            if item is None:
                break
            handle = pick_worker(item.spec.resources.cpus)
            if handle is None:
                ready.appendleft(item)
                break
            launch(item, handle)

        if running == 0:
            if callback_error is not None:
                raise callback_error
            if not ready and stream_done:
                break
            if not live_workers():
                raise PoolExhaustedError(
                    f"{len(ready)} trials pending and every worker endpoint is dead"
                )

        event = events.get()
        kind = event[0]
        if kind == "report":
            _, trial_id, step, metrics, reply = event
            decision = emit(TrialReport(trial_id, step, metrics))
            reply.put(decision if decision is Decision.PRUNE else Decision.CONTINUE)
            continue

        _, item, handle, *rest = event
        running -= 1
        handle.in_use -= item.spec.resources.cpus
        emit(AttemptEnded(item.spec.trial_id, item.failures + 1))

        if kind == "done":
            record, slots = rest
            if slots is not None:
                handle.slots = slots
            handle.consecutive_failures = 0
            if record.status is TrialStatus.FAILED and item.failures < retries:
                item.failures += 1
                item.last_error = record.error
                ready.append(item)
            else:
                finalize(item, record)
        elif kind == "unreachable":
            (detail,) = rest
            handle.consecutive_failures += 1
            if handle.consecutive_failures >= MAX_CONSECUTIVE_FAILURES:
                handle.dead = True
            ready.append(item)  # endpoint failure does not consume an attempt
        elif kind == "crash":
            (exc,) = rest
            raise exc

    return [results[tid] for tid in order]


def endpoints_from_env(value: str | None = None) -> list[RemoteTcp]:
    """Parse SIMFLOCK_WORKERS-style 'host:port,host:port' lists."""
    raw = os.environ.get("SIMFLOCK_WORKERS", "") if value is None else value
    out = []
    for part in raw.split(","):
        part = part.strip()
        if part:
            endpoint = RemoteTcp(part)
            endpoint.host_port()  # validate eagerly
            out.append(endpoint)
    return out
