"""TCP worker: hosts a local simulator command for remote executors.

Per connection: answer the hello/ready handshake, then serve requests one
at a time — each request spawns the simulator subprocess, forwards the
request line, and streams every simulator message back as a frame. If the
client disconnects mid-trial the child is killed, which is how the
executor prunes remote trials.
"""

from __future__ import annotations

import json
import os
import socketserver
import subprocess
import threading

from .errors import MalformedLineError
from .protocol import encode_ready, parse_handshake, read_frame, write_frame

EXIT_GRACE = 10.0


def _terminal_kind(line: str) -> str | None:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        return None
    return obj.get("type") if isinstance(obj, dict) else None


class WorkerServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], command: tuple[str, ...],
                 slots: int | None = None) -> None:
        self.command = command
        self.slots = slots if slots is not None else max(1, os.cpu_count() or 1)
        self._slot_sem = threading.Semaphore(self.slots)
        super().__init__(address, _ConnectionHandler)

    @property
    def port(self) -> int:
        return self.server_address[1]


class _ConnectionHandler(socketserver.BaseRequestHandler):
    server: WorkerServer

    def handle(self) -> None:
        rfile = self.request.makefile("rb")
        wfile = self.request.makefile("wb")
        try:
            hello = read_frame(rfile)
            if hello is None:
                return
            parse_handshake(hello, "hello")
            write_frame(wfile, encode_ready(self.server.slots))
            while True:
                line = read_frame(rfile)
                if line is None:
                    return
                with self.server._slot_sem:
                    self._serve_request(line, rfile, wfile)
        except (MalformedLineError, OSError):
            return
        finally:
            rfile.close()
            wfile.close()

    def _serve_request(self, request_line: str, rfile, wfile) -> None:
        proc = subprocess.Popen(
            self.server.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
        )
        try:
            proc.stdin.write(request_line + "\n")
            proc.stdin.flush()
            proc.stdin.close()
            for line in proc.stdout:
                if _terminal_kind(line) in ("done", "rejected"):
                    # hold the success terminal until the exit code confirms it
                    try:
                        code = proc.wait(timeout=EXIT_GRACE)
                    except subprocess.TimeoutExpired:
                        proc.kill()
                        code = proc.wait()
                    if code != 0:
                        # dropped stream -> the executor records a failed attempt
                        raise OSError(f"simulator exited with code {code}")
                write_frame(wfile, line)
            code = proc.wait()
            if code != 0:
                raise OSError(f"simulator exited with code {code}")
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()


def serve(host: str, port: int, command: tuple[str, ...],
          slots: int | None = None) -> WorkerServer:
    """Start a worker server on a background thread; caller owns shutdown."""
    server = WorkerServer((host, port), command, slots)
    thread = threading.Thread(target=server.serve_forever, daemon=True, name="simflock-worker")
    thread.start()
    return server


def serve_forever(host: str, port: int, command: tuple[str, ...],
                  slots: int | None = None) -> None:
    server = WorkerServer((host, port), command, slots)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
