"""Ordered, reliable point-to-point links between the two nodes.

Two implementations share one endpoint interface: an in-process queue pair and
a loopback TCP connection carrying length-prefixed wire frames. Both support a
fixed one-way latency and scripted faults (a dropped message, a dropped
connection) for failure-path testing.
"""
from __future__ import annotations

import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass

from . import wire

_CLOSED = object()


class TransportError(RuntimeError):
    pass


class TransportTimeout(TransportError):
    pass


@dataclass(frozen=True)
class FaultPlan:
    """Scripted failures: ``drop`` holds (epoch, sender, kind) messages that are lost,
    ``disconnect`` holds (epoch, sender) pairs whose connection breaks right after
    the sender's first message of that epoch."""

    drop: frozenset = frozenset()
    disconnect: frozenset = frozenset()


class _DelayLine:
    """Delivers items in order after a fixed latency on a helper thread."""

    def __init__(self, deliver, latency: float):
        self.deliver = deliver
        self.latency = latency
        self.q: queue.Queue = queue.Queue()
        self.thread = None
        if latency > 0:
            self.thread = threading.Thread(target=self._run, daemon=True)
            self.thread.start()

    def put(self, item) -> None:
        if self.thread is None:
            self.deliver(item)
        else:
            self.q.put((time.monotonic() + self.latency, item))

    def _run(self) -> None:
        while True:
            due, item = self.q.get()
            if item is _CLOSED:
                return
            wait = due - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            try:
                self.deliver(item)
            except TransportError:
                pass

    def close(self) -> None:
        if self.thread is not None:
            self.q.put((0.0, _CLOSED))


class Endpoint:
    """One node's side of a link. Messages from older epochs are discarded on receipt."""

    def __init__(self, name: str, faults: FaultPlan):
        self.name = name
        self.faults = faults
        self.inbox: queue.Queue = queue.Queue()
        self._pending: list = []
        self._sent_in_epoch: dict[int, int] = {}
        self.broken = False

    # subclasses deliver to the peer
    def _transmit(self, msg) -> None:
        raise NotImplementedError

    def _break(self) -> None:
        raise NotImplementedError

    def send(self, msg) -> None:
        if self.broken:
            raise TransportError(f"{self.name}: connection is down")
        n = self._sent_in_epoch.get(msg.epoch, 0)
        self._sent_in_epoch[msg.epoch] = n + 1
        if (msg.epoch, self.name, msg.kind) not in self.faults.drop:
            self._transmit(msg)
        if n == 0 and (msg.epoch, self.name) in self.faults.disconnect:
            self._break()

    def recv(self, kind: str, epoch: int, timeout: float):
        for i, m in enumerate(self._pending):
            if m.kind == kind and m.epoch == epoch:
                return self._pending.pop(i)
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportTimeout(f"{self.name}: timed out waiting for {kind} of epoch {epoch}")
            try:
                m = self.inbox.get(timeout=remaining)
            except queue.Empty:
                continue
            if m is _CLOSED:
                self.broken = True
                raise TransportError(f"{self.name}: connection closed by peer")
            if m.epoch < epoch:
                continue
            if m.kind == kind and m.epoch == epoch:
                return m
            self._pending.append(m)

    def start_epoch(self, epoch: int) -> None:
        self._pending = [m for m in self._pending if m.epoch >= epoch]


class Link:
    """A connected pair of endpoints (alice, bob) plus lifecycle control."""

    alice: Endpoint
    bob: Endpoint

    def start_epoch(self, epoch: int) -> None:
        """Barrier hook: repair a broken connection before the next epoch begins."""
        if self.alice.broken or self.bob.broken:
            self._reconnect()
        self.alice.start_epoch(epoch)
        self.bob.start_epoch(epoch)

    def _reconnect(self) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _QueueEndpoint(Endpoint):
    def __init__(self, name, faults, link: "InProcessLink"):
        super().__init__(name, faults)
        self.link = link
        self.peer: _QueueEndpoint | None = None
        self.line: _DelayLine | None = None

    def _transmit(self, msg) -> None:
        self.line.put(msg)

    def _break(self) -> None:
        self.broken = True
        self.peer.broken = True
        self.inbox.put(_CLOSED)
        self.peer.inbox.put(_CLOSED)


class InProcessLink(Link):
    def __init__(self, latency: float = 0.0, faults: FaultPlan = FaultPlan()):
        self.latency = latency
        self.faults = faults
        self.alice = _QueueEndpoint("alice", faults, self)
        self.bob = _QueueEndpoint("bob", faults, self)
        self.alice.peer, self.bob.peer = self.bob, self.alice
        self._wire()

    def _wire(self) -> None:
        for ep in (self.alice, self.bob):
            if ep.line is not None:
                ep.line.close()
            ep.line = _DelayLine(ep.peer.inbox.put, self.latency)

    def _reconnect(self) -> None:
        for ep in (self.alice, self.bob):
            ep.broken = False
            # anything queued before the break belongs to a failed epoch
            while not ep.inbox.empty():
                ep.inbox.get_nowait()
        self._wire()

    def close(self) -> None:
        for ep in (self.alice, self.bob):
            if ep.line is not None:
                ep.line.close()


_LEN = struct.Struct("<I")


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 20))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


class _SocketEndpoint(Endpoint):
    def __init__(self, name, faults, sock: socket.socket, latency: float):
        super().__init__(name, faults)
        self.sock = sock
        self.lock = threading.Lock()
        self.line = _DelayLine(self._write, latency)
        self.reader = threading.Thread(target=self._read_loop, daemon=True)
        self.reader.start()

    def _write(self, frame: bytes) -> None:
        with self.lock:
            try:
                self.sock.sendall(frame)
            except OSError as e:
                self.broken = True
                raise TransportError(f"{self.name}: send failed: {e}") from None

    def _transmit(self, msg) -> None:
        body = wire.encode(msg)
        self.line.put(_LEN.pack(len(body)) + body)

    def _read_loop(self) -> None:
        try:
            while True:
                head = _recv_exact(self.sock, _LEN.size)
                if head is None:
                    break
                body = _recv_exact(self.sock, _LEN.unpack(head)[0])
                if body is None:
                    break
                self.inbox.put(wire.decode(body))
        except (OSError, wire.WireError):
            pass
        self.inbox.put(_CLOSED)

    def _break(self) -> None:
        self.broken = True
        self.shutdown()

    def shutdown(self) -> None:
        self.line.close()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class SocketLink(Link):
    """Loopback TCP connection; each frame is a u32 little-endian length plus one wire message."""

    def __init__(self, latency: float = 0.0, faults: FaultPlan = FaultPlan()):
        self.latency = latency
        self.faults = faults
        self._connect()

    def _connect(self) -> None:
        with socket.create_server(("127.0.0.1", 0)) as server:
            port = server.getsockname()[1]
            client = socket.create_connection(("127.0.0.1", port))
            conn, _ = server.accept()
        for s in (client, conn):
            s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.alice = _SocketEndpoint("alice", self.faults, client, self.latency)
        self.bob = _SocketEndpoint("bob", self.faults, conn, self.latency)

    def _reconnect(self) -> None:
        self.close()
        self._connect()

    def close(self) -> None:
        for ep in (self.alice, self.bob):
            ep.shutdown()
        for ep in (self.alice, self.bob):
            ep.reader.join(timeout=5.0)


def make_link(kind: str = "inprocess", latency: float = 0.0, faults: FaultPlan | None = None) -> Link:
    faults = faults or FaultPlan()
    if kind == "inprocess":
        return InProcessLink(latency, faults)
    if kind == "socket":
        return SocketLink(latency, faults)
    raise ValueError(f"unknown transport {kind!r}; use 'inprocess' or 'socket'")
