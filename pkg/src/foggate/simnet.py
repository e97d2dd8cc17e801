"""Message transports: a seeded in-process network with adversary hooks, and TCP.

The simulated network is step driven.  ``send`` puts a frame in flight on the
link between two endpoints; ``step`` runs one delivery round: for every link
in creation order, injected adversary frames go first, then in-flight frames
in FIFO order pass through the link's hook into the recipient's inbox.  The
virtual clock advances by ``step_seconds`` per round.  All adversary choices
draw from one ``random.Random(seed)``, so a run is reproducible from its seed.

Socket framing is ``length:u32 (big-endian) | frame``.
"""

from __future__ import annotations

import collections
import random
import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from .errors import ConfigurationError, TransportError

DEFAULT_EPOCH = 1_700_000_000.0

PASSTHROUGH = "passthrough"
EAVESDROP = "eavesdrop"
TAMPER = "tamper"
DROP = "drop"
REPLAY = "replay"
INJECT = "inject"
FLOOD = "flood"
HOOK_MODES = (PASSTHROUGH, EAVESDROP, TAMPER, DROP, REPLAY, INJECT, FLOOD)

TamperRule = Callable[[bytes, random.Random], Sequence[int]]
FrameSource = Callable[[random.Random], bytes]


def random_junk(rng: random.Random, low: int = 16, high: int = 700) -> bytes:
    return rng.randbytes(rng.randint(low, high))


class Endpoint:
    """Named mailbox.  ``inbox_limit`` models a bounded receive buffer (drop-tail)."""

    def __init__(self, address: str, inbox_limit: int | None = None):
        self.address = address
        self.inbox_limit = inbox_limit
        self.inbox: collections.deque[tuple[str, bytes]] = collections.deque()
        self.overflow_drops = 0

    def _deliver(self, sender: str, frame: bytes) -> bool:
        if self.inbox_limit is not None and len(self.inbox) >= self.inbox_limit:
            self.overflow_drops += 1
            return False
        self.inbox.append((sender, frame))
        return True

    def receive(self, limit: int | None = None) -> list[tuple[str, bytes]]:
        """Pop up to ``limit`` (sender, frame) pairs in arrival order."""
        n = len(self.inbox) if limit is None else min(limit, len(self.inbox))
        return [self.inbox.popleft() for _ in range(n)]

    def __repr__(self):
        return f"Endpoint({self.address!r}, queued={len(self.inbox)})"


@dataclass
class AdversaryHook:
    """Man-in-the-middle behaviour attached to a link.

    ``target`` restricts the hook to frames travelling towards that address
    (and is where injected/flood frames are delivered); None means both
    directions.  Every frame the hook sees is copied into ``capture_log``.
    """

    mode: str = PASSTHROUGH
    target: Optional[str] = None
    positions: Sequence[int] = ()
    rule: Optional[TamperRule] = None
    mask: int = 0xFF
    rate: float = 0.0
    count: int = 0
    frames: Sequence[bytes] = ()
    duration: int = 0
    start_step: Optional[int] = 1
    source: Optional[FrameSource] = None
    capture_log: list[bytes] = field(default_factory=list)
    tampered: int = 0
    dropped: int = 0
    injected: int = 0
    _replay_queue: collections.deque = field(default_factory=collections.deque, repr=False)

    def __post_init__(self):
        if self.mode not in HOOK_MODES:
            raise ConfigurationError(f"unknown hook mode {self.mode!r}")
        if self.mode == TAMPER and not (self.positions or self.rule):
            raise ConfigurationError("tamper hook needs positions or a rule")
        if self.mode == TAMPER and not 0 < self.mask <= 0xFF:
            raise ConfigurationError("tamper mask must be a non-zero byte")
        if self.mode == DROP and not 0.0 <= self.rate <= 1.0:
            raise ConfigurationError("drop rate must be within [0, 1]")
        if self.mode == FLOOD and self.rate < 0:
            raise ConfigurationError("flood rate must be non-negative")
        if self.mode in (FLOOD, INJECT) and self.target is None:
            raise ConfigurationError(f"{self.mode} hook needs a target")

    @classmethod
    def passthrough(cls):
        return cls(PASSTHROUGH)

    @classmethod
    def eavesdrop(cls, target=None):
        return cls(EAVESDROP, target=target)

    @classmethod
    def tamper(cls, positions=(), rule=None, mask=0xFF, target=None):
        return cls(TAMPER, target=target, positions=tuple(positions), rule=rule, mask=mask)

    @classmethod
    def drop(cls, rate, target=None):
        return cls(DROP, target=target, rate=rate)

    @classmethod
    def replay(cls, count, target=None):
        return cls(REPLAY, target=target, count=count)

    @classmethod
    def inject(cls, frames, target):
        return cls(INJECT, target=target, frames=list(frames))

    @classmethod
    def flood(cls, rate, duration, target, source=None, start_step=1):
        return cls(FLOOD, target=target, rate=rate, duration=duration,
                   source=source, start_step=start_step)

    def arm(self, step: int) -> None:
        """Start a flood at ``step``; steps count from 1.  ``start_step=None`` creates it disarmed."""
        self.start_step = step

    def applies_to(self, destination: str) -> bool:
        return self.target is None or self.target == destination

    def extra_frames(self, step: int, rng: random.Random, link: "Link") -> list[tuple[str, str, bytes]]:
        """(sender, recipient, frame) triples the adversary originates this round."""
        out = []
        if self.mode in (INJECT, FLOOD):
            victim = link.a if link.a.address == self.target else link.b
            origin = link.other(victim).address
            if self.mode == INJECT:
                out.extend((origin, self.target, f) for f in self.frames)
                self.frames = ()
            elif self.start_step is not None and self.start_step <= step < self.start_step + self.duration:
                whole, frac = divmod(self.rate, 1.0)
                n = int(whole) + (1 if frac and rng.random() < frac else 0)
                make = self.source or random_junk
                out.extend((origin, self.target, make(rng)) for _ in range(n))
        elif self.mode == REPLAY:
            # one queued copy per captured frame per round
            for _ in range(len(self._replay_queue)):
                src, dst, frame, left = self._replay_queue.popleft()
                out.append((src, dst, frame))
                if left > 1:
                    self._replay_queue.append((src, dst, frame, left - 1))
        self.injected += len(out)
        return out

    def process(self, frame: bytes, rng: random.Random, src: str = "", dst: str = "") -> Optional[bytes]:
        """Apply the hook to one in-flight frame; None means it never arrives."""
        self.capture_log.append(frame)
        if self.mode == TAMPER:
            positions = self.rule(frame, rng) if self.rule else self.positions
            buf = bytearray(frame)
            for pos in positions:
                if 0 <= pos < len(buf):
                    buf[pos] ^= self.mask
            out = bytes(buf)
            self.tampered += out != frame
            return out
        if self.mode == DROP and rng.random() < self.rate:
            self.dropped += 1
            return None
        if self.mode == REPLAY and self.count > 0:
            self._replay_queue.append((src, dst, frame, self.count))
        return frame

    def export_capture(self, path) -> None:
        """Hex-dump the capture log: one ``index offset hex`` line per 16 bytes."""
        with open(path, "w") as fh:
            for i, frame in enumerate(self.capture_log):
                fh.write(f"# frame {i} length {len(frame)}\n")
                for off in range(0, len(frame), 16):
                    fh.write(f"{i:06d} {off:08x} {frame[off:off + 16].hex(' ')}\n")


class Link:
    def __init__(self, a: Endpoint, b: Endpoint, hook: AdversaryHook):
        self.a = a
        self.b = b
        self.hook = hook
        self.in_flight: collections.deque[tuple[Endpoint, Endpoint, bytes]] = collections.deque()

    def other(self, endpoint: Endpoint) -> Endpoint:
        return self.b if endpoint is self.a else self.a


class SimNet:
    def __init__(self, seed: int = 0, step_seconds: float = 0.1, epoch: float = DEFAULT_EPOCH):
        self.seed = seed
        self.rng = random.Random(seed)
        self.step_seconds = step_seconds
        self.epoch = epoch
        self.steps = 0
        self.endpoints: dict[str, Endpoint] = {}
        self.links: dict[frozenset, Link] = {}

    def now(self) -> float:
        return self.epoch + self.steps * self.step_seconds

    def add_endpoint(self, address: str, inbox_limit: int | None = None) -> Endpoint:
        if address in self.endpoints:
            raise ConfigurationError(f"endpoint {address!r} already exists")
        ep = Endpoint(address, inbox_limit)
        self.endpoints[address] = ep
        return ep

    def _endpoint(self, ref: Union[str, Endpoint]) -> Endpoint:
        address = ref.address if isinstance(ref, Endpoint) else ref
        try:
            return self.endpoints[address]
        except KeyError:
            raise ConfigurationError(f"unknown endpoint {address!r}") from None

    def connect(self, a, b, hook: AdversaryHook | None = None) -> Link:
        a, b = self._endpoint(a), self._endpoint(b)
        key = frozenset((a.address, b.address))
        if key in self.links:
            raise ConfigurationError(f"link {a.address} <-> {b.address} already exists")
        if hook is not None and hook.target not in (None, a.address, b.address):
            raise ConfigurationError(f"hook target {hook.target!r} is not on this link")
        link = Link(a, b, hook or AdversaryHook.passthrough())
        self.links[key] = link
        return link

    def link(self, a, b) -> Link:
        a, b = self._endpoint(a), self._endpoint(b)
        try:
            return self.links[frozenset((a.address, b.address))]
        except KeyError:
            raise ConfigurationError(f"no link {a.address} <-> {b.address}") from None

    def send(self, sender, recipient, frame: bytes) -> None:
        src, dst = self._endpoint(sender), self._endpoint(recipient)
        self.link(src, dst).in_flight.append((src, dst, bytes(frame)))

    def advance(self, seconds: float) -> None:
        """Let virtual time pass without delivering anything."""
        self.steps += max(0, round(seconds / self.step_seconds))

    def step(self) -> int:
        """One delivery round; returns the number of frames placed in inboxes."""
        self.steps += 1
        delivered = 0
        for link in self.links.values():
            hook = link.hook
            for src, dst, frame in hook.extra_frames(self.steps, self.rng, link):
                delivered += self.endpoints[dst]._deliver(src, frame)
            pending, link.in_flight = link.in_flight, collections.deque()
            for src, dst, frame in pending:
                if hook.applies_to(dst.address):
                    frame = hook.process(frame, self.rng, src.address, dst.address)
                    if frame is None:
                        continue
                delivered += dst._deliver(src.address, frame)
        return delivered

    def transport(self, local, remote) -> "SimTransport":
        return SimTransport(self, self._endpoint(local), self._endpoint(remote))


class SimTransport:
    """Transport view of one endpoint talking to one peer over a SimNet link.

    ``recv`` never blocks: it returns the next queued frame from the peer, or
    None.  Frames from other senders stay queued.
    """

    def __init__(self, net: SimNet, local: Endpoint, remote: Endpoint):
        self.net = net
        self.local = local
        self.remote = remote
        net.link(local, remote)

    def send(self, frame: bytes) -> None:
        self.net.send(self.local, self.remote, frame)

    def recv(self, timeout: float | None = None) -> Optional[bytes]:
        for i, (sender, frame) in enumerate(self.local.inbox):
            if sender == self.remote.address:
                del self.local.inbox[i]
                return frame
        return None

    def close(self) -> None:
        pass


# sockets

_LEN = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigurationError(f"address must be HOST:PORT, got {address!r}")
    return host or "127.0.0.1", int(port)


class TcpTransport:
    """Length-prefixed frames over a stream socket.

    One reader and one writer may use the transport concurrently; ``send``
    holds a lock so frames are never interleaved.
    """

    def __init__(self, sock: socket.socket, peer: str = "?"):
        self.sock = sock
        self.peer = peer
        self._send_lock = threading.Lock()

    def send(self, frame: bytes) -> None:
        if len(frame) > MAX_FRAME:
            raise TransportError(f"frame of {len(frame)} bytes exceeds limit")
        with self._send_lock:
            try:
                self.sock.sendall(_LEN.pack(len(frame)) + frame)
            except OSError as exc:
                raise TransportError(f"send to {self.peer} failed: {exc}") from exc

    def _read_exact(self, n: int) -> Optional[bytes]:
        chunks = []
        while n:
            chunk = self.sock.recv(n)
            if not chunk:
                return None
            chunks.append(chunk)
            n -= len(chunk)
        return b"".join(chunks)

    def recv(self, timeout: float | None = None) -> Optional[bytes]:
        """Next frame, or None on orderly close or timeout."""
        self.sock.settimeout(timeout)
        try:
            header = self._read_exact(_LEN.size)
            if header is None:
                return None
            (length,) = _LEN.unpack(header)
            if length > MAX_FRAME:
                raise TransportError(f"{self.peer} announced a {length}-byte frame")
            if length == 0:
                return b""
            body = self._read_exact(length)
            if body is None:
                raise TransportError(f"{self.peer} closed mid-frame")
            return body
        except socket.timeout:
            return None
        except ConnectionError as exc:
            raise TransportError(f"recv from {self.peer} failed: {exc}") from exc

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class TcpListener:
    def __init__(self, sock: socket.socket, address: str):
        self.sock = sock
        self.address = address

    @property
    def port(self) -> int:
        return self.sock.getsockname()[1]

    def accept(self, timeout: float | None = None) -> Optional[TcpTransport]:
        self.sock.settimeout(timeout)
        try:
            conn, peer = self.sock.accept()
        except socket.timeout:
            return None
        conn.settimeout(None)
        return TcpTransport(conn, f"{peer[0]}:{peer[1]}")

    def close(self) -> None:
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def tcp_listen(address: str) -> TcpListener:
    host, port = parse_address(address)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
        sock.listen()
    except OSError as exc:
        sock.close()
        raise TransportError(f"cannot listen on {address}: {exc}") from exc
    return TcpListener(sock, address)


def tcp_connect(address: str, timeout: float = 5.0) -> TcpTransport:
    host, port = parse_address(address)
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {address}: {exc}") from exc
    sock.settimeout(None)
    return TcpTransport(sock, address)
