"""Buffered streaming between the generation server and training consumers.

Producer side: generated samples land in a bounded FIFO transmission queue;
when it fills, the producer's put() blocks, pausing simulation.  A dispatcher
thread encodes each sample once and hands it to exactly one connected
consumer in round-robin order (at-most-once delivery; nothing is redelivered
after a disconnect, and a message that could not be handed to a dying
connection goes to the next live one).

Consumer side: a receiver decodes messages off the socket into a bounded
staging FIFO (its backpressure propagates through TCP), a migrator moves
them into an MFU sample cache, and training draws uniform random batches
without replacement.  The cache evicts the entry with the highest use count,
breaking ties toward the oldest insertion, so fresh samples displace the
most-reused ones.  An epoch counter fires every `epoch_length` drawn samples
(13,200 by default).
"""

from __future__ import annotations

import queue
import socket
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .protocol import FrameSample, ProtocolError, encode, read_sample

__all__ = [
    "CacheEmpty",
    "EpochCounter",
    "MfuCache",
    "PumpStats",
    "SocketReader",
    "StreamConsumer",
    "StreamServer",
    "TransmissionQueue",
    "staging_pump",
]

DEFAULT_TRANSMISSION_CAPACITY = 1024
DEFAULT_STAGING_CAPACITY = 256
DEFAULT_CACHE_CAPACITY = 8192
DEFAULT_EPOCH_LENGTH = 13_200


class CacheEmpty(LookupError):
    """Drawing from a cache that holds nothing; the caller decides whether to wait."""


def _check_capacity(capacity: int, what: str) -> int:
    if int(capacity) < 1:
        raise ValueError(f"{what} capacity must be >= 1, got {capacity}")
    return int(capacity)


class TransmissionQueue:
    """Bounded FIFO between simulation and dispatch; put() blocks when full."""

    def __init__(self, capacity: int = DEFAULT_TRANSMISSION_CAPACITY):
        self.capacity = _check_capacity(capacity, "transmission queue")
        self._q: queue.Queue = queue.Queue(maxsize=self.capacity)
        self._lock = threading.Lock()
        self.pushed = 0
        self.popped = 0

    def put(self, item, timeout: Optional[float] = None) -> None:
        self._q.put(item, timeout=timeout)
        with self._lock:
            self.pushed += 1

    def get(self, timeout: Optional[float] = None):
        item = self._q.get(timeout=timeout)
        with self._lock:
            self.popped += 1
        return item

    def qsize(self) -> int:
        return self._q.qsize()

    def __len__(self) -> int:
        return self._q.qsize()


@dataclass
class _CacheEntry:
    sample: object
    seq: int
    count: int = 0


class MfuCache:
    """Fixed-capacity sample store with most-frequently-used eviction.

    insert() on a full cache removes the entry with the maximal use count
    (ties broken toward the oldest insertion) and returns it.  draw() picks
    distinct slots uniformly without replacement and bumps their counts.
    """

    def __init__(self, capacity: int = DEFAULT_CACHE_CAPACITY):
        self.capacity = _check_capacity(capacity, "cache")
        self._entries: list[_CacheEntry] = []
        self._seq = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def insert(self, sample):
        with self._lock:
            evicted = None
            if len(self._entries) >= self.capacity:
                victim = max(
                    range(len(self._entries)),
                    key=lambda i: (self._entries[i].count, -self._entries[i].seq),
                )
                evicted = self._entries.pop(victim).sample
            self._entries.append(_CacheEntry(sample=sample, seq=self._seq))
            self._seq += 1
            return evicted

    def draw(self, batch_size: int, rng: Optional[np.random.Generator] = None, indices: Optional[Sequence[int]] = None):
        """Uniform batch without replacement; explicit `indices` bypass the rng."""
        with self._lock:
            size = len(self._entries)
            if size == 0:
                raise CacheEmpty("cache holds no samples")
            if batch_size < 1 or batch_size > size:
                raise ValueError(f"batch size {batch_size} not in [1, {size}]")
            if indices is None:
                if rng is None:
                    raise ValueError("draw needs an rng when indices are not given")
                indices = rng.choice(size, size=batch_size, replace=False)
            else:
                if len(indices) != batch_size or len(set(indices)) != batch_size:
                    raise ValueError("indices must be distinct and match batch_size")
                if any(not 0 <= i < size for i in indices):
                    raise ValueError("index out of range")
            out = []
            for i in indices:
                entry = self._entries[int(i)]
                entry.count += 1
                out.append(entry.sample)
            return out

    def snapshot(self) -> list[tuple[int, int]]:
        """(insertion seq, use count) per slot, in slot order; for inspection."""
        with self._lock:
            return [(e.seq, e.count) for e in self._entries]


class EpochCounter:
    """Counts drawn samples; every `epoch_length` of them is one epoch."""

    def __init__(self, epoch_length: int = DEFAULT_EPOCH_LENGTH, on_epoch: Optional[Callable[[int], None]] = None):
        if epoch_length < 1:
            raise ValueError(f"epoch length must be >= 1, got {epoch_length}")
        self.epoch_length = int(epoch_length)
        self._on_epoch = on_epoch
        self._lock = threading.Lock()
        self.count = 0
        self.epochs = 0

    def add(self, n: int = 1) -> int:
        """Record n drawn samples; returns how many epoch boundaries were crossed."""
        if n < 0:
            raise ValueError("cannot add a negative sample count")
        fire: list[int] = []
        with self._lock:
            before = self.count // self.epoch_length
            self.count += n
            after = self.count // self.epoch_length
            crossed = after - before
            if crossed:
                fire = list(range(self.epochs + 1, self.epochs + crossed + 1))
                self.epochs += crossed
        if self._on_epoch is not None:
            for epoch in fire:
                self._on_epoch(epoch)
        return crossed


class _Connection:
    """One consumer socket with a small bounded send buffer and sender thread."""

    def __init__(self, sock: socket.socket, buffer_size: int):
        self.sock = sock
        self.buffer_size = buffer_size
        self._buf: deque[bytes] = deque()
        self._cond = threading.Condition()
        self.closed = False
        self.sent = 0
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def enqueue(self, msg: bytes) -> bool:
        """Block until buffered or the connection dies; False if it died."""
        with self._cond:
            while len(self._buf) >= self.buffer_size and not self.closed:
                self._cond.wait(0.1)
            if self.closed:
                return False
            self._buf.append(msg)
            self._cond.notify_all()
            return True

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._buf.clear()
            self._cond.notify_all()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    def idle(self) -> bool:
        with self._cond:
            return not self._buf

    def _run(self) -> None:
        while True:
            with self._cond:
                while not self._buf and not self.closed:
                    self._cond.wait(0.1)
                if self.closed:
                    return
                msg = self._buf.popleft()
                self._cond.notify_all()
            try:
                self.sock.sendall(msg)
                self.sent += 1
            except OSError:
                self.close()
                return


class StreamServer:
    """Fans the transmission queue out to TCP consumers, round-robin."""

    def __init__(
        self,
        source: TransmissionQueue,
        host: str = "127.0.0.1",
        port: int = 0,
        conn_buffer: int = 32,
    ):
        self.source = source
        self._host = host
        self._port = port
        self._conn_buffer = _check_capacity(conn_buffer, "connection buffer")
        self._listener: Optional[socket.socket] = None
        self._conns: list[_Connection] = []
        self._conn_lock = threading.Lock()
        self._rr = 0
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self.dispatched = 0

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise RuntimeError("server is not started")
        return self._listener.getsockname()[:2]

    def start(self) -> None:
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((self._host, self._port))
        self._listener.listen(16)
        # Poll instead of blocking in accept(); closing a listener does not
        # reliably wake a blocked accept, which would stall stop().
        self._listener.settimeout(0.2)
        for target in (self._accept_loop, self._dispatch_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)

    def consumer_count(self) -> int:
        with self._conn_lock:
            return sum(1 for c in self._conns if not c.closed)

    def idle(self) -> bool:
        """True when nothing waits in the queue, dispatcher, or send buffers."""
        with self._conn_lock:
            conns = list(self._conns)
        return (
            self.dispatched >= self.source.pushed
            and self.source.qsize() == 0
            and all(c.idle() for c in conns if not c.closed)
        )

    def drain(self, timeout: float = 5.0) -> bool:
        """Wait until every accepted message has hit a socket (or timeout).

        Exact accounting: everything pushed into the source must have been
        handed to a connection and flushed out of its send buffer.
        """
        pause = threading.Event()
        waited = 0.0
        while not self.idle():
            if waited >= timeout:
                return False
            pause.wait(0.05)
            waited += 0.05
        # Give the sender threads a moment to finish the final sendall.
        pause.wait(0.05)
        return True

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            self._listener.close()
        with self._conn_lock:
            conns = list(self._conns)
        for c in conns:
            c.close()
        for t in self._threads:
            t.join(timeout=5)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.settimeout(None)  # sender threads rely on blocking sendall
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._conn_lock:
                self._conns.append(_Connection(sock, self._conn_buffer))

    def _next_conn(self) -> Optional[_Connection]:
        with self._conn_lock:
            self._conns = [c for c in self._conns if not c.closed]
            if not self._conns:
                return None
            conn = self._conns[self._rr % len(self._conns)]
            self._rr += 1
            return conn

    def _dispatch_loop(self) -> None:
        pending: Optional[bytes] = None
        while not self._stop.is_set():
            if pending is None:
                try:
                    sample = self.source.get(timeout=0.1)
                except queue.Empty:
                    continue
                pending = encode(sample)
            conn = self._next_conn()
            if conn is None:
                self._stop.wait(0.05)
                continue
            if conn.enqueue(pending):
                self.dispatched += 1
                pending = None
            # else: connection died while waiting; retry with the next one


class SocketReader:
    """read_exact() adapter over a stream socket for the message parser."""

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def read_exact(self, n: int) -> bytes:
        chunks: list[bytes] = []
        got = 0
        while got < n:
            try:
                chunk = self.sock.recv(n - got)
            except OSError:
                break
            if not chunk:
                break
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)


@dataclass
class PumpStats:
    received: int = 0
    migrated: int = 0
    decode_errors: int = 0
    error: Optional[str] = None


def staging_pump(
    read_exact: Callable[[int], bytes],
    staging: TransmissionQueue,
    cache: MfuCache,
    stop: Optional[threading.Event] = None,
    on_insert: Optional[Callable[[FrameSample], None]] = None,
) -> PumpStats:
    """Move messages from a byte source through the staging FIFO into the cache.

    Runs until the source reaches EOF, the stream turns unparseable, or
    `stop` is set.  The receive side blocks on a full staging queue, which is
    what propagates backpressure to the producer.  `on_insert` fires after
    each cache insertion (useful for pacing draws against arrivals).
    """
    stop = stop or threading.Event()
    stats = PumpStats()
    done = object()

    def receive() -> None:
        while not stop.is_set():
            try:
                sample = read_sample(read_exact)
            except ProtocolError as exc:
                # A framing error leaves no way to find the next boundary.
                stats.decode_errors += 1
                stats.error = str(exc)
                break
            if sample is None:
                break
            stats.received += 1
            while not stop.is_set():
                try:
                    staging.put(sample, timeout=0.1)
                    break
                except queue.Full:
                    continue
        while True:
            try:
                staging.put(done, timeout=0.1)
                return
            except queue.Full:
                if stop.is_set():
                    return

    rx = threading.Thread(target=receive, daemon=True)
    rx.start()
    while True:
        try:
            item = staging.get(timeout=0.1)
        except queue.Empty:
            if stop.is_set():
                break
            continue
        if item is done:
            break
        cache.insert(item)
        stats.migrated += 1
        if on_insert is not None:
            on_insert(item)
    stop.set()
    rx.join(timeout=5)
    return stats


class StreamConsumer:
    """TCP consumer: staging FIFO feeding an MFU cache, with epoch tracking."""

    def __init__(
        self,
        host: str,
        port: int,
        staging_capacity: int = DEFAULT_STAGING_CAPACITY,
        cache_capacity: int = DEFAULT_CACHE_CAPACITY,
        epoch_length: int = DEFAULT_EPOCH_LENGTH,
        on_epoch: Optional[Callable[[int], None]] = None,
        on_insert: Optional[Callable[[FrameSample], None]] = None,
    ):
        self._addr = (host, port)
        self.staging = TransmissionQueue(staging_capacity)
        self.cache = MfuCache(cache_capacity)
        self.epoch = EpochCounter(epoch_length, on_epoch=on_epoch)
        self._on_insert = on_insert
        self._stop = threading.Event()
        self._sock: Optional[socket.socket] = None
        self._thread: Optional[threading.Thread] = None
        self.stats = PumpStats()

    def start(self) -> None:
        self._sock = socket.create_connection(self._addr)
        reader = SocketReader(self._sock)

        def run() -> None:
            self.stats = staging_pump(
                reader.read_exact, self.staging, self.cache, stop=self._stop, on_insert=self._on_insert
            )

        self._thread = threading.Thread(target=run, daemon=True)
        self._thread.start()

    def wait_for_cache(self, k: int, timeout: float = 30.0) -> bool:
        """Block until the cache holds at least k samples (or timeout)."""
        pause = threading.Event()
        waited = 0.0
        while len(self.cache) < k:
            if waited >= timeout:
                return False
            pause.wait(0.01)
            waited += 0.01
        return True

    def draw_batch(self, batch_size: int, rng: np.random.Generator) -> list[FrameSample]:
        batch = self.cache.draw(batch_size, rng=rng)
        self.epoch.add(batch_size)
        return batch

    def close(self) -> None:
        self._stop.set()
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()
        if self._thread is not None:
            self._thread.join(timeout=5)
