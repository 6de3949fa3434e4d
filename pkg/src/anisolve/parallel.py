"""Horizontal domain decomposition over simulated ranks.

The global ``N x N`` horizontal grid is split into an ``s x s`` array of equal
square subdomains.  Each rank runs the same solver code with a
:class:`Communicator`, which provides halo exchange and deterministic global
sums over a :class:`MessageTransport`.  :func:`run_ranks` launches the ranks
as threads wired to an :class:`InProcessTransport`.

Rank ``r`` sits at ``(r % s, r // s)`` in the rank grid; east is ``+i`` and
north is ``+j``.
"""

from __future__ import annotations

import math
import queue
import threading
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Protocol

import numpy as np

from .errors import ExchangeError, HarnessError, TopologyError
from .grid import Field, GridShape

__all__ = [
    "RankTopology", "HaloRegistration", "MessageTransport", "InProcessTransport",
    "Communicator", "halo_exchange", "global_sum", "run_ranks",
    "exchange_byte_count", "assemble_global", "ByteRecord",
    "EAST", "WEST", "NORTH", "SOUTH", "DEFAULT_TIMEOUT",
]

EAST, WEST, NORTH, SOUTH = "E", "W", "N", "S"
_OPPOSITE = {EAST: WEST, WEST: EAST, NORTH: SOUTH, SOUTH: NORTH}
DEFAULT_TIMEOUT = 60.0
DOUBLE = 8


@dataclass(frozen=True)
class RankTopology:
    """An ``s x s`` rank grid over a global domain.

    Parameters
    ----------
    s : int
        Ranks per side; ``p = s**2``.
    global_shape : GridShape
        Whole-domain grid.  ``n_x`` and ``n_y`` must be divisible by ``s``.
    """

    s: int
    global_shape: GridShape

    def __post_init__(self):
        g = self.global_shape
        if self.s < 1:
            raise TopologyError("need at least one rank per side")
        if g.n_x % self.s or g.n_y % self.s:
            raise TopologyError(f"{g.n_x}x{g.n_y} columns not divisible by s={self.s}")

    @classmethod
    def for_ranks(cls, p: int, global_shape: GridShape) -> "RankTopology":
        s = math.isqrt(p)
        if p < 1 or s * s != p:
            raise TopologyError(f"rank count {p} is not a perfect square")
        return cls(s, global_shape)

    @property
    def p(self) -> int:
        return self.s * self.s

    @property
    def local_shape(self) -> GridShape:
        g = self.global_shape
        return GridShape(g.n_x // self.s, g.n_y // self.s, g.n_z, g.halosize, g.ol_x)

    def rank_coords(self, rank: int) -> tuple[int, int]:
        if not 0 <= rank < self.p:
            raise TopologyError(f"rank {rank} outside 0..{self.p - 1}")
        return rank % self.s, rank // self.s

    def rank_at(self, ri: int, rj: int) -> int | None:
        if 0 <= ri < self.s and 0 <= rj < self.s:
            return rj * self.s + ri
        return None

    def neighbors(self, rank: int) -> dict[str, int | None]:
        """Neighbour rank per side, ``None`` on the physical boundary."""
        ri, rj = self.rank_coords(rank)
        return {EAST: self.rank_at(ri + 1, rj), WEST: self.rank_at(ri - 1, rj),
                NORTH: self.rank_at(ri, rj + 1), SOUTH: self.rank_at(ri, rj - 1)}

    def origin(self, rank: int) -> tuple[int, int]:
        """0-based global column index of the rank's first owned column."""
        ri, rj = self.rank_coords(rank)
        loc = self.local_shape
        return ri * loc.n_x, rj * loc.n_y

    def coarsened(self) -> "RankTopology":
        return RankTopology(self.s, self.global_shape.coarsened())


class HaloRegistration(NamedTuple):
    """Per-dimension ``(minus, plus, begin, end, total)`` halo descriptors.

    ``begin..end`` (inclusive) is the owned range in padded storage
    coordinates; only ``minus``/``plus`` cells beyond it are ever sent.
    """

    x: tuple[int, int, int, int, int]
    y: tuple[int, int, int, int, int]
    z: tuple[int, int, int, int, int]

    @classmethod
    def from_shape(cls, shape: GridShape) -> "HaloRegistration":
        hs = shape.halosize
        return cls((hs, hs, shape.ol_x, shape.n_x + shape.ol_x - 1, shape.ext_x),
                   (hs, hs, shape.ol_y, shape.n_y + shape.ol_y - 1, shape.ext_y),
                   (0, 0, 0, shape.n_z - 1, shape.n_z))


class MessageTransport(Protocol):
    def send(self, src: int, dest: int, tag, payload: bytes) -> None: ...

    def receive(self, dest: int, src: int, tag, timeout: float) -> bytes: ...


class InProcessTransport:
    """Reliable, per-channel ordered transport between threads of one process."""

    def __init__(self, p: int):
        self.p = p
        self._lock = threading.Lock()
        self._channels: dict = {}
        self.abort = threading.Event()
        self.bytes_sent: Counter = Counter()

    def _channel(self, key) -> queue.Queue:
        with self._lock:
            ch = self._channels.get(key)
            if ch is None:
                ch = self._channels[key] = queue.Queue()
            return ch

    def send(self, src: int, dest: int, tag, payload: bytes) -> None:
        if not 0 <= dest < self.p:
            raise ExchangeError(f"no rank {dest}")
        self._channel((src, dest, tag)).put(payload)
        with self._lock:
            self.bytes_sent[src] += len(payload)

    def receive(self, dest: int, src: int, tag, timeout: float = DEFAULT_TIMEOUT) -> bytes:
        ch = self._channel((src, dest, tag))
        deadline = time.monotonic() + timeout
        while True:
            if self.abort.is_set():
                raise ExchangeError(f"rank {dest}: run aborted while waiting for {src}")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ExchangeError(
                    f"rank {dest}: timed out waiting for message {tag!r} from rank {src}")
            try:
                payload = ch.get(timeout=min(remaining, 0.05))
            except queue.Empty:
                continue
            with self._lock:
                # drop empty channels so long runs do not accumulate queues
                if ch.empty():
                    self._channels.pop((src, dest, tag), None)
            return payload


class ByteRecord(NamedTuple):
    iteration: int
    level: int
    direction: str
    bytes: int


@dataclass
class Communicator:
    """One rank's view of the decomposition.

    ``iteration`` is set by the solvers and only labels the byte log.
    """

    rank: int
    topology: RankTopology
    transport: MessageTransport | None = None
    timeout: float = DEFAULT_TIMEOUT
    iteration: int = 0
    byte_log: list = field(default_factory=list)
    exchange_counts: Counter = field(default_factory=Counter)

    def __post_init__(self):
        if self.topology.p > 1 and self.transport is None:
            raise TopologyError("a transport is required for more than one rank")
        self._seq = 0
        self._neighbors = self.topology.neighbors(self.rank)

    @classmethod
    def serial(cls, global_shape: GridShape) -> "Communicator":
        return cls(0, RankTopology(1, global_shape))

    @property
    def p(self) -> int:
        return self.topology.p

    @property
    def neighbors(self) -> dict[str, int | None]:
        return self._neighbors

    def physical(self, side: str) -> bool:
        return self._neighbors[side] is None

    def _tag(self, kind):
        self._seq += 1
        return (kind, self._seq)

    def _send(self, dest, tag, arr, level, direction):
        payload = np.ascontiguousarray(arr).tobytes()
        self.transport.send(self.rank, dest, tag, payload)
        self.byte_log.append(ByteRecord(self.iteration, level, direction, len(payload)))

    def _recv(self, src, tag, out):
        payload = self.transport.receive(self.rank, src, tag, self.timeout)
        if len(payload) != out.size * DOUBLE:
            raise TopologyError(
                f"rank {self.rank}: halo from {src} has {len(payload)} bytes, "
                f"expected {out.size * DOUBLE}")
        out[...] = np.frombuffer(payload, dtype=float).reshape(out.shape)

    def exchange(self, f: Field, corners: bool = True, level: int = 0) -> Field:
        """Refresh the halo of ``f`` from neighbouring ranks.

        Two phases: ``x`` first (owned rows only), then ``y`` over the owned
        columns plus, with ``corners``, the freshly received ``x`` halo, which
        fills the diagonal corner cells without diagonal messages.  Halos on
        the physical boundary are set to zero.  Padding is never sent.
        """
        s = f.shape
        hs = s.halosize
        if hs == 0:
            return f
        X = f.ext()
        ox, oy, nx, ny = s.ol_x, s.ol_y, s.n_x, s.n_y
        self.exchange_counts[level] += 1
        tag = self._tag("halo")
        rows = slice(oy, oy + ny)
        send_x = {EAST: X[ox + nx - hs:ox + nx, rows], WEST: X[ox:ox + hs, rows]}
        halo_x = {WEST: X[ox - hs:ox, rows], EAST: X[ox + nx:ox + nx + hs, rows]}
        self._phase(tag + ("x",), send_x, halo_x, level)
        cols = slice(ox - hs, ox + nx + hs) if corners else slice(ox, ox + nx)
        send_y = {NORTH: X[cols, oy + ny - hs:oy + ny], SOUTH: X[cols, oy:oy + hs]}
        halo_y = {SOUTH: X[cols, oy - hs:oy], NORTH: X[cols, oy + ny:oy + ny + hs]}
        self._phase(tag + ("y",), send_y, halo_y, level)
        return f

    def _phase(self, tag, sends, halos, level):
        for direction, strip in sends.items():
            dest = self._neighbors[direction]
            if dest is not None:
                self._send(dest, tag + (direction,), strip, level, direction)
        for side, strip in halos.items():
            src = self._neighbors[side]
            if src is None:
                strip[...] = 0.0
            else:
                # the message travels away from the sender, towards us
                self._recv(src, tag + (_OPPOSITE[side],), strip)

    def global_sum(self, values):
        """Sum a float (or a tuple of floats) over all ranks.

        Rank 0 adds contributions in rank order ``0, 1, ..., p - 1``
        starting from zero and broadcasts the result, so every rank gets
        the bit-identical total on every run.
        """
        scalar = np.isscalar(values)
        vec = np.atleast_1d(np.asarray(values, dtype=float))
        if self.p == 1:
            total = vec.copy()
        else:
            tag = self._tag("sum")
            if self.rank == 0:
                parts = [vec]
                for src in range(1, self.p):
                    buf = self.transport.receive(0, src, tag, self.timeout)
                    parts.append(np.frombuffer(buf, dtype=float))
                total = np.zeros_like(vec)
                for part in parts:
                    if part.shape != vec.shape:
                        raise TopologyError("mismatched reduction lengths")
                    total = total + part
                payload = total.tobytes()
                for dest in range(1, self.p):
                    self.transport.send(0, dest, tag + ("bcast",), payload)
            else:
                self.transport.send(self.rank, 0, tag, vec.tobytes())
                total = np.frombuffer(
                    self.transport.receive(self.rank, 0, tag + ("bcast",), self.timeout),
                    dtype=float)
        return float(total[0]) if scalar else tuple(float(t) for t in total)

    def barrier(self) -> None:
        self.global_sum(0.0)

    # helpers for building the local problem

    def local_slice(self) -> tuple[slice, slice]:
        i0, j0 = self.topology.origin(self.rank)
        loc = self.topology.local_shape
        return slice(i0, i0 + loc.n_x), slice(j0, j0 + loc.n_y)

    def scatter(self, global_values: np.ndarray) -> Field:
        """Local field holding this rank's block of a global ``(N, N, n_z)`` array."""
        f = Field(self.topology.local_shape)
        f.interior()[...] = global_values[self.local_slice()]
        return f

    def bytes_by_iteration(self) -> dict[int, int]:
        out: dict[int, int] = defaultdict(int)
        for rec in self.byte_log:
            out[rec.iteration] += rec.bytes
        return dict(out)


def halo_exchange(f: Field, comm: Communicator, corners: bool = True, level: int = 0) -> Field:
    return comm.exchange(f, corners=corners, level=level)


def global_sum(value, comm: Communicator):
    return comm.global_sum(value)


def exchange_byte_count(topo: RankTopology, n_halo: int, rank: int | None = None,
                        corners: bool = False, element_size: int = DOUBLE) -> int:
    """Bytes one rank sends per iteration for ``n_halo`` exchanges.

    For an interior rank this is ``2 (n_x + n_y) n_z * 8 * halosize * n_halo``.
    Given ``rank``, faces on the physical boundary are subtracted; with
    ``corners`` the ``y`` messages also carry the ``x`` halo columns.
    """
    loc = topo.local_shape
    hs = loc.halosize
    if rank is None:
        sides = {EAST: 0, WEST: 0, NORTH: 0, SOUTH: 0}
    else:
        sides = topo.neighbors(rank)
    values = 0
    for side, nb in sides.items():
        if nb is None:
            continue
        if side in (EAST, WEST):
            values += loc.n_y
        else:
            values += loc.n_x + (2 * hs if corners else 0)
    return values * loc.n_z * hs * element_size * n_halo


def assemble_global(topo: RankTopology, local_arrays) -> np.ndarray:
    """Stitch per-rank interior arrays (indexed by rank) into the global array."""
    g = topo.global_shape
    out = np.empty((g.n_x, g.n_y, g.n_z))
    loc = topo.local_shape
    for rank, arr in enumerate(local_arrays):
        i0, j0 = topo.origin(rank)
        out[i0:i0 + loc.n_x, j0:j0 + loc.n_y] = arr
    return out


def run_ranks(p: int, program: Callable[[Communicator], object],
              global_shape: GridShape, timeout: float = DEFAULT_TIMEOUT,
              transport: InProcessTransport | None = None) -> list:
    """Run ``program(comm)`` on ``p`` concurrent simulated ranks.

    Returns the per-rank results in rank order.  If any rank raises, the run
    is aborted and :class:`HarnessError` names the first rank that failed.
    """
    topo = RankTopology.for_ranks(p, global_shape)
    if p == 1:
        comm = Communicator(0, topo, transport, timeout)
        try:
            return [program(comm)]
        except Exception as exc:
            raise HarnessError(0, exc) from exc
    transport = InProcessTransport(p) if transport is None else transport
    results: list = [None] * p
    failures: list = []
    lock = threading.Lock()

    def worker(rank):
        comm = Communicator(rank, topo, transport, timeout)
        try:
            results[rank] = program(comm)
        except Exception as exc:
            with lock:
                failures.append((time.monotonic(), rank, exc))
            transport.abort.set()

    threads = [threading.Thread(target=worker, args=(r,), name=f"rank-{r}", daemon=True)
               for r in range(p)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        # secondary failures are aborts triggered by the first one
        _, rank, exc = min(failures, key=lambda item: item[0])
        raise HarnessError(rank, exc) from exc
    return results
