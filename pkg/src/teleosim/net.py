"""Wire formats: the binary UDP command packet and the JSON telemetry
messages, plus receive-side validation and duplicate suppression.

Packet layout (big-endian, 17 bytes):

    magic "BCR1" | version u8 | command u8 | source u8 | seq u16 | stamp_ms u64

Duplicates: UDP may repeat or reorder datagrams, so a packet whose seq
falls inside the 16-wide window at or below the last accepted seq (mod
2^16) is dropped. Each source keeps its own counter.
"""
from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass

MAGIC = b"BCR1"
VERSION = 1
PACKET_STRUCT = struct.Struct(">4sBBBHQ")
PACKET_SIZE = PACKET_STRUCT.size  # 17
SEQ_MOD = 1 << 16
DEDUPE_WINDOW = 16

COMMAND_CODES = {"left": 1, "right": 2}
SOURCE_CODES = {"bci": 1, "manual": 2}
_CODE_TO_COMMAND = {v: k for k, v in COMMAND_CODES.items()}
_CODE_TO_SOURCE = {v: k for k, v in SOURCE_CODES.items()}

UDP_COMMAND_PORT = 25001
TELEMETRY_PORT = 8765


class ProtocolError(ValueError):
    pass


class BadLength(ProtocolError):
    pass


class BadMagic(ProtocolError):
    pass


class BadEnum(ProtocolError):
    pass


@dataclass(frozen=True)
class CommandPacket:
    command: str   # left | right
    source: str    # bci | manual
    seq: int
    stamp_ms: int

    def __post_init__(self):
        if self.command not in COMMAND_CODES:
            raise BadEnum(f"unknown command {self.command!r}")
        if self.source not in SOURCE_CODES:
            raise BadEnum(f"unknown source {self.source!r}")
        if not 0 <= self.seq < SEQ_MOD:
            raise ValueError("seq out of u16 range")
        if not 0 <= self.stamp_ms < 1 << 64:
            raise ValueError("stamp_ms out of u64 range")


def encode(command: str, source: str, seq: int, stamp_ms: int) -> bytes:
    pkt = CommandPacket(command=command, source=source, seq=seq, stamp_ms=stamp_ms)
    return PACKET_STRUCT.pack(MAGIC, VERSION, COMMAND_CODES[pkt.command],
                              SOURCE_CODES[pkt.source], pkt.seq, pkt.stamp_ms)


def decode(data: bytes) -> CommandPacket:
    if len(data) != PACKET_SIZE:
        raise BadLength(f"expected {PACKET_SIZE} bytes, got {len(data)}")
    magic, version, cmd, src, seq, stamp = PACKET_STRUCT.unpack(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadEnum(f"unsupported version {version}")
    if cmd not in _CODE_TO_COMMAND:
        raise BadEnum(f"unknown command code {cmd}")
    if src not in _CODE_TO_SOURCE:
        raise BadEnum(f"unknown source code {src}")
    return CommandPacket(command=_CODE_TO_COMMAND[cmd], source=_CODE_TO_SOURCE[src],
                         seq=seq, stamp_ms=stamp)


def seq_is_duplicate(last_seq: int | None, new_seq: int,
                     window: int = DEDUPE_WINDOW) -> bool:
    if last_seq is None:
        return False
    return (last_seq - new_seq) % SEQ_MOD < window


class DedupeFilter:
    """Per-source sliding window over the u16 sequence counter."""

    def __init__(self, window: int = DEDUPE_WINDOW):
        self.window = window
        self._last: dict[str, int] = {}

    def accept(self, pkt: CommandPacket) -> bool:
        if seq_is_duplicate(self._last.get(pkt.source), pkt.seq, self.window):
            return False
        self._last[pkt.source] = pkt.seq
        return True


class CommandReceiver:
    """Datagram sink feeding the control loop.

    Malformed or duplicate datagrams are counted and swallowed; accepted
    packets land in a bounded queue (oldest dropped on overflow). Producer
    and consumer may live on different threads: deque append/popleft are
    atomic.
    """

    def __init__(self, maxlen: int = 32):
        self.queue: deque[CommandPacket] = deque(maxlen=maxlen)
        self.dedupe = DedupeFilter()
        self.accepted = 0
        self.malformed = 0
        self.duplicates = 0
        self.dropped = 0

    def push_datagram(self, data: bytes) -> CommandPacket | None:
        try:
            pkt = decode(data)
        except ProtocolError:
            self.malformed += 1
            return None
        if not self.dedupe.accept(pkt):
            self.duplicates += 1
            return None
        if len(self.queue) == self.queue.maxlen:
            self.dropped += 1
        self.queue.append(pkt)
        self.accepted += 1
        return pkt

    def pop(self) -> CommandPacket | None:
        try:
            return self.queue.popleft()
        except IndexError:
            return None

    def drain(self) -> list[CommandPacket]:
        out = []
        while True:
            pkt = self.pop()
            if pkt is None:
                return out
            out.append(pkt)


# -- telemetry messages ---------------------------------------------------------

TELEMETRY_VERSION = 1


def _msg(kind: str, stamp: float, **payload) -> dict:
    return {"v": TELEMETRY_VERSION, "type": kind, "stamp": float(stamp), **payload}


def msg_pose(stamp: float, x: float, y: float, theta: float) -> dict:
    return _msg("pose", stamp, x=float(x), y=float(y), theta=float(theta))


def msg_particles(stamp: float, poses, generation: int) -> dict:
    return _msg("particles", stamp,
                poses=[[float(v) for v in row] for row in poses],
                generation=int(generation))


def msg_path(stamp: float, points) -> dict:
    return _msg("path", stamp, points=[[float(a), float(b)] for a, b in points])


def msg_goal_event(stamp: float, event: str, **fields) -> dict:
    return _msg("goal_event", stamp, event=str(event), **fields)


def msg_nav_state(stamp: float, mode: str, goal=None) -> dict:
    payload = None
    if goal is not None:
        payload = {"target": [float(v) for v in goal.target], "origin": goal.origin}
    return _msg("nav_state", stamp, mode=str(mode), goal=payload)


def msg_bars(stamp: float, p, threshold: float) -> dict:
    return _msg("bars", stamp, p=[float(v) for v in p], threshold=float(threshold))


def msg_clear_event(stamp: float) -> dict:
    return _msg("clear_event", stamp)


def msg_metrics(stamp: float, values: dict) -> dict:
    return _msg("metrics", stamp, values={str(k): float(v) for k, v in values.items()})


def msg_command(stamp: float, command: str, source: str = "manual") -> dict:
    if command not in COMMAND_CODES:
        raise BadEnum(f"unknown command {command!r}")
    if source not in SOURCE_CODES:
        raise BadEnum(f"unknown source {source!r}")
    return _msg("command", stamp, command=command, source=source)
