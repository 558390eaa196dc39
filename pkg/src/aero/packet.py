"""Byte layout of update packets and reassembly into an update bundle.

Layout (all multi-byte integers big-endian unless noted)::

    [seq: 1B]
    [group bitmap: ceil(n_max/8) B]          only when seq == 0
    [header: 1B]  opcode(2) | dag_flag(1) | task_id(5), MSB first
    [dep bitmap: ceil(n_max/8) B]            only when dag_flag == 1
    [code length: 2B]
    [code: code length B]

Bitmaps are little-endian integers: bit k (byte k // 8, bit k % 8) marks
task slot k.

An INSERT member's code segment starts with a 10-byte descriptor for the
new task: exec time in microseconds (u32), energy in nanojoules (u32),
priority (u16).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .dag import DEFAULT_N_MAX, TaskProfile, UpdateGroup, UpdateMember, UpdateOp
from .errors import (
    BadBitmapIndex,
    BadInsertDescriptor,
    DuplicateMember,
    GapInSequence,
    InvalidOpcode,
    InvalidPacket,
    MissingFirstPacket,
    Truncated,
    TrailingBytes,
    UncoveredGroupMember,
    UnexpectedMember,
)

TASK_ID_BITS = 5
MAX_CODE = 0xFFFF
INSERT_DESCRIPTOR = struct.Struct(">IIH")


@dataclass(frozen=True)
class UpdatePacket:
    seq: int
    opcode: int
    task_id: int
    code: bytes = b""
    group: frozenset[int] | None = None
    deps: frozenset[int] | None = None

    @property
    def dag_flag(self) -> bool:
        return self.deps is not None


@dataclass(frozen=True)
class UpdateBundle:
    group: UpdateGroup
    dep_edges: dict[int, frozenset[int]] = field(default_factory=dict)
    total_size: int = 0
    dag_flags: frozenset[int] = frozenset()


def bitmap_bytes(n_max: int) -> int:
    return (n_max + 7) // 8


def _check_n_max(n_max: int) -> None:
    if not 1 <= n_max <= 1 << TASK_ID_BITS:
        raise ValueError(f"n_max must be in [1, {1 << TASK_ID_BITS}]")


def _pack_bitmap(bits: frozenset[int], n_max: int) -> bytes:
    value = 0
    for b in bits:
        if not 0 <= b < n_max:
            raise InvalidPacket(f"bitmap index {b} outside [0, {n_max})")
        value |= 1 << b
    return value.to_bytes(bitmap_bytes(n_max), "little")


def _unpack_bitmap(raw: bytes, n_max: int) -> frozenset[int]:
    value = int.from_bytes(raw, "little")
    if value >> n_max:
        raise BadBitmapIndex(f"bitmap sets a slot >= {n_max}")
    return frozenset(k for k in range(n_max) if value >> k & 1)


def encoded_length(packet: UpdatePacket, n_max: int = DEFAULT_N_MAX) -> int:
    bm = bitmap_bytes(n_max)
    return 1 + (bm if packet.seq == 0 else 0) + 1 + (bm if packet.dag_flag else 0) + 2 + len(packet.code)


def encode(packet: UpdatePacket, n_max: int = DEFAULT_N_MAX) -> bytes:
    _check_n_max(n_max)
    if not 0 <= packet.seq <= 0xFF:
        raise InvalidPacket(f"seq {packet.seq} does not fit in one byte")
    if (packet.seq == 0) != (packet.group is not None):
        raise InvalidPacket("group field must be present exactly on seq 0")
    if packet.opcode not in tuple(UpdateOp):
        raise InvalidPacket(f"opcode {packet.opcode:#04b} is reserved")
    if not 0 <= packet.task_id < n_max:
        raise InvalidPacket(f"task id {packet.task_id} outside [0, {n_max})")
    if len(packet.code) > MAX_CODE:
        raise InvalidPacket("code segment longer than 65535 bytes")
    out = bytearray([packet.seq])
    if packet.group is not None:
        out += _pack_bitmap(packet.group, n_max)
    out.append(int(packet.opcode) << 6 | int(packet.dag_flag) << 5 | packet.task_id)
    if packet.deps is not None:
        out += _pack_bitmap(packet.deps, n_max)
    out += len(packet.code).to_bytes(2, "big")
    out += packet.code
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"need {n} byte(s) for {what} at offset {self.pos}, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def decode(data: bytes, n_max: int = DEFAULT_N_MAX) -> UpdatePacket:
    _check_n_max(n_max)
    r = _Reader(bytes(data))
    bm = bitmap_bytes(n_max)
    seq = r.take(1, "seq")[0]
    group = _unpack_bitmap(r.take(bm, "group field"), n_max) if seq == 0 else None
    header = r.take(1, "header")[0]
    opcode = header >> 6
    if opcode not in tuple(UpdateOp):
        raise InvalidOpcode(f"opcode {opcode:#04b} is reserved")
    task_id = header & ((1 << TASK_ID_BITS) - 1)
    if task_id >= n_max:
        raise BadBitmapIndex(f"task id {task_id} >= {n_max}")
    deps = _unpack_bitmap(r.take(bm, "dependency field"), n_max) if header >> 5 & 1 else None
    length = int.from_bytes(r.take(2, "code length"), "big")
    code = r.take(length, "code segment")
    if r.pos != len(r.data):
        raise TrailingBytes(f"{len(r.data) - r.pos} byte(s) after code segment")
    return UpdatePacket(seq, UpdateOp(opcode), task_id, code, group, deps)


def describe(data: bytes, n_max: int = DEFAULT_N_MAX) -> list[tuple[str, int, int, object]]:
    """Decode and list ``(field, bit_offset, bit_width, value)`` rows."""
    p = decode(data, n_max)
    bm = bitmap_bytes(n_max) * 8
    rows = [("seq", 0, 8, p.seq)]
    off = 8
    if p.group is not None:
        rows.append(("group_field", off, bm, sorted(p.group)))
        off += bm
    rows += [
        ("opcode", off, 2, UpdateOp(p.opcode).name.capitalize()),
        ("dag_flag", off + 2, 1, int(p.dag_flag)),
        ("task_id", off + 3, TASK_ID_BITS, p.task_id),
    ]
    off += 8
    if p.deps is not None:
        rows.append(("dep_field", off, bm, sorted(p.deps)))
        off += bm
    rows.append(("code_length", off, 16, len(p.code)))
    rows.append(("code_segment", off + 16, 8 * len(p.code), p.code.hex()))
    return rows


def pack_insert_descriptor(profile: TaskProfile) -> bytes:
    return INSERT_DESCRIPTOR.pack(
        int(round(profile.exec_time)), int(round(profile.energy_cost * 1000)), profile.priority
    )


def unpack_insert_descriptor(code: bytes) -> TaskProfile:
    if len(code) < INSERT_DESCRIPTOR.size:
        raise BadInsertDescriptor("insert code segment shorter than its descriptor")
    exec_us, energy_nj, prio = INSERT_DESCRIPTOR.unpack_from(code)
    if exec_us == 0 or energy_nj == 0:
        raise BadInsertDescriptor("inserted task needs positive time and energy")
    return TaskProfile(float(exec_us), energy_nj / 1000.0, prio)


def assemble_bundle(packets: list[UpdatePacket]) -> UpdateBundle:
    """Rebuild the update group from a seq-ordered packet list."""
    if not packets or packets[0].seq != 0 or packets[0].group is None:
        raise MissingFirstPacket("first packet must have seq 0 and a group field")
    for expected, p in enumerate(packets):
        if p.seq != expected:
            raise GapInSequence(f"expected seq {expected}, got {p.seq}")
    group_bits = packets[0].group
    members: dict[int, UpdateMember] = {}
    deps: dict[int, frozenset[int]] = {}
    for p in packets:
        if p.task_id not in group_bits:
            raise UnexpectedMember(f"packet {p.seq} targets task {p.task_id} outside the group")
        if p.task_id in members:
            raise DuplicateMember(f"task {p.task_id} covered twice")
        op = UpdateOp(p.opcode)
        profile = unpack_insert_descriptor(p.code) if op is UpdateOp.INSERT else None
        members[p.task_id] = UpdateMember(p.task_id, op, len(p.code), profile)
        if p.deps is not None:
            deps[p.task_id] = p.deps
    missing = sorted(group_bits - members.keys())
    if missing:
        raise UncoveredGroupMember(f"group tasks {missing} have no operation packet")
    return UpdateBundle(
        UpdateGroup(tuple(members[t] for t in sorted(members))),
        deps,
        sum(len(p.code) for p in packets),
        frozenset(deps),
    )


def packetize(
    group: UpdateGroup,
    codes: dict[int, bytes],
    deps: dict[int, frozenset[int]] | None = None,
) -> list[UpdatePacket]:
    """One packet per member, seq-ordered by task id; seq 0 carries the group."""
    deps = deps or {}
    out = []
    bits = frozenset(m.task for m in group)
    for seq, m in enumerate(sorted(group, key=lambda m: m.task)):
        out.append(
            UpdatePacket(
                seq,
                m.op,
                m.task,
                codes.get(m.task, b""),
                bits if seq == 0 else None,
                deps.get(m.task),
            )
        )
    return out
