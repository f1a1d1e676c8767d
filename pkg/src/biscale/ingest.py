"""Packet trace readers (classic pcap savefiles and timestamp CSV) and the
matching writers used to build fixtures.

Readers yield immutable :class:`PacketRecord` objects with timestamps rebased
to the first packet.  :class:`PacketArrays` is the columnar form consumed by
the high-volume stages (aggregation, sketching).
"""

from __future__ import annotations

import csv
import io
import ipaddress
import logging
import struct
import sys
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import IngestError, MalformedHeader, RowParseError, UnsupportedLinkType

log = logging.getLogger(__name__)

TCP, UDP, ICMP, ICMPV6 = 6, 17, 1, 58
PROTO_NAMES = {TCP: "TCP", UDP: "UDP", ICMP: "ICMP", ICMPV6: "ICMP"}
NAME_TO_PROTO = {"TCP": TCP, "UDP": UDP, "ICMP": ICMP}

FIN, SYN, RST, ACK = 0x01, 0x02, 0x04, 0x10

LINKTYPE_ETHERNET = 1
RAW_LINKTYPES = {101, 12, 14, 228, 229}

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D

MAX_BACKWARD_SLIP = 1e-3
CSV_HEADER = ["timestamp", "size", "src_ip", "dst_ip", "src_port", "dst_port", "proto"]


class NonMonotoneTimestamp(IngestError):
    pass


@dataclass(frozen=True)
class FiveTuple:
    """Flow key.  Addresses are packed network-order bytes (4 or 16)."""

    src_ip: bytes
    dst_ip: bytes
    src_port: int
    dst_port: int
    protocol: int

    def __post_init__(self):
        if self.protocol not in (TCP, UDP) and (self.src_port or self.dst_port):
            object.__setattr__(self, "src_port", 0)
            object.__setattr__(self, "dst_port", 0)

    @property
    def protocol_name(self) -> str:
        return PROTO_NAMES.get(self.protocol, f"OTHER({self.protocol})")

    @property
    def src(self) -> str:
        return str(ipaddress.ip_address(self.src_ip))

    @property
    def dst(self) -> str:
        return str(ipaddress.ip_address(self.dst_ip))

    def reversed(self) -> "FiveTuple":
        return FiveTuple(self.dst_ip, self.src_ip, self.dst_port, self.src_port, self.protocol)

    @classmethod
    def from_strings(cls, src, dst, sport=0, dport=0, proto="TCP"):
        return cls(pack_ip(src), pack_ip(dst), int(sport), int(dport), parse_proto(proto))


@dataclass(frozen=True)
class TcpMeta:
    seq: int
    ack: int
    flags: int
    payload_len: int
    is_retransmission: bool = False

    @property
    def syn(self):
        return bool(self.flags & SYN)

    @property
    def fin(self):
        return bool(self.flags & FIN)

    @property
    def rst(self):
        return bool(self.flags & RST)

    @property
    def has_ack(self):
        return bool(self.flags & ACK)


@dataclass(frozen=True)
class PacketRecord:
    timestamp: float
    size: int
    flow_key: FiveTuple
    tcp_meta: Optional[TcpMeta] = None


def pack_ip(addr) -> bytes:
    if isinstance(addr, bytes):
        return addr
    return ipaddress.ip_address(addr).packed


def parse_proto(value) -> int:
    if isinstance(value, (int, np.integer)):
        return int(value)
    s = str(value).strip().upper()
    if s in NAME_TO_PROTO:
        return NAME_TO_PROTO[s]
    if s.startswith("OTHER(") and s.endswith(")"):
        return int(s[6:-1])
    return int(s)


def proto_label(proto: int) -> str:
    return PROTO_NAMES.get(proto, str(proto))


# --------------------------------------------------------------------------
# columnar form


def _ip_words(addr: bytes) -> tuple:
    if len(addr) == 4:
        return (0, 0, 0, int.from_bytes(addr, "big"))
    return struct.unpack(">4I", addr)


@dataclass
class PacketArrays:
    """Columnar packet batch.  Addresses are ``(n, 4)`` uint32 words; IPv4
    addresses occupy the last word and ``is_v6`` is False."""

    timestamp: np.ndarray
    size: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    src_port: np.ndarray
    dst_port: np.ndarray
    proto: np.ndarray
    is_v6: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.timestamp.size

    @classmethod
    def empty(cls):
        return cls.from_columns(np.zeros(0), np.zeros(0, int), np.zeros(0, np.uint32),
                                np.zeros(0, np.uint32))

    @classmethod
    def from_columns(cls, timestamp, size, src, dst, src_port=None, dst_port=None,
                     proto=None, is_v6=None, meta=None):
        """Build from IPv4 addresses given as uint32 arrays (or full word matrices)."""
        n = np.asarray(timestamp).size

        def words(a):
            a = np.asarray(a, dtype=np.uint32)
            if a.ndim == 2:
                return a
            w = np.zeros((a.size, 4), dtype=np.uint32)
            w[:, 3] = a
            return w

        zeros = np.zeros(n, dtype=np.int32)
        return cls(
            timestamp=np.asarray(timestamp, dtype=float),
            size=np.asarray(size, dtype=np.int64),
            src=words(src), dst=words(dst),
            src_port=zeros if src_port is None else np.asarray(src_port, dtype=np.int32),
            dst_port=zeros if dst_port is None else np.asarray(dst_port, dtype=np.int32),
            proto=np.full(n, UDP, dtype=np.int16) if proto is None
            else np.asarray(proto, dtype=np.int16),
            is_v6=np.zeros(n, dtype=bool) if is_v6 is None else np.asarray(is_v6, dtype=bool),
            meta=dict(meta or {}),
        )

    @classmethod
    def from_records(cls, records: Iterable[PacketRecord]):
        ts, size, src, dst, sp, dp, pr, v6 = [], [], [], [], [], [], [], []
        for r in records:
            k = r.flow_key
            ts.append(r.timestamp)
            size.append(r.size)
            src.append(_ip_words(k.src_ip))
            dst.append(_ip_words(k.dst_ip))
            sp.append(k.src_port)
            dp.append(k.dst_port)
            pr.append(k.protocol)
            v6.append(len(k.src_ip) == 16)
        n = len(ts)
        return cls(
            timestamp=np.asarray(ts, dtype=float), size=np.asarray(size, dtype=np.int64),
            src=np.asarray(src, dtype=np.uint32).reshape(n, 4),
            dst=np.asarray(dst, dtype=np.uint32).reshape(n, 4),
            src_port=np.asarray(sp, dtype=np.int32), dst_port=np.asarray(dp, dtype=np.int32),
            proto=np.asarray(pr, dtype=np.int16), is_v6=np.asarray(v6, dtype=bool),
        )

    def take(self, idx) -> "PacketArrays":
        return PacketArrays(self.timestamp[idx], self.size[idx], self.src[idx], self.dst[idx],
                            self.src_port[idx], self.dst_port[idx], self.proto[idx],
                            self.is_v6[idx], dict(self.meta))

    def sorted(self) -> "PacketArrays":
        return self.take(np.argsort(self.timestamp, kind="stable"))

    @staticmethod
    def concat(parts) -> "PacketArrays":
        parts = list(parts)
        return PacketArrays(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                              ("timestamp", "size", "src", "dst", "src_port", "dst_port",
                               "proto", "is_v6")), meta=dict(parts[0].meta) if parts else {})

    def address_bytes(self, words: np.ndarray, i: int) -> bytes:
        if self.is_v6[i]:
            return struct.pack(">4I", *(int(w) for w in words[i]))
        return int(words[i, 3]).to_bytes(4, "big")

    def records(self) -> Iterator[PacketRecord]:
        for i in range(len(self)):
            key = FiveTuple(self.address_bytes(self.src, i), self.address_bytes(self.dst, i),
                            int(self.src_port[i]), int(self.dst_port[i]), int(self.proto[i]))
            yield PacketRecord(float(self.timestamp[i]), int(self.size[i]), key)


def as_arrays(packets) -> PacketArrays:
    if isinstance(packets, PacketArrays):
        return packets
    return PacketArrays.from_records(packets)


# --------------------------------------------------------------------------
# readers


class _Rebaser:
    def __init__(self, strict=True, where="packet"):
        self.t0 = None
        self.prev = None
        self.clamped = 0
        self.strict = strict
        self.where = where

    def __call__(self, t, scale=1) -> Optional[float]:
        if self.t0 is None:
            self.t0 = t
            self.prev = 0.0
            return 0.0
        rel = (t - self.t0) / scale if scale != 1 else t - self.t0
        if rel < self.prev:
            if self.prev - rel <= MAX_BACKWARD_SLIP:
                self.clamped += 1
                return self.prev
            if self.strict:
                return None
        self.prev = max(rel, self.prev)
        return rel


class PcapReader:
    """Iterate over a classic pcap savefile.

    Per-packet decoding failures are counted in ``parse_errors`` and skipped;
    a truncated final record increments ``truncated``.  After iteration,
    ``count`` equals the number of records yielded.
    """

    def __init__(self, path, protocols=None):
        self.path = path
        self.protocols = None if protocols is None else {parse_proto(p) for p in protocols}
        self.count = 0
        self.parse_errors = 0
        self.non_ip = 0
        self.filtered = 0
        self.truncated = 0
        self.clamped = 0
        self.linktype = None

    @property
    def warnings(self) -> int:
        return self.truncated + self.parse_errors

    def __iter__(self) -> Iterator[PacketRecord]:
        with open(self.path, "rb") as fh:
            yield from self._iter(fh)

    def _iter(self, fh):
        head = fh.read(24)
        if len(head) < 24:
            raise MalformedHeader(f"{self.path}: file shorter than a pcap global header")
        magic_le = struct.unpack("<I", head[:4])[0]
        if magic_le in (MAGIC_USEC, MAGIC_NSEC):
            endian = "<"
            magic = magic_le
        else:
            magic = struct.unpack(">I", head[:4])[0]
            if magic not in (MAGIC_USEC, MAGIC_NSEC):
                raise MalformedHeader(f"{self.path}: bad pcap magic 0x{magic_le:08x}")
            endian = ">"
        scale = 10 ** 9 if magic == MAGIC_NSEC else 10 ** 6
        linktype = struct.unpack(endian + "I", head[20:24])[0] & 0x0FFFFFFF
        if linktype != LINKTYPE_ETHERNET and linktype not in RAW_LINKTYPES:
            raise UnsupportedLinkType(f"{self.path}: link type {linktype} is not Ethernet/raw IP")
        self.linktype = linktype
        rec_hdr = struct.Struct(endian + "IIII")
        rebase = _Rebaser(where=self.path)
        index = 0
        while True:
            hdr = fh.read(16)
            if not hdr:
                break
            if len(hdr) < 16:
                self.truncated += 1
                break
            sec, sub, incl, orig = rec_hdr.unpack(hdr)
            data = fh.read(incl)
            if len(data) < incl:
                self.truncated += 1
                break
            index += 1
            try:
                parsed = decode_frame(data, linktype, orig)
            except (struct.error, ValueError, IndexError):
                self.parse_errors += 1
                continue
            if parsed is None:
                self.non_ip += 1
                continue
            size, key, tcp = parsed
            if self.protocols is not None and key.protocol not in self.protocols:
                self.filtered += 1
                continue
            t = rebase(sec * scale + sub, scale)
            if t is None:
                raise NonMonotoneTimestamp(
                    f"{self.path}: packet {index} goes back in time by more than "
                    f"{MAX_BACKWARD_SLIP * 1e3:g} ms")
            self.clamped = rebase.clamped
            self.count += 1
            yield PacketRecord(t, size, key, tcp)
        if self.truncated:
            log.warning("%s: dropped truncated final record", self.path)


def read_pcap(path, filter=None) -> PcapReader:
    """Open a pcap savefile; iterate the result for :class:`PacketRecord` objects."""
    return PcapReader(path, protocols=filter)


def decode_frame(data: bytes, linktype: int, orig_len: int):
    """Decode one captured frame into ``(size, FiveTuple, TcpMeta | None)``.

    Returns None for non-IP frames.  Size is the IP total length when the
    header carries one, else the on-wire length.
    """
    off = 0
    if linktype == LINKTYPE_ETHERNET:
        ethertype = struct.unpack_from("!H", data, 12)[0]
        off = 14
        while ethertype in (0x8100, 0x88A8):
            ethertype = struct.unpack_from("!H", data, off + 2)[0]
            off += 4
        if ethertype not in (0x0800, 0x86DD):
            return None
    version = data[off] >> 4
    if version == 4:
        ihl = (data[off] & 0x0F) * 4
        if ihl < 20:
            raise ValueError("bad IHL")
        total = struct.unpack_from("!H", data, off + 2)[0]
        frag = struct.unpack_from("!H", data, off + 6)[0]
        proto = data[off + 9]
        src = bytes(data[off + 12:off + 16])
        dst = bytes(data[off + 16:off + 20])
        l4 = off + ihl
        ip_hdr = ihl
        first_fragment = (frag & 0x1FFF) == 0
    elif version == 6:
        total = struct.unpack_from("!H", data, off + 4)[0] + 40
        proto = data[off + 6]
        src = bytes(data[off + 8:off + 24])
        dst = bytes(data[off + 24:off + 40])
        l4 = off + 40
        first_fragment = True
        while proto in (0, 43, 60, 44):
            nxt = data[l4]
            if proto == 44:
                first_fragment = (struct.unpack_from("!H", data, l4 + 2)[0] & 0xFFF8) == 0
                hlen = 8
            else:
                hlen = (data[l4 + 1] + 1) * 8
            proto = nxt
            l4 += hlen
        ip_hdr = l4 - off
    else:
        raise ValueError(f"IP version {version}")
    if len(src) != len(dst) or len(src) not in (4, 16):
        raise ValueError("truncated addresses")
    size = total if total > 0 else orig_len
    sport = dport = 0
    tcp = None
    if first_fragment and proto in (TCP, UDP):
        sport, dport = struct.unpack_from("!HH", data, l4)
        if proto == TCP:
            seq, ack, off_flags = struct.unpack_from("!IIH", data, l4 + 4)
            thl = (off_flags >> 12) * 4
            flags = off_flags & 0x1FF
            payload = max(0, total - ip_hdr - thl)
            tcp = TcpMeta(seq=seq, ack=ack, flags=flags & (FIN | SYN | RST | ACK),
                          payload_len=payload)
    elif proto == TCP:
        proto_meta = TcpMeta(seq=0, ack=0, flags=0, payload_len=0)
        tcp = proto_meta
    key = FiveTuple(src, dst, sport, dport, proto)
    return size, key, tcp


class CsvReader:
    """Iterate over a ``timestamp,size,src_ip,dst_ip,src_port,dst_port,proto`` CSV.

    With ``lenient=True`` unparsable or out-of-order rows are skipped and
    counted in ``skipped`` instead of raising :class:`RowParseError`.
    """

    def __init__(self, source, lenient=False):
        self.source = source
        self.lenient = lenient
        self.count = 0
        self.skipped = 0
        self.clamped = 0

    def __iter__(self) -> Iterator[PacketRecord]:
        if hasattr(self.source, "read"):
            yield from self._iter(self.source)
        elif str(self.source) == "-":
            yield from self._iter(sys.stdin)
        else:
            with open(self.source, newline="") as fh:
                yield from self._iter(fh)

    def _fail(self, line, reason):
        if not self.lenient:
            raise RowParseError(line, reason)
        self.skipped += 1

    def _iter(self, fh):
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        if [h.strip().lower() for h in header] != CSV_HEADER:
            raise RowParseError(1, f"expected header {','.join(CSV_HEADER)}")
        rebase = _Rebaser(where=self.source)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts, size, src, dst, sport, dport, proto = row
                t_abs = float(ts)
                size = int(size)
                key = FiveTuple(pack_ip(src.strip()), pack_ip(dst.strip()), int(sport),
                                int(dport), parse_proto(proto))
                if not np.isfinite(t_abs) or t_abs < 0:
                    raise ValueError(f"bad timestamp {ts!r}")
                if size <= 0:
                    raise ValueError(f"non-positive size {size}")
            except ValueError as exc:
                self._fail(line, str(exc))
                continue
            t = rebase(t_abs)
            if t is None:
                self._fail(line, f"timestamp {ts} goes back in time by more than "
                                 f"{MAX_BACKWARD_SLIP * 1e3:g} ms")
                continue
            self.clamped = rebase.clamped
            self.count += 1
            yield PacketRecord(t, size, key)


def read_csv(path, lenient=False) -> CsvReader:
    return CsvReader(path, lenient=lenient)


def sniff_format(path) -> str:
    """``'pcap'`` when the file starts with a pcap magic, else by extension, else csv."""
    if str(path) == "-":
        return "csv"
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
    except OSError:
        head = b""
    if len(head) == 4:
        for fmt in ("<I", ">I"):
            if struct.unpack(fmt, head)[0] in (MAGIC_USEC, MAGIC_NSEC):
                return "pcap"
    if str(path).lower().endswith((".pcap", ".cap", ".dump")):
        return "pcap"
    return "csv"


def open_trace(path, fmt=None, lenient=False, protocols=None):
    fmt = fmt or sniff_format(path)
    if fmt == "pcap":
        return read_pcap(path, filter=protocols)
    if fmt == "csv":
        return read_csv(path, lenient=lenient)
    raise ValueError(f"unknown trace format {fmt!r}")


# --------------------------------------------------------------------------
# writers


def write_csv(path_or_file, records: Iterable[PacketRecord], t0: float = 0.0):
    own = not hasattr(path_or_file, "write")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            k = r.flow_key
            w.writerow([repr(t0 + r.timestamp), r.size, k.src, k.dst, k.src_port, k.dst_port,
                        proto_label(k.protocol)])
    finally:
        if own:
            fh.close()


def write_arrays_csv(path_or_file, packets: PacketArrays):
    """Fast CSV writer for columnar batches (IPv4 only)."""
    if packets.is_v6.any():
        return write_csv(path_or_file, packets.records())
    own = not hasattr(path_or_file, "write")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        fh.write(",".join(CSV_HEADER) + "\n")
        names = {}

        def dotted(col):
            uniq, inv = np.unique(col, return_inverse=True)
            text = [names.setdefault(int(a), str(ipaddress.IPv4Address(int(a)))) for a in uniq]
            return [text[i] for i in inv.ravel()]

        src, dst = dotted(packets.src[:, 3]), dotted(packets.dst[:, 3])
        ts = packets.timestamp.tolist()
        size = packets.size.tolist()
        sp, dp = packets.src_port.tolist(), packets.dst_port.tolist()
        proto = [proto_label(p) for p in packets.proto.tolist()]
        buf = io.StringIO()
        for i in range(len(packets)):
            buf.write(f"{ts[i]!r},{size[i]},{src[i]},{dst[i]},{sp[i]},{dp[i]},{proto[i]}\n")
        fh.write(buf.getvalue())
    finally:
        if own:
            fh.close()


def build_frame(record: PacketRecord, linktype: int = LINKTYPE_ETHERNET) -> bytes:
    """Header-only frame for ``record``: Ethernet (optional) + IP + L4 header."""
    k = record.flow_key
    v6 = len(k.src_ip) == 16
    if k.protocol == TCP:
        m = record.tcp_meta or TcpMeta(0, 0, 0, 0)
        l4 = struct.pack("!HHIIHHHH", k.src_port, k.dst_port, m.seq & 0xFFFFFFFF,
                         m.ack & 0xFFFFFFFF, (5 << 12) | m.flags, 65535, 0, 0)
    elif k.protocol == UDP:
        l4 = struct.pack("!HHHH", k.src_port, k.dst_port, 8, 0)
    elif k.protocol in (ICMP, ICMPV6):
        l4 = struct.pack("!BBHI", 8, 0, 0, 0)
    else:
        l4 = b""
    ip_len = (40 if v6 else 20)
    total = record.size
    if k.protocol == TCP and record.tcp_meta is not None:
        total = ip_len + len(l4) + record.tcp_meta.payload_len
    if v6:
        ip = struct.pack("!IHBB", 6 << 28, total - 40, k.protocol, 64) + k.src_ip + k.dst_ip
        ethertype = 0x86DD
    else:
        ip = struct.pack("!BBHHHBBH", 0x45, 0, total, 0, 0, 64, k.protocol, 0) + k.src_ip + k.dst_ip
        ethertype = 0x0800
    frame = ip + l4
    if linktype == LINKTYPE_ETHERNET:
        frame = b"\x02" * 6 + b"\x04" * 6 + struct.pack("!H", ethertype) + frame
    return frame


def write_pcap(path, records: Iterable[PacketRecord], t0: float = 1.0,
               linktype: int = LINKTYPE_ETHERNET, nanosecond: bool = False,
               big_endian: bool = False):
    """Write header-only packets (payload stripped) to a classic pcap file."""
    e = ">" if big_endian else "<"
    magic = MAGIC_NSEC if nanosecond else MAGIC_USEC
    scale = 10 ** 9 if nanosecond else 10 ** 6
    with open(path, "wb") as fh:
        fh.write(struct.pack(e + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype))
        for r in records:
            frame = build_frame(r, linktype)
            ticks = int(round((t0 + r.timestamp) * scale))
            sec, sub = divmod(ticks, scale)
            wire = len(frame)
            fh.write(struct.pack(e + "IIII", sec, sub, len(frame), wire))
            fh.write(frame)
