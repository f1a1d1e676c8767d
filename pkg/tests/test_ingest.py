import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biscale.errors import MalformedHeader, RowParseError, UnsupportedLinkType
from biscale.ingest import (
    ACK,
    ICMP,
    SYN,
    TCP,
    UDP,
    CsvReader,
    FiveTuple,
    NonMonotoneTimestamp,
    PacketArrays,
    PacketRecord,
    TcpMeta,
    open_trace,
    read_csv,
    read_pcap,
    sniff_format,
    write_arrays_csv,
    write_csv,
    write_pcap,
)

from conftest import icmp, tcp, udp


def test_empty_capture_yields_nothing(tmp_path):
    path = tmp_path / "empty.pcap"
    write_pcap(path, [])
    reader = read_pcap(path)
    assert list(reader) == []
    assert reader.warnings == 0


def test_pcap_timestamps_rebased(tmp_path):
    path = tmp_path / "three.pcap"
    recs = [udp(0.0), udp(0.5), udp(1.0)]
    write_pcap(path, recs, t0=1.0)
    got = [r.timestamp for r in read_pcap(path)]
    assert got == [0.0, 0.5, 1.0]


def test_tcp_meta_only_on_tcp(tmp_path):
    path = tmp_path / "mixed.pcap"
    recs = [tcp(0.0, "10.0.0.1", "10.0.0.2", 1234, 80, 7, 9, SYN | ACK, 0),
            udp(0.1), icmp(0.2)]
    write_pcap(path, recs)
    got = list(read_pcap(path))
    assert [r.flow_key.protocol for r in got] == [TCP, UDP, ICMP]
    assert got[0].tcp_meta is not None
    assert got[0].tcp_meta.seq == 7 and got[0].tcp_meta.ack == 9
    assert got[0].tcp_meta.flags == SYN | ACK
    assert got[1].tcp_meta is None and got[2].tcp_meta is None


@pytest.mark.parametrize("nanosecond", [False, True])
@pytest.mark.parametrize("big_endian", [False, True])
@pytest.mark.parametrize("linktype", [1, 101])
def test_pcap_round_trip(tmp_path, nanosecond, big_endian, linktype):
    recs = [
        tcp(0.0, "192.168.1.1", "10.1.1.1", 40000, 443, 1000, 0, SYN, 0),
        tcp(0.000125, "10.1.1.1", "192.168.1.1", 443, 40000, 5000, 1001, SYN | ACK, 0),
        tcp(0.25, "192.168.1.1", "10.1.1.1", 40000, 443, 1001, 5001, ACK, 512),
        udp(1.5, "2001:db8::1", "2001:db8::2", 1111, 2222, size=120),
        icmp(2.0),
    ]
    path = tmp_path / "rt.pcap"
    write_pcap(path, recs, nanosecond=nanosecond, big_endian=big_endian, linktype=linktype)
    got = list(read_pcap(path))
    assert len(got) == len(recs)
    for a, b in zip(recs, got):
        assert b.flow_key == a.flow_key
        assert b.size == a.size
        assert b.timestamp == pytest.approx(a.timestamp, abs=1e-9)
        if a.tcp_meta is not None:
            assert b.tcp_meta == a.tcp_meta


def test_pcap_protocol_filter(tmp_path):
    path = tmp_path / "f.pcap"
    write_pcap(path, [udp(0.0), icmp(0.1), udp(0.2)])
    reader = read_pcap(path, filter=["UDP"])
    assert len(list(reader)) == 2
    assert reader.filtered == 1


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.pcap"
    path.write_bytes(b"\x00" * 24)
    with pytest.raises(MalformedHeader):
        list(read_pcap(path))


def test_unsupported_linktype(tmp_path):
    path = tmp_path / "lt.pcap"
    path.write_bytes(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 105))
    with pytest.raises(UnsupportedLinkType):
        list(read_pcap(path))


def test_truncated_final_record_counted(tmp_path):
    path = tmp_path / "trunc.pcap"
    write_pcap(path, [udp(0.0), udp(0.1)])
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    reader = read_pcap(path)
    assert len(list(reader)) == 1
    assert reader.truncated == 1


def test_pcap_large_backward_jump_errors(tmp_path):
    path = tmp_path / "back.pcap"
    write_pcap(path, [udp(1.0), udp(0.5)])
    with pytest.raises(NonMonotoneTimestamp):
        list(read_pcap(path))


def test_csv_single_row(tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("timestamp,size,src_ip,dst_ip,src_port,dst_port,proto\n"
                    "0.000125,60,10.0.0.1,10.0.0.2,1234,80,TCP\n")
    recs = list(read_csv(path))
    assert len(recs) == 1
    assert recs[0].timestamp == 0.0
    assert recs[0].size == 60
    assert recs[0].flow_key == FiveTuple.from_strings("10.0.0.1", "10.0.0.2", 1234, 80, "TCP")
    assert recs[0].tcp_meta is None


def test_csv_out_of_order_names_line(tmp_path):
    path = tmp_path / "ooo.csv"
    path.write_text("timestamp,size,src_ip,dst_ip,src_port,dst_port,proto\n"
                    "1.0,60,10.0.0.1,10.0.0.2,1,2,UDP\n"
                    "2.0,60,10.0.0.1,10.0.0.2,1,2,UDP\n"
                    "1.5,60,10.0.0.1,10.0.0.2,1,2,UDP\n")
    with pytest.raises(RowParseError) as err:
        list(read_csv(path))
    assert err.value.line == 4
    assert "line 4" in str(err.value)
    reader = read_csv(path, lenient=True)
    assert len(list(reader)) == 2
    assert reader.skipped == 1


def test_csv_small_backward_slip_clamped(tmp_path):
    path = tmp_path / "slip.csv"
    path.write_text("timestamp,size,src_ip,dst_ip,src_port,dst_port,proto\n"
                    "1.0,60,10.0.0.1,10.0.0.2,1,2,UDP\n"
                    "1.0005,60,10.0.0.1,10.0.0.2,1,2,UDP\n"
                    "1.0002,60,10.0.0.1,10.0.0.2,1,2,UDP\n")
    reader = read_csv(path)
    ts = [r.timestamp for r in reader]
    assert ts == pytest.approx([0.0, 0.0005, 0.0005])
    assert reader.clamped == 1


def test_csv_malformed_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("timestamp,size,src_ip,dst_ip,src_port,dst_port,proto\n"
                    "0.1,sixty,10.0.0.1,10.0.0.2,1,2,UDP\n")
    with pytest.raises(RowParseError):
        list(read_csv(path))


def test_csv_many_rows_count_and_extremes(tmp_path, rng):
    n = 200_000
    t = np.sort(rng.uniform(5.0, 65.0, n))
    packets = PacketArrays.from_columns(t, np.full(n, 100), np.full(n, 0x0A000001, np.uint32),
                                        np.full(n, 0x0A000002, np.uint32))
    path = tmp_path / "big.csv"
    write_arrays_csv(path, packets)
    reader = read_csv(path)
    recs = list(reader)
    assert len(recs) == n == reader.count
    assert recs[0].timestamp == 0.0
    assert recs[-1].timestamp == pytest.approx(t[-1] - t[0], abs=1e-9)


def test_ports_zeroed_for_icmp():
    key = FiveTuple.from_strings("10.0.0.1", "10.0.0.2", 5, 6, "ICMP")
    assert key.src_port == 0 and key.dst_port == 0


def test_sniff_format(tmp_path):
    p = tmp_path / "x.dat"
    write_pcap(p, [udp(0.0)])
    assert sniff_format(p) == "pcap"
    c = tmp_path / "x.csv"
    write_csv(c, [udp(0.0)])
    assert sniff_format(c) == "csv"
    assert len(list(open_trace(c))) == 1


def test_csv_from_stream():
    text = "timestamp,size,src_ip,dst_ip,src_port,dst_port,proto\n3.0,40,::1,::2,1,2,UDP\n"
    recs = list(CsvReader(io.StringIO(text)))
    assert recs[0].flow_key.src == "::1"


addresses = st.one_of(
    st.integers(1, 2 ** 32 - 1).map(lambda v: v.to_bytes(4, "big")),
    st.integers(1, 2 ** 128 - 1).map(lambda v: v.to_bytes(16, "big")),
)


@st.composite
def records(draw):
    n = draw(st.integers(1, 20))
    gaps = draw(st.lists(st.integers(0, 10 ** 6), min_size=n, max_size=n))
    out, t = [], 0
    v6 = draw(st.booleans())
    for g in gaps:
        t += g
        proto = draw(st.sampled_from([TCP, UDP, ICMP]))
        src = draw(st.integers(1, 2 ** 32 - 1)).to_bytes(16 if v6 else 4, "big")
        dst = draw(st.integers(1, 2 ** 32 - 1)).to_bytes(16 if v6 else 4, "big")
        sport, dport = draw(st.integers(0, 65535)), draw(st.integers(0, 65535))
        key = FiveTuple(src, dst, sport, dport, proto)
        meta = None
        size = draw(st.integers(60, 1500))
        if proto == TCP:
            meta = TcpMeta(draw(st.integers(0, 2 ** 32 - 1)), draw(st.integers(0, 2 ** 32 - 1)),
                           draw(st.sampled_from([ACK, SYN, SYN | ACK])),
                           draw(st.integers(0, 1400)))
            size = (60 if v6 else 40) + meta.payload_len
        out.append(PacketRecord(t * 1e-6, size, key, meta))
    return out


@settings(max_examples=40, deadline=None)
@given(records())
def test_pcap_round_trip_property(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("rt") / "p.pcap"
    write_pcap(path, recs, t0=100.0)
    got = list(read_pcap(path))
    assert [g.flow_key for g in got] == [r.flow_key for r in recs]
    assert [g.size for g in got] == [r.size for r in recs]
    assert [g.tcp_meta for g in got] == [r.tcp_meta for r in recs]
    base = recs[0].timestamp
    assert np.allclose([g.timestamp for g in got], [r.timestamp - base for r in recs], atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(records())
def test_csv_round_trip_property(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    write_csv(path, recs)
    got = list(read_csv(path))
    assert [g.flow_key for g in got] == [r.flow_key for r in recs]
    base = recs[0].timestamp
    assert np.allclose([g.timestamp for g in got], [r.timestamp - base for r in recs], atol=1e-9)
