import numpy as np
import pytest

from biscale.ingest import FiveTuple, PacketRecord, TcpMeta


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tcp(t, src, dst, sport, dport, seq, ack, flags, payload, size=None):
    key = FiveTuple.from_strings(src, dst, sport, dport, "TCP")
    meta = TcpMeta(seq, ack, flags, payload)
    return PacketRecord(t, size or 40 + payload, key, meta)


def udp(t, src="10.0.0.1", dst="10.0.0.2", sport=5000, dport=53, size=80):
    return PacketRecord(t, size, FiveTuple.from_strings(src, dst, sport, dport, "UDP"))


def icmp(t, src="10.0.0.1", dst="10.0.0.2", size=84):
    return PacketRecord(t, size, FiveTuple.from_strings(src, dst, 0, 0, "ICMP"))


@pytest.fixture(scope="session")
def onoff_trace(tmp_path_factory):
    """Packet CSV of a short On/Off superposition plus a single-source anomaly."""
    from biscale.ingest import write_arrays_csv
    from biscale.synth import AnomalySpec, gen_onoff, inject_anomaly

    res = gen_onoff(1.5, 200, 0.01, 0.2, 100.0, 120.0, 1e-3, seed=31, packets=True)
    packets = inject_anomaly(res.packets, AnomalySpec(), duration=120.0, seed=32)
    path = tmp_path_factory.mktemp("trace") / "onoff.csv"
    write_arrays_csv(path, packets)
    return path


ANALYZE_ARGS = ["--delta0-ms", "1", "--fs", "3:7", "--cs", "9:13", "--no-timestamps"]


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
