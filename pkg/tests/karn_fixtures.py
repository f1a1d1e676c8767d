"""Scripted TCP exchanges with hand-computed RTT samples.

Each fixture returns ``(records, expected)`` where ``expected`` lists the
``(t_data, rtt)`` pairs a correct Karn sampler must emit, in order.
"""

from biscale.ingest import ACK, FIN, SYN

from conftest import tcp

C, S = "10.0.0.1", "10.0.0.2"


def data(t, seq, n, ack=1):
    return tcp(t, C, S, 40000, 80, seq, ack, ACK, n)


def reply(t, ack, seq=1):
    return tcp(t, S, C, 80, 40000, seq, ack, ACK, 0)


def clean():
    return [data(0.00, 1, 100), reply(0.10, 101)], [(0.00, 0.10 - 0.00)]


def retransmitted():
    recs = [data(0.00, 1, 100), data(0.05, 1, 100), reply(0.10, 101)]
    return recs, []


def delayed_ack():
    delays = [0.010] * 9 + [0.050]
    recs, expected = [], []
    for i, d in enumerate(delays):
        t = float(i)
        recs += [data(t, 1 + 100 * i, 100), reply(t + d, 101 + 100 * i)]
        expected.append((t, (t + d) - t))
    return recs, expected


def cumulative_ack():
    recs = [data(0.00, 1, 100), data(0.01, 101, 100), reply(0.05, 201)]
    return recs, [(0.00, 0.05 - 0.00), (0.01, 0.05 - 0.01)]


def out_of_order():
    # the second segment reaches the receiver first: a duplicate ACK, then
    # one cumulative ACK once the gap fills
    recs = [data(0.00, 1, 100), data(0.01, 101, 100), reply(0.03, 1), reply(0.04, 201)]
    return recs, [(0.00, 0.04 - 0.00), (0.01, 0.04 - 0.01)]


def retransmission_then_clean():
    recs = [data(0.00, 1, 100), data(0.01, 101, 100), data(0.20, 1, 100), reply(0.25, 201),
            data(0.30, 201, 100), reply(0.35, 301)]
    return recs, [(0.30, 0.35 - 0.30)]


def partial_ack_before_retransmission():
    recs = [data(0.00, 1, 100), data(0.01, 101, 100), reply(0.05, 101),
            data(0.30, 101, 100), reply(0.40, 201)]
    return recs, [(0.00, 0.05 - 0.00)]


def handshake():
    recs = [tcp(0.000, C, S, 40000, 80, 1000, 0, SYN, 0),
            tcp(0.030, S, C, 80, 40000, 5000, 1001, SYN | ACK, 0),
            tcp(0.031, C, S, 40000, 80, 1001, 5001, ACK, 0),
            tcp(0.100, C, S, 40000, 80, 1001, 5001, ACK | FIN, 0),
            tcp(0.130, S, C, 80, 40000, 5001, 1002, ACK, 0)]
    return recs, [(0.000, 0.030 - 0.000), (0.030, 0.031 - 0.030), (0.100, 0.130 - 0.100)]


def wraparound():
    seq = 2 ** 32 - 50
    recs = [data(0.0, seq, 100), reply(0.2, 50), data(0.3, 50, 100), reply(0.4, 150)]
    return recs, [(0.0, 0.2 - 0.0), (0.3, 0.4 - 0.3)]


FIXTURES = {
    "clean": clean,
    "retransmission": retransmitted,
    "delayed-ack": delayed_ack,
    "cumulative-ack": cumulative_ack,
    "out-of-order": out_of_order,
    "retransmission-then-clean": retransmission_then_clean,
    "partial-ack": partial_ack_before_retransmission,
    "handshake": handshake,
    "wraparound": wraparound,
}
