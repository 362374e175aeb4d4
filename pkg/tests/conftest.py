"""Shared test helpers."""

from deltaprobe.probe import ProbeSample


def make_sample(wire_bits, rtt_s, seq=0, sent_at_us=None, path_id="test", method="simulated"):
    """ProbeSample with sane defaults; rtt_s=None builds a lost sample."""
    return ProbeSample(
        path_id=path_id,
        seq=seq,
        payload_bytes=max(1, wire_bits // 8),
        wire_bits=wire_bits,
        sent_at_us=seq * 1000 if sent_at_us is None else sent_at_us,
        rtt_s=rtt_s,
        lost=rtt_s is None,
        method=method,
    )


def make_series(wire_bits, delays, start_seq=0, path_id="test"):
    """One sample per delay at a single size, consecutive seq numbers."""
    return [
        make_sample(wire_bits, d, seq=start_seq + i, path_id=path_id)
        for i, d in enumerate(delays)
    ]
