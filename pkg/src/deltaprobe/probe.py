"""Variable-size delay probing over ICMP or UDP echo.

A probe session sends echo packets of several payload sizes in round-robin
order, timestamps each send and receive on the monotonic clock, and returns
one ProbeSample per probe in send order. Lost probes (no matching reply
within the timeout) carry no RTT.

ICMP echo needs a raw socket (or a kernel ping socket where permitted);
UDP echo needs a cooperating reflector, see `deltaprobe.reflector`.
"""

from __future__ import annotations

import itertools
import os
import select
import socket
import struct
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import AllProbesLost, NoReply, ProbePermissionError, ResolveFailure

METHOD_ICMP = "icmp_echo"
METHOD_UDP = "udp_echo"
METHOD_SIMULATED = "simulated"
METHOD_IMPORTED = "imported"

_METHODS = frozenset({METHOD_ICMP, METHOD_UDP, METHOD_SIMULATED, METHOD_IMPORTED})

ICMP_HEADER_BYTES = 8
UDP_HEADER_BYTES = 8
IPV4_HEADER_BYTES = 20

ICMP_ECHO_REQUEST = 8
ICMP_ECHO_REPLY = 0
ICMP_TIME_EXCEEDED = 11

# Probe payload prefix: 8-byte big-endian microsecond send timestamp
# (monotonic clock) followed by a 4-byte session nonce; the rest of the
# payload is zero padding.
_PROBE_PREFIX = struct.Struct(">QL")
MIN_PAYLOAD_BYTES = _PROBE_PREFIX.size

DEFAULT_SIZES = (100, 1124)
DEFAULT_UDP_PORT = 7777


@dataclass(frozen=True)
class ProbeSample:
    """One probe observation; `lost` is true exactly when `rtt_s` is absent."""

    path_id: str
    seq: int
    payload_bytes: int
    wire_bits: int
    sent_at_us: int
    rtt_s: Optional[float]
    lost: bool
    method: str

    def __post_init__(self):
        if self.seq < 0:
            raise ValueError(f"seq must be nonnegative, got {self.seq}")
        if self.payload_bytes <= 0:
            raise ValueError(f"payload_bytes must be positive, got {self.payload_bytes}")
        if self.wire_bits < 8 * self.payload_bytes:
            raise ValueError(
                f"wire_bits ({self.wire_bits}) smaller than payload "
                f"({self.payload_bytes} bytes)"
            )
        if self.lost != (self.rtt_s is None):
            raise ValueError("lost flag must match absence of rtt_s")
        if self.rtt_s is not None and not self.rtt_s > 0:
            raise ValueError(f"rtt_s must be positive, got {self.rtt_s}")
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class ProbePlan:
    """Parameters of one probing session."""

    target: str
    sizes_payload_bytes: tuple[int, ...] = DEFAULT_SIZES
    count_per_size: int = 30
    inter_probe_gap_s: float = 0.05
    timeout_s: float = 2.0
    method: str = METHOD_ICMP
    udp_port: int = DEFAULT_UDP_PORT

    def __post_init__(self):
        object.__setattr__(self, "sizes_payload_bytes", tuple(self.sizes_payload_bytes))
        sizes = self.sizes_payload_bytes
        if not sizes:
            raise ValueError("at least one probe size required")
        if any(s <= 0 for s in sizes):
            raise ValueError(f"probe sizes must be positive, got {sizes}")
        if len(set(sizes)) != len(sizes):
            raise ValueError(f"probe sizes must be distinct, got {sizes}")
        if self.count_per_size < 1:
            raise ValueError("count_per_size must be >= 1")
        if not self.inter_probe_gap_s > 0:
            raise ValueError("inter_probe_gap_s must be positive")
        if not self.timeout_s > self.inter_probe_gap_s:
            raise ValueError("timeout_s must exceed inter_probe_gap_s")
        if self.method not in (METHOD_ICMP, METHOD_UDP):
            raise ValueError(f"unsupported probe method {self.method!r}")


def wire_size(payload_bytes: int, method: str) -> int:
    """Wire size in bits of an echo probe at the IP layer, headers included."""
    if payload_bytes < 0:
        raise ValueError(f"payload_bytes must be nonnegative, got {payload_bytes}")
    if method == METHOD_ICMP:
        return 8 * (payload_bytes + ICMP_HEADER_BYTES + IPV4_HEADER_BYTES)
    if method == METHOD_UDP:
        return 8 * (payload_bytes + UDP_HEADER_BYTES + IPV4_HEADER_BYTES)
    raise ValueError(f"no wire model for method {method!r}")


def _resolve(target: str) -> str:
    try:
        return socket.gethostbyname(target)
    except socket.gaierror as exc:
        raise ResolveFailure(f"cannot resolve {target!r}: {exc}") from exc


def _icmp_checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = 0
    for i in range(0, len(data), 2):
        total += (data[i] << 8) + data[i + 1]
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _build_echo_request(ident: int, seq: int, payload: bytes) -> bytes:
    header = struct.pack(">BBHHH", ICMP_ECHO_REQUEST, 0, 0, ident, seq)
    csum = _icmp_checksum(header + payload)
    return struct.pack(">BBHHH", ICMP_ECHO_REQUEST, 0, csum, ident, seq) + payload


def _probe_payload(ts_us: int, nonce: int, payload_bytes: int) -> bytes:
    return _PROBE_PREFIX.pack(ts_us, nonce) + b"\x00" * (payload_bytes - MIN_PAYLOAD_BYTES)


def _open_icmp_socket() -> tuple[socket.socket, bool]:
    """Raw ICMP socket, or a kernel ping socket as unprivileged fallback."""
    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_RAW, socket.IPPROTO_ICMP)
        return sock, True
    except PermissionError:
        pass
    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM, socket.IPPROTO_ICMP)
        return sock, False
    except (PermissionError, OSError) as exc:
        raise ProbePermissionError(
            "ICMP echo needs a raw socket (root/CAP_NET_RAW) or a ping socket "
            "(net.ipv4.ping_group_range)"
        ) from exc


_session_counter = itertools.count()


class _IcmpTransport:
    """ICMP echo sender/receiver. Reply matching: (identifier, sequence, nonce);
    on an unprivileged ping socket the kernel rewrites the identifier, so
    matching falls back to (sequence, nonce)."""

    def __init__(self, dst_ip: str, nonce: int):
        self._dst = dst_ip
        self._nonce = nonce
        self._sock, self._raw = _open_icmp_socket()
        self._sock.setblocking(False)
        # process-scoped session id: pid offset by a per-process counter
        self._ident = (os.getpid() + next(_session_counter)) & 0xFFFF

    def fileno(self) -> int:
        return self._sock.fileno()

    def send(self, seq: int, ts_us: int, payload_bytes: int) -> int:
        payload = _probe_payload(ts_us, self._nonce, payload_bytes)
        packet = _build_echo_request(self._ident, seq & 0xFFFF, payload)
        self._sock.sendto(packet, (self._dst, 0))
        return seq & 0xFFFF

    def drain(self) -> list[int]:
        keys = []
        while True:
            try:
                data, _addr = self._sock.recvfrom(65535)
            except (BlockingIOError, InterruptedError):
                break
            except OSError:
                continue
            icmp = data[(data[0] & 0x0F) * 4:] if self._raw else data
            if len(icmp) < ICMP_HEADER_BYTES + MIN_PAYLOAD_BYTES:
                continue
            itype, code, _csum, ident, seq = struct.unpack_from(">BBHHH", icmp, 0)
            if itype != ICMP_ECHO_REPLY or code != 0:
                continue
            if self._raw and ident != self._ident:
                continue
            _ts, nonce = _PROBE_PREFIX.unpack_from(icmp, ICMP_HEADER_BYTES)
            if nonce != self._nonce:
                continue
            keys.append(seq)
        return keys

    def close(self):
        self._sock.close()


class _UdpTransport:
    """UDP echo sender/receiver against a verbatim reflector. Replies carry
    the probe payload back unchanged; matching uses (timestamp, nonce)."""

    def __init__(self, dst_ip: str, port: int, nonce: int):
        self._nonce = nonce
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.connect((dst_ip, port))
        self._sock.setblocking(False)

    def fileno(self) -> int:
        return self._sock.fileno()

    def send(self, seq: int, ts_us: int, payload_bytes: int) -> int:
        self._sock.send(_probe_payload(ts_us, self._nonce, payload_bytes))
        return ts_us

    def drain(self) -> list[int]:
        keys = []
        while True:
            try:
                data = self._sock.recv(65535)
            except (BlockingIOError, InterruptedError):
                break
            except OSError:
                # queued ICMP error (port/host unreachable); consume and move on
                continue
            if len(data) < MIN_PAYLOAD_BYTES:
                continue
            ts_us, nonce = _PROBE_PREFIX.unpack_from(data, 0)
            if nonce != self._nonce:
                continue
            keys.append(ts_us)
        return keys

    def close(self):
        self._sock.close()


def _run_echo_loop(plan: ProbePlan, transport) -> list[tuple[int, Optional[float]]]:
    """Interleave sends and receives on one socket; returns per-seq
    (sent_at_us, rtt_s or None) in send order."""
    sizes = plan.sizes_payload_bytes
    total = len(sizes) * plan.count_per_size
    gap_ns = int(plan.inter_probe_gap_s * 1e9)
    timeout_ns = int(plan.timeout_s * 1e9)

    pending: dict[int, tuple[int, int, int]] = {}  # key -> (seq, sent_ns, sent_at_us)
    done: dict[int, tuple[int, Optional[float]]] = {}
    last_ts_us = 0
    seq = 0
    next_send_ns = time.monotonic_ns()

    while seq < total or pending:
        now_ns = time.monotonic_ns()

        expired = [k for k, (_, sent_ns, _) in pending.items() if now_ns - sent_ns >= timeout_ns]
        for key in expired:
            pseq, _, ts_us = pending.pop(key)
            done[pseq] = (ts_us, None)

        if seq < total and now_ns >= next_send_ns:
            payload_bytes = sizes[seq % len(sizes)]
            ts_us = max(now_ns // 1000, last_ts_us + 1)
            last_ts_us = ts_us
            sent_ns = time.monotonic_ns()
            try:
                key = transport.send(seq, ts_us, payload_bytes)
                pending[key] = (seq, sent_ns, ts_us)
            except OSError:
                done[seq] = (ts_us, None)  # unreachable network counts as loss
            next_send_ns += gap_ns
            seq += 1
            continue

        deadlines = [sent_ns + timeout_ns for (_, sent_ns, _) in pending.values()]
        if seq < total:
            deadlines.append(next_send_ns)
        if not deadlines:
            continue  # everything sent and settled; loop condition ends us
        wait_s = max(0.0, (min(deadlines) - time.monotonic_ns()) / 1e9)
        readable, _, _ = select.select([transport.fileno()], [], [], wait_s)
        if not readable:
            continue
        recv_ns = time.monotonic_ns()
        for key in transport.drain():
            entry = pending.pop(key, None)
            if entry is None:
                continue  # duplicate, late, or foreign reply
            pseq, sent_ns, ts_us = entry
            rtt_s = max((recv_ns - sent_ns) / 1e9, 1e-9)  # clock granularity floor
            done[pseq] = (ts_us, rtt_s)

    return [done[i] for i in range(total)]


def run_session(plan: ProbePlan, *, path_id: Optional[str] = None) -> list[ProbeSample]:
    """Run one probing session and return samples in send order.

    Sends `count_per_size` probes per size, interleaving sizes round-robin so
    every size samples the same congestion epoch. Raises AllProbesLost when
    no probe is answered.
    """
    if min(plan.sizes_payload_bytes) < MIN_PAYLOAD_BYTES:
        raise ValueError(
            f"payload must be at least {MIN_PAYLOAD_BYTES} bytes "
            "(timestamp + nonce prefix)"
        )
    total = len(plan.sizes_payload_bytes) * plan.count_per_size
    if total > 0xFFFF:
        raise ValueError("session too large: sequence numbers are 16-bit")

    dst_ip = _resolve(plan.target)
    nonce = int.from_bytes(os.urandom(4), "big")
    if plan.method == METHOD_ICMP:
        transport = _IcmpTransport(dst_ip, nonce)
    else:
        transport = _UdpTransport(dst_ip, plan.udp_port, nonce)

    try:
        results = _run_echo_loop(plan, transport)
    finally:
        transport.close()

    pid = path_id if path_id is not None else plan.target
    sizes = plan.sizes_payload_bytes
    samples = []
    for i, (sent_at_us, rtt_s) in enumerate(results):
        payload = sizes[i % len(sizes)]
        samples.append(ProbeSample(
            path_id=pid,
            seq=i,
            payload_bytes=payload,
            wire_bits=wire_size(payload, plan.method),
            sent_at_us=sent_at_us,
            rtt_s=rtt_s,
            lost=rtt_s is None,
            method=plan.method,
        ))

    if all(s.lost for s in samples):
        raise AllProbesLost(f"all {total} probes to {plan.target} were lost")
    return samples


class _TtlProber:
    """Sends one ICMP echo at a given TTL and classifies the outcome."""

    def __init__(self, dst_ip: str, timeout_s: float):
        self._dst = dst_ip
        self._timeout_s = timeout_s
        sock, raw = _open_icmp_socket()
        if not raw:
            sock.close()
            raise ProbePermissionError(
                "hop discovery needs a raw ICMP socket to see TTL-expiry replies"
            )
        self._sock = sock
        self._sock.setblocking(False)
        self._ident = (os.getpid() ^ 0x5A5A) & 0xFFFF
        self._nonce = int.from_bytes(os.urandom(4), "big")

    def __call__(self, ttl: int) -> Optional[str]:
        self._sock.setsockopt(socket.SOL_IP, socket.IP_TTL, ttl)
        ts_us = time.monotonic_ns() // 1000
        payload = _probe_payload(ts_us, self._nonce, 24)
        packet = _build_echo_request(self._ident, ttl & 0xFFFF, payload)
        try:
            self._sock.sendto(packet, (self._dst, 0))
        except OSError:
            return None
        deadline = time.monotonic() + self._timeout_s
        saw_hop = False
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            readable, _, _ = select.select([self._sock], [], [], remaining)
            if not readable:
                break
            try:
                data, addr = self._sock.recvfrom(65535)
            except OSError:
                continue
            ihl = (data[0] & 0x0F) * 4
            icmp = data[ihl:]
            if len(icmp) < ICMP_HEADER_BYTES:
                continue
            itype, code, _csum, ident, seq = struct.unpack_from(">BBHHH", icmp, 0)
            if itype == ICMP_ECHO_REPLY and ident == self._ident and seq == (ttl & 0xFFFF):
                if addr[0] == self._dst:
                    return "target"
            elif itype == ICMP_TIME_EXCEEDED:
                # quoted packet: inner IP header + first 8 bytes of our echo
                inner = icmp[ICMP_HEADER_BYTES:]
                if len(inner) < IPV4_HEADER_BYTES + ICMP_HEADER_BYTES:
                    continue
                inner_ihl = (inner[0] & 0x0F) * 4
                q = inner[inner_ihl:]
                if len(q) < ICMP_HEADER_BYTES:
                    continue
                qtype, _qcode, _qcsum, qident, qseq = struct.unpack_from(">BBHHH", q, 0)
                if qtype == ICMP_ECHO_REQUEST and qident == self._ident and qseq == (ttl & 0xFFFF):
                    saw_hop = True
        return "hop" if saw_hop else None

    def close(self):
        self._sock.close()


def discover_hops(
    target: str,
    max_ttl: int = 30,
    *,
    timeout_s: float = 2.0,
    prober: Optional[Callable[[int], Optional[str]]] = None,
) -> int:
    """Hop count of the path: the smallest TTL at which the target itself
    replies. Probers returning "hop" or None (silent router) do not end the
    search. Raises NoReply if the target never answers within max_ttl.
    """
    if max_ttl < 1:
        raise ValueError("max_ttl must be >= 1")
    owned = None
    if prober is None:
        owned = _TtlProber(_resolve(target), timeout_s)
        prober = owned
    try:
        for ttl in range(1, max_ttl + 1):
            if prober(ttl) == "target":
                return ttl
    finally:
        if owned is not None:
            owned.close()
    raise NoReply(f"{target} did not reply within {max_ttl} hops")
