import json
import socket
import threading

import pytest

from deltaprobe.cli import format_bitrate, main
from deltaprobe.reflector import serve
from deltaprobe.simulator import Hop, SimPath, run_experiment
from deltaprobe.store import SessionRecord, load_session, save_session


def _have_icmp_socket() -> bool:
    for kind in (socket.SOCK_RAW, socket.SOCK_DGRAM):
        try:
            s = socket.socket(socket.AF_INET, kind, socket.IPPROTO_ICMP)
            s.close()
            return True
        except (PermissionError, OSError):
            continue
    return False


needs_icmp = pytest.mark.skipif(
    not _have_icmp_socket(), reason="no ICMP socket privilege in this environment"
)


@pytest.fixture
def reflector_port():
    ready = threading.Event()
    state = {}
    thread = threading.Thread(
        target=serve,
        kwargs={"host": "127.0.0.1", "port": 0, "max_datagrams": 4096,
                "on_ready": lambda p: (state.update(port=p), ready.set())},
        daemon=True,
    )
    thread.start()
    assert ready.wait(timeout=5.0)
    yield state["port"]


@pytest.fixture
def adsl_csv(tmp_path):
    path = tmp_path / "adsl.csv"
    path.write_text("size_bytes,delay_s\n100,0.018\n1124,0.042\n")
    return path


@pytest.fixture
def ftp_csv(tmp_path):
    path = tmp_path / "ftp.csv"
    path.write_text("size_bytes,delay_s\n100,0.300\n1124,0.425\n")
    return path


@pytest.fixture
def sim_session(tmp_path):
    """Noisy two-size session persisted from the simulator."""
    path = SimPath(hops=(Hop(capacity_bps=1e6, propagation_s=0.01,
                             queue_noise_mean_s=0.002),), seed=5)
    samples = run_experiment(path, sizes=[800, 8992], count_per_size=40)
    record = SessionRecord(session_id="fixture", created_at="2026-08-09T00:00:00+00:00",
                           plan=path, samples=samples)
    out = tmp_path / "fixture.jsonl"
    save_session(record, out)
    return out


def two_hop_config(tmp_path, seed=3):
    config = {
        "seed": seed,
        "hops": [{"capacity_bps": 1e6}, {"capacity_bps": 2e6}],
    }
    path = tmp_path / "twohop.json"
    path.write_text(json.dumps(config))
    return path


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def test_format_bitrate_suffixes():
    assert format_bitrate(341333.3333) == "341.3 kbit/s"
    assert format_bitrate(666666.6667) == "666.7 kbit/s"
    assert format_bitrate(285e6) == "285 Mbit/s"
    assert format_bitrate(1.25e9) == "1.25 Gbit/s"
    assert format_bitrate(512.0) == "512 bit/s"


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def test_estimate_adsl_csv(adsl_csv, capsys):
    assert main(["estimate", str(adsl_csv)]) == 0
    out = capsys.readouterr().out
    assert "B_av = 341.3 kbit/s, a = 15.656 ms" in out
    assert "pairwise" in out


def test_estimate_ftp_csv(ftp_csv, capsys):
    assert main(["estimate", str(ftp_csv)]) == 0
    out = capsys.readouterr().out
    assert "B_av = 65.5" in out


def test_estimate_json_carries_all_text_numbers(adsl_csv, capsys):
    assert main(["estimate", "--json", str(adsl_csv)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["b_av_bps"] == pytest.approx(341333.33, abs=1.0)
    assert payload["intercept_s"] == pytest.approx(0.01565625, abs=1e-6)
    assert payload["method"] == "pairwise"
    assert payload["residual_rms_s"] == 0.0
    assert payload["n_sizes"] == 2


def test_estimate_session_file(sim_session, capsys):
    assert main(["estimate", "--json", str(sim_session)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["samples_per_size"] == {"800": 40, "8992": 40}


def test_estimate_single_size_exits_3(tmp_path, capsys):
    csv_path = tmp_path / "one.csv"
    csv_path.write_text("size_bytes,delay_s\n100,0.018\n100,0.019\n")
    assert main(["estimate", str(csv_path)]) == 3
    assert "NoUsableSizes" in capsys.readouterr().err


def test_estimate_missing_file_exits_1(tmp_path):
    assert main(["estimate", str(tmp_path / "nope.jsonl")]) == 1


def test_estimate_bad_csv_exits_65(tmp_path):
    csv_path = tmp_path / "headerless.csv"
    csv_path.write_text("")
    assert main(["estimate", str(csv_path)]) == 65


def test_estimate_one_way_halve(adsl_csv, capsys):
    # halving every delay doubles the bandwidth and halves the intercept
    assert main(["estimate", "--json", "--one-way-halve", str(adsl_csv)]) == 0
    captured = capsys.readouterr()
    payload = json.loads(captured.out)
    assert payload["b_av_bps"] == pytest.approx(2 * 341333.33, abs=2.0)
    assert payload["intercept_s"] == pytest.approx(0.01565625 / 2, abs=1e-6)
    assert payload["one_way_halve"] is True
    assert "symmetric" in captured.err


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_noise_free_single_hop_estimate_equals_truth(tmp_path, capsys):
    config = tmp_path / "one.json"
    config.write_text(json.dumps({"seed": 1, "hops": [{"capacity_bps": 1e6}]}))
    out = tmp_path / "s.jsonl"
    assert main(["simulate", str(config), "--output", str(out), "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["ground_truth_bps"] == pytest.approx(1e6, rel=1e-12)
    assert payload["b_av_bps"] == payload["ground_truth_bps"]
    assert out.exists()


def test_simulate_two_hop_harmonic(tmp_path, capsys):
    config = two_hop_config(tmp_path)
    out = tmp_path / "s.jsonl"
    assert main(["simulate", str(config), "--output", str(out)]) == 0
    text = capsys.readouterr().out
    assert "666.7 kbit/s" in text
    assert "666666.666666666" in text  # raw bps printed alongside


def test_simulate_malformed_json_exits_65(tmp_path, capsys):
    config = tmp_path / "broken.json"
    config.write_text("{oops")
    assert main(["simulate", str(config)]) == 65


def test_simulate_determinism_byte_identical(tmp_path):
    config = two_hop_config(tmp_path, seed=9)
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["simulate", str(config), "--output", str(out1)]) == 0
    assert main(["simulate", str(config), "--output", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_simulate_seed_flag_changes_samples(tmp_path):
    config = tmp_path / "noisy.json"
    config.write_text(json.dumps({
        "seed": 1,
        "hops": [{"capacity_bps": 1e6, "queue_noise_mean_s": 0.003}],
    }))
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["simulate", str(config), "--output", str(out1), "--seed", "101"]) == 0
    assert main(["simulate", str(config), "--output", str(out2), "--seed", "102"]) == 0
    a = [s.rtt_s for s in load_session(out1).samples]
    b = [s.rtt_s for s in load_session(out2).samples]
    assert a != b


def test_simulate_records_rng_algorithm(tmp_path):
    config = two_hop_config(tmp_path)
    out = tmp_path / "s.jsonl"
    assert main(["simulate", str(config), "--output", str(out)]) == 0
    record = load_session(out)
    assert record.extra["rng"] == "pcg64"
    assert record.created_at == "1970-01-01T00:00:00+00:00"


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def test_calibrate_recovers_synthetic_model(tmp_path, capsys):
    lines = ["path_id,n,l_km,a_s"]
    alpha, beta = 1e-4, 5e-6
    for i, (n, l) in enumerate([(3, 120.0), (7, 2400.0), (12, 800.0), (5, 5000.0)]):
        lines.append(f"p{i},{n},{l},{alpha * n + beta * l!r}")
    obs = tmp_path / "obs.csv"
    obs.write_text("\n".join(lines) + "\n")
    model_file = tmp_path / "model.json"
    assert main(["calibrate", str(obs), "--output", str(model_file), "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["alpha_s_per_hop"] == pytest.approx(alpha, rel=1e-9)
    assert payload["beta_s_per_km"] == pytest.approx(beta, rel=1e-9)
    on_disk = json.loads(model_file.read_text())
    assert on_disk["alpha_s_per_hop"] == payload["alpha_s_per_hop"]


def test_calibrate_rank_deficient_exits_3(tmp_path, capsys):
    obs = tmp_path / "obs.csv"
    obs.write_text("path_id,n,l_km,a_s\np0,5,1000,0.005\np1,5,1000,0.005\n")
    model_file = tmp_path / "model.json"
    assert main(["calibrate", str(obs), "--output", str(model_file)]) == 3
    assert "RankDeficient" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def test_stats_text_output(sim_session, capsys):
    assert main(["stats", str(sim_session)]) == 0
    out = capsys.readouterr().out
    assert "mean = " in out
    assert "jitter = " in out
    assert "loss rate" in out


def test_stats_json(sim_session, capsys):
    assert main(["stats", "--json", str(sim_session)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n_total"] == 80
    assert payload["loss_rate"] == 0.0
    assert payload["lower_2_5_s"] <= payload["mean_s"] <= payload["upper_97_5_s"]


def test_stats_series_csv(sim_session, tmp_path, capsys):
    out_csv = tmp_path / "series.csv"
    assert main(["stats", str(sim_session), "--series", "--window", "8",
                 "--output", str(out_csv)]) == 0
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "sent_at_us,jitter_s"
    assert len(lines) == 1 + (80 - 8 + 1)


def test_stats_empty_session_exits_3(tmp_path, capsys):
    record = SessionRecord(session_id="empty", created_at="t", plan=None, samples=[])
    path = tmp_path / "empty.jsonl"
    save_session(record, path)
    assert main(["stats", str(path)]) == 3


# ---------------------------------------------------------------------------
# probe (live loopback)
# ---------------------------------------------------------------------------

def test_probe_udp_loopback_session(reflector_port, tmp_path, capsys):
    out = tmp_path / "probe.jsonl"
    code = main([
        "probe", "127.0.0.1",
        "--method", "udp_echo", "--udp-port", str(reflector_port),
        "--count", "5", "--gap", "0.005", "--timeout", "1.0",
        "--output", str(out),
    ])
    assert code == 0
    record = load_session(out)
    assert len(record.samples) == 10
    assert sum(s.lost for s in record.samples) == 0
    out_text = capsys.readouterr().out
    # loopback has no usable delay-size slope, so either outcome is fine
    assert "B_av" in out_text or "estimate unavailable" in out_text


def test_probe_all_lost_exits_2(tmp_path, capsys):
    out = tmp_path / "dead.jsonl"
    code = main([
        "probe", "127.0.0.1",
        "--method", "udp_echo", "--udp-port", "1",
        "--count", "2", "--gap", "0.01", "--timeout", "0.2",
        "--output", str(out),
    ])
    assert code == 2


@needs_icmp
def test_probe_icmp_loopback(tmp_path, capsys):
    out = tmp_path / "icmp.jsonl"
    code = main([
        "probe", "127.0.0.1", "--count", "5", "--gap", "0.005",
        "--timeout", "1.0", "--output", str(out),
    ])
    assert code == 0
    record = load_session(out)
    assert len(record.samples) == 10
    assert record.plan.method == "icmp_echo"


@needs_icmp
def test_probe_unreachable_documentation_address_exits_2(tmp_path):
    code = main([
        "probe", "203.0.113.7", "--count", "2", "--gap", "0.01",
        "--timeout", "0.2", "--output", str(tmp_path / "x.jsonl"),
    ])
    assert code == 2


@needs_icmp
def test_probe_discover_hops_loopback(reflector_port, tmp_path):
    out = tmp_path / "hops.jsonl"
    code = main([
        "probe", "127.0.0.1",
        "--method", "udp_echo", "--udp-port", str(reflector_port),
        "--count", "2", "--gap", "0.005", "--timeout", "1.0",
        "--discover-hops", "--route-km", "0.001",
        "--output", str(out),
    ])
    assert code == 0
    record = load_session(out)
    assert record.features.hop_count_n == 1


# ---------------------------------------------------------------------------
# usage and config handling
# ---------------------------------------------------------------------------

def test_duplicate_sizes_usage_error(tmp_path):
    assert main(["probe", "127.0.0.1", "--sizes", "100,100",
                 "--output", str(tmp_path / "x.jsonl")]) == 64


def test_unknown_command_usage_error():
    assert main(["frobnicate"]) == 64


def test_missing_argument_usage_error():
    assert main(["estimate"]) == 64


def test_config_file_defaults_and_flag_precedence(tmp_path, capsys):
    config = tmp_path / "deltaprobe.conf"
    config.write_text("sizes=100,1124\ncount=7\nformat=json\n")
    path_config = two_hop_config(tmp_path)
    out = tmp_path / "s.jsonl"
    assert main(["simulate", str(path_config), "--config", str(config),
                 "--output", str(out)]) == 0
    payload = json.loads(capsys.readouterr().out)  # format=json from config
    assert payload["samples_per_size"] == {"800": 7, "8992": 7}

    # flag wins over config file
    out2 = tmp_path / "s2.jsonl"
    assert main(["simulate", str(path_config), "--config", str(config),
                 "--count", "3", "--output", str(out2), "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["samples_per_size"] == {"800": 3, "8992": 3}


def test_config_file_unknown_key_exits_65(tmp_path):
    config = tmp_path / "bad.conf"
    config.write_text("warp_factor=9\n")
    assert main(["simulate", str(two_hop_config(tmp_path)),
                 "--config", str(config)]) == 65
