import csv
import json

import pytest

from hycoll import ConfigurationError
from hycoll.bench import (CSV_COLUMNS, TIMING_COLUMNS, BenchRecord, RunConfig, emit_results,
                          load_results, run_microbench)
from hycoll.cli import main


def _record(**kw):
    base = dict(collective="bcast", mode="hybrid", nodes=1, ppn="2", placement="block",
                msg_bytes=8, iters=1, method="-", mean_us=1.0, min_us=1.0, max_us=1.0,
                intra_msgs=0, intra_bytes=0, inter_msgs=0, inter_bytes=0)
    base.update(kw)
    return BenchRecord(**base)


def test_run_config_defaults():
    cfg = RunConfig()
    assert cfg.iters == 1000 and cfg.warmup == 100 and cfg.watchdog_secs == 30


@pytest.mark.parametrize("kwargs", [
    dict(nodes=0), dict(ppn=[0]), dict(nodes=2, ppn=[1, 2, 3]), dict(iters=0),
    dict(msg_bytes=[0]), dict(mode="mpi"), dict(collective="scan"), dict(placement="numa"),
    dict(method_policy="m3"), dict(root=5), dict(collective="allgather", placement="rr"),
])
def test_run_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        RunConfig(**kwargs)


def test_run_config_layout():
    cfg = RunConfig(nodes=2, ppn="3,2", msg_bytes="8,800")
    assert cfg.layout().node_sizes == (3, 2)
    assert cfg.msg_bytes == (8, 800)
    assert RunConfig(nodes=3, ppn=2).layout().world_size == 6


def test_allgather_800b_hybrid_has_no_intra_traffic():
    cfg = RunConfig(nodes=2, ppn=24, collective="allgather", msg_bytes=[800], iters=3, warmup=1)
    (rec,) = run_microbench(cfg)
    assert rec.intra_msgs == 0
    assert rec.inter_msgs == 3 * 2
    assert rec.min_us <= rec.mean_us <= rec.max_us


def test_single_node_bcast_has_no_inter_traffic():
    cfg = RunConfig(nodes=1, ppn=16, collective="bcast", msg_bytes=[64], iters=5, warmup=1, root=5)
    (rec,) = run_microbench(cfg)
    assert rec.inter_msgs == 0 and rec.intra_msgs == 0


def test_auto_allreduce_8b_uses_method_2():
    cfg = RunConfig(nodes=2, ppn=2, collective="allreduce", msg_bytes=[8, 4096], iters=3, warmup=0)
    small, big = run_microbench(cfg)
    assert (small.method, big.method) == ("2", "1")
    assert small.intra_msgs == 0 and big.intra_msgs == 3 * 2


def test_flat_mode_records():
    cfg = RunConfig(nodes=2, ppn=2, mode="flat", collective="allgather", msg_bytes=[8], iters=2,
                    warmup=0)
    (rec,) = run_microbench(cfg)
    assert rec.method == "-" and rec.intra_msgs > 0
    assert rec.split_us == rec.alloc_us == 0


def test_one_record_csv(tmp_path):
    path = emit_results([_record()], tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0] == ",".join(CSV_COLUMNS)


def test_csv_column_order(tmp_path):
    path = emit_results([_record(), _record(msg_bytes=16)], tmp_path / "r.csv")
    with open(path, newline="") as fh:
        assert tuple(next(csv.reader(fh))) == CSV_COLUMNS


def test_json_round_trip(tmp_path):
    recs = [_record(), _record(ppn="3,2", mean_us=2.5, method="1")]
    path = emit_results(recs, tmp_path / "r.json")
    assert json.loads(path.read_text())["type"] == "BenchRecord"
    assert load_results(path) == recs
    assert load_results(emit_results(recs, tmp_path / "r.csv")) == recs


def test_emit_requires_records(tmp_path):
    with pytest.raises(ValueError):
        emit_results([], tmp_path / "r.csv")


def test_emit_leaves_no_temp_files(tmp_path):
    emit_results([_record()], tmp_path / "r.csv")
    assert [p.name for p in tmp_path.iterdir()] == ["r.csv"]


def test_cli_bench_writes_csv(tmp_path, capsys):
    out = tmp_path / "b.csv"
    rc = main(["bench", "--collective", "allreduce", "--nodes", "2", "--ppn", "3,2",
               "--msg-bytes", "8,4096", "--iters", "5", "--warmup", "1", "--method", "m1",
               "--seed", "3", "--out", str(out)])
    assert rc == 0
    recs = load_results(out)
    assert [r.method for r in recs] == ["1", "1"]
    assert [r.intra_msgs for r in recs] == [15, 15]


def test_cli_stdout_and_json(capsys):
    assert main(["bench", "--collective", "bcast", "--iters", "2", "--warmup", "0",
                 "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["records"][0]["collective"] == "bcast"


@pytest.mark.parametrize("argv", [
    ["bench", "--collective", "allgather", "--nodes", "2", "--placement", "rr"],
    ["bench", "--collective", "bcast", "--nodes", "0"],
    ["bench", "--collective", "nope"],
    ["kernel", "summa", "--grid", "3x3"],
    ["kernel", "summa", "--grid", "two"],
    [],
])
def test_cli_configuration_errors(argv):
    assert main(argv) == 2


def test_cli_kernels(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["kernel", "summa", "--n", "16", "--grid", "2x2", "--out", str(out)]) == 0
    (rec,) = load_results(out)
    assert rec.kernel == "summa" and rec.error < 1e-12 and rec.intra_msgs == 0
    out = tmp_path / "p.json"
    assert main(["kernel", "poisson", "--n", "17", "--tol", "1e-3", "--out", str(out)]) == 0
    (rec,) = load_results(out)
    assert rec.kernel == "poisson" and rec.error < 1e-3


def test_cli_runtime_failure_exit_code(monkeypatch):
    import hycoll.cli as cli
    from hycoll.errors import DeadlockError

    def boom(cfg):
        raise DeadlockError("stuck", {0: "recv"})

    monkeypatch.setattr(cli, "run_microbench", boom)
    assert main(["bench", "--collective", "bcast"]) == 3


def test_cli_log_level(monkeypatch, capsys):
    monkeypatch.setenv("HYCOLL_LOG", "loud")
    assert main(["bench", "--collective", "bcast", "--iters", "1", "--warmup", "0"]) == 0


def test_cli_selftest(capsys):
    assert main(["selftest", "--epochs", "200"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out


def _non_timing(path):
    with open(path, newline="") as fh:
        return [{k: v for k, v in row.items() if k not in TIMING_COLUMNS}
                for row in csv.DictReader(fh)]


@pytest.mark.parametrize("collective", ["allgather", "bcast", "allreduce"])
def test_bench_is_deterministic(tmp_path, collective):
    argv = ["bench", "--collective", collective, "--nodes", "3", "--ppn", "2,1,3",
            "--msg-bytes", "1,800,4096", "--iters", "5", "--warmup", "2", "--seed", "11"]
    assert main(argv + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b.csv")]) == 0
    assert _non_timing(tmp_path / "a.csv") == _non_timing(tmp_path / "b.csv")
