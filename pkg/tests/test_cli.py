"""CLI surface: bench and verify subcommands."""

from nvtrack.bench import BenchConfig
from nvtrack.cli import main


def test_bench_defaults_mirror_reference_protocol():
    cfg = BenchConfig()
    assert cfg.total_ops == 1_000_000
    assert (cfg.key_lo, cfg.key_hi) == (1, 500)
    assert cfg.prefill == 250
    assert cfg.runs == 10
    assert cfg.seed == 42


def test_bench_subcommand_prints_csv(capsys):
    rc = main(["bench", "--structure", "list", "--variant", "base",
               "--threads", "1", "--ops", "300", "--runs", "1",
               "--key-lo", "1", "--key-hi", "30", "--read-pct", "30",
               "--prefill", "10", "--seed", "3"])
    out = capsys.readouterr().out
    assert rc == 0
    lines = out.strip().splitlines()
    assert lines[0] == "structure,variant,threads,read_pct,mean_mops,stddev"
    assert lines[1].startswith("list,base,1,30,")


def test_bench_subcommand_rejects_bad_config(capsys):
    rc = main(["bench", "--structure", "list-flush", "--variant", "base"])
    assert rc == 2
    assert "flush" in capsys.readouterr().err


def test_bench_two_variants_emit_comparable_rows(tmp_path):
    out_a = tmp_path / "a.csv"
    out_b = tmp_path / "b.csv"
    common = ["--threads", "1", "--ops", "300", "--runs", "1",
              "--key-hi", "30", "--prefill", "10"]
    assert main(["bench", "--variant", "base", "--output", str(out_a)]
                + common) == 0
    assert main(["bench", "--variant", "recoverable", "--output", str(out_b)]
                + common) == 0
    rows_a = out_a.read_text().splitlines()
    rows_b = out_b.read_text().splitlines()
    assert rows_a[0] == rows_b[0]
    assert rows_a[1].split(",")[:4] == ["list", "base", "1", "30"]
    assert rows_b[1].split(",")[:4] == ["list", "recoverable", "1", "30"]


def test_verify_subcommand_passes_on_list(capsys):
    rc = main(["verify", "--structure", "list", "--pids", "2",
               "--ops-per-pid", "1", "--max-crashes", "1",
               "--seed", "5", "--budget", "300"])
    out = capsys.readouterr().out
    assert rc == 0
    assert out.startswith("PASS list.detectability:")


def test_verify_subcommand_samples_mode(capsys):
    rc = main(["verify", "--structure", "bst", "--pids", "2",
               "--ops-per-pid", "1", "--samples", "5", "--seed", "5",
               "--budget", "300"])
    assert rc == 0
    assert "PASS bst.detectability" in capsys.readouterr().out
