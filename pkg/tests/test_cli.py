"""Command-line workflow, exit codes, config-file layering.

Everything drives mebauth.cli.main() in process with a 24 px system
small enough to train inside the test budget. The numbered exit codes
are part of the interface: scripts route on them.
"""

import pytest

from mebauth import cli
from mebauth.vault import load as load_vault

ARCH_FLAGS = [
    "--size", "24",
    "--conv1-filters", "2",
    "--conv2-filters", "2",
    "--filter-size", "3",
    "--fc1-units", "8",
    "--fc2-units", "8",
    "--dropout", "0.0",
]
TRAIN_FLAGS = ["--epochs", "1", "--batch-size", "32", "--lr", "0.01"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset, codebook, trained net, vault: built once via the CLI."""
    root = tmp_path_factory.mktemp("cli")
    ds, codes, params, vault = root / "ds", root / "codes.tsv", root / "net.params", root / "vault.txt"
    assert cli.main(["synth-data", "--out", str(ds), "--users", "3", "--samples", "3",
                     "--size", "24", "--data-seed", "0"]) == 0
    assert cli.main(["gen-codes", "--from-data", str(ds), "--k", "16",
                     "--code-seed", "1", "--out", str(codes)]) == 0
    assert cli.main(["train", "--data", str(ds), "--codes", str(codes), "--out", str(params),
                     "--train-seed", "2", "--crop-size", "22", *ARCH_FLAGS, *TRAIN_FLAGS]) == 0
    assert cli.main(["enroll", "--codes", str(codes), "--vault", str(vault),
                     "--timestamp", "7"]) == 0
    return {"root": root, "ds": ds, "codes": codes, "params": params, "vault": vault,
            "probe": ds / "user00" / "0000.pgm"}


# ---------------------------------------------------------------------------
# pipeline commands


def test_synth_data_writes_dataset_tree(workspace):
    users = sorted(p.name for p in workspace["ds"].iterdir())
    assert users == ["user00", "user01", "user02"]
    assert len(list((workspace["ds"] / "user01").glob("*.pgm"))) == 3


def test_gen_codes_writes_one_line_per_user(workspace):
    lines = workspace["codes"].read_text().splitlines()
    assert len(lines) == 1 + 3
    assert lines[1].split("\t")[0] == "user00"


def test_train_reports_progress(workspace, capsys):
    # rebuild into a scratch file to observe stdout of a fresh run
    out = workspace["root"] / "net2.params"
    code = cli.main(["train", "--data", str(workspace["ds"]), "--codes", str(workspace["codes"]),
                     "--out", str(out), "--train-seed", "2", "--crop-size", "22",
                     *ARCH_FLAGS, *TRAIN_FLAGS])
    captured = capsys.readouterr().out
    assert code == 0
    assert "training on 162 crops" in captured  # 3 users x 3 samples x 18 crops
    assert "epoch 1/1 train-loss" in captured
    assert out.read_bytes() == workspace["params"].read_bytes()  # same seed, same bytes


def test_enroll_created_the_vault(workspace):
    vault = load_vault(workspace["vault"])
    assert sorted(vault.templates) == ["user00", "user01", "user02"]
    assert vault.get("user00").created_at == 7
    assert vault.get("user00").k == 16


def test_enroll_without_overwrite_is_a_consistency_error(workspace, capsys):
    code = cli.main(["enroll", "--codes", str(workspace["codes"]),
                     "--vault", str(workspace["vault"]), "--timestamp", "8"])
    assert code == 6
    assert "error: consistency:" in capsys.readouterr().err


def test_enroll_overwrite_bumps_version(workspace):
    code = cli.main(["enroll", "--codes", str(workspace["codes"]),
                     "--vault", str(workspace["vault"]), "--user", "user01",
                     "--overwrite", "--timestamp", "9"])
    assert code == 0
    vault = load_vault(workspace["vault"])
    assert vault.get("user01").code_version == 2
    assert vault.get("user00").code_version == 1


def test_verify_prints_exact_score_and_decision(workspace, capsys):
    code = cli.main(["verify", "--image", str(workspace["probe"]), "--user", "user00",
                     "--params", str(workspace["params"]), "--vault", str(workspace["vault"]),
                     "--crop-size", "22"])
    out = capsys.readouterr().out.splitlines()
    assert code == 0
    assert out[0].startswith("score ") and "/18 = " in out[0]  # (24-22+1)^2 crops, flipped
    assert out[1] == "accept"  # threshold defaults to 0


def test_verify_threshold_can_force_reject(workspace, capsys):
    code = cli.main(["verify", "--image", str(workspace["probe"]), "--user", "user00",
                     "--params", str(workspace["params"]), "--vault", str(workspace["vault"]),
                     "--crop-size", "22", "--no-flip", "--threshold", "1.0"])
    out = capsys.readouterr().out.splitlines()
    assert code == 0
    assert "/9 = " in out[0]  # flips disabled halves the vote count
    assert out[1] in {"accept", "reject"}


def test_identify_ranks_enrolled_users(workspace, capsys):
    code = cli.main(["identify", "--image", str(workspace["probe"]),
                     "--params", str(workspace["params"]), "--vault", str(workspace["vault"]),
                     "--crop-size", "22", "--top", "2"])
    lines = capsys.readouterr().out.splitlines()
    assert code == 0
    assert len(lines) == 2
    assert lines[0].startswith("1 user") and lines[1].startswith("2 user")


def test_attack_sim_reports_and_writes_csv(workspace, capsys):
    out_csv = workspace["root"] / "attack.csv"
    code = cli.main(["attack-sim", "--params", str(workspace["params"]),
                     "--vault", str(workspace["vault"]), "--count", "3",
                     "--crop-size", "22", "--attack-seed", "3", "--out", str(out_csv)])
    captured = capsys.readouterr().out
    assert code == 0
    assert "scores 9 (templates 3)" in captured
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "label,score"
    assert len(lines) == 1 + 9
    assert all(ln.startswith("attack,") for ln in lines[1:])


def test_gradient_check_command_passes(capsys):
    assert cli.main(["gradient-check", "--trials", "2", "--seed", "3"]) == 0
    captured = capsys.readouterr().out
    assert "trial 2/2" in captured
    assert "overall max relative error" in captured


def test_gradient_check_impossible_tolerance_fails(capsys):
    assert cli.main(["gradient-check", "--trials", "1", "--seed", "3", "--tol", "0"]) == 1
    assert "tolerance exceeded" in capsys.readouterr().err


def test_evaluate_is_deterministic_byte_for_byte(workspace, capsys):
    args = ["evaluate", "--users", "3", "--samples", "4", "--k", "16", "--splits", "2",
            "--train-per-user", "2", "--data-seed", "1", "--protocol-seed", "1",
            "--crop-size", "22", "--attack-probes", "2", *ARCH_FLAGS, *TRAIN_FLAGS]
    dir_a = workspace["root"] / "rep_a"
    dir_b = workspace["root"] / "rep_b"
    assert cli.main(args + ["--report-dir", str(dir_a)]) == 0
    assert cli.main(args + ["--report-dir", str(dir_b)]) == 0
    captured = capsys.readouterr().out
    assert "GAR@0FAR mean" in captured and "EER mean" in captured
    assert (dir_a / "report.txt").read_bytes() == (dir_b / "report.txt").read_bytes()
    assert (dir_a / "scores.csv").read_bytes() == (dir_b / "scores.csv").read_bytes()
    assert "attack score histogram" in (dir_a / "report.txt").read_text()


# ---------------------------------------------------------------------------
# exit codes


def test_usage_errors_exit_2(capsys):
    assert cli.main(["no-such-command"]) == 2
    assert cli.main(["train"]) == 2  # missing required flags
    capsys.readouterr()


def test_bad_config_value_exits_3(tmp_path, capsys):
    assert cli.main(["synth-data", "--out", str(tmp_path / "ds"), "--users", "1"]) == 3
    assert "error: config:" in capsys.readouterr().err


def test_gen_codes_needs_a_user_source(tmp_path, capsys):
    assert cli.main(["gen-codes", "--out", str(tmp_path / "c.tsv")]) == 3
    assert "error: config:" in capsys.readouterr().err


def test_missing_vault_exits_4(workspace, capsys):
    code = cli.main(["verify", "--image", str(workspace["probe"]), "--user", "user00",
                     "--params", str(workspace["params"]), "--vault", "/nonexistent/vault.txt",
                     "--crop-size", "22"])
    assert code == 4
    assert "error: missing-file:" in capsys.readouterr().err


def test_unknown_user_exits_5(workspace, capsys):
    code = cli.main(["verify", "--image", str(workspace["probe"]), "--user", "ghost",
                     "--params", str(workspace["params"]), "--vault", str(workspace["vault"]),
                     "--crop-size", "22"])
    assert code == 5
    assert "error: unknown-user:" in capsys.readouterr().err


def test_corrupt_codebook_exits_6(workspace, tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("garbage\n")
    code = cli.main(["enroll", "--codes", str(bad), "--vault", str(tmp_path / "v.txt")])
    assert code == 6
    assert "error: consistency:" in capsys.readouterr().err


def test_oversized_default_crop_exits_3(workspace, capsys):
    # default crop size 57 cannot come out of a 24 px input
    code = cli.main(["verify", "--image", str(workspace["probe"]), "--user", "user00",
                     "--params", str(workspace["params"]), "--vault", str(workspace["vault"])])
    assert code == 3
    capsys.readouterr()


# ---------------------------------------------------------------------------
# config files


def test_config_file_supplies_defaults(workspace, tmp_path, capsys):
    cfg = tmp_path / "verify.cfg"
    cfg.write_text("# comment line\ncrop-size = 22\nflip = false\n")
    code = cli.main(["verify", "--config", str(cfg), "--image", str(workspace["probe"]),
                     "--user", "user00", "--params", str(workspace["params"]),
                     "--vault", str(workspace["vault"])])
    out = capsys.readouterr().out
    assert code == 0
    assert "/9 = " in out  # flip=false from the file: 9 votes, not 18


def test_explicit_flag_beats_config_file(workspace, tmp_path, capsys):
    cfg = tmp_path / "verify.cfg"
    cfg.write_text("crop-size = 22\nflip = false\n")
    code = cli.main(["verify", "--config", str(cfg), "--crop-size", "23",
                     "--image", str(workspace["probe"]), "--user", "user00",
                     "--params", str(workspace["params"]), "--vault", str(workspace["vault"])])
    out = capsys.readouterr().out
    assert code == 0
    assert "/4 = " in out  # (24-23+1)^2 with flips still off


def test_unknown_config_key_exits_3(workspace, tmp_path, capsys):
    cfg = tmp_path / "verify.cfg"
    cfg.write_text("no-such-knob = 5\n")
    code = cli.main(["verify", "--config", str(cfg), "--image", str(workspace["probe"]),
                     "--user", "user00", "--params", str(workspace["params"]),
                     "--vault", str(workspace["vault"]), "--crop-size", "22"])
    assert code == 3
    assert "error: config:" in capsys.readouterr().err


def test_malformed_config_boolean_exits_3(workspace, tmp_path, capsys):
    cfg = tmp_path / "verify.cfg"
    cfg.write_text("flip = maybe\n")
    code = cli.main(["verify", "--config", str(cfg), "--image", str(workspace["probe"]),
                     "--user", "user00", "--params", str(workspace["params"]),
                     "--vault", str(workspace["vault"]), "--crop-size", "22"])
    assert code == 3
    capsys.readouterr()


def test_missing_config_file_exits_4(workspace, capsys):
    code = cli.main(["verify", "--config", "/nonexistent.cfg", "--image", str(workspace["probe"]),
                     "--user", "user00", "--params", str(workspace["params"]),
                     "--vault", str(workspace["vault"]), "--crop-size", "22"])
    assert code == 4
    capsys.readouterr()


def test_config_line_without_equals_exits_3(workspace, tmp_path, capsys):
    cfg = tmp_path / "verify.cfg"
    cfg.write_text("crop-size 22\n")
    code = cli.main(["verify", "--config", str(cfg), "--image", str(workspace["probe"]),
                     "--user", "user00", "--params", str(workspace["params"]),
                     "--vault", str(workspace["vault"])])
    assert code == 3
    capsys.readouterr()
