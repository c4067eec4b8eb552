"""Command-line front end.

Subcommands cover the whole pipeline: synthesize a dataset, generate
codes, train the mapping, enroll digests into a vault, verify and
identify probes, run the repeated-split evaluation, simulate attacks,
and gradient-check the backward pass.

Options may come from a flat ``key = value`` config file (--config);
explicit command-line flags override it. All randomness flows from the
named seed flags, so every run is reproducible. Errors print a single
``error: <category>: <message>`` line on stderr with a distinct exit
code per category: 2 usage, 3 bad config, 4 missing file, 5 unknown
user, 6 consistency failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mebauth import evalbench
from mebauth.codes import export_codebook, generate_codebook, import_codebook
from mebauth.errors import (
    ConfigError,
    DuplicateUserError,
    FormatError,
    MebAuthError,
    ShapeError,
    UnknownUserError,
)
from mebauth.images import AugmentConfig, load_image, resize
from mebauth.matcher import identify, verify
from mebauth.nn import (
    NetArch,
    TrainConfig,
    gradient_check,
    gradient_check_params,
    load_params,
    random_tiny_arch,
    save_params,
    sgd_train,
)
from mebauth.rng import make_rng
from mebauth.vault import Vault, load as load_vault, persist as persist_vault

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING_FILE = 4
EXIT_UNKNOWN_USER = 5
EXIT_CONSISTENCY = 6


@dataclass
class RunConfig:
    """Knobs shared by the training-shaped commands, built from flags."""

    k: int = 256
    size: int = 64
    conv1_filters: int = 32
    conv2_filters: int = 64
    filter_size: int = 7
    fc1_units: int = 2000
    fc2_units: int = 2000
    dropout: float = 0.5
    crop_size: int = 57
    flip: bool = True
    epochs: int = 20
    batch_size: int = 200
    lr: float = 0.01
    momentum: float = 0.9
    chunk_size: int = 64

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> "RunConfig":
        fields = {f: getattr(ns, f) for f in cls.__dataclass_fields__ if hasattr(ns, f)}
        return cls(**fields)

    def arch(self) -> NetArch:
        return NetArch(
            input_size=self.size,
            conv1_filters=self.conv1_filters,
            conv1_fsize=(self.filter_size, self.filter_size),
            conv2_filters=self.conv2_filters,
            conv2_fsize=(self.filter_size, self.filter_size),
            fc1_units=self.fc1_units,
            fc2_units=self.fc2_units,
            code_bits=self.k,
            dropout_p=self.dropout,
        )

    def augment(self) -> AugmentConfig:
        return AugmentConfig(m=self.size, n=self.crop_size, flip=self.flip)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            momentum=self.momentum,
            chunk_size=self.chunk_size,
        )


# ---------------------------------------------------------------------------
# shared option groups


def _add_arch_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--size", type=int, default=64, help="network input side length")
    p.add_argument("--conv1-filters", type=int, default=32)
    p.add_argument("--conv2-filters", type=int, default=64)
    p.add_argument("--filter-size", type=int, default=7)
    p.add_argument("--fc1-units", type=int, default=2000)
    p.add_argument("--fc2-units", type=int, default=2000)
    p.add_argument("--dropout", type=float, default=0.5)


def _add_augment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--crop-size", type=int, default=57, help="crop side length n")
    p.add_argument(
        "--no-flip", dest="flip", action="store_false", help="disable mirrored crops"
    )


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--chunk-size", type=int, default=64, help="forward/backward chunk")


def _load_vault(path) -> Vault:
    if not Path(path).is_file():
        raise FileNotFoundError(f"vault file {path} does not exist")
    return load_vault(path)


def _load_probe(path, m: int) -> np.ndarray:
    img = load_image(path)
    if img.shape != (m, m):
        img = resize(img, m)
    return img


def _load_dataset_resized(root, m: int) -> evalbench.Dataset:
    dataset = evalbench.load_dataset_dir(root)
    return {
        uid: [img if img.shape == (m, m) else resize(img, m) for img in samples]
        for uid, samples in dataset.items()
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth_data(ns: argparse.Namespace) -> int:
    spec = evalbench.SynthSpec(
        num_users=ns.users,
        samples_per_user=ns.samples,
        image_size=ns.size,
        pattern_components=ns.components,
        illum_amplitude=ns.illum,
        jitter_px=ns.jitter,
        noise_sigma=ns.noise,
        seed=ns.data_seed,
    )
    dataset = evalbench.gen_synth_dataset(spec)
    evalbench.save_dataset_dir(dataset, ns.out)
    print(f"wrote {spec.num_users} users x {spec.samples_per_user} samples to {ns.out}")
    return EXIT_OK


def cmd_gen_codes(ns: argparse.Namespace) -> int:
    if ns.users:
        user_ids = [u for u in ns.users.split(",") if u]
    elif ns.from_data:
        user_ids = sorted(evalbench.load_dataset_dir(ns.from_data))
    else:
        raise ConfigError("one of --users or --from-data is required")
    codebook = generate_codebook(user_ids, ns.k, make_rng(ns.code_seed))
    export_codebook(codebook, ns.out)
    print(f"wrote {len(user_ids)} codes of K={ns.k} to {ns.out}")
    return EXIT_OK


def cmd_train(ns: argparse.Namespace) -> int:
    codebook = import_codebook(ns.codes)
    run = RunConfig.from_namespace(ns)
    run.k = codebook.k
    dataset = _load_dataset_resized(ns.data, run.size)
    missing = [u for u in dataset if u not in codebook.codes]
    if missing:
        raise ShapeError(f"dataset users without codes: {', '.join(sorted(missing))}")
    train_set = evalbench.build_training_set(dataset, run.augment())
    print(
        f"training on {len(train_set)} crops "
        f"({len(dataset)} users, K={run.k}, {run.epochs} epochs)"
    )

    def progress(epoch, total, train_loss, val_loss):
        line = f"epoch {epoch + 1}/{total} train-loss {train_loss:.4f}"
        if val_loss is not None:
            line += f" val-loss {val_loss:.4f}"
        print(line, flush=True)

    params, _ = sgd_train(
        train_set,
        codebook,
        run.train_config(),
        make_rng(ns.train_seed),
        arch=run.arch(),
        progress=progress,
    )
    save_params(params, ns.out)
    print(f"wrote parameters to {ns.out}")
    return EXIT_OK


def cmd_enroll(ns: argparse.Namespace) -> int:
    codebook = import_codebook(ns.codes)
    vault = load_vault(ns.vault) if Path(ns.vault).is_file() else Vault()
    user_ids = ns.user if ns.user else sorted(codebook.codes)
    for uid in user_ids:
        if uid not in codebook.codes:
            raise UnknownUserError(f"user {uid!r} not in codebook {ns.codes}")
        vault.enroll(uid, codebook.codes[uid], overwrite=ns.overwrite,
                     created_at=ns.timestamp)
    persist_vault(vault, ns.vault)
    print(f"enrolled {len(user_ids)} users into {ns.vault}")
    return EXIT_OK


def cmd_verify(ns: argparse.Namespace) -> int:
    params = load_params(ns.params)
    vault = _load_vault(ns.vault)
    cfg = AugmentConfig(m=params.arch.input_size, n=ns.crop_size, flip=ns.flip)
    probe = _load_probe(ns.image, params.arch.input_size)
    result = verify(probe, ns.user, params, vault, cfg, threshold=ns.threshold)
    print(f"score {result.score} = {float(result.score):.10g}")
    print("accept" if result.accept else "reject")
    return EXIT_OK


def cmd_identify(ns: argparse.Namespace) -> int:
    params = load_params(ns.params)
    vault = _load_vault(ns.vault)
    cfg = AugmentConfig(m=params.arch.input_size, n=ns.crop_size, flip=ns.flip)
    probe = _load_probe(ns.image, params.arch.input_size)
    ranking = identify(probe, params, vault, cfg)
    shown = ranking if ns.top <= 0 else ranking[: ns.top]
    for rank, (uid, score) in enumerate(shown, start=1):
        print(f"{rank} {uid} {score} = {float(score):.10g}")
    return EXIT_OK


def cmd_evaluate(ns: argparse.Namespace) -> int:
    run = RunConfig.from_namespace(ns)
    run.k = ns.k
    if ns.data:
        source = _load_dataset_resized(ns.data, run.size)
    else:
        source = evalbench.SynthSpec(
            num_users=ns.users,
            samples_per_user=ns.samples,
            image_size=run.size,
            seed=ns.data_seed,
        )
    config = evalbench.ProtocolConfig(
        k=ns.k,
        num_splits=ns.splits,
        train_per_user=ns.train_per_user,
        val_per_user=ns.val_per_user,
        arch=run.arch(),
        train=run.train_config(),
        augment=run.augment(),
        seed=ns.protocol_seed,
    )
    report, systems = evalbench.run_protocol(source, config, keep_systems=True)
    if ns.attack_probes > 0:
        params, vault, _ = systems[0]
        scores = evalbench.attack_sim(
            params, vault, config.augment,
            noise_count=ns.attack_probes, rng=make_rng(ns.attack_seed),
        )
        evalbench.attach_attack_scores(report, scores)
    txt_path, csv_path = evalbench.write_report(report, ns.report_dir)
    print(f"GAR@0FAR mean {report.gar_mean:.4f}% std {report.gar_std:.4f}%")
    print(f"EER mean {report.eer_mean:.4f}% std {report.eer_std:.4f}%")
    print(f"wrote {txt_path} and {csv_path}")
    return EXIT_OK


def cmd_attack_sim(ns: argparse.Namespace) -> int:
    params = load_params(ns.params)
    vault = _load_vault(ns.vault)
    cfg = AugmentConfig(m=params.arch.input_size, n=ns.crop_size, flip=ns.flip)
    unseen = None
    if ns.unseen:
        unseen = _load_dataset_resized(ns.unseen, params.arch.input_size)
    scores = evalbench.attack_sim(
        params, vault, cfg,
        noise_count=ns.count, unseen=unseen, rng=make_rng(ns.attack_seed),
    )
    nonzero = sum(1 for s in scores if s.matches > 0)
    top = max(scores, key=lambda s: s.value)
    print(
        f"scores {len(scores)} (templates {len(vault)}) "
        f"nonzero {nonzero} max {top} = {float(top):.10g}"
    )
    if ns.out:
        with open(ns.out, "w", encoding="utf-8") as fh:
            fh.write("label,score\n")
            for s in scores:
                fh.write(f"attack,{float(s)!r}\n")
        print(f"wrote {ns.out}")
    return EXIT_OK


def cmd_gradient_check(ns: argparse.Namespace) -> int:
    rng = make_rng(ns.seed)
    worst = 0.0
    for trial in range(ns.trials):
        arch = random_tiny_arch(rng)
        params = gradient_check_params(arch, rng)
        sample = rng.random((arch.input_size, arch.input_size))
        target = rng.integers(0, 2, size=arch.code_bits).astype(np.float64)
        err = gradient_check(params, sample, target, eps=ns.eps)
        worst = max(worst, err)
        print(f"trial {trial + 1}/{ns.trials} max relative error {err:.3e}")
    print(f"overall max relative error {worst:.3e} (tolerance {ns.tol:.1e})")
    if worst >= ns.tol:
        print("error: gradient-check: tolerance exceeded", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser plumbing


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="mebauth",
        description="Face template protection with maximum-entropy binary codes.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    table: dict[str, argparse.ArgumentParser] = {}

    def sub(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.set_defaults(func=func)
        table[name] = p
        return p

    p = sub("synth-data", cmd_synth_data, "generate a synthetic identity dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--users", type=int, default=10)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--components", type=int, default=6)
    p.add_argument("--illum", type=float, default=0.15)
    p.add_argument("--jitter", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.03)
    p.add_argument("--data-seed", type=int, default=0)

    p = sub("gen-codes", cmd_gen_codes, "draw maximum-entropy codes for users")
    p.add_argument("--users", default=None, help="comma-separated user ids")
    p.add_argument("--from-data", default=None, help="take user ids from a dataset dir")
    p.add_argument("--k", type=int, default=256, help="code length in bits")
    p.add_argument("--code-seed", type=int, default=1)
    p.add_argument("--out", required=True, help="output codebook file")

    p = sub("train", cmd_train, "train the image-to-code mapping")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--codes", required=True, help="codebook file")
    p.add_argument("--out", required=True, help="output parameters file")
    p.add_argument("--train-seed", type=int, default=2)
    _add_arch_flags(p)
    _add_augment_flags(p)
    _add_train_flags(p)

    p = sub("enroll", cmd_enroll, "hash codes into protected templates")
    p.add_argument("--codes", required=True, help="codebook file")
    p.add_argument("--vault", required=True, help="vault file (created or extended)")
    p.add_argument("--user", action="append", default=None,
                   help="enroll only this user (repeatable; default: all)")
    p.add_argument("--overwrite", action="store_true",
                   help="reissue templates for already enrolled users")
    p.add_argument("--timestamp", type=int, default=0,
                   help="enrollment time as epoch seconds")

    p = sub("verify", cmd_verify, "score one probe image against one claimed user")
    p.add_argument("--image", required=True, help="probe image (PGM)")
    p.add_argument("--user", required=True, help="claimed user id")
    p.add_argument("--params", required=True, help="parameters file")
    p.add_argument("--vault", required=True, help="vault file")
    p.add_argument("--threshold", type=float, default=0.0)
    _add_augment_flags(p)

    p = sub("identify", cmd_identify, "rank all enrolled users for one probe")
    p.add_argument("--image", required=True, help="probe image (PGM)")
    p.add_argument("--params", required=True, help="parameters file")
    p.add_argument("--vault", required=True, help="vault file")
    p.add_argument("--top", type=int, default=0, help="show only the best N (0: all)")
    _add_augment_flags(p)

    p = sub("evaluate", cmd_evaluate, "repeated-split GAR/EER evaluation")
    p.add_argument("--data", default=None,
                   help="dataset directory (default: synthesize)")
    p.add_argument("--users", type=int, default=10, help="synthetic users")
    p.add_argument("--samples", type=int, default=20, help="synthetic samples per user")
    p.add_argument("--k", type=int, default=256)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--train-per-user", type=int, default=10)
    p.add_argument("--val-per-user", type=int, default=0)
    p.add_argument("--report-dir", default="report")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--protocol-seed", type=int, default=0)
    p.add_argument("--attack-probes", type=int, default=0,
                   help="also attack the first split's system with N noise probes")
    p.add_argument("--attack-seed", type=int, default=3)
    _add_arch_flags(p)
    _add_augment_flags(p)
    _add_train_flags(p)

    p = sub("attack-sim", cmd_attack_sim, "score brute-force probes against a vault")
    p.add_argument("--params", required=True, help="parameters file")
    p.add_argument("--vault", required=True, help="vault file")
    p.add_argument("--count", type=int, default=10_000, help="noise probes")
    p.add_argument("--unseen", default=None,
                   help="dataset directory of identities unknown to the network")
    p.add_argument("--attack-seed", type=int, default=3)
    p.add_argument("--out", default=None, help="optional CSV of all attack scores")
    _add_augment_flags(p)

    p = sub("gradient-check", cmd_gradient_check,
            "compare analytic and numeric gradients on tiny networks")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-4)

    return parser, table


def _parse_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file {path} does not exist")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_BOOL_WORDS = {"true": True, "yes": True, "1": True,
               "false": False, "no": False, "0": False}


def _coerce_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> dict:
    """Map config keys onto the subcommand's options, with flag typing."""
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}
    out = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            if value.lower() not in _BOOL_WORDS:
                raise ConfigError(f"config key {key!r}: expected a boolean, got {value!r}")
            out[key] = _BOOL_WORDS[value.lower()]
        elif action.type is not None:
            try:
                out[key] = action.type(value)
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc
        else:
            out[key] = value
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, table = build_parser()
    try:
        ns = parser.parse_args(argv)
        if getattr(ns, "config", None):
            defaults = _coerce_config(table[ns.command], _parse_config_file(ns.config))
            table[ns.command].set_defaults(**defaults)
            ns = parser.parse_args(argv)  # explicit flags still win
    except SystemExit as exc:  # argparse usage errors exit with 2
        return int(exc.code or 0)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING_FILE, "missing-file", exc)

    try:
        return int(ns.func(ns))
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except UnknownUserError as exc:
        return _fail(EXIT_UNKNOWN_USER, "unknown-user", exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_MISSING_FILE, "missing-file", exc)
    except (FormatError, ShapeError, DuplicateUserError) as exc:
        return _fail(EXIT_CONSISTENCY, "consistency", exc)
    except MebAuthError as exc:
        return _fail(EXIT_CONSISTENCY, "consistency", exc)


def _fail(code: int, category: str, exc: BaseException) -> int:
    message = " ".join(str(exc).split())
    print(f"error: {category}: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
