"""Synthetic identities, split protocol, verification metrics, attacks.

Real face databases are replaced by synthetic identities: each user is
a smooth random base pattern, and each sample perturbs it with a linear
illumination gradient, integer translation jitter, and Gaussian noise.
The protocol mirrors the repeated random-split evaluation: per split,
assign fresh codes, train the mapping, enroll digests, score genuine
and imposter attempts, and report GAR at zero FAR plus EER, aggregated
as mean and standard deviation across splits.

Scores live on the lattice {0, 1/|H|, ..., 1}; histograms are keyed by
the integer match count, i.e. bin width is exactly 1/|H|.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from mebauth.codes import CodeBook, generate_codebook
from mebauth.errors import ConfigError, ShapeError, UnknownUserError
from mebauth.images import AugmentConfig, crops_all, illum_normalize, load_image, save_image
from mebauth.matcher import MatchScore, crop_digests
from mebauth.nn import NetArch, NetworkParams, TrainConfig, sgd_train
from mebauth.rng import make_rng
from mebauth.vault import Vault

Dataset = dict[str, list[np.ndarray]]


# ---------------------------------------------------------------------------
# synthetic identities


@dataclass
class SynthSpec:
    num_users: int = 10
    samples_per_user: int = 20
    image_size: int = 64
    pattern_components: int = 6
    illum_amplitude: float = 0.15
    jitter_px: int = 2
    noise_sigma: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.num_users < 2:
            raise ConfigError("num_users must be >= 2")
        if self.samples_per_user < 2:
            raise ConfigError("samples_per_user must be >= 2")
        if self.image_size < 8:
            raise ConfigError("image_size must be >= 8")
        if min(self.illum_amplitude, self.noise_sigma) < 0 or self.jitter_px < 0:
            raise ConfigError("nuisance amplitudes must be >= 0")


def _base_pattern(size: int, components: int, rng: np.random.Generator) -> np.ndarray:
    """Per-identity pattern in [0.2, 0.8]: oriented texture patches.

    Each component is a Gaussian-windowed oriented carrier at a random
    position, like the localized structures of real imagery: the
    carriers sit in the band illum_normalize keeps, and the identity is
    the spatial arrangement of patch energy. Two coarse sinusoids add
    shading that the normalization mostly removes. Stationary noise can
    mimic a carrier locally but not a specific whole-image energy
    layout, which keeps the learned mapping selective.
    """
    yy, xx = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    acc = np.zeros((size, size))
    for _ in range(2):
        fx, fy = rng.uniform(0.5, 2.5, size=2) / size
        phase = rng.uniform(0, 2 * np.pi)
        acc += rng.uniform(0.3, 0.6) * np.cos(2 * np.pi * (fx * xx + fy * yy) + phase)
    for _ in range(components):
        cy, cx = rng.uniform(0.15 * size, 0.85 * size, size=2)
        sigma = rng.uniform(2.5, 5.0)
        theta = rng.uniform(0, np.pi)
        lam = rng.uniform(5.0, 10.0)
        phase = rng.uniform(0, 2 * np.pi)
        window = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
        along = np.cos(theta) * (xx - cx) + np.sin(theta) * (yy - cy)
        acc += rng.uniform(0.8, 1.2) * window * np.cos(2 * np.pi * along / lam + phase)
    lo, hi = acc.min(), acc.max()
    return 0.2 + 0.6 * (acc - lo) / (hi - lo)


def _translate(image: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer shift with reflective fill (no wrap-around)."""
    if dy == 0 and dx == 0:
        return image.copy()
    size = image.shape[0]
    pad = max(abs(dy), abs(dx))
    padded = np.pad(image, pad, mode="reflect")
    return padded[pad + dy : pad + dy + size, pad + dx : pad + dx + size].copy()


def gen_synth_dataset(spec: SynthSpec, rng: np.random.Generator | None = None) -> Dataset:
    """User-labeled images; user ids are 'user00', 'user01', ..."""
    if rng is None:
        rng = make_rng(spec.seed)
    size = spec.image_size
    yy, xx = np.meshgrid(np.linspace(-0.5, 0.5, size), np.linspace(-0.5, 0.5, size),
                         indexing="ij")
    dataset: Dataset = {}
    for u in range(spec.num_users):
        uid = f"user{u:02d}"
        base = _base_pattern(size, spec.pattern_components, rng)
        samples = []
        for _ in range(spec.samples_per_user):
            dy = dx = 0
            if spec.jitter_px > 0:
                dy, dx = rng.integers(-spec.jitter_px, spec.jitter_px + 1, size=2)
            img = _translate(base, int(dy), int(dx))
            if spec.illum_amplitude > 0:
                gx, gy, off = rng.uniform(-1.0, 1.0, size=3)
                img = img + spec.illum_amplitude * (gx * xx + gy * yy + 0.5 * off)
            if spec.noise_sigma > 0:
                img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
            samples.append(np.clip(img, 0.0, 1.0))
        dataset[uid] = samples
    return dataset


def save_dataset_dir(dataset: Dataset, root) -> None:
    """Directory layout: <root>/<user_id>/<sample>.pgm."""
    root = Path(root)
    for uid, samples in dataset.items():
        (root / uid).mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(samples):
            save_image(img, root / uid / f"{i:04d}.pgm")


def load_dataset_dir(root) -> Dataset:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    dataset: Dataset = {}
    for user_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(user_dir.glob("*.pgm"))
        if files:
            dataset[user_dir.name] = [load_image(p) for p in files]
    if not dataset:
        raise FileNotFoundError(f"no <user>/<sample>.pgm files under {root}")
    return dataset


# ---------------------------------------------------------------------------
# split protocol


def split_train_test(
    dataset: Dataset, train_per_user: int = 10, rng: np.random.Generator | None = None
) -> tuple[Dataset, Dataset]:
    """Random per-user split: train_per_user images train, the rest test."""
    if rng is None:
        rng = make_rng(0)
    train: Dataset = {}
    test: Dataset = {}
    for uid in sorted(dataset):
        samples = dataset[uid]
        if len(samples) <= train_per_user:
            raise ConfigError(
                f"user {uid!r} has {len(samples)} samples, needs > {train_per_user}"
            )
        order = rng.permutation(len(samples))
        train[uid] = [samples[i] for i in order[:train_per_user]]
        test[uid] = [samples[i] for i in order[train_per_user:]]
    return train, test


def build_training_set(train: Dataset, cfg: AugmentConfig) -> list[tuple[str, np.ndarray]]:
    """Expand each training image into its normalized crops, labeled by user."""
    out: list[tuple[str, np.ndarray]] = []
    for uid in sorted(train):
        for img in train[uid]:
            crops = np.stack(crops_all(img, cfg))
            for crop in illum_normalize(crops):
                out.append((uid, crop))
    return out


def collect_scores(
    params: NetworkParams, vault: Vault, test: Dataset, cfg: AugmentConfig
) -> tuple[list[MatchScore], list[MatchScore]]:
    """Genuine (sample vs own template) and imposter (vs all other) scores.

    Crop digests are computed once per sample and compared against every
    enrolled template, matching per-pair score_verify exactly.
    """
    genuine: list[MatchScore] = []
    imposter: list[MatchScore] = []
    enrolled = sorted(vault.templates)
    for uid in sorted(test):
        if uid not in vault:
            raise UnknownUserError(f"test user {uid!r} is not enrolled")
        for img in test[uid]:
            digests = crop_digests(img, params, cfg)
            total = len(digests)
            for other in enrolled:
                matches = sum(1 for d in digests if d == vault.templates[other].digest)
                score = MatchScore(matches, total)
                (genuine if other == uid else imposter).append(score)
    return genuine, imposter


# ---------------------------------------------------------------------------
# metrics


def _as_fraction(score) -> Fraction:
    if isinstance(score, MatchScore):
        return score.value
    return Fraction(score)


def gar_at_zero_far(genuine, imposter) -> float:
    """Percent of genuine scores accepted at the zero-FAR threshold.

    The threshold sits strictly above the highest imposter score (on the
    discrete lattice: max imposter + half a bin), so a genuine attempt
    is accepted iff it strictly exceeds every imposter score.
    """
    gen = [_as_fraction(s) for s in genuine]
    imp = [_as_fraction(s) for s in imposter]
    if not gen or not imp:
        raise ConfigError("gar_at_zero_far needs non-empty genuine and imposter scores")
    ceiling = max(imp)
    return 100.0 * sum(1 for g in gen if g > ceiling) / len(gen)


def compute_eer(genuine, imposter) -> float:
    """Equal error rate in percent, swept over the discrete thresholds.

    At each candidate threshold t: FAR = frac(imposter >= t) and
    FRR = frac(genuine < t). EER is (FAR + FRR) / 2 at the t minimizing
    |FAR - FRR|; ties resolve to the lowest threshold.
    """
    gen = [_as_fraction(s) for s in genuine]
    imp = [_as_fraction(s) for s in imposter]
    if not gen or not imp:
        raise ConfigError("compute_eer needs non-empty genuine and imposter scores")
    top = max(gen + imp)
    candidates = sorted(set(gen + imp) | {Fraction(0), top + 1})
    best = None
    for t in candidates:
        # exact rationals: float rounding here can split algebraically
        # tied |FAR - FRR| values and violate the lowest-threshold rule
        far = Fraction(sum(1 for s in imp if s >= t), len(imp))
        frr = Fraction(sum(1 for s in gen if s < t), len(gen))
        key = (abs(far - frr), t)
        if best is None or key < best[0]:
            best = (key, (far + frr) / 2)
    return float(100 * best[1])


# ---------------------------------------------------------------------------
# full protocol


@dataclass
class ProtocolConfig:
    k: int = 256
    num_splits: int = 10
    train_per_user: int = 10
    val_per_user: int = 0
    arch: NetArch | None = None  # None: reference architecture at K
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0


@dataclass
class EvalReport:
    k: int
    crop_total: int
    num_splits: int
    gar_per_split: list[float]
    eer_per_split: list[float]
    gar_mean: float
    gar_std: float
    eer_mean: float
    eer_std: float
    genuine_hist: dict[int, int]
    imposter_hist: dict[int, int]
    attack_hist: dict[int, int] | None = None
    genuine_scores: list[MatchScore] = field(default_factory=list)
    imposter_scores: list[MatchScore] = field(default_factory=list)
    attack_scores: list[MatchScore] = field(default_factory=list)
    train_history: list[dict] = field(default_factory=list)


def _hist(scores: list[MatchScore]) -> dict[int, int]:
    out: dict[int, int] = {}
    for s in scores:
        out[s.matches] = out.get(s.matches, 0) + 1
    return dict(sorted(out.items()))


def run_protocol(
    dataset_source,
    config: ProtocolConfig,
    keep_systems: bool = False,
):
    """Repeated-split evaluation; deterministic for a fixed config.seed.

    dataset_source is a SynthSpec, a dataset dict, or a directory path.
    With keep_systems=True, returns (report, systems) where systems is a
    list of (params, vault, test_split) per split for reuse (e.g. attack
    simulation against the trained system).
    """
    if isinstance(dataset_source, SynthSpec):
        dataset = gen_synth_dataset(dataset_source)
    elif isinstance(dataset_source, dict):
        dataset = dataset_source
    else:
        dataset = load_dataset_dir(dataset_source)
    if config.num_splits < 1:
        raise ConfigError("num_splits must be >= 1")

    users = sorted(dataset)
    arch = config.arch if config.arch is not None else NetArch.reference(code_bits=config.k)
    if arch.code_bits != config.k:
        raise ShapeError(f"arch K={arch.code_bits} but config K={config.k}")

    seeds = np.random.SeedSequence(config.seed).spawn(config.num_splits)
    gars: list[float] = []
    eers: list[float] = []
    all_gen: list[MatchScore] = []
    all_imp: list[MatchScore] = []
    histories: list[dict] = []
    systems = []
    for split_seq in seeds:
        split_rng, code_rng, train_rng = (
            np.random.Generator(np.random.PCG64(s)) for s in split_seq.spawn(3)
        )
        train, test = split_train_test(dataset, config.train_per_user, split_rng)
        val = None
        if config.val_per_user > 0:
            if config.val_per_user >= config.train_per_user:
                raise ConfigError("val_per_user must be < train_per_user")
            val = {u: train[u][-config.val_per_user :] for u in train}
            train = {u: train[u][: -config.val_per_user] for u in train}
        codebook = generate_codebook(users, config.k, code_rng)
        train_set = build_training_set(train, config.augment)
        val_set = build_training_set(val, config.augment) if val else None
        params, history = sgd_train(
            train_set, codebook, config.train, train_rng, arch=arch, val_dataset=val_set
        )
        vault = Vault()
        for uid in users:
            vault.enroll(uid, codebook[uid], created_at=0)
        genuine, imposter = collect_scores(params, vault, test, config.augment)
        gars.append(gar_at_zero_far(genuine, imposter))
        eers.append(compute_eer(genuine, imposter))
        all_gen.extend(genuine)
        all_imp.extend(imposter)
        histories.append(history)
        if keep_systems:
            systems.append((params, vault, test))

    report = EvalReport(
        k=config.k,
        crop_total=config.augment.crop_count,
        num_splits=config.num_splits,
        gar_per_split=gars,
        eer_per_split=eers,
        gar_mean=float(np.mean(gars)),
        gar_std=float(np.std(gars)),
        eer_mean=float(np.mean(eers)),
        eer_std=float(np.std(eers)),
        genuine_hist=_hist(all_gen),
        imposter_hist=_hist(all_imp),
        genuine_scores=all_gen,
        imposter_scores=all_imp,
        train_history=histories,
    )
    return (report, systems) if keep_systems else report


def small_system_config(k: int = 256, seed: int = 0) -> tuple[SynthSpec, ProtocolConfig]:
    """One-CPU profile: 10 synthetic users and a compact network.

    Calibrated so that training reaches exact code reproduction on a
    few epochs (minutes per split on a single core). Higher learning
    rates collapse the features into an input-independent marginal fit,
    so the rate here is deliberately conservative. The wide fc trunk is
    a security calibration, not a capacity one: narrow trunks (128) put
    most of feature space in the span of the enrolled-code directions,
    and noise probes then binarize to an enrolled code often enough to
    matter. At width 512 the nearest noise crop stays dozens of bits
    away. Used by the evaluation tests; a reasonable starting point for
    experiments.
    """
    spec = SynthSpec(seed=seed)
    arch = NetArch(
        input_size=64,
        conv1_filters=6,
        conv1_fsize=(5, 5),
        conv2_filters=12,
        conv2_fsize=(5, 5),
        fc1_units=512,
        fc2_units=512,
        code_bits=k,
        dropout_p=0.0,
    )
    config = ProtocolConfig(
        k=k,
        num_splits=3,
        train_per_user=10,
        arch=arch,
        train=TrainConfig(epochs=8, batch_size=50, lr=0.001, momentum=0.9, chunk_size=64),
        augment=AugmentConfig(m=64, n=61, flip=True),
        seed=seed,
    )
    return spec, config


def attach_attack_scores(report: EvalReport, scores: list[MatchScore]) -> None:
    report.attack_scores = list(scores)
    report.attack_hist = _hist(report.attack_scores)


# ---------------------------------------------------------------------------
# attack simulation


def attack_sim(
    params: NetworkParams,
    vault: Vault,
    cfg: AugmentConfig,
    noise_count: int = 10_000,
    unseen: Dataset | None = None,
    rng: np.random.Generator | None = None,
) -> list[MatchScore]:
    """Brute-force probes in the input domain.

    Feeds uniform-noise images (and optionally images of identities the
    network never saw) through the full scoring pipeline against every
    enrolled template. Returns one score per (probe, template) pair, in
    probe order then sorted-user order.
    """
    if len(vault) == 0:
        raise ShapeError("vault is empty")
    if rng is None:
        rng = make_rng(0)
    enrolled = sorted(vault.templates)
    scores: list[MatchScore] = []

    def probe(img: np.ndarray) -> None:
        digests = crop_digests(img, params, cfg)
        total = len(digests)
        for uid in enrolled:
            matches = sum(1 for d in digests if d == vault.templates[uid].digest)
            scores.append(MatchScore(matches, total))

    for _ in range(noise_count):
        probe(rng.random((cfg.m, cfg.m)))
    if unseen:
        for uid in sorted(unseen):
            for img in unseen[uid]:
                probe(np.asarray(img, dtype=np.float64))
    return scores


# ---------------------------------------------------------------------------
# report output


def report_text(report: EvalReport) -> str:
    """Human-readable, byte-stable summary of an evaluation run."""
    buf = io.StringIO()
    w = buf.write
    w("MEB evaluation report\n")
    w(f"K (bits of security): {report.k}\n")
    w(f"crops per probe |H|: {report.crop_total}\n")
    w(f"splits: {report.num_splits}\n")
    for i, (g, e) in enumerate(zip(report.gar_per_split, report.eer_per_split)):
        w(f"split {i}: GAR@0FAR {g:.4f}%  EER {e:.4f}%\n")
    w(f"GAR@0FAR mean {report.gar_mean:.4f}%  std {report.gar_std:.4f}%\n")
    w(f"EER mean {report.eer_mean:.4f}%  std {report.eer_std:.4f}%\n")
    for name, hist in (
        ("genuine", report.genuine_hist),
        ("imposter", report.imposter_hist),
        ("attack", report.attack_hist),
    ):
        if hist is None:
            continue
        w(f"{name} score histogram (bin width 1/{report.crop_total}):\n")
        for matches, count in hist.items():
            w(f"  {matches}/{report.crop_total}: {count}\n")
    return buf.getvalue()


def write_report(report: EvalReport, out_dir) -> tuple[Path, Path]:
    """Write report.txt and scores.csv; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    txt_path = out_dir / "report.txt"
    txt_path.write_text(report_text(report), encoding="utf-8")
    csv_path = out_dir / "scores.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "score"])
        for label, scores in (
            ("genuine", report.genuine_scores),
            ("imposter", report.imposter_scores),
            ("attack", report.attack_scores),
        ):
            for s in scores:
                writer.writerow([label, repr(float(s))])
    return txt_path, csv_path
