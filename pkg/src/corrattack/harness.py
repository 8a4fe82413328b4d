"""Experiment wiring: config files, the train/attack pipeline and report emitters.

Config files are INI-style with sections ``[experiment]``, ``[dataset]``,
``[model]``, ``[defense]``, ``[train]`` and one ``[attack.N]`` per attack.
All randomness derives from ``[experiment] seed`` (see :mod:`corrattack.seeding`).
"""

import configparser
import csv
from dataclasses import asdict, dataclass, field, replace
import io
import json
from pathlib import Path
from typing import Optional

import numpy as np

from . import correlation
from .attacks import METHODS, RELEVANT, AttackSpec, LossSpec, attack_eligible, midpoint_sweep
from .data import SyntheticSpec, TimeSeries, format_float, gen_synthetic, load_ucr_dataset, normalize_dataset
from .errors import ConfigError, CorrAttackError, PairingError
from .metrics import Report, relative_asr
from .models import ARCHITECTURES, ClassifierModel, Defense, TrainConfig, accuracy, load_checkpoint, save_checkpoint, train
from .seeding import derive_seed
from .spectral import add_white_noise

SUMMARY_FIELDS = [
    "dataset", "model", "defense", "attack", "seed", "eligible", "successes",
    "asr", "msd", "eps", "alpha", "budget", "a1", "a2", "a3", "k", "k_f",
]
RESULT_FIELDS = [
    "index", "true_label", "original_label", "adversarial_label", "success",
    "l2_distance", "linf", "iterations_used", "seed",
]
NA = "NA"


class ExperimentError(CorrAttackError):
    """A module error tagged with the config section that triggered it."""

    def __init__(self, where, error):
        super().__init__(f"[{where}] {error}")
        self.where = where
        self.error = error


@dataclass(frozen=True)
class DatasetConfig:
    source: str = "synthetic"
    synthetic: SyntheticSpec = SyntheticSpec()
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    name: Optional[str] = None
    normalize: bool = True

    def __post_init__(self):
        if self.source not in ("synthetic", "ucr"):
            raise ConfigError(f"[dataset] source must be synthetic or ucr, got {self.source!r}")
        if self.source == "ucr" and not (self.train_path and self.test_path):
            raise ConfigError("[dataset] ucr source needs train_path and test_path")
        if self.source == "synthetic":
            self.synthetic.validate()


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = DatasetConfig()
    arch: str = "cnn"
    defense: Defense = Defense()
    train: TrainConfig = TrainConfig()
    attacks: tuple = ()
    seed: int = 0
    out_dir: str = "out"
    workers: int = 1
    checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"[model] arch must be one of {ARCHITECTURES}, got {self.arch!r}")
        if self.workers < 1:
            raise ConfigError("[experiment] workers must be >= 1")
        object.__setattr__(self, "attacks", tuple(self.attacks))
        # the master seed drives training and attacks alike
        if self.train.seed != self.seed:
            object.__setattr__(self, "train", replace(self.train, seed=self.seed))
        fixed = tuple(a if a.seed == self.seed else replace(a, seed=self.seed) for a in self.attacks)
        object.__setattr__(self, "attacks", fixed)

    def with_overrides(self, seed=None, out_dir=None, eps=None, budget=None, workers=None, checkpoint=None):
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=str(out_dir))
        if workers is not None:
            cfg = replace(cfg, workers=int(workers))
        if checkpoint is not None:
            cfg = replace(cfg, checkpoint=str(checkpoint))
        if eps is not None or budget is not None:
            attacks = []
            for a in cfg.attacks:
                a = replace(a, eps=float(eps)) if eps is not None else a
                a = replace(a, budget=int(budget)) if budget is not None else a
                attacks.append(a)
            cfg = replace(cfg, attacks=tuple(attacks))
        return cfg


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def serialize_config(cfg):
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    lines = ["[experiment]", f"seed = {cfg.seed}", f"out_dir = {cfg.out_dir}", f"workers = {cfg.workers}"]
    if cfg.checkpoint:
        lines.append(f"checkpoint = {cfg.checkpoint}")
    d = cfg.dataset
    lines += ["", "[dataset]", f"source = {d.source}", f"normalize = {_fmt(d.normalize)}"]
    if d.name:
        lines.append(f"name = {d.name}")
    if d.source == "synthetic":
        s = d.synthetic
        lines += [
            f"num_classes = {s.num_classes}",
            f"series_length = {s.series_length}",
            f"train_per_class = {s.train_per_class}",
            f"test_per_class = {s.test_per_class}",
            f"noise = {_fmt(float(s.noise))}",
        ]
    else:
        lines += [f"train_path = {d.train_path}", f"test_path = {d.test_path}"]
    lines += ["", "[model]", f"arch = {cfg.arch}"]
    lines += ["", "[defense]", f"mode = {cfg.defense.mode}"]
    if cfg.defense.mode != "none":
        lines.append(f"sigma = {_fmt(float(cfg.defense.sigma))}")
    t = cfg.train
    lines += [
        "", "[train]",
        f"epochs = {t.epochs}",
        f"batch_size = {t.batch_size}",
        f"lr = {_fmt(float(t.lr))}",
        f"optimizer = {t.optimizer}",
        f"momentum = {_fmt(float(t.momentum))}",
    ]
    for i, a in enumerate(cfg.attacks):
        lines += ["", f"[attack.{i}]", f"method = {a.loss.method}", f"eps = {_fmt(float(a.eps))}"]
        if a.alpha is not None:
            lines.append(f"alpha = {_fmt(float(a.alpha))}")
        lines.append(f"budget = {a.budget}")
        for name in RELEVANT[a.loss.method]:
            value = getattr(a.loss, name)
            if value is not None:
                lines.append(f"{name} = {_fmt(float(value))}")
    return "\n".join(lines) + "\n"


def _get(section, key, conv, default, where):
    if key not in section:
        return default
    raw = section[key].strip()
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{where}] {key}: cannot parse {raw!r}") from None


def _bool(text):
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def parse_config(text):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    known = {"experiment", "dataset", "model", "defense", "train"}
    for name in parser.sections():
        if name not in known and not name.startswith("attack."):
            raise ConfigError(f"unknown config section [{name}]")

    def section(name):
        return parser[name] if parser.has_section(name) else {}

    ex = section("experiment")
    seed = _get(ex, "seed", int, 0, "experiment")
    ds = section("dataset")
    source = _get(ds, "source", str, "synthetic", "dataset")
    defaults = SyntheticSpec()
    dataset = DatasetConfig(
        source=source,
        synthetic=SyntheticSpec(
            num_classes=_get(ds, "num_classes", int, defaults.num_classes, "dataset"),
            series_length=_get(ds, "series_length", int, defaults.series_length, "dataset"),
            train_per_class=_get(ds, "train_per_class", int, defaults.train_per_class, "dataset"),
            test_per_class=_get(ds, "test_per_class", int, defaults.test_per_class, "dataset"),
            noise=_get(ds, "noise", float, defaults.noise, "dataset"),
        ),
        train_path=_get(ds, "train_path", str, None, "dataset"),
        test_path=_get(ds, "test_path", str, None, "dataset"),
        name=_get(ds, "name", str, None, "dataset"),
        normalize=_get(ds, "normalize", _bool, True, "dataset"),
    )
    de = section("defense")
    mode = _get(de, "mode", str, "none", "defense")
    defense = Defense(mode, _get(de, "sigma", float, 0.0, "defense"))
    tr = section("train")
    td = TrainConfig()
    train_cfg = TrainConfig(
        epochs=_get(tr, "epochs", int, td.epochs, "train"),
        batch_size=_get(tr, "batch_size", int, td.batch_size, "train"),
        lr=_get(tr, "lr", float, td.lr, "train"),
        optimizer=_get(tr, "optimizer", str, td.optimizer, "train"),
        momentum=_get(tr, "momentum", float, td.momentum, "train"),
        seed=seed,
    )
    attack_sections = sorted(
        (s for s in parser.sections() if s.startswith("attack.")),
        key=lambda s: int(s.split(".", 1)[1]) if s.split(".", 1)[1].isdigit() else -1,
    )
    attacks = []
    for name in attack_sections:
        sec = parser[name]
        if not name.split(".", 1)[1].isdigit():
            raise ConfigError(f"attack sections must be numbered, got [{name}]")
        method = _get(sec, "method", str, None, name)
        if method not in METHODS:
            raise ConfigError(f"[{name}] method must be one of {METHODS}, got {method!r}")
        overrides = {}
        for key in RELEVANT[method]:
            if key in sec:
                overrides[key] = _get(sec, key, float, None, name)
        extra = set(sec) - {"method", "eps", "alpha", "budget"} - set(RELEVANT[method])
        if extra:
            raise ConfigError(f"[{name}] keys {sorted(extra)} are not used by method {method}")
        try:
            loss = LossSpec.with_defaults(method, **overrides)
            attacks.append(
                AttackSpec(
                    loss,
                    eps=_get(sec, "eps", float, 0.1, name),
                    alpha=_get(sec, "alpha", float, None, name),
                    budget=_get(sec, "budget", int, 100, name),
                    seed=seed,
                )
            )
        except ConfigError as exc:
            raise ConfigError(f"[{name}] {exc}") from None
    return ExperimentConfig(
        dataset=dataset,
        arch=_get(section("model"), "arch", str, "cnn", "model"),
        defense=defense,
        train=train_cfg,
        attacks=tuple(attacks),
        seed=seed,
        out_dir=_get(ex, "out_dir", str, "out", "experiment"),
        workers=_get(ex, "workers", int, 1, "experiment"),
        checkpoint=_get(ex, "checkpoint", str, None, "experiment"),
    )


def load_config(path):
    return parse_config(Path(path).read_text())


def build_dataset(cfg):
    d = cfg.dataset
    try:
        if d.source == "synthetic":
            data = gen_synthetic(d.synthetic, cfg.seed)
            if d.name:
                data = replace(data, name=d.name)
        else:
            data = load_ucr_dataset(d.train_path, d.test_path, d.name)
        return normalize_dataset(data) if d.normalize else data
    except CorrAttackError as exc:
        raise ExperimentError("dataset", exc) from exc


def build_model(cfg, data):
    """Load the configured checkpoint or train a fresh model; returns ``(model, history)``."""
    if cfg.checkpoint:
        try:
            model = load_checkpoint(cfg.checkpoint)
        except (OSError, CorrAttackError) as exc:
            raise ExperimentError("experiment.checkpoint", exc) from exc
        if model.n != data.series_length or model.num_classes != data.num_classes:
            raise ExperimentError("experiment.checkpoint", ConfigError("checkpoint does not match the dataset"))
        return model, None
    try:
        fresh = ClassifierModel.create(cfg.arch, data.series_length, data.num_classes, cfg.defense, seed=cfg.seed)
    except CorrAttackError as exc:
        raise ExperimentError("model", exc) from exc
    try:
        return train(fresh, data, cfg.train)
    except CorrAttackError as exc:
        raise ExperimentError("train", exc) from exc


def _na(value):
    return NA if value is None else _fmt(value)


def _csv_text(fields, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([row[f] for f in fields])
    return buf.getvalue()


def results_csv(results):
    rows = [
        {
            "index": r.index,
            "true_label": NA if r.true_label is None else r.true_label,
            "original_label": r.original_label,
            "adversarial_label": r.adversarial_label,
            "success": int(r.success),
            "l2_distance": _fmt(r.l2_distance),
            "linf": _fmt(r.linf),
            "iterations_used": r.iterations_used,
            "seed": r.seed,
        }
        for r in results
    ]
    return _csv_text(RESULT_FIELDS, rows)


def summary_row(dataset_name, cfg, spec, report):
    loss = spec.loss
    return {
        "dataset": dataset_name,
        "model": cfg.arch,
        "defense": cfg.defense.describe(),
        "attack": loss.method,
        "seed": cfg.seed,
        "eligible": report.eligible,
        "successes": report.successes,
        "asr": _na(report.asr),
        "msd": _na(report.msd),
        "eps": _fmt(float(spec.eps)),
        "alpha": _fmt(float(spec.step)),
        "budget": spec.budget,
        "a1": _na(loss.a1),
        "a2": _na(loss.a2),
        "a3": _na(loss.a3),
        "k": _na(loss.k),
        "k_f": _na(loss.k_f),
    }


def summary_csv(rows):
    return _csv_text(SUMMARY_FIELDS, rows)


def history_csv(history):
    rows = [
        {"epoch": i, "loss": _fmt(l), "accuracy": _fmt(a)}
        for i, (l, a) in enumerate(zip(history.loss, history.accuracy))
    ]
    return _csv_text(["epoch", "loss", "accuracy"], rows)


def _write(out, name, text):
    path = out / name
    path.write_text(text)
    return path


@dataclass
class ExperimentOutput:
    reports: list
    summary_rows: list
    test_accuracy: float
    model: ClassifierModel
    files: list = field(default_factory=list)


def run_experiment(cfg, write=True):
    """Train (or load) the model, attack its eligible test set once per attack spec.

    Writes per-attack result CSVs and JSON reports plus ``summary.csv``
    into ``cfg.out_dir`` when ``write`` is true.
    """
    data = build_dataset(cfg)
    model, history = build_model(cfg, data)
    test_acc = accuracy(model, data.test)
    reports, rows = [], []
    for i, spec in enumerate(cfg.attacks):
        spec = replace(spec, loss=spec.loss.resolved(data.series_length))
        try:
            results, eligible = attack_eligible(model, data.test, spec, workers=cfg.workers)
        except CorrAttackError as exc:
            raise ExperimentError(f"attack.{i}", exc) from exc
        report = Report(results, eligible, config=_spec_echo(spec), seed=cfg.seed)
        reports.append(report)
        rows.append(summary_row(data.name, cfg, spec, report))
    output = ExperimentOutput(reports, rows, test_acc, model)
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = [_write(out, "config.ini", serialize_config(cfg))]
        if history is not None:
            files.append(_write(out, "train_history.csv", history_csv(history)))
        for i, (spec, report, row) in enumerate(zip(cfg.attacks, reports, rows)):
            stem = f"attack_{i}_{spec.loss.method}"
            files.append(_write(out, f"{stem}_results.csv", results_csv(report.results)))
            files.append(_write(out, f"{stem}_report.json", _report_json(cfg, data, test_acc, report, row)))
        files.append(_write(out, "summary.csv", summary_csv(rows)))
        output.files = files
    return output


def _spec_echo(spec):
    loss = {k: v for k, v in asdict(spec.loss).items() if v is not None and k != "target"}
    return {"loss": loss, "eps": spec.eps, "alpha": spec.step, "budget": spec.budget, "seed": spec.seed}


def _report_json(cfg, data, test_acc, report, row):
    body = {
        "dataset": data.name,
        "model": cfg.arch,
        "defense": {"mode": cfg.defense.mode, "sigma": cfg.defense.sigma},
        "seed": cfg.seed,
        "test_accuracy": test_acc,
        "eligible": report.eligible,
        "successes": report.successes,
        "asr": report.asr,
        "msd": report.msd,
        "attack": report.config,
        "summary": row,
        "config": serialize_config(cfg),
    }
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def train_only(cfg):
    data = build_dataset(cfg)
    model, history = build_model(replace(cfg, checkpoint=None), data)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "model.npz", extra={"seed": cfg.seed, "dataset": data.name})
    _write(out, "train_history.csv", history_csv(history))
    _write(out, "config.ini", serialize_config(cfg))
    return model, history, accuracy(model, data.test)


def read_summary(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


PAIR_KEY = ("dataset", "model", "defense", "seed")


def emit_scatter(rows_a, rows_b, metric):
    """Pair two sets of summary rows by (dataset, model, defense, seed).

    Returns CSV text with one ``(value_a, value_b)`` row per pair, for
    plotting against ``y = x``.
    """
    if metric not in ("asr", "msd"):
        raise ConfigError(f"metric must be asr or msd, got {metric!r}")
    if not rows_a or not rows_b:
        raise PairingError("scatter needs two non-empty reports")

    def index(rows, label):
        out = {}
        for row in rows:
            key = tuple(str(row[k]) for k in PAIR_KEY)
            if key in out:
                raise PairingError(f"report {label} has duplicate pairing key {key}")
            out[key] = row
        return out

    a, b = index(rows_a, "A"), index(rows_b, "B")
    if set(a) != set(b):
        raise PairingError(f"pairing keys differ: only in A {sorted(set(a) - set(b))}, only in B {sorted(set(b) - set(a))}")
    rows = [
        dict(zip(PAIR_KEY, key), value_a=a[key][metric], value_b=b[key][metric])
        for key in sorted(a)
    ]
    return _csv_text(list(PAIR_KEY) + ["value_a", "value_b"], rows)


def _two_column(rho):
    return _csv_text(["tau", "rho"], [{"tau": t, "rho": _fmt(float(v))} for t, v in enumerate(rho)])


def emit_nacf_dump(x, sigma_n, seed, fit_range=(1, 20), out_dir=None):
    """NACF diagnostics for a series (OTS) and its noisy copy (NTS).

    Returns a mapping ``filename -> CSV text`` and writes the files when
    ``out_dir`` is given. Noise uses ``derive_seed(seed, "nacf_noise")``.
    """
    values = np.asarray(getattr(x, "values", x), dtype=np.float64)
    noisy = add_white_noise(values, sigma_n, derive_seed(seed, "nacf_noise"))
    ots, nts = correlation.nacf(values), correlation.nacf(noisy)
    ots2, nts2 = correlation.secondary_nacf(ots), correlation.secondary_nacf(nts)
    lo, hi = fit_range
    fits = {"ots": correlation.fit_lag_range(ots, lo, hi), "nts": correlation.fit_lag_range(nts, lo, hi)}
    combined = _csv_text(
        ["tau", "ots", "nts", "ots_secondary", "nts_secondary"],
        [
            {"tau": t, "ots": _fmt(float(ots[t])), "nts": _fmt(float(nts[t])),
             "ots_secondary": _fmt(float(ots2[t])), "nts_secondary": _fmt(float(nts2[t]))}
            for t in range(len(ots))
        ],
    )
    fit_text = _csv_text(
        ["series", "tau_lo", "tau_hi", "slope", "intercept"],
        [
            {"series": name, "tau_lo": lo, "tau_hi": min(hi, len(ots) - 1), "slope": _fmt(s), "intercept": _fmt(c)}
            for name, (s, c) in fits.items()
        ],
    )
    bundle = {
        "nacf.csv": combined,
        "nacf_ots.csv": _two_column(ots),
        "nacf_nts.csv": _two_column(nts),
        "secondary_ots.csv": _two_column(ots2),
        "secondary_nts.csv": _two_column(nts2),
        "nacf_fit.csv": fit_text,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in bundle.items():
            _write(out, name, text)
    return bundle


def sweep_report(sweep, n=None):
    """CSV of ``k, k_over_n, asr, relative_asr`` rows ordered by ``k``."""
    sweep = sorted(sweep)
    rel = relative_asr([a for _, a in sweep])
    rows = [
        {"k": _fmt(k), "k_over_n": NA if n is None else _fmt(k / n), "asr": _fmt(a), "relative_asr": _fmt(r)}
        for (k, a), r in zip(sweep, rel)
    ]
    return _csv_text(["k", "k_over_n", "asr", "relative_asr"], rows)


def sweep_spec(cfg):
    """The first wcs attack in the config, else a default wcs attack that
    borrows eps/alpha/budget from the first configured attack."""
    for a in cfg.attacks:
        if a.loss.method == "wcs":
            return a
    base = AttackSpec(LossSpec.with_defaults("wcs"), seed=cfg.seed)
    if cfg.attacks:
        first = cfg.attacks[0]
        base = replace(base, eps=first.eps, alpha=first.alpha, budget=first.budget)
    return base


def run_sweep(cfg, num_points=10, write=True):
    data = build_dataset(cfg)
    model, _ = build_model(cfg, data)
    base = sweep_spec(cfg)
    try:
        sweep = midpoint_sweep(model, data, base, num_points, workers=cfg.workers)
    except CorrAttackError as exc:
        raise ExperimentError("attack", exc) from exc
    text = sweep_report(sweep, data.series_length)
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write(out, "sweep.csv", text)
    return sweep, text
