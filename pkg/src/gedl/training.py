"""Training loop, evaluation, hyperparameter sweep and noise-severity study.

Seeding: the run's master seed feeds ``numpy.random.SeedSequence(seed)``,
whose three spawned children drive, in order, dataset generation, weight
initialisation and mini-batch shuffling.
"""

import configparser
import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import stats

from . import evidential, metrics, nnet, uncertainty
from .data import DatasetSpec, generate_dataset

__all__ = [
    "ConfigError",
    "TrainingError",
    "RunConfig",
    "load_config_file",
    "seed_streams",
    "TrainingLog",
    "MetricsReport",
    "train",
    "predict",
    "evaluate",
    "run",
    "sweep",
    "severity_study",
    "severity_trend",
]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or unknown run configuration."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""


@dataclass(frozen=True)
class RunConfig:
    variant: str = "gedl"
    c_w: float = 0.5
    c_tau: float = 100.0
    w0: float = 2.0
    t0: int = 10
    epochs: int = 50
    seed: int = 0
    hidden_dims: tuple = (64, 64)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    data: DatasetSpec = field(default_factory=DatasetSpec)
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.variant not in evidential.PRESETS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {sorted(evidential.PRESETS)}")
        for name in ("c_w", "c_tau", "w0", "lr", "eps"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.t0 <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("t0, epochs and batch_size must be positive")
        if any(int(h) <= 0 for h in self.hidden_dims):
            raise ConfigError("hidden_dims must be positive")

    def variant_config(self):
        return evidential.get_preset(self.variant, c_w=self.c_w, c_tau=self.c_tau, w0=self.w0, t0=self.t0)

    def to_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_mapping(cls, mapping):
        """Build from flat key/value pairs; ``data.*`` keys go to the dataset spec."""
        names = {f.name for f in fields(cls)} - {"data"}
        defaults = cls()
        kw, data_kw = {}, {}
        for key, value in mapping.items():
            if key.startswith("data."):
                data_kw[key[5:]] = value
            elif key == "data" and isinstance(value, dict):
                data_kw.update(value)
            elif key in names:
                kw[key] = _coerce(key, value, getattr(defaults, key))
            else:
                raise ConfigError(f"unknown config key {key!r}")
        try:
            if data_kw:
                kw["data"] = DatasetSpec.from_mapping(data_kw)
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


def _coerce(key, value, default):
    if value is None:
        return default
    try:
        if key == "hidden_dims":
            if isinstance(value, str):
                parts = [p for p in value.replace(",", " ").split() if p]
                return tuple(int(p) for p in parts)
            return tuple(int(v) for v in value)
        if isinstance(default, bool):
            return str(value).lower() in ("1", "true", "yes")
        return type(default)(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


# section -> keys accepted in it; [data] keys map onto DatasetSpec
_SECTIONS = {
    "run": ("variant", "epochs", "seed", "out_dir"),
    "variant": ("c_w", "c_tau", "w0", "t0"),
    "model": ("hidden_dims",),
    "optim": ("lr", "beta1", "beta2", "eps", "batch_size"),
}


def load_config_file(path):
    """Read an INI-style key/value file into a flat mapping for ``RunConfig``.

    Sections are ``[run]``, ``[variant]``, ``[model]``, ``[optim]`` and
    ``[data]``; a key in the wrong section or an unknown section is an error.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    flat = {}
    data_keys = {f.name for f in fields(DatasetSpec)}
    for section in parser.sections():
        for key, value in parser.items(section):
            if section == "data":
                if key not in data_keys:
                    raise ConfigError(f"unknown key {key!r} in [data]")
                flat[f"data.{key}"] = value
            elif section in _SECTIONS:
                if key not in _SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                flat[key] = value
            else:
                raise ConfigError(f"unknown section [{section}]")
    return flat


def seed_streams(seed):
    """(data, init, shuffle) generators derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


@dataclass
class TrainingLog:
    """One row per epoch of loss components and schedule state."""

    rows: list = field(default_factory=list)

    COLUMNS = (
        "epoch",
        "loss",
        "data_term",
        "kl_term",
        "kl_weight_mean",
        "kl_weight_max",
        "tau",
        "w_mean",
        "w_min",
        "w_max",
        "mean_strength",
        "cumulative_strength",
        "train_accuracy",
    )

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow(r)


def _dirichlet_from_evidence(cfg, e):
    K = e.shape[-1]
    W = evidential.prior_strength(cfg, e)  # stop-gradient: a plain array, never differentiated
    a = evidential.uniform_base_rate(K)
    alpha = evidential.evidence_to_alpha(e, W, a)
    prior = W[:, None] * a
    return alpha, prior, W


def train(config, dataset=None):
    """Train an evidential MLP under ``config``; returns (model, TrainingLog, dataset)."""
    cfg = config.variant_config()
    data_rng, init_rng, shuffle_rng = seed_streams(config.seed)
    if dataset is None:
        dataset = generate_dataset(config.data, rng=data_rng)
    x, y = dataset.subset("train")
    K = dataset.K
    model = nnet.init_mlp(x.shape[1], list(config.hidden_dims), K, init_rng)
    opt = nnet.AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    params = model.params()
    cumulative = 0.0
    out = TrainingLog()
    n = len(y)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        sums = dict(loss=0.0, data=0.0, kl=0.0, lam=0.0, lam_max=0.0, w=0.0, s=0.0, correct=0.0)
        w_min, w_max, tau = np.inf, -np.inf, np.nan
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = x[idx], y[idx]
            tape = nnet.GradientTape()
            e = nnet.forward(model, xb, tape)
            alpha, prior, W = _dirichlet_from_evidence(cfg, e)
            S = alpha.sum(axis=1)
            correct = alpha.argmax(axis=1) == yb
            if cfg.tau_rule == "scheduled":
                cumulative += float(S.mean())
            lam = evidential.kl_weight(
                cfg,
                epoch=epoch,
                batch_shape=(len(yb),),
                u=W / S,
                correct=correct,
                cumulative_strength=cumulative,
            )
            data, kl = evidential.loss_terms(alpha, prior, yb, cfg)
            # lam == 0 skips the KL term entirely rather than multiplying through
            weighted_kl = np.where(lam > 0.0, lam * kl, 0.0)
            loss = data + weighted_kl
            if not np.all(np.isfinite(loss)):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: "
                    f"evidence range [{e.min():.4g}, {e.max():.4g}], strength range "
                    f"[{S.min():.4g}, {S.max():.4g}], W range [{W.min():.4g}, {W.max():.4g}], "
                    f"kl weight range [{lam.min():.4g}, {lam.max():.4g}], "
                    f"data term range [{np.min(data):.4g}, {np.max(data):.4g}], "
                    f"{int(np.sum(~np.isfinite(loss)))}/{len(loss)} samples non-finite"
                )
            tau_b = evidential.tau_from_weight(lam)
            g_alpha = nnet.loss_grad_alpha(alpha, prior, yb, tau_b, cfg) / len(yb)
            grads = nnet.backward(model, tape, g_alpha)
            nnet.adam_step(opt, params, grads)

            m = len(yb)
            sums["loss"] += loss.sum()
            sums["data"] += data.sum()
            sums["kl"] += weighted_kl.sum()
            sums["lam"] += lam.sum()
            sums["lam_max"] = max(sums["lam_max"], float(lam.max()))
            sums["w"] += W.sum()
            sums["s"] += S.sum()
            sums["correct"] += correct.sum()
            w_min, w_max = min(w_min, float(W.min())), max(w_max, float(W.max()))
            if cfg.tau_rule == "scheduled":
                tau = evidential.gedl_tau_schedule(cumulative, cfg.c_tau)
        if cfg.tau_rule != "scheduled":
            lam_mean = sums["lam"] / n
            tau = math.inf if lam_mean == 0.0 else 1.0 / lam_mean
        out.rows.append(
            dict(
                epoch=epoch,
                loss=sums["loss"] / n,
                data_term=sums["data"] / n,
                kl_term=sums["kl"] / n,
                kl_weight_mean=sums["lam"] / n,
                kl_weight_max=sums["lam_max"],
                tau=tau,
                w_mean=sums["w"] / n,
                w_min=w_min,
                w_max=w_max,
                mean_strength=sums["s"] / n,
                cumulative_strength=cumulative,
                train_accuracy=sums["correct"] / n,
            )
        )
        log.debug("epoch %d loss %.5f acc %.4f", epoch, sums["loss"] / n, sums["correct"] / n)
    return model, out, dataset


def predict(model, x, cfg):
    """Dirichlet concentration and prior strength for inputs ``x``."""
    e = nnet.forward(model, x)
    alpha, _, W = _dirichlet_from_evidence(cfg, e)
    return alpha, W


@dataclass
class MetricsReport:
    """Evaluation summary plus the per-sample uncertainty table.

    ``conf_mp_aupr``: AUPR of MP on ID test data with correct predictions as
    positives.  ``ood_mp_aupr`` / ``ood_um_aupr``: ID (positive) vs OOD with
    score MP and 1 - UM respectively.
    """

    accuracy: float
    conf_mp_aupr: float
    ood_mp_aupr: float
    ood_um_aupr: float
    ece: float
    brier: float
    mean_um_id: float
    mean_um_ood: float
    records: uncertainty.UncertaintyRecord = field(repr=False)
    labels: np.ndarray = field(repr=False)
    is_ood: np.ndarray = field(repr=False)

    SUMMARY_KEYS = (
        "accuracy",
        "conf_mp_aupr",
        "ood_mp_aupr",
        "ood_um_aupr",
        "ece",
        "brier",
        "mean_um_id",
        "mean_um_ood",
    )

    def summary(self):
        return {k: float(getattr(self, k)) for k in self.SUMMARY_KEYS}

    def write(self, out_dir, extra=None):
        os.makedirs(out_dir, exist_ok=True)
        summary = self.summary()
        if extra:
            summary.update(extra)
        with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        uncertainty.write_records_csv(os.path.join(out_dir, "records.csv"), self.records, self.labels, self.is_ood)


def evaluate(model, id_x, id_y, ood_x, cfg, bins=15):
    """Score ID test and OOD inputs and compute the metrics report."""
    if len(id_y) == 0 or len(ood_x) == 0:
        raise ValueError("empty split")
    alpha_id, W_id = predict(model, id_x, cfg)
    alpha_ood, W_ood = predict(model, ood_x, cfg)
    rec_id = uncertainty.score(alpha_id, W_id)
    rec_ood = uncertainty.score(alpha_ood, W_ood)
    probs = alpha_id / alpha_id.sum(axis=1, keepdims=True)
    correct = probs.argmax(axis=1) == id_y
    is_ood = np.r_[np.zeros(len(id_y), bool), np.ones(len(ood_x), bool)]
    mp = np.r_[rec_id.mp, rec_ood.mp]
    um = np.r_[rec_id.um, rec_ood.um]
    conf = metrics.aupr(rec_id.mp, correct) if 0 < correct.sum() < len(correct) else float(correct.all())
    records = uncertainty.UncertaintyRecord(
        mp=mp,
        um=um,
        mi=np.r_[rec_id.mi, rec_ood.mi],
        var_sum=np.r_[rec_id.var_sum, rec_ood.var_sum],
    )
    labels = np.r_[id_y, np.full(len(ood_x), -1)]
    return MetricsReport(
        accuracy=metrics.accuracy(probs, id_y),
        conf_mp_aupr=conf,
        ood_mp_aupr=metrics.aupr(mp, ~is_ood),
        ood_um_aupr=metrics.aupr(1.0 - um, ~is_ood),
        ece=metrics.ece(probs, id_y, bins),
        brier=metrics.brier(probs, id_y),
        mean_um_id=float(rec_id.um.mean()),
        mean_um_ood=float(rec_ood.um.mean()),
        records=records,
        labels=labels,
        is_ood=is_ood,
    )


def run(config, write=False):
    """Train then evaluate on the held-out test split and OOD set."""
    model, tlog, ds = train(config)
    x_test, y_test = ds.subset("test")
    report = evaluate(model, x_test, y_test, ds.ood_features, config.variant_config())
    if write:
        os.makedirs(config.out_dir, exist_ok=True)
        tlog.write_csv(os.path.join(config.out_dir, "training_log.csv"))
        report.write(config.out_dir, extra={"variant": config.variant, "seed": config.seed})
        nnet.save_checkpoint(os.path.join(config.out_dir, "model.json"), model, meta={"config": config.to_dict()})
    return model, tlog, report


def _cell_seed(base_seed, index):
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def _sweep_cell(args):
    base, c_w, c_tau, index = args
    cfg = RunConfig.from_mapping({**_flat(base), "c_w": c_w, "c_tau": c_tau, "seed": _cell_seed(base.seed, index)})
    row = {"cell": index, "c_w": c_w, "c_tau": c_tau, "seed": cfg.seed}
    try:
        _, _, report = run(cfg)
        row.update(report.summary(), status="ok", error="")
    except Exception as exc:  # noqa: BLE001 - a failed cell must not abort the sweep
        row.update({k: math.nan for k in MetricsReport.SUMMARY_KEYS}, status="failed", error=repr(exc))
    return row


def _flat(config):
    d = config.to_dict()
    data = d.pop("data")
    d.update({f"data.{k}": v for k, v in data.items()})
    return d


def sweep(base, c_w_grid, c_tau_grid, jobs=1, csv_path=None):
    """One independently seeded run per (C_w, C_tau) cell; returns a list of rows."""
    cells = [(base, float(cw), float(ct), i) for i, (cw, ct) in enumerate((cw, ct) for cw in c_w_grid for ct in c_tau_grid)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    if csv_path is not None:
        cols = ["cell", "c_w", "c_tau", "seed", "status", *MetricsReport.SUMMARY_KEYS, "error"]
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for r in rows:
                w.writerow(r)
    return rows


def severity_study(model, x, cfg, levels, seed=0, labels=None):
    """Mean uncertainty of ``x`` perturbed by isotropic Gaussian noise of each std.

    Level 0 is the clean input, untouched.  Returns a list of rows with mean
    um, mi, var_sum and mp (plus accuracy when ``labels`` is given).
    """
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(np.shape(x))
    rows = []
    for level in levels:
        xs = x if level == 0 else x + level * noise
        alpha, W = predict(model, xs, cfg)
        rec = uncertainty.score(alpha, W)
        row = {
            "severity": float(level),
            "um": float(np.mean(rec.um)),
            "mi": float(np.mean(rec.mi)),
            "var_sum": float(np.mean(rec.var_sum)),
            "mp": float(np.mean(rec.mp)),
        }
        if labels is not None:
            row["accuracy"] = float(np.mean(alpha.argmax(axis=1) == labels))
        rows.append(row)
    return rows


def severity_trend(rows):
    """Spearman correlation between severity and mean UM."""
    sev = [r["severity"] for r in rows]
    um = [r["um"] for r in rows]
    return float(stats.spearmanr(sev, um).statistic)
