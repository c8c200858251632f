"""Experiment runner: repetition-averaged training with seeded subsets.

A run is a grid over (class_b, n_per_class).  Repetition k trains with seed
base_seed + k, which drives subset sampling, parameter init, and the
augmentation stream, so any run is reproducible byte for byte.  Repetitions
execute on a thread pool but are aggregated in fixed order; the output files
never depend on the worker count.  Nothing is written until every repetition
has finished.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace

import numpy as np

from .augment import AugmentError, preset
from .cnn import build_cnn, train_cnn
from .datasets import Dataset, ImageSample, binary_subset, load_digits_csv, load_idx, load_pgm_dir, resize_area
from .qcnn import build_architecture
from .training import MetricsRow, TrainConfig, format_metrics, mean_metrics, train_qcnn


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on; the resolved copy is echoed to disk."""

    model: str = "qcnn"
    dataset: str = "digits"
    data_path: str = "data/digits.csv"
    class_a: int = 0
    class_b: tuple[int, ...] = (1,)
    n_per_class: tuple[int, ...] = (50,)
    n_test: int = 100
    epochs: int = 100
    repetitions: int = 20
    base_seed: int = 0
    augment: str = "none"
    n_qubits: int = 6
    depth: int = 2
    resize: int = 0
    lr0: float = 0.1
    lr_decay: float = 0.05
    threads: int = 0

    def __post_init__(self):
        if self.model not in ("qcnn", "cnn"):
            raise ConfigError(f"model must be qcnn or cnn, got {self.model!r}")
        if self.dataset not in ("digits", "fashion", "catdog"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if not self.class_b or not self.n_per_class:
            raise ConfigError("class_b and n_per_class must be nonempty")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        try:
            preset(self.augment)
        except AugmentError as exc:
            raise ConfigError(str(exc)) from exc


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from exc


_COERCERS = {
    "model": str,
    "dataset": str,
    "data_path": str,
    "class_a": int,
    "class_b": _parse_int_list,
    "n_per_class": _parse_int_list,
    "n_test": int,
    "epochs": int,
    "repetitions": int,
    "base_seed": int,
    "augment": str,
    "n_qubits": int,
    "depth": int,
    "resize": int,
    "lr0": float,
    "lr_decay": float,
    "threads": int,
}

# epochs defaults differ per model; filled when no explicit value arrives
_AUTO_EPOCHS = {"qcnn": 100, "cnn": 200}


def parse_config_file(path) -> dict[str, str]:
    """`key = value` lines; blank lines and `#` comments are skipped."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _COERCERS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def resolve_config(file_values: dict[str, str] | None = None,
                   overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Defaults <- config file <- command-line overrides, with type coercion."""
    raw: dict[str, str] = {}
    raw.update(file_values or {})
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values = {}
    for key, text in raw.items():
        if key not in _COERCERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[key] = _COERCERS[key](text)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc
    if "epochs" not in values:
        # unknown model names fall through to ExperimentConfig's validation
        values["epochs"] = _AUTO_EPOCHS.get(values.get("model", "qcnn"), 100)
    return ExperimentConfig(**values)


def format_config(cfg: ExperimentConfig) -> str:
    """The audit echo: every effective setting, one `key = value` line."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunResult:
    """One grid cell: every repetition's curve plus the aggregate."""

    class_a: int
    class_b: int
    n_per_class: int
    per_rep_rows: tuple[tuple[MetricsRow, ...], ...]
    per_rep_params: tuple[np.ndarray, ...]
    mean_rows: tuple[MetricsRow, ...]

    @property
    def final_test_accs(self) -> tuple[float, ...]:
        return tuple(rows[-1].test_acc for rows in self.per_rep_rows)

    @property
    def mean_final_test_acc(self) -> float:
        return float(np.mean(self.final_test_accs))


def load_pool(cfg: ExperimentConfig) -> Dataset:
    """The full dataset the per-rep subsets are drawn from."""
    if cfg.dataset == "digits":
        ds = load_digits_csv(cfg.data_path)
    elif cfg.dataset == "fashion":
        ds = load_idx(os.path.join(cfg.data_path, "train-images-idx3-ubyte"),
                      os.path.join(cfg.data_path, "train-labels-idx1-ubyte"))
    else:
        ds = load_pgm_dir(cfg.data_path, {"cat": 0, "dog": 1})
    if cfg.resize:
        ds = Dataset(tuple(ImageSample(resize_area(s.pixels, cfg.resize, cfg.resize),
                                       s.label) for s in ds.samples),
                     ds.class_names)
    return ds


def _train_one_rep(cfg: ExperimentConfig, pool: Dataset, class_b: int,
                   n_per_class: int, seed: int):
    train, test = binary_subset(pool, cfg.class_a, class_b, n_per_class,
                                cfg.n_test, seed)
    tcfg = TrainConfig(epochs=cfg.epochs, lr0=cfg.lr0, lr_decay=cfg.lr_decay, seed=seed)
    aug = preset(cfg.augment)
    if cfg.model == "qcnn":
        arch = build_architecture(cfg.n_qubits, cfg.depth)
        rows, params = train_qcnn(arch, train, test, tcfg, augment_cfg=aug)
        return tuple(rows), np.asarray(params)
    hw = train.samples[0].pixels.shape
    model = build_cnn(hw, seed)
    rows, trained = train_cnn(model, train, test, tcfg, augment_cfg=aug)
    return tuple(rows), trained.pack()


def _compute_experiment(cfg: ExperimentConfig, pool: Dataset) -> list[RunResult]:
    workers = cfg.threads if cfg.threads > 0 else min(cfg.repetitions, os.cpu_count() or 1)
    results = []
    with ThreadPoolExecutor(max_workers=workers) as pool_ex:
        for class_b in cfg.class_b:
            for n in cfg.n_per_class:
                futures = [
                    pool_ex.submit(_train_one_rep, cfg, pool, class_b, n,
                                   cfg.base_seed + k)
                    for k in range(cfg.repetitions)
                ]
                outcomes = [f.result() for f in futures]  # fixed order k = 0..reps-1
                rep_rows = tuple(rows for rows, _ in outcomes)
                rep_params = tuple(params for _, params in outcomes)
                results.append(RunResult(cfg.class_a, class_b, n, rep_rows, rep_params,
                                         tuple(mean_metrics([list(r) for r in rep_rows]))))
    return results


def _cell_dir(base: str, cfg: ExperimentConfig, rr: RunResult) -> str:
    if len(cfg.class_b) == 1 and len(cfg.n_per_class) == 1:
        return base
    return os.path.join(base, f"b{rr.class_b}_n{rr.n_per_class}")


def _write_params(path, params: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for value in params:
            fh.write(f"{value:.17g}\n")


def _write_run(dirpath: str, rr: RunResult) -> None:
    os.makedirs(dirpath, exist_ok=True)
    for k, rows in enumerate(rr.per_rep_rows):
        with open(os.path.join(dirpath, f"metrics_rep{k}.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            fh.write(format_metrics(rows))
        _write_params(os.path.join(dirpath, f"params_final_rep{k}.csv"),
                      rr.per_rep_params[k])
    with open(os.path.join(dirpath, "metrics_mean.csv"), "w",
              encoding="utf-8", newline="") as fh:
        fh.write(format_metrics(rr.mean_rows))


def run_experiment(cfg: ExperimentConfig, out_dir: str) -> list[RunResult]:
    """Train the full grid, then write per-rep curves, means, and the echo."""
    pool = load_pool(cfg)
    results = _compute_experiment(cfg, pool)
    os.makedirs(out_dir, exist_ok=True)
    for rr in results:
        _write_run(_cell_dir(out_dir, cfg, rr), rr)
    with open(os.path.join(out_dir, "config_resolved.cfg"), "w",
              encoding="utf-8", newline="") as fh:
        fh.write(format_config(cfg))
    return results


# ---------------------------------------------------------------------------
# with/without augmentation comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonRow:
    class_a: int
    class_b: int
    n_per_class: int
    acc_no_da: float
    acc_da: float

    @property
    def delta(self) -> float:
        return self.acc_da - self.acc_no_da


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]

    def to_csv(self) -> str:
        lines = ["class_a,class_b,n_per_class,acc_no_da,acc_da,delta"]
        for r in self.rows:
            lines.append(f"{r.class_a},{r.class_b},{r.n_per_class},"
                         f"{r.acc_no_da:.6g},{r.acc_da:.6g},{r.delta:.6g}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = f"{'pair':>8} {'N':>5} {'no DA':>8} {'DA':>8} {'delta':>8}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(f"{r.class_a}-vs-{r.class_b:<3} {r.n_per_class:>5} "
                         f"{r.acc_no_da:>8.4f} {r.acc_da:>8.4f} {r.delta:>+8.4f}")
        return "\n".join(lines) + "\n"


def default_augment_for(dataset: str) -> str:
    return {"digits": "digits", "fashion": "fashion", "catdog": "catdog"}[dataset]


def compare_da(cfg: ExperimentConfig, out_dir: str) -> ComparisonTable:
    """Run both arms with identical seeds; only the augmentation differs.

    Everything is computed before anything is written: per-rep curves for
    both arms under no_da/ and da/, then the comparison CSV and text table.
    """
    aug_name = cfg.augment if cfg.augment != "none" else default_augment_for(cfg.dataset)
    no_cfg = replace(cfg, augment="none")
    da_cfg = replace(cfg, augment=aug_name)

    pool = load_pool(cfg)
    no_results = _compute_experiment(no_cfg, pool)
    da_results = _compute_experiment(da_cfg, pool)

    rows = tuple(
        ComparisonRow(a.class_a, a.class_b, a.n_per_class,
                      a.mean_final_test_acc, b.mean_final_test_acc)
        for a, b in zip(no_results, da_results)
    )
    table = ComparisonTable(rows)

    os.makedirs(out_dir, exist_ok=True)
    for sub, arm_cfg, arm_results in (("no_da", no_cfg, no_results),
                                      ("da", da_cfg, da_results)):
        arm_dir = os.path.join(out_dir, sub)
        os.makedirs(arm_dir, exist_ok=True)
        for rr in arm_results:
            _write_run(_cell_dir(arm_dir, arm_cfg, rr), rr)
        with open(os.path.join(arm_dir, "config_resolved.cfg"), "w",
                  encoding="utf-8", newline="") as fh:
            fh.write(format_config(arm_cfg))
    with open(os.path.join(out_dir, "comparison.csv"), "w",
              encoding="utf-8", newline="") as fh:
        fh.write(table.to_csv())
    with open(os.path.join(out_dir, "comparison.txt"), "w",
              encoding="utf-8", newline="") as fh:
        fh.write(table.to_text())
    return table
