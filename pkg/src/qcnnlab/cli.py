"""Command-line front end.

Subcommands: train-qcnn, train-cnn, compare-da, augment-preview, selftest.
Settings come from defaults, then an optional `--config` file of
`key = value` lines, then individual flag overrides.  Exit codes: 0 success,
1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from .augment import AugmentError, augment_sample, flip_h, preset
from .datasets import (
    Dataset,
    DatasetError,
    ImageSample,
    load_digits_csv,
    load_pgm,
    write_digits_csv,
    write_pgm,
)
from .embedding import EmbeddingError
from .harness import (
    ConfigError,
    ExperimentConfig,
    compare_da,
    load_pool,
    parse_config_file,
    resolve_config,
    run_experiment,
)
from .qcnn import QcnnError, build_architecture, forward, forward_branching
from .simulator import SimulatorError, apply_gate, dense_circuit_oracle, ising_matrix, is_unitary, u3_matrix, zero_state
from .training import TrainingError, adam_step, batch_p1s, grad_exact, grad_fd, lr_at, mse_loss, TrainConfig


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


_OVERRIDE_KEYS = (
    "dataset", "data_path", "class_a", "class_b", "n_per_class", "n_test",
    "epochs", "repetitions", "base_seed", "augment", "n_qubits", "depth",
    "resize", "lr0", "lr_decay", "threads",
)


def _add_experiment_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="path to a `key = value` config file")
    sub.add_argument("--out", required=True, help="output directory")
    for key in _OVERRIDE_KEYS:
        sub.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                         metavar="V", help=f"override {key}")


def _resolved_config(args, model: str | None) -> ExperimentConfig:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS}
    if model is not None:
        overrides["model"] = model
    return resolve_config(file_values, overrides)


def _cmd_train(args, model: str) -> int:
    cfg = _resolved_config(args, model)
    results = run_experiment(cfg, args.out)
    for rr in results:
        print(f"{rr.class_a}-vs-{rr.class_b} N={rr.n_per_class}: "
              f"mean final test acc {rr.mean_final_test_acc:.4f} "
              f"over {len(rr.final_test_accs)} reps")
    print(f"wrote {args.out}")
    return 0


def _cmd_compare_da(args) -> int:
    cfg = _resolved_config(args, args.model_choice)
    table = compare_da(cfg, args.out)
    print(table.to_text(), end="")
    print(f"wrote {args.out}")
    return 0


def _cmd_augment_preview(args) -> int:
    cfg = ExperimentConfig(dataset=args.dataset, data_path=args.data_path,
                           resize=int(args.resize))
    pool = load_pool(cfg)
    if not 0 <= args.index < len(pool):
        raise DatasetError(f"index {args.index} outside dataset of {len(pool)} samples")
    sample = pool.samples[args.index]
    try:
        aug_cfg = preset(args.preset if args.preset else cfg.dataset)
    except AugmentError as exc:
        raise UsageError(str(exc)) from exc

    os.makedirs(args.out, exist_ok=True)
    write_pgm(os.path.join(args.out, "original.pgm"), sample.pixels)
    rng = np.random.default_rng(args.seed)
    variants = []
    for k in range(args.count):
        img = augment_sample(sample.pixels, aug_cfg, rng)
        write_pgm(os.path.join(args.out, f"aug{k}.pgm"), img)
        variants.append(img)
    if sample.pixels.shape == (8, 8):
        rows = Dataset(tuple(ImageSample(img, sample.label)
                             for img in [sample.pixels] + variants), pool.class_names)
        write_digits_csv(os.path.join(args.out, "preview.csv"), rows)
    print(f"wrote original + {args.count} variants to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def _check_gate_algebra():
    rng = np.random.default_rng(0)
    assert np.allclose(u3_matrix(0, 0, 0), np.eye(2), atol=1e-12)
    assert np.allclose(u3_matrix(np.pi, 0, np.pi), [[0, 1], [1, 0]], atol=1e-12)
    for _ in range(200):
        angles = rng.uniform(-2 * np.pi, 2 * np.pi, 3)
        assert is_unitary(u3_matrix(*angles), 1e-10)
        assert is_unitary(ising_matrix("XX", angles[0]), 1e-10)


def _check_dense_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(2, 6))
        gates = []
        for _ in range(6):
            q = int(rng.integers(0, n))
            gates.append((u3_matrix(*rng.uniform(-np.pi, np.pi, 3)), (q,)))
        state = zero_state(n)
        for g, t in gates:
            state = apply_gate(state, g, t)
        dense = dense_circuit_oracle(gates, n) @ zero_state(n)
        assert np.max(np.abs(state - dense)) < 1e-10


def _check_pooling_branches():
    rng = np.random.default_rng(2)
    arch = build_architecture(4, 1)
    for _ in range(5):
        params = rng.uniform(-np.pi, np.pi, arch.param_count)
        pixels = rng.random(16)
        a = forward(arch, params, pixels)
        b = forward_branching(arch, params, pixels)
        assert abs(a - b) < 1e-12


def _check_gradients():
    rng = np.random.default_rng(3)
    arch = build_architecture(4, 1)
    params = rng.uniform(-np.pi, np.pi, arch.param_count)
    images = [rng.random(16) for _ in range(3)]
    labels = [0, 1, 1]
    exact = grad_exact(arch, params, images, labels)
    fd = grad_fd(lambda p: mse_loss(batch_p1s(arch, p, images), labels), params)
    assert np.max(np.abs(exact - fd)) < 1e-6


def _check_augment():
    rng = np.random.default_rng(4)
    img = rng.random((8, 8))
    assert np.array_equal(flip_h(flip_h(img)), img)
    cfg = preset("digits")
    for _ in range(500):
        out = augment_sample(img, cfg, rng)
        assert out.min() >= 0.0 and out.max() <= 1.0


def _check_optimizer():
    params = np.array([0.5, -0.5])
    out, _ = adam_step(params, np.zeros(2), None, 1, 0.1)
    assert np.array_equal(out, params)
    cfg = TrainConfig(epochs=1)
    assert abs(lr_at(1, cfg) - 0.095) < 1e-12


def _check_round_trips():
    rng = np.random.default_rng(5)
    img = np.rint(rng.random((8, 8)) * 255) / 255.0
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "x.pgm")
        write_pgm(path, img)
        assert np.array_equal(load_pgm(path), img)
        quantized = np.rint(rng.random((8, 8)) * 16) / 16.0
        ds = Dataset((ImageSample(quantized, 3),), tuple(str(i) for i in range(10)))
        csv_path = os.path.join(d, "x.csv")
        write_digits_csv(csv_path, ds)
        again = load_digits_csv(csv_path)
        assert np.array_equal(again.samples[0].pixels, quantized)


_SELFTEST_CHECKS = (
    ("gate algebra", _check_gate_algebra),
    ("dense circuit oracle", _check_dense_oracle),
    ("pooling branch equivalence", _check_pooling_branches),
    ("gradient engines agree", _check_gradients),
    ("augmentation bounds", _check_augment),
    ("optimizer", _check_optimizer),
    ("file round trips", _check_round_trips),
)


def _cmd_selftest(_args) -> int:
    failed = 0
    for name, fn in _SELFTEST_CHECKS:
        try:
            fn()
        except Exception as exc:  # report every check before deciding
            print(f"selftest: {name}: FAIL ({exc})")
            failed += 1
        else:
            print(f"selftest: {name}: ok")
    if failed:
        print(f"selftest: {failed} of {len(_SELFTEST_CHECKS)} checks failed")
        return 3
    print("selftest: all checks passed")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="qcnnlab",
                     description="train and compare small quantum/classical image classifiers")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, model in (("train-qcnn", "qcnn"), ("train-cnn", "cnn")):
        sub = subs.add_parser(name, help=f"run a seeded {model} experiment grid")
        _add_experiment_flags(sub)
        sub.set_defaults(func=lambda a, m=model: _cmd_train(a, m))

    sub = subs.add_parser("compare-da",
                          help="train with and without augmentation on identical seeds")
    _add_experiment_flags(sub)
    sub.add_argument("--model", dest="model_choice", default=None, metavar="V",
                     help="override model (qcnn or cnn)")
    sub.set_defaults(func=_cmd_compare_da)

    sub = subs.add_parser("augment-preview",
                          help="write one image and several augmented variants")
    sub.add_argument("--dataset", default="digits")
    sub.add_argument("--data-path", dest="data_path", default="data/digits.csv")
    sub.add_argument("--resize", type=int, default=0)
    sub.add_argument("--preset", default=None, help="augmentation recipe name")
    sub.add_argument("--index", type=int, default=0)
    sub.add_argument("--count", type=int, default=8)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_augment_preview)

    sub = subs.add_parser("selftest", help="run the built-in oracle and invariant checks")
    sub.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DatasetError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (SimulatorError, EmbeddingError, QcnnError, TrainingError, AugmentError,
            FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
