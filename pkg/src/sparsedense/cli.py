"""Command-line entry points tying the library into reproducible experiments.

Commands: gen, train, eval, verify, check-equivariance, sweep, gradcheck.
Exit codes: 0 success, 1 runtime/IO failure, 2 usage error, 3 enumeration cap
exceeded. ``SD_THREADS`` caps BLAS worker threads; ``SD_DETERMINISTIC=1``
forces single-threaded numerics (both must be decided before numpy loads, so
heavyweight imports happen inside the command functions).
"""

import argparse
import os
import sys
import time


def _configure_threads():
    threads = None
    if os.environ.get("SD_DETERMINISTIC") == "1":
        threads = "1"
    elif os.environ.get("SD_THREADS"):
        threads = os.environ["SD_THREADS"]
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, threads)


# keys accepted in a ``key = value`` run-config file (flags override the file)
CONFIG_KEYS = {
    "mode": str, "patch": int, "lr": float, "epochs": int, "batch_size": int,
    "base_channels": int, "dropout_p": float, "seed": int,
    "scheduler_factor": float, "scheduler_patience": int,
    "scheduler_threshold": float, "early_stop_threshold": float, "strict": int,
}


def resolve_run_config(config_path, overrides):
    """File values, then CLI overrides; unknown keys are rejected."""
    from . import io as sdio

    resolved = {}
    if config_path:
        with open(config_path, encoding="utf-8") as f:
            raw = sdio.parse_key_values(f.read())
        for key, value in raw.items():
            if key not in CONFIG_KEYS:
                raise ValueError(f"unknown config key {key!r}")
            if value != "":  # empty value means "leave at default"
                resolved[key] = CONFIG_KEYS[key](value)
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    return resolved


_MODE_ALIASES = {"sparse-dense": "sparse_dense", "sparse_dense": "sparse_dense",
                 "patch": "patch_wise", "patch_wise": "patch_wise"}


def _train_config(resolved):
    from .train import TrainConfig

    mode = resolved.pop("mode", "sparse_dense")
    if mode not in _MODE_ALIASES:
        raise ValueError(f"unknown mode {mode!r}")
    strict = bool(resolved.pop("strict", 0))
    return TrainConfig(mode=_MODE_ALIASES[mode], strict=strict, **resolved)


def _config_text(cfg):
    from . import io as sdio

    values = {key: getattr(cfg, key) for key in CONFIG_KEYS}
    values["strict"] = int(cfg.strict)
    values["patch"] = "" if cfg.patch is None else cfg.patch
    return sdio.format_key_values(values)


def cmd_gen(args):
    from .quadrants import write_dataset

    rows = write_dataset(args.n, (args.train, args.val, args.test),
                         seed=args.seed, out_dir=args.out)
    print(f"wrote {len(rows)} images to {args.out} (side {args.n}, seed {args.seed})")
    return 0


def cmd_train(args):
    from .network import save_model
    from .quadrants import load_dataset
    from .train import train, train_patchwise

    resolved = resolve_run_config(args.config, {
        "mode": args.mode, "patch": args.patch, "lr": args.lr,
        "epochs": args.epochs, "batch_size": args.batch_size,
        "base_channels": args.base_channels, "seed": args.seed,
    })
    cfg = _train_config(dict(resolved))
    dataset = load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)

    t0 = time.time()
    if cfg.mode == "patch_wise":
        model, history = train_patchwise(dataset, cfg)
    else:
        model, history = train(dataset, cfg)
    elapsed = time.time() - t0

    config_text = _config_text(cfg)
    ckpt_path = os.path.join(args.out, "checkpoint.sdck")
    save_model(ckpt_path, model, config_text)
    with open(os.path.join(args.out, "config_resolved.txt"), "w", encoding="utf-8") as f:
        f.write(config_text)
    with open(os.path.join(args.out, "history.csv"), "w", encoding="utf-8") as f:
        f.write("epoch,train_loss,val_loss,lr\n")
        for i, (tr, vl, lr) in enumerate(zip(history.train_loss, history.val_loss,
                                             history.lr)):
            f.write(f"{i},{tr:.8e},{vl:.8e},{lr:.8e}\n")
    with open(os.path.join(args.out, "run.log"), "a", encoding="utf-8") as f:
        f.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} trained {cfg.mode} "
                f"{len(history.train_loss)} epochs in {elapsed:.1f}s, "
                f"best val {history.best_val_loss():.3e} @ epoch {history.best_epoch}\n")
    if history.diverged:
        print("warning: training diverged; checkpoint holds the last good state",
              file=sys.stderr)
    print(f"checkpoint: {ckpt_path} (best val {history.best_val_loss():.3e} "
          f"at epoch {history.best_epoch})")
    return 0


def cmd_eval(args):
    import numpy as np

    from . import io as sdio
    from .metrics import bilinear_upsample, evaluate
    from .network import load_model
    from .quadrants import load_dataset
    from .sampling import apply_mask, make_sparse_dense_masks
    from .train import restore

    dataset = load_dataset(args.data)
    if not dataset.test:
        raise ValueError("dataset has no test split")
    n = dataset.side()
    omega = make_sparse_dense_masks(n)[0]

    methods = []
    model, _ = load_model(args.checkpoint)
    methods.append(("sparse_dense", lambda x: restore(model, apply_mask(x, omega))))
    patch_model = None
    if args.patch_checkpoint:
        patch_model, _ = load_model(args.patch_checkpoint)
        methods.append(("patch_wise",
                        lambda x: restore(patch_model, apply_mask(x, omega))))
    if not args.no_bilinear:
        methods.append(("bilinear", lambda x: bilinear_upsample(apply_mask(x, omega))))

    report = evaluate(methods, dataset.test)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "metrics.csv"), "w", encoding="utf-8") as f:
        f.write(report.to_csv())

    panels_dir = os.path.join(args.out, "panels")
    os.makedirs(panels_dir, exist_ok=True)
    for idx, gt in enumerate(dataset.test):
        observed = apply_mask(gt, omega)
        panels = [("gt", gt), ("input", observed)]
        if patch_model is not None:
            panels.append(("patch", restore(patch_model, observed)))
        panels.append(("sparse_dense", restore(model, observed)))
        for name, img in panels:
            sdio.write_pgm(os.path.join(panels_dir, f"img{idx:03d}_{name}.pgm"), img)
            sdio.write_sdi1(os.path.join(panels_dir, f"img{idx:03d}_{name}.sdi1"),
                            np.asarray(img))
    print(report.to_csv().strip())
    return 0


def cmd_verify(args):
    from .oracle import rows_to_csv
    from .verify import run_suite

    rows = run_suite(args.case)
    for row in rows:
        print(row.as_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(rows_to_csv(rows))
    failed = [r for r in rows if not r.holds]
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    return 1 if failed else 0


def cmd_check_equivariance(args):
    from .network import UNetConfig, build_unet, check_equivariance, load_model

    if args.checkpoint:
        model, _ = load_model(args.checkpoint)
        if args.dtype != "float32":
            rebuilt = build_unet(model.cfg, seed=args.seed, dtype=args.dtype)
            rebuilt.load_state({k: t.data for k, t in model.params.items()})
            model = rebuilt
    else:
        model = build_unet(UNetConfig(base_channels=args.base_channels),
                           seed=args.seed, dtype=args.dtype)
    shifts = []
    for chunk in args.shifts.split(";"):
        a, b = chunk.split(",")
        shifts.append((int(a), int(b)))
    tol = 1e-10 if args.dtype == "float64" else 1e-5
    errors = check_equivariance(model.eval(), args.n, shifts,
                                trials=args.trials, seed=args.seed)
    ok = True
    for (a, b), err in errors.items():
        if a % 8 == 0 and b % 8 == 0:
            status = "PASS" if err <= tol else "FAIL"
            ok = ok and err <= tol
        else:
            status = "INFO"  # aliasing expected; measured, not judged
        print(f"[{status}] shift ({a:3d},{b:3d}): max relative error {err:.3e}")
    return 0 if ok else 1


def cmd_sweep(args):
    from .quadrants import load_dataset
    from .train import supervision_sweep, sweep_rows_to_csv

    resolved = resolve_run_config(args.config, {
        "mode": args.mode, "lr": args.lr, "epochs": args.epochs,
        "batch_size": args.batch_size, "base_channels": args.base_channels,
        "seed": args.seed,
    })
    cfg = _train_config(dict(resolved))
    sizes = [int(s) for s in args.sizes.split(",")]
    dataset = load_dataset(args.data)
    rows = supervision_sweep(dataset, sizes, cfg, fixed_budget=args.budget)
    csv_text = sweep_rows_to_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(csv_text)
    print(csv_text.strip())
    return 0


def cmd_gradcheck(args):
    import numpy as np

    from .autodiff import (ConvSpec, Tensor, channel_dropout, concat_channels,
                           conv2d_circular, conv_transpose2d_circular,
                           finite_difference_check, masked_mse, relu)
    from .network import UNetConfig, build_unet, forward

    rng = np.random.default_rng(args.seed)
    results = {}

    x = Tensor(rng.standard_normal((1, 2, 8, 8)), requires_grad=True)
    w = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal(3), requires_grad=True)
    tgt = rng.standard_normal((1, 3, 4, 4))
    results["conv2d_circular(stride 2)"] = finite_difference_check(
        lambda: masked_mse(conv2d_circular(x, w, b, ConvSpec(2, 3, 3, 2)),
                           Tensor(tgt), np.ones((4, 4))), [x, w, b])

    xt = Tensor(rng.standard_normal((1, 3, 4, 4)), requires_grad=True)
    wt = Tensor(rng.standard_normal((3, 2, 3, 3)), requires_grad=True)
    bt = Tensor(rng.standard_normal(2), requires_grad=True)
    tgt_t = rng.standard_normal((1, 2, 8, 8))
    results["conv_transpose2d_circular(stride 2)"] = finite_difference_check(
        lambda: masked_mse(conv_transpose2d_circular(
            xt, wt, bt, ConvSpec(3, 2, 3, 2, transposed=True)),
            Tensor(tgt_t), np.ones((8, 8))), [xt, wt, bt])

    data = rng.standard_normal((1, 2, 6, 6))
    data[np.abs(data) < 1e-3] = 0.5
    xr = Tensor(data, requires_grad=True)
    tgt_r = rng.standard_normal(data.shape)
    results["relu"] = finite_difference_check(
        lambda: masked_mse(relu(xr), Tensor(tgt_r), np.ones((6, 6))), [xr])

    xa = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
    xb = Tensor(rng.standard_normal((1, 3, 4, 4)), requires_grad=True)
    tgt_c = rng.standard_normal((1, 5, 4, 4))
    results["concat_channels"] = finite_difference_check(
        lambda: masked_mse(concat_channels(xa, xb), Tensor(tgt_c), np.ones((4, 4))),
        [xa, xb])

    xd = Tensor(rng.standard_normal((2, 4, 4, 4)) + 3.0, requires_grad=True)
    drop_rng_state = np.random.default_rng(7)
    mask_draw = (drop_rng_state.random((2, 4)) >= 0.5)  # freeze one dropout mask

    class _FixedRng:
        def random(self, shape):
            return np.where(mask_draw, 0.9, 0.1)

    results["channel_dropout(fixed mask)"] = finite_difference_check(
        lambda: masked_mse(channel_dropout(xd, 0.5, training=True, rng=_FixedRng()),
                           Tensor(np.zeros_like(xd.data)), np.ones((4, 4))), [xd])

    model = build_unet(UNetConfig(base_channels=2, dropout_p=0.0), seed=args.seed,
                       dtype="float64")
    xin = Tensor(rng.standard_normal((1, 1, 8, 8)), requires_grad=True)
    tgt_u = rng.standard_normal((1, 1, 8, 8))
    mask_u = np.zeros((8, 8))
    mask_u[:4, :4] = 1.0
    tensors = [xin] + model.parameters()
    results["unet-21-layer loss"] = finite_difference_check(
        lambda: masked_mse(forward(model, xin), Tensor(tgt_u), mask_u),
        tensors, max_coords_per_tensor=args.coords_per_tensor,
        rng=np.random.default_rng(0), signal_floor=1e-3, skip_kinks=True)

    worst = max(results.values())
    for name, err in results.items():
        mark = "PASS" if err <= 1e-4 else "FAIL"
        print(f"[{mark}] {name}: max relative error {err:.3e}")
    return 0 if worst <= 1e-4 else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsedense",
        description="Locally supervised global image restoration experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic quadrant-pattern dataset")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--train", type=int, default=64)
    p.add_argument("--val", type=int, default=16)
    p.add_argument("--test", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train the restoration network")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["sparse-dense", "patch"], default=None)
    p.add_argument("--patch", type=int, default=None)
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--base-channels", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints and baselines on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--patch-checkpoint", default=None)
    p.add_argument("--no-bilinear", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the exact oracle verification suites")
    p.add_argument("--case", default="all",
                   help="all | lemma | theorem-quadrant | theorem-random | "
                        "quadrant | ssdu-2x2 | nonvacuous")
    p.add_argument("--out", default=None, help="write CSV report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("check-equivariance", help="measure translation equivariance")
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--trials", type=int, default=2)
    p.add_argument("--shifts", default="0,0;8,0;0,8;8,8;64,64;1,0")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--dtype", choices=["float32", "float64"], default="float64")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check_equivariance)

    p = sub.add_parser("sweep", help="train across supervision patch sizes")
    p.add_argument("--data", required=True)
    p.add_argument("--sizes", default="8,4,2")
    p.add_argument("--mode", choices=["sparse-dense", "patch"], default=None)
    p.add_argument("--budget", action="store_true",
                   help="hold the total number of supervised pixels constant")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--base-channels", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference checks in float64")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coords-per-tensor", type=int, default=6)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    _configure_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - map to exit codes
        from .oracle import EnumerationCapError

        if isinstance(exc, EnumerationCapError):
            print(f"error: {exc}", file=sys.stderr)
            return 3
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
