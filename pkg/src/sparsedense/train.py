"""Training loops: sparse-dense locally supervised and patch-wise baseline.

Sparse-dense training feeds the zero-filled odd-lattice observation of the
full image and evaluates the squared loss only on the supervision region B;
the patch-wise baseline crops both input and target to B and supervises the
whole crop. Either way the pipeline reads ground-truth pixels only inside
omega union B, which is the acquisition guarantee of the sampling design
(7/16 of the pixels measured, 9/16 saved).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import AdamState, PlateauScheduler, Tensor, adam_step, masked_mse, scheduler_step
from .network import Model, UNetConfig, build_unet, forward
from .quadrants import Dataset
from .sampling import apply_mask, make_generalized_masks, make_sparse_dense_masks

SENTINEL = 1e9  # finite poison value for pixels the training loop must not read


@dataclass
class TrainConfig:
    lr: float = 4e-4
    epochs: int = 80
    batch_size: int = 8
    scheduler_factor: float = 0.5
    scheduler_patience: int = 8
    scheduler_threshold: float = 1e-6
    early_stop_threshold: float = 1e-10
    seed: int = 0
    mode: str = "sparse_dense"  # sparse_dense | patch_wise
    patch: int | None = None    # supervision patch side; None -> n/2 quadrant
    base_channels: int = 32
    dropout_p: float = 0.5
    strict: bool = False        # overwrite unmeasured pixels with a sentinel first
    omega: np.ndarray | None = None  # explicit masks override the generated design
    b: np.ndarray | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0 or self.batch_size < 1:
            raise ValueError("lr must be positive and batch_size >= 1")
        if self.mode not in ("sparse_dense", "patch_wise"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = -1
    diverged: bool = False
    stopped_early: bool = False

    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch] if self.best_epoch >= 0 else float("inf")


def make_training_pair(x, omega, b, strict=False):
    """Build (zero-filled observation, supervision target) from one image.

    With ``strict=True`` every pixel outside omega union b is overwritten with
    a sentinel before masking, so any read of an unmeasured pixel would poison
    the outputs instead of passing silently.
    """
    if x.shape != omega.shape or x.shape != b.shape:
        raise ValueError("mask/image size differ")
    if strict:
        x = np.where((omega | b) != 0, x, SENTINEL)
    return apply_mask(x, omega), apply_mask(x, b)


def resolve_masks(cfg: TrainConfig, n):
    """Masks from the config: explicit arrays, or the generated design."""
    if (cfg.omega is None) != (cfg.b is None):
        raise ValueError("explicit masks require both omega and b")
    if cfg.omega is not None:
        return np.asarray(cfg.omega, dtype=np.uint8), np.asarray(cfg.b, dtype=np.uint8)
    patch = cfg.patch if cfg.patch is not None else n // 2
    if patch == n // 2:
        omega, b, _ = make_sparse_dense_masks(n)
    else:
        omega, b, _ = make_generalized_masks(n, patch)
    return omega, b


def _stack(pairs):
    inputs = np.stack([p[0] for p in pairs]).astype(np.float32)[:, None]
    targets = np.stack([p[1] for p in pairs]).astype(np.float32)[:, None]
    return inputs, targets


def _epoch_val_loss(model, inputs, targets, mask, batch_size, mask_pixels):
    total = 0.0
    model.eval()
    for start in range(0, inputs.shape[0], batch_size):
        xb = Tensor(inputs[start:start + batch_size])
        yb = Tensor(targets[start:start + batch_size])
        loss = masked_mse(forward(model, xb), yb, mask)
        total += float(loss.data) * xb.data.shape[0]
    return total / inputs.shape[0] / mask_pixels


def _run_training(model: Model, train_pairs, val_pairs, loss_mask, cfg: TrainConfig):
    """Shared Adam + plateau-scheduler loop; returns (best model, history).

    The optimization objective is the supervision-masked squared loss summed
    over pixels; history / validation / early-stopping values are reported per
    supervision pixel (the usual MSE convention), which only rescales the
    recorded numbers, not the gradients.
    """
    inputs, targets = _stack(train_pairs)
    val_inputs, val_targets = _stack(val_pairs)
    mask = np.asarray(loss_mask, dtype=np.float32)
    mask_pixels = max(1.0, float(mask.sum()))
    num = inputs.shape[0]

    params = model.parameters()
    state = AdamState(lr=cfg.lr)
    sched = PlateauScheduler(lr=cfg.lr, factor=cfg.scheduler_factor,
                             patience=cfg.scheduler_patience,
                             threshold=cfg.scheduler_threshold)
    history = TrainHistory()
    best_val = float("inf")
    best_state = model.state()

    for epoch in range(cfg.epochs):
        order = np.random.default_rng((cfg.seed, epoch, 0)).permutation(num)
        model.train()
        running = 0.0
        for batch_idx, start in enumerate(range(0, num, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb = Tensor(inputs[idx])
            yb = Tensor(targets[idx])
            dropout_rng = np.random.default_rng((cfg.seed, epoch, batch_idx, 1))
            loss = masked_mse(forward(model, xb, rng=dropout_rng), yb, mask)
            if not math.isfinite(float(loss.data)):
                history.diverged = True
                break
            for p in params:
                p.zero_grad()
            loss.backward()
            adam_step([p.data for p in params], [p.grad for p in params], state)
            running += float(loss.data) * len(idx)
        if history.diverged:
            break
        val = _epoch_val_loss(model, val_inputs, val_targets, mask, cfg.batch_size,
                              mask_pixels)
        if not math.isfinite(val):
            history.diverged = True
            break
        history.train_loss.append(running / num / mask_pixels)
        history.val_loss.append(val)
        if val < best_val:
            best_val = val
            best_state = model.state()
            history.best_epoch = epoch
        _, lr_now = scheduler_step(sched, val)
        state.lr = lr_now
        history.lr.append(lr_now)
        if val < cfg.early_stop_threshold:
            history.stopped_early = True
            break

    model.load_state(best_state)
    model.eval()
    return model, history


def train(dataset: Dataset, cfg: TrainConfig):
    """Locally supervised training on zero-filled full-size observations."""
    if not dataset.train or not dataset.val:
        raise ValueError("dataset needs nonempty train and val splits")
    n = dataset.side()
    omega, b = resolve_masks(cfg, n)
    model = build_unet(UNetConfig(base_channels=cfg.base_channels,
                                  dropout_p=cfg.dropout_p), seed=cfg.seed)
    train_pairs = [make_training_pair(x, omega, b, cfg.strict) for x in dataset.train]
    val_pairs = [make_training_pair(x, omega, b, cfg.strict) for x in dataset.val]
    return _run_training(model, train_pairs, val_pairs, b, cfg)


def train_patchwise(dataset: Dataset, cfg: TrainConfig):
    """Baseline trained only on the supervision crop.

    Input is the zero-filled observation cropped to B, target the ground-truth
    crop, and the loss covers the whole crop. Inference still runs on full
    images in one pass thanks to the fully convolutional topology.
    """
    if not dataset.train or not dataset.val:
        raise ValueError("dataset needs nonempty train and val splits")
    n = dataset.side()
    patch = cfg.patch if cfg.patch is not None else n // 2
    if patch % 8 != 0:
        raise ValueError(
            f"patch-wise training with a {patch}x{patch} patch is not possible: "
            f"the three stride-2 downsampling stages need the patch side to be "
            f"divisible by 8")
    omega, b = resolve_masks(cfg, n)

    def crop_pair(x):
        # the crop lies inside B, where every pixel is measured
        inp, _ = make_training_pair(x, omega, b, cfg.strict)
        return inp[:patch, :patch], x[:patch, :patch].copy()

    model = build_unet(UNetConfig(base_channels=cfg.base_channels,
                                  dropout_p=cfg.dropout_p), seed=cfg.seed)
    train_pairs = [crop_pair(x) for x in dataset.train]
    val_pairs = [crop_pair(x) for x in dataset.val]
    return _run_training(model, train_pairs, val_pairs, np.ones((patch, patch)), cfg)


def restore(model: Model, observed) -> np.ndarray:
    """Run the eval-mode network on one zero-filled observation."""
    model.eval()
    x = np.asarray(observed, dtype=np.float32)[None, None]
    return forward(model, Tensor(x)).data[0, 0].astype(np.float64)


def full_image_mse(model: Model, images, omega) -> list:
    """Full-image restoration MSE per ground-truth test image."""
    out = []
    for x in images:
        restored = restore(model, apply_mask(x, omega))
        out.append(float(np.mean((restored - x) ** 2)))
    return out


def supervision_sweep(dataset: Dataset, patch_sizes, cfg: TrainConfig,
                      fixed_budget=False):
    """Train one model per supervision patch size and report test MSE.

    Returns rows of dicts (patch, n_train, mse_mean, mse_std). With
    ``fixed_budget=True`` the training-set size scales inversely with the
    patch area, anchored so the smallest patch uses the full training split
    (constant total number of supervised pixels).
    """
    n = dataset.side()
    rows = []
    budget = len(dataset.train) * min(patch_sizes) ** 2
    for patch in patch_sizes:
        if n % patch != 0:
            raise ValueError(f"patch {patch} does not divide image side {n}")
        sub = dataset
        n_train = len(dataset.train)
        if fixed_budget:
            n_train = max(1, round(budget / patch**2))
            sub = Dataset(train=dataset.train[:n_train], val=dataset.val,
                          test=dataset.test)
        cfg_p = replace(cfg, patch=patch)
        if cfg.mode == "patch_wise":
            model, _ = train_patchwise(sub, cfg_p)
        else:
            model, _ = train(sub, cfg_p)
        omega, _ = resolve_masks(cfg_p, n)
        errors = full_image_mse(model, dataset.test, omega)
        rows.append({"patch": patch, "n_train": n_train,
                     "mse_mean": float(np.mean(errors)),
                     "mse_std": float(np.std(errors))})
    return rows


def sweep_rows_to_csv(rows) -> str:
    lines = ["patch,n_train,mse_mean,mse_std"]
    lines += [f"{r['patch']},{r['n_train']},{r['mse_mean']:.6e},{r['mse_std']:.6e}"
              for r in rows]
    return "\n".join(lines) + "\n"
