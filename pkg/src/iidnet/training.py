"""Training loop, augmentation, optimizer, and evaluation harnesses.

Determinism contract: every random draw is made from a generator derived
from (seed, purpose, epoch, position), never from a sequentially shared
stream, so runs are bitwise reproducible and a run resumed from a
checkpoint continues exactly as the uninterrupted run would have. For the
same reason the JSON-lines training log contains no timestamps.
"""

from __future__ import annotations

import glob
import json
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import metrics as met
from .autodiff import Param
from .errors import ConfigError, DegenerateInputError, OptimizerAbort, SkipSample, StructuralError
from .fileio import read_gray, read_linear_image
from .illumination import evaluation_grid, generate_views, grid_conditions
from .image import GrayMap, LinearImage, mean_luminance
from .losses import LossBreakdown, LossWeights, total_loss
from .network import (Decomposition, NetConfig, NetParams, decompose, forward, images_to_batch,
                      init_params, load, reconstruct, save)

# spawn-key domains for deriving independent random streams from one seed
_RNG_INIT = 0
_RNG_SHUFFLE = 1
_RNG_SAMPLE = 2


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self, errors: list[str]):
        if not 0 < self.lr:
            errors.append(f"adam.lr must be > 0, got {self.lr}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                errors.append(f"adam.{name} must be in [0, 1), got {v}")
        if not self.eps > 0:
            errors.append(f"adam.eps must be > 0, got {self.eps}")

    def to_json(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


@dataclass(frozen=True)
class TrainConfig:
    dataset_dir: str
    out_dir: str
    epochs: int = 100
    batch_size: int = 4
    patch_size: int = 64
    scale_range: tuple[float, float] = (0.6, 1.0)
    hflip_prob: float = 0.5
    adam: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0
    net: NetConfig = field(default_factory=NetConfig.desk)
    weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_every: int = 10

    def validate(self):
        errors: list[str] = []
        if self.epochs < 0:
            errors.append(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            errors.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patch_size < 1:
            errors.append(f"patch_size must be >= 1, got {self.patch_size}")
        elif self.patch_size % (2 ** self.net.depth):
            errors.append(
                f"patch_size {self.patch_size} must be divisible by 2^depth = {2 ** self.net.depth}"
            )
        lo, hi = self.scale_range
        if not (0 < lo <= hi <= 1):
            errors.append(f"scale_range must satisfy 0 < lo <= hi <= 1, got {self.scale_range}")
        if not 0 <= self.hflip_prob <= 1:
            errors.append(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")
        if self.checkpoint_every < 1:
            errors.append(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        self.adam.validate(errors)
        if errors:
            raise ConfigError("invalid training config:\n  - " + "\n  - ".join(errors))

    def to_json(self) -> dict:
        return {
            "dataset_dir": self.dataset_dir,
            "out_dir": self.out_dir,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "patch_size": self.patch_size,
            "scale_range": list(self.scale_range),
            "hflip_prob": self.hflip_prob,
            "adam": self.adam.to_json(),
            "seed": self.seed,
            "net": self.net.to_json(),
            "weights": self.weights.to_json(),
            "checkpoint_every": self.checkpoint_every,
        }

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        errors: list[str] = []
        known = {"dataset_dir", "out_dir", "epochs", "batch_size", "patch_size", "scale_range",
                 "hflip_prob", "adam", "seed", "net", "weights", "checkpoint_every"}
        for key in d:
            if key not in known:
                errors.append(f"unknown config key {key!r}")
        for key in ("dataset_dir", "out_dir"):
            if key not in d:
                errors.append(f"missing required key {key!r}")
            elif not isinstance(d[key], str):
                errors.append(f"{key} must be a string, got {type(d[key]).__name__}")
        kwargs: dict = {}
        for key, typ in (("epochs", int), ("batch_size", int), ("patch_size", int),
                         ("seed", int), ("checkpoint_every", int), ("hflip_prob", (int, float))):
            if key in d:
                if not isinstance(d[key], typ) or isinstance(d[key], bool):
                    errors.append(f"{key} must be {getattr(typ, '__name__', 'a number')}, got {d[key]!r}")
                else:
                    kwargs[key] = d[key]
        if "scale_range" in d:
            sr = d["scale_range"]
            if not (isinstance(sr, (list, tuple)) and len(sr) == 2
                    and all(isinstance(v, (int, float)) for v in sr)):
                errors.append(f"scale_range must be [lo, hi], got {sr!r}")
            else:
                kwargs["scale_range"] = (float(sr[0]), float(sr[1]))
        for key, builder in (("adam", AdamConfig), ("weights", LossWeights)):
            if key in d:
                try:
                    kwargs[key] = builder(**d[key])
                except (TypeError, ValueError) as e:
                    errors.append(f"bad {key} block: {e}")
        if "net" in d:
            try:
                spec = dict(d["net"])
                preset = spec.pop("preset", None)
                if preset is not None:
                    base = {"desk": NetConfig.desk, "full": NetConfig.full}.get(preset)
                    if base is None:
                        errors.append(f"net.preset must be 'desk' or 'full', got {preset!r}")
                    elif spec:
                        errors.append("net block must give either a preset or explicit fields, not both")
                    else:
                        kwargs["net"] = base()
                else:
                    kwargs["net"] = NetConfig.from_json(spec)
            except (KeyError, TypeError, ValueError, StructuralError) as e:
                errors.append(f"bad net block: {e}")
        if errors:
            raise ConfigError("invalid training config:\n  - " + "\n  - ".join(errors))
        cfg = cls(dataset_dir=d["dataset_dir"], out_dir=d["out_dir"], **kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_json_file(cls, path: str) -> "TrainConfig":
        with open(path) as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: not valid JSON ({e})")
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_json(d)


# ---------------------------------------------------------------------------
# dataset index


@dataclass
class DatasetIndex:
    entries: list[tuple[str, str]]  # (path, "ok" or error message)

    @property
    def valid_paths(self) -> list[str]:
        return [p for p, status in self.entries if status == "ok"]

    @classmethod
    def scan(cls, dataset_dir: str) -> "DatasetIndex":
        paths = sorted(glob.glob(os.path.join(dataset_dir, "*.pfm")))
        entries = []
        for p in paths:
            try:
                read_linear_image(p)
                entries.append((p, "ok"))
            except Exception as e:  # noqa: BLE001 - any parse failure disqualifies the file
                entries.append((p, f"{type(e).__name__}: {e}"))
        return cls(entries)


# ---------------------------------------------------------------------------
# augmentation


def bilinear_resize(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centered bilinear resampling; identity when sizes match."""
    h, w = data.shape[:2]
    if (out_h, out_w) == (h, w):
        return data.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    fy = (ys - y0).reshape(-1, 1, 1)
    fx = (xs - x0).reshape(1, -1, 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    tl = data[np.ix_(y0c, x0c)]
    tr = data[np.ix_(y0c, x1c)]
    bl = data[np.ix_(y1c, x0c)]
    br = data[np.ix_(y1c, x1c)]
    top = tl * (1 - fx) + tr * fx
    bot = bl * (1 - fx) + br * fx
    return top * (1 - fy) + bot * fy


def apply_augment(img: LinearImage, scale: float, crop_y: int, crop_x: int,
                  flip: bool, patch_size: int) -> LinearImage:
    """Deterministic augmentation core: resize, crop, optional h-flip."""
    rh = int(round(scale * img.height))
    rw = int(round(scale * img.width))
    if rh < patch_size or rw < patch_size:
        raise SkipSample(f"scaled size {rh}x{rw} cannot hold a {patch_size}px patch")
    if not (0 <= crop_y <= rh - patch_size and 0 <= crop_x <= rw - patch_size):
        raise StructuralError("apply_augment: crop offset out of range")
    resized = bilinear_resize(img.data, rh, rw)
    patch = resized[crop_y : crop_y + patch_size, crop_x : crop_x + patch_size]
    if flip:
        patch = patch[:, ::-1]
    return LinearImage(np.ascontiguousarray(patch))


def augment(img: LinearImage, rng: np.random.Generator, cfg: TrainConfig) -> LinearImage:
    """Random scale / crop / flip patch. Draw order: scale, crop y, crop x, flip."""
    scale = float(rng.uniform(*cfg.scale_range))
    rh = int(round(scale * img.height))
    rw = int(round(scale * img.width))
    if rh < cfg.patch_size or rw < cfg.patch_size:
        raise SkipSample(
            f"image {img.height}x{img.width} at scale {scale:.3f} cannot hold a "
            f"{cfg.patch_size}px patch"
        )
    crop_y = int(rng.integers(0, rh - cfg.patch_size + 1))
    crop_x = int(rng.integers(0, rw - cfg.patch_size + 1))
    flip = bool(rng.random() < cfg.hflip_prob)
    return apply_augment(img, scale, crop_y, crop_x, flip, cfg.patch_size)


# ---------------------------------------------------------------------------
# optimizer


def adam_step(params: list[Param], t: int, cfg: AdamConfig) -> None:
    """One Adam update with bias correction; moment slots live on the params.

    t is the 1-based step count. Parameters with no gradient are skipped;
    a non-finite gradient aborts the step before touching any state.
    """
    if t < 1:
        raise StructuralError(f"adam_step: t must be >= 1, got {t}")
    for p in params:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise OptimizerAbort(f"non-finite gradient in {p.name or 'unnamed param'} at step {t}")
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for p in params:
        if p.grad is None:
            continue
        g = p.grad.astype(p.data.dtype, copy=False)
        if p.m is None:
            p.m = np.zeros_like(p.data)
            p.v = np.zeros_like(p.data)
        p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * g
        p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * (g * g)
        m_hat = p.m / bc1
        v_hat = p.v / bc2
        p.data = p.data - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def _check_finite_params(net: NetParams, context: str) -> None:
    for name, p in net.params.items():
        if not np.all(np.isfinite(p.data)):
            raise OptimizerAbort(f"non-finite values in parameter {name!r} after {context}")


# ---------------------------------------------------------------------------
# training


@dataclass
class OptState:
    t: int = 0


def train_step(net: NetParams, opt: OptState, sources: list[LinearImage],
               rngs: list[np.random.Generator], cfg: TrainConfig) -> LossBreakdown:
    """One optimization step: augment each source, render a two-view pair per
    source, run both views through the network in one batch, and apply Adam
    to the pair objective averaged over the batch."""
    views1, views2, labels1, labels2 = [], [], [], []
    skips = []
    for img, rng in zip(sources, rngs):
        try:
            patch = augment(img, rng, cfg)
            (v1, c1), (v2, c2) = generate_views(patch, rng, 2)
        except (SkipSample, DegenerateInputError) as e:
            skips.append(str(e))
            continue
        views1.append(v1)
        views2.append(v2)
        labels1.append(c1.color.as_array())
        labels2.append(c2.color.as_array())
    if not views1:
        raise SkipSample("; ".join(skips) or "no usable sources in batch")
    if skips:
        warnings.warn(f"skipped {len(skips)} of {len(sources)} samples: {skips[0]}")

    n = len(views1)
    x = images_to_batch(views1 + views2, dtype=net.dtype)
    r, s, c = forward(net, x, training=True)
    d1 = (ad.slice_batch(r, 0, n), ad.slice_batch(s, 0, n), ad.slice_batch(c, 0, n))
    d2 = (ad.slice_batch(r, n, 2 * n), ad.slice_batch(s, n, 2 * n), ad.slice_batch(c, n, 2 * n))
    i1 = ad.slice_batch(x, 0, n)
    i2 = ad.slice_batch(x, n, 2 * n)
    c1 = np.stack(labels1).astype(net.dtype)
    c2 = np.stack(labels2).astype(net.dtype)

    node, breakdown = total_loss(i1, i2, c1, c2, d1, d2, cfg.weights)
    for p in net.trainable():
        p.zero_grad()
    ad.backward(node)
    opt.t += 1
    adam_step(net.trainable(), opt.t, cfg.adam)
    _check_finite_params(net, f"step {opt.t}")
    return breakdown


@dataclass
class TrainResult:
    final_checkpoint: str
    log_path: str
    epochs_run: int
    index: DatasetIndex


def _opt_extra(net: NetParams, opt: OptState, epoch_next: int) -> dict[str, np.ndarray]:
    extra = {"opt.t": np.array(opt.t, dtype=np.int64),
             "epoch_next": np.array(epoch_next, dtype=np.int64)}
    for name, p in net.params.items():
        if p.m is not None:
            extra[f"opt.m:{name}"] = p.m
            extra[f"opt.v:{name}"] = p.v
    return extra


def _restore_opt(net: NetParams, extra: dict[str, np.ndarray]) -> tuple[OptState, int]:
    opt = OptState(t=int(extra.get("opt.t", np.array(0))))
    for name, p in net.params.items():
        if f"opt.m:{name}" in extra:
            p.m = extra[f"opt.m:{name}"].astype(net.dtype, copy=True)
            p.v = extra[f"opt.v:{name}"].astype(net.dtype, copy=True)
    return opt, int(extra.get("epoch_next", np.array(0)))


def train(cfg: TrainConfig, resume_from: str | None = None,
          progress: bool = False) -> TrainResult:
    """Run the full training loop; see the module docstring for determinism.

    Writes ckpt_epoch_%04d.iidc every `checkpoint_every` epochs (each holds
    params, batch-norm statistics, and optimizer state for resuming),
    ckpt_final.iidc at the end, and one JSON line per step to train_log.jsonl.
    """
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    index = DatasetIndex.scan(cfg.dataset_dir)
    paths = index.valid_paths
    if not paths:
        raise ConfigError(f"no readable .pfm images in {cfg.dataset_dir}")
    if len(paths) < cfg.batch_size:
        raise ConfigError(f"dataset has {len(paths)} images, fewer than batch_size {cfg.batch_size}")
    images = [read_linear_image(p) for p in paths]

    if resume_from is not None:
        net, extra = load(resume_from)
        opt, start_epoch = _restore_opt(net, extra)
    else:
        net = init_params(cfg.net, cfg.seed)
        opt = OptState()
        start_epoch = 0

    with open(os.path.join(cfg.out_dir, "config.json"), "w") as f:
        json.dump(cfg.to_json(), f, indent=2, sort_keys=True)

    steps_per_epoch = len(images) // cfg.batch_size
    log_path = os.path.join(cfg.out_dir, "train_log.jsonl")
    log = open(log_path, "a")
    try:
        for epoch in range(start_epoch, cfg.epochs):
            order = derive_rng(cfg.seed, _RNG_SHUFFLE, epoch).permutation(len(images))
            for step in range(steps_per_epoch):
                positions = range(step * cfg.batch_size, (step + 1) * cfg.batch_size)
                sources = [images[order[pos]] for pos in positions]
                rngs = [derive_rng(cfg.seed, _RNG_SAMPLE, epoch, pos) for pos in positions]
                record: dict = {"epoch": epoch, "step": step}
                try:
                    breakdown = train_step(net, opt, sources, rngs, cfg)
                    record.update(breakdown.to_json())
                except SkipSample as e:
                    record["skipped"] = str(e)
                log.write(json.dumps(record, sort_keys=True) + "\n")
            log.flush()
            if progress:
                print(f"epoch {epoch + 1}/{cfg.epochs} done ({steps_per_epoch} steps)")
            if (epoch + 1) % cfg.checkpoint_every == 0 and (epoch + 1) < cfg.epochs:
                path = os.path.join(cfg.out_dir, f"ckpt_epoch_{epoch + 1:04d}.iidc")
                save(net, path, extra=_opt_extra(net, opt, epoch + 1))
    finally:
        log.close()

    final_path = os.path.join(cfg.out_dir, "ckpt_final.iidc")
    save(net, final_path, extra=_opt_extra(net, opt, cfg.epochs))
    return TrainResult(final_path, log_path, cfg.epochs - start_epoch, index)


# ---------------------------------------------------------------------------
# evaluation harnesses


GRID_LABELS = [c.label for c in grid_conditions()]
GRID_REFERENCE_INDEX = 5  # 1-based


@dataclass
class EvalResult:
    reflectance: met.ConsistencyReport
    reconstruction: met.ConsistencyReport
    input_baseline: met.ConsistencyReport
    mean_reflectance_luminance: float
    illum_mae: float
    n_images: int
    skipped: list[tuple[str, str]] = field(default_factory=list)


def evaluate_images(net: NetParams, images: list[LinearImage],
                    names: list[str] | None = None) -> EvalResult:
    """Decompose the 9-condition grid of every image and report consistency.

    Returns aggregate (mean over images) reflectance-vs-reference,
    reconstruction, and input-vs-reference baseline tables, plus the mean
    estimated-reflectance luminance and the mean absolute error of the
    illuminant estimates against the grid's true colors.
    """
    names = names or [f"image_{i}" for i in range(len(images))]
    refl_reports, recon_reports, base_reports = [], [], []
    lums: list[float] = []
    illum_errs: list[float] = []
    skipped: list[tuple[str, str]] = []
    for name, img in zip(names, images):
        try:
            grid = evaluation_grid(img)
        except DegenerateInputError as e:
            skipped.append((name, str(e)))
            continue
        views = [v for v, _ in grid]
        conds = [c for _, c in grid]
        decomps = decompose(net, views)
        refl = [d.reflectance.data for d in decomps]
        recons = [reconstruct(d).data for d in decomps]
        inputs = [v.data for v in views]
        refl_reports.append(met.consistency_report(
            refl, GRID_LABELS, GRID_REFERENCE_INDEX, "reflectance consistency vs reference"))
        recon_reports.append(met.reconstruction_report(
            inputs, recons, GRID_LABELS, "reconstruction consistency"))
        base_reports.append(met.consistency_report(
            inputs, GRID_LABELS, GRID_REFERENCE_INDEX, "input-image baseline vs reference"))
        lums.extend(mean_luminance(d.reflectance) for d in decomps)
        for d, cond in zip(decomps, conds):
            illum_errs.append(float(np.mean(np.abs(d.illuminant.as_array() - cond.color.as_array()))))
    if not refl_reports:
        raise DegenerateInputError("evaluate: no usable images" +
                                   (f" ({skipped[0][1]})" if skipped else ""))
    return EvalResult(
        reflectance=met.aggregate_reports(refl_reports),
        reconstruction=met.aggregate_reports(recon_reports),
        input_baseline=met.aggregate_reports(base_reports),
        mean_reflectance_luminance=float(np.mean(lums)),
        illum_mae=float(np.mean(illum_errs)),
        n_images=len(refl_reports),
        skipped=skipped,
    )


def evaluate_dir(net: NetParams, image_dir: str) -> EvalResult:
    index = DatasetIndex.scan(image_dir)
    paths = index.valid_paths
    if not paths:
        raise ConfigError(f"no readable .pfm images in {image_dir}")
    return evaluate_images(net, [read_linear_image(p) for p in paths],
                           [os.path.basename(p) for p in paths])


# ---------------------------------------------------------------------------
# benchmark harness (ground-truth reflectance/shading triples)


@dataclass
class LmseTable:
    rows: list[tuple[str, float]]

    @property
    def mean(self) -> float:
        return float(np.mean([s for _, s in self.rows]))

    def render_text(self) -> str:
        width = max(len(name) for name, _ in self.rows)
        lines = ["scale-invariant local MSE (lower is better)"]
        lines += [f"{name:<{width}}  {score:.3f}" for name, score in self.rows]
        lines.append(f"{'Mean (%d images)' % len(self.rows):<{width}}  {self.mean:.3f}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {"rows": [{"name": n, "lmse": s} for n, s in self.rows], "mean": self.mean}


def find_benchmark_triples(data_dir: str) -> list[tuple[str, str, str, str]]:
    """Locate (name, original, reflectance-gt, shading-gt) file triples."""
    triples = []
    originals = sorted(glob.glob(os.path.join(data_dir, "*_original.*")))
    for orig in originals:
        base = os.path.basename(orig)
        name = base[: base.rindex("_original")]
        refl = shad = None
        for ext in (".pfm", ".png"):
            cand_r = os.path.join(data_dir, f"{name}_reflectance{ext}")
            cand_s = os.path.join(data_dir, f"{name}_shading{ext}")
            refl = cand_r if refl is None and os.path.exists(cand_r) else refl
            shad = cand_s if shad is None and os.path.exists(cand_s) else shad
        if refl is None or shad is None:
            raise StructuralError(f"{data_dir}: missing reflectance/shading files for {name!r}")
        triples.append((name, orig, refl, shad))
    if not triples:
        raise StructuralError(f"{data_dir}: no *_original.pfm|png files found")
    return triples


def lmse_evaluate(decompose_fn, data_dir: str,
                  cfg: met.LmseConfig = met.LmseConfig()) -> LmseTable:
    """Score a decomposer against ground-truth triples in `data_dir`.

    decompose_fn(name, image) -> (reflectance LinearImage, shading GrayMap).
    Files are <name>_original.*, <name>_reflectance.*, <name>_shading.*.
    """
    rows = []
    for name, orig_path, refl_path, shad_path in find_benchmark_triples(data_dir):
        orig = read_linear_image(orig_path)
        gt_r = read_linear_image(refl_path)
        gt_s = read_gray(shad_path)
        est_r, est_s = decompose_fn(name, orig)
        score = met.lmse_decomposition(est_r.data, est_s.data, gt_r.data, gt_s.data, cfg)
        rows.append((name, score))
    return LmseTable(rows)


def network_decomposer(net: NetParams):
    """Adapter: a decompose_fn for `lmse_evaluate` backed by a trained network."""
    def fn(name: str, img: LinearImage) -> tuple[LinearImage, GrayMap]:
        d = decompose_padded(net, img)
        return d.reflectance, d.gray_shading
    return fn


def ground_truth_decomposer(data_dir: str):
    """Adapter that returns the stored ground truth as the estimate (harness
    plumbing check: every score must come out 0)."""
    def fn(name: str, img: LinearImage) -> tuple[LinearImage, GrayMap]:
        triples = {t[0]: t for t in find_benchmark_triples(data_dir)}
        _, _, refl_path, shad_path = triples[name]
        return read_linear_image(refl_path), read_gray(shad_path)
    return fn


def decompose_padded(net: NetParams, img: LinearImage):
    """Decompose an image whose size need not divide 2^depth: edge-pad up,
    run the network, crop the outputs back."""
    stride = 2 ** net.config.depth
    h, w = img.height, img.width
    ph = (stride - h % stride) % stride
    pw = (stride - w % stride) % stride
    if ph == 0 and pw == 0:
        return decompose(net, img)
    padded = LinearImage(np.pad(img.data, ((0, ph), (0, pw), (0, 0)), mode="edge"))
    d = decompose(net, padded)
    return Decomposition(
        reflectance=LinearImage(d.reflectance.data[:h, :w]),
        gray_shading=GrayMap(d.gray_shading.data[:h, :w]),
        illuminant=d.illuminant,
    )
