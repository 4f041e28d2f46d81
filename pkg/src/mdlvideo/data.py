"""Synthetic video domains, the clip sampling pipeline, multi-view
evaluation, and an on-disk clip cache.

Three generator families, all emitting (T, C, H, W) float32 raw clips with
balanced labels and fully deterministic content given (seed, class, index):

* spatial-patterns: one smooth static template per class plus per-frame
  noise; separable from any single frame.
* temporal-motion: every clip is the same smooth texture circularly
  scrolling vertically; class 0 scrolls down, class 1 scrolls up, from a
  uniformly random start row. Integer torus shifts make the per-frame pixel
  distribution exactly class-independent, so only frame ORDER carries label
  information, and a vertically scrolling pattern survives horizontal-flip
  augmentation with its label intact.
* mixed-style: domains share a class template bank (key `bank_seed`) but
  render it with their own brightness/contrast/noise, so feature sharing
  across domains helps while raw statistics differ.

The training pipeline mirrors the usual video recipe at toy scale: sample a
window, take `clip_len` uniformly spaced frames, resize the short side to a
random target, random-crop, maybe horizontal-flip. Evaluation is
deterministic: `n_eval_temporal` uniformly spaced windows, each resized to a
fixed short side and cropped at left/center/right, giving 3x views whose
softmax scores are averaged.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, ContractError
from .network import DomainBatch, MdlNetwork, mdl_forward
from .ops import softmax_probs
from .seeding import derive_rng
from .tensor import Tensor, no_grad

DOMAIN_KINDS = ("spatial-patterns", "temporal-motion", "mixed-style")


@dataclass(frozen=True)
class SyntheticDomain:
    """One synthetic classification domain and its generator knobs."""
    domain_id: int
    name: str
    kind: str
    num_classes: int
    train_size: int
    val_size: int
    seed: int = 0
    t_raw: int = 32
    h_raw: int = 32
    w_raw: int = 32
    channels: int = 1
    noise: float = 0.1
    motion_speed: int = 2          # temporal-motion: rows scrolled per frame
    bank_seed: Optional[int] = None  # mixed-style: shared template bank key
    brightness: float = 0.0        # mixed-style: additive style shift
    contrast: float = 1.0          # mixed-style: multiplicative style factor

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ConfigError(f"unknown domain kind {self.kind!r}; expected "
                              f"one of {DOMAIN_KINDS}")
        if self.num_classes < 2:
            raise ConfigError(f"domain {self.name!r} needs >= 2 classes")
        if self.kind == "temporal-motion" and self.num_classes != 2:
            raise ConfigError("temporal-motion is a 2-class family "
                              "(down vs up)")
        if self.train_size < 1 or self.val_size < 1:
            raise ConfigError(f"domain {self.name!r} needs non-empty splits")
        if min(self.t_raw, self.h_raw, self.w_raw) < 1 or self.channels < 1:
            raise ConfigError(f"domain {self.name!r} has empty geometry")

    @property
    def effective_bank_seed(self) -> int:
        return self.seed if self.bank_seed is None else self.bank_seed


def _smooth_field(rng: np.random.Generator, h: int, w: int,
                  sigma: float) -> np.ndarray:
    """Unit-variance smooth random texture on the (h, w) torus."""
    field = gaussian_filter(rng.standard_normal((h, w)), sigma=sigma,
                            mode="wrap")
    field -= field.mean()
    std = field.std()
    return field / (std if std > 0 else 1.0)


def class_template(domain: SyntheticDomain, class_id: int) -> np.ndarray:
    """The static (H, W) template behind a class (spatial/mixed kinds)."""
    rng = derive_rng(domain.effective_bank_seed, "template", class_id)
    return _smooth_field(rng, domain.h_raw, domain.w_raw, sigma=3.0)


def motion_base(domain: SyntheticDomain) -> np.ndarray:
    """The shared scrolling texture of a temporal-motion domain."""
    rng = derive_rng(domain.effective_bank_seed, "motion-base")
    return _smooth_field(rng, domain.h_raw, domain.w_raw, sigma=2.0)


def generate_clip(domain: SyntheticDomain, class_id: int,
                  index: int) -> tuple[np.ndarray, int]:
    """Deterministically render raw clip `index` of `class_id`.

    Returns ((T, C, H, W) float32, label); label always equals class_id.
    """
    if not 0 <= class_id < domain.num_classes:
        raise ContractError(f"class_id {class_id} outside "
                            f"[0, {domain.num_classes})")
    rng = derive_rng(domain.seed, "clip", class_id, index)
    t, c, h, w = domain.t_raw, domain.channels, domain.h_raw, domain.w_raw

    if domain.kind == "temporal-motion":
        base = motion_base(domain)
        start_row = int(rng.integers(0, h))
        direction = 1 if class_id == 0 else -1
        frames = np.stack([
            np.roll(base, start_row + direction * domain.motion_speed * ti,
                    axis=0)
            for ti in range(t)])
    elif domain.kind == "spatial-patterns":
        frames = np.broadcast_to(class_template(domain, class_id),
                                 (t, h, w)).copy()
    else:  # mixed-style
        tpl = class_template(domain, class_id)
        dy, dx = rng.integers(-4, 5, size=2)
        shifted = np.roll(np.roll(tpl, int(dy), axis=0), int(dx), axis=1)
        frames = domain.contrast * np.broadcast_to(shifted, (t, h, w)) \
            + domain.brightness

    clip = np.broadcast_to(frames[:, None, :, :], (t, c, h, w)).copy()
    if domain.noise > 0:
        clip += domain.noise * rng.standard_normal((t, c, h, w))
    return clip.astype(np.float32), class_id


def split_size(domain: SyntheticDomain, split: str) -> int:
    if split == "train":
        return domain.train_size
    if split == "val":
        return domain.val_size
    raise ConfigError(f"unknown split {split!r}")


def clip_for(domain: SyntheticDomain, split: str,
             position: int) -> tuple[np.ndarray, int]:
    """Raw clip at a split position; val indices live after train indices
    so the two splits can never collide."""
    size = split_size(domain, split)
    if not 0 <= position < size:
        raise ConfigError(f"{split} position {position} outside [0, {size})")
    index = position if split == "train" else domain.train_size + position
    return generate_clip(domain, index % domain.num_classes, index)


@dataclass(frozen=True)
class ClipSamplerConfig:
    """Geometry of the raw-clip -> model-input pipeline."""
    window_frames: int = 24
    clip_len: int = 16
    resize_min: int = 24
    resize_max: int = 32
    crop: int = 24
    hflip_prob: float = 0.5
    eval_short_side: int = 28
    n_eval_temporal: int = 10

    def __post_init__(self):
        if self.clip_len < 1 or self.window_frames < 1:
            raise ConfigError("clip_len and window_frames must be >= 1")
        if not self.crop <= self.resize_min <= self.resize_max:
            raise ConfigError(
                f"need crop <= resize_min <= resize_max, got "
                f"{self.crop}/{self.resize_min}/{self.resize_max}")
        if self.eval_short_side < self.crop:
            raise ConfigError("eval_short_side must be >= crop")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ConfigError(f"hflip_prob {self.hflip_prob} outside [0, 1]")
        if self.n_eval_temporal < 1:
            raise ConfigError("n_eval_temporal must be >= 1")


def _resize_frames(frames: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of (T, C, H, W) frames (half-pixel centers)."""
    t, c, h, w = frames.shape
    if (out_h, out_w) == (h, w):
        return frames

    def axis_weights(n_out: int, n_src: int):
        centers = (np.arange(n_out) + 0.5) * n_src / n_out - 0.5
        lo = np.clip(np.floor(centers).astype(int), 0, n_src - 1)
        hi = np.clip(lo + 1, 0, n_src - 1)
        frac = np.clip(centers - lo, 0.0, 1.0)
        return lo, hi, frac

    y0, y1, fy = axis_weights(out_h, h)
    x0, x1, fx = axis_weights(out_w, w)
    rows = frames[:, :, y0, :] * (1 - fy)[None, None, :, None] \
        + frames[:, :, y1, :] * fy[None, None, :, None]
    return rows[:, :, :, x0] * (1 - fx)[None, None, None, :] \
        + rows[:, :, :, x1] * fx[None, None, None, :]


def _frame_indices(t_raw: int, window: int, start: int,
                   clip_len: int) -> np.ndarray:
    window = min(window, t_raw)
    return start + np.round(np.linspace(0, window - 1, clip_len)).astype(int)


def _short_side_dims(h: int, w: int, target: int) -> tuple[int, int]:
    if h <= w:
        return target, max(int(round(w * target / h)), target)
    return max(int(round(h * target / w)), target), target


def sample_train_clip(raw: np.ndarray, cfg: ClipSamplerConfig,
                      rng: np.random.Generator) -> np.ndarray:
    """One augmented training view of a raw clip.

    Draw order is fixed (window start, resize target, crop y, crop x, flip)
    so a given rng state maps to exactly one view. Returns
    (clip_len, C, crop, crop); a window longer than the raw clip is clamped
    to it.
    """
    t, c, h, w = raw.shape
    window = min(cfg.window_frames, t)
    start = int(rng.integers(0, t - window + 1))
    frames = raw[_frame_indices(t, window, start, cfg.clip_len)]
    target = int(rng.integers(cfg.resize_min, cfg.resize_max + 1))
    oh, ow = _short_side_dims(h, w, target)
    resized = _resize_frames(frames, oh, ow)
    cy = int(rng.integers(0, oh - cfg.crop + 1))
    cx = int(rng.integers(0, ow - cfg.crop + 1))
    view = resized[:, :, cy:cy + cfg.crop, cx:cx + cfg.crop]
    if rng.random() < cfg.hflip_prob:
        view = view[:, :, :, ::-1]
    return np.ascontiguousarray(view)


def sample_eval_views(raw: np.ndarray,
                      cfg: ClipSamplerConfig) -> np.ndarray:
    """The deterministic evaluation views of one raw clip.

    `n_eval_temporal` window starts uniformly spaced over the valid range,
    each resized to the fixed eval short side and cropped at left, center,
    and right (vertically centered). No randomness, no flipping. Returns
    (n_eval_temporal * 3, clip_len, C, crop, crop).
    """
    t, c, h, w = raw.shape
    window = min(cfg.window_frames, t)
    starts = np.round(np.linspace(0, t - window,
                                  cfg.n_eval_temporal)).astype(int)
    oh, ow = _short_side_dims(h, w, cfg.eval_short_side)
    cy = (oh - cfg.crop) // 2
    xs = (0, (ow - cfg.crop) // 2, ow - cfg.crop)  # left, center, right
    views = []
    for start in starts:
        frames = raw[_frame_indices(t, window, int(start), cfg.clip_len)]
        resized = _resize_frames(frames, oh, ow)
        for cx in xs:
            views.append(resized[:, :, cy:cy + cfg.crop, cx:cx + cfg.crop])
    return np.ascontiguousarray(np.stack(views))


class DomainSampler:
    """Draws augmented training batches from one domain's split, from its
    own private rng stream."""

    def __init__(self, domain: SyntheticDomain, cfg: ClipSamplerConfig,
                 batch_size: int, *, split: str = "train", seed: int = 0,
                 dtype=np.float32, cache: Optional["ClipCache"] = None):
        self.domain = domain
        self.cfg = cfg
        self.batch_size = int(batch_size)
        self.split = split
        self.dtype = dtype
        self.cache = cache
        size = split_size(domain, split)
        if size < 1:
            raise ConfigError(f"domain {domain.name!r} split {split!r} "
                              f"is empty")
        self.size = size
        self.rng = derive_rng(seed, "sampler", domain.domain_id, split)

    def next_batch(self) -> DomainBatch:
        positions = self.rng.integers(0, self.size, size=self.batch_size)
        clips = np.empty((self.batch_size, self.cfg.clip_len,
                          self.domain.channels, self.cfg.crop, self.cfg.crop),
                         dtype=self.dtype)
        labels = np.empty(self.batch_size, dtype=np.int64)
        for row, pos in enumerate(positions):
            if self.cache is not None:
                raw, label = self.cache.fetch_split(self.domain, self.split,
                                                    int(pos))
            else:
                raw, label = clip_for(self.domain, self.split, int(pos))
            clips[row] = sample_train_clip(raw, self.cfg, self.rng)
            labels[row] = label
        return DomainBatch(Tensor(clips), labels, self.domain.domain_id)


def multiview_predict(net: MdlNetwork, views: np.ndarray,
                      domain_id: int) -> np.ndarray:
    """Average the softmax scores of all views of one video.

    The mean is computed as probs[0] + mean(probs - probs[0]): identical in
    exact arithmetic to the plain mean, and bit-exact (every delta is zero)
    when all views coincide, so more views of the same evidence can never
    move the score.
    """
    if views.ndim != 5:
        raise ContractError(f"views must be (V, T, C, H, W), got "
                            f"{views.shape}")
    dtype = net.heads[net.domain_ids[0]].weight.dtype
    batch = DomainBatch(Tensor(views.astype(dtype)),
                        np.zeros(views.shape[0], dtype=np.int64), domain_id)
    with no_grad():
        logits = mdl_forward(batch, net, mode="eval")
    probs = softmax_probs(logits.data)
    return probs[0] + (probs - probs[0]).mean(axis=0)


def evaluate_domain(net: MdlNetwork, domain: SyntheticDomain,
                    cfg: ClipSamplerConfig, *, split: str = "val",
                    max_items: Optional[int] = None,
                    cache: Optional["ClipCache"] = None) -> float:
    """Multi-view top-1 accuracy over a split (ties resolve to the lowest
    class index, as argmax does)."""
    size = split_size(domain, split)
    if max_items is not None:
        size = min(size, max_items)
    hits = 0
    for pos in range(size):
        if cache is not None:
            raw, label = cache.fetch_split(domain, split, pos)
        else:
            raw, label = clip_for(domain, split, pos)
        scores = multiview_predict(net, sample_eval_views(raw, cfg),
                                   domain.domain_id)
        hits += int(np.argmax(scores) == label)
    return hits / size


def make_eval_hook(domains: list[SyntheticDomain], cfg: ClipSamplerConfig,
                   *, max_items: Optional[int] = None):
    """An eval_hook for trainer.train covering every domain."""
    def hook(net: MdlNetwork) -> dict[int, float]:
        return {d.domain_id: evaluate_domain(net, d, cfg,
                                             max_items=max_items)
                for d in domains}
    return hook


class ClipCache:
    """Raw clips materialized under a directory, with an integrity manifest.

    Each entry records (domain, index, label, seed, shape, dtype, checksum);
    a fetch either regenerates and stores, or loads and verifies that bytes
    still hash to the recorded checksum. Loads are bit-identical to
    regeneration because generation itself is deterministic.
    """

    MANIFEST = "manifest.json"

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._manifest_path = self.root / self.MANIFEST
        if self._manifest_path.exists():
            with open(self._manifest_path) as fh:
                self.entries: dict[str, dict] = json.load(fh)["entries"]
        else:
            self.entries = {}

    @staticmethod
    def _key(domain: SyntheticDomain, index: int) -> str:
        return f"{domain.name}-{index:06d}"

    @staticmethod
    def _checksum(arr: np.ndarray) -> str:
        return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()

    def _flush(self) -> None:
        with open(self._manifest_path, "w") as fh:
            json.dump({"entries": self.entries}, fh, indent=0)

    def fetch(self, domain: SyntheticDomain,
              index: int) -> tuple[np.ndarray, int]:
        key = self._key(domain, index)
        path = self.root / f"{key}.npy"
        if key in self.entries:
            entry = self.entries[key]
            clip = np.load(path, allow_pickle=False)
            if (self._checksum(clip) != entry["checksum"]
                    or list(clip.shape) != entry["shape"]
                    or str(clip.dtype) != entry["dtype"]):
                raise ConfigError(f"cache entry {key} failed integrity "
                                  f"check; delete {self.root} to rebuild")
            return clip, entry["label"]
        clip, label = generate_clip(domain, index % domain.num_classes, index)
        np.save(path, clip)
        self.entries[key] = {
            "domain": domain.name,
            "domain_id": domain.domain_id,
            "index": index,
            "label": label,
            "seed": domain.seed,
            "shape": list(clip.shape),
            "dtype": str(clip.dtype),
            "checksum": self._checksum(clip),
        }
        self._flush()
        return clip, label

    def fetch_split(self, domain: SyntheticDomain, split: str,
                    position: int) -> tuple[np.ndarray, int]:
        size = split_size(domain, split)
        if not 0 <= position < size:
            raise ConfigError(f"{split} position {position} outside "
                              f"[0, {size})")
        index = position if split == "train" \
            else domain.train_size + position
        return self.fetch(domain, index)
