"""Deterministic synthetic street scenes with controllable domain style
and a defect injector that mimics flawed generated imagery.

Every sample is a pure function of (scene seed, index, style): layered
composition of a road band, buildings on the skyline, vegetation blobs,
cars on the road and poles in front, each with a class-specific texture
family, then a global style transform (gain, gamma, hue rotation,
noise).  Labels are pixel-exact and untouched by style.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ielkit.errors import ConfigError, UsageError

DEFAULT_CLASSES = ("background", "road", "building", "car", "pole", "vegetation")
BACKGROUND, ROAD, BUILDING, CAR, POLE, VEGETATION = range(6)

# Mean-luminance band of each class's texture family under the neutral
# style; the renderer keeps per-class means inside these (tested).
CLASS_LUMINANCE_BANDS = {
    BACKGROUND: (0.62, 0.88),
    ROAD: (0.28, 0.44),
    BUILDING: (0.38, 0.58),
    CAR: (0.10, 0.32),
    POLE: (0.06, 0.20),
    VEGETATION: (0.20, 0.38),
}


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    classes: tuple[str, ...] = DEFAULT_CLASSES
    size: int = 64

    def __post_init__(self):
        if not (2 <= len(self.classes) <= 19):
            raise ConfigError(f"class count must be in [2, 19], got {len(self.classes)}")
        if self.size % 2:
            raise ConfigError(f"size must be even, got {self.size}")


@dataclass(frozen=True)
class DomainStyle:
    """Domain-shift axes rendered synthetically."""

    brightness_gain: float = 1.0
    gamma: float = 1.0
    noise_sigma: float = 0.0
    hue_rotation: float = 0.0
    texture_freq: float = 1.0

    def __post_init__(self):
        if not (0.5 <= self.brightness_gain <= 1.5):
            raise ConfigError(f"gain must be in [0.5, 1.5], got {self.brightness_gain}")
        if not (0.7 <= self.gamma <= 1.4):
            raise ConfigError(f"gamma must be in [0.7, 1.4], got {self.gamma}")
        if not (0.0 <= self.noise_sigma <= 0.1):
            raise ConfigError(f"noise sigma must be in [0, 0.1], got {self.noise_sigma}")


NEUTRAL_STYLE = DomainStyle()


@dataclass(frozen=True)
class DefectConfig:
    hole_rate: float = 0.0
    blob_rate: float = 0.0
    swap_rate: float = 0.0
    jitter_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("hole_rate", "blob_rate", "swap_rate", "jitter_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {v}")


@dataclass
class SegSample:
    """Image (3,H,W in [0,1]), class-id grid (H,W) and a domain tag."""

    image: np.ndarray
    label: np.ndarray
    domain: str = "source"


# ------------------------------------------------------------- textures

def _bilinear_resize(coarse: np.ndarray, h: int, w: int) -> np.ndarray:
    ch, cw = coarse.shape
    ys = np.linspace(0, ch - 1, h)
    xs = np.linspace(0, cw - 1, w)
    y0 = np.clip(np.floor(ys).astype(int), 0, ch - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, cw - 2)
    ty = (ys - y0)[:, None]
    tx = (xs - x0)[None, :]
    a = coarse[y0][:, x0]
    b = coarse[y0][:, x0 + 1]
    c = coarse[y0 + 1][:, x0]
    d = coarse[y0 + 1][:, x0 + 1]
    return (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d)


def _value_noise(rng, h: int, w: int, freq: float) -> np.ndarray:
    """Smooth random field in [-1, 1]; higher freq = finer structure."""
    k = max(2, int(round(6 * freq)))
    coarse = rng.uniform(-1.0, 1.0, size=(k, k))
    return _bilinear_resize(coarse, h, w)


_BUILDING_PALETTE = np.array(
    [(0.52, 0.42, 0.38), (0.58, 0.52, 0.48), (0.44, 0.40, 0.45)]
)
_CAR_PALETTE = np.array(
    [(0.38, 0.12, 0.12), (0.12, 0.16, 0.38), (0.16, 0.16, 0.18)]
)


def paint_texture(img: np.ndarray, mask: np.ndarray, class_id: int, rng, tex_freq: float = 1.0) -> None:
    """Fill `mask` pixels of a (3,H,W) image with `class_id`'s texture."""
    _, h, w = img.shape
    yy = np.arange(h)[:, None] * np.ones((1, w))
    xx = np.arange(w)[None, :] * np.ones((h, 1))
    if class_id == BACKGROUND:
        base = np.array([0.64, 0.74, 0.86])[:, None, None] * np.ones((3, h, w))
        base += 0.12 * (1.0 - yy / max(h - 1, 1))[None]
        phase = rng.uniform(0, 2 * np.pi)
        base += 0.02 * np.sin(2 * np.pi * tex_freq * xx / w * 3 + phase)[None]
    elif class_id == ROAD:
        noise = _value_noise(rng, h, w, tex_freq)
        base = np.array([0.34, 0.34, 0.37])[:, None, None] + 0.04 * noise[None]
        lane = (np.abs(yy - rng.uniform(0.7, 0.9) * h) < 1) & ((xx // 6) % 2 == 0)
        base = np.where(lane[None], 0.58, base)
    elif class_id == BUILDING:
        color = _BUILDING_PALETTE[rng.integers(len(_BUILDING_PALETTE))]
        base = color[:, None, None] * np.ones((3, h, w))
        wins = (np.sin(2 * np.pi * yy / rng.integers(5, 9)) > 0.2) & (
            np.sin(2 * np.pi * xx / rng.integers(4, 8)) > 0.2
        )
        base -= 0.16 * wins[None]
    elif class_id == CAR:
        color = _CAR_PALETTE[rng.integers(len(_CAR_PALETTE))]
        base = color[:, None, None] * np.ones((3, h, w))
        stripe = (yy % 5) < 1.5
        base += 0.14 * stripe[None]
    elif class_id == POLE:
        base = np.full((3, h, w), 0.13)
        base += 0.02 * np.sin(2 * np.pi * yy / 3)[None]
    elif class_id == VEGETATION:
        noise = _value_noise(rng, h, w, 2.0 * tex_freq)
        base = np.array([0.15, 0.42, 0.17])[:, None, None] + 0.10 * noise[None]
    else:
        raise ConfigError(f"no texture family for class id {class_id}")
    img[:, mask] = np.clip(base, 0.0, 1.0)[:, mask]


def hue_rotation_matrix(theta: float) -> np.ndarray:
    """Rotation of RGB space about the gray axis by `theta` radians."""
    c, s = np.cos(theta), np.sin(theta)
    cross = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]]) / np.sqrt(3)
    return c * np.eye(3) + (1.0 - c) / 3.0 + s * cross


def apply_style(image: np.ndarray, style: DomainStyle, noise_rng) -> np.ndarray:
    x = np.clip(image, 0.0, 1.0) ** style.gamma
    x = style.brightness_gain * x
    if style.hue_rotation != 0.0:
        x = np.einsum("ij,jhw->ihw", hue_rotation_matrix(style.hue_rotation), x)
    if style.noise_sigma > 0.0:
        x = x + noise_rng.normal(0.0, style.noise_sigma, size=x.shape)
    return np.clip(x, 0.0, 1.0)


# ------------------------------------------------------------ generation

def gen_scene(spec: SceneSpec, style: DomainStyle, index: int, domain: str = "source") -> SegSample:
    """Render one scene; fully deterministic given (spec.seed, index, style).

    Layout and texture use separate seeded streams, so the label grid
    depends only on (seed, index): styles shift appearance, not content.
    """
    n = spec.size
    layout = np.random.default_rng([spec.seed, index])
    tex = np.random.default_rng([spec.seed, index, 3])
    img = np.zeros((3, n, n))
    lab = np.full((n, n), BACKGROUND, dtype=np.int64)

    horizon = int(n * layout.uniform(0.40, 0.52))
    full = np.ones((n, n), dtype=bool)
    paint_texture(img, full, BACKGROUND, tex, style.texture_freq)

    road = np.zeros((n, n), dtype=bool)
    road[horizon:, :] = True
    paint_texture(img, road, ROAD, tex, style.texture_freq)
    lab[road] = ROAD

    # object dimensions scale with the scene size (defaults tuned at 64)
    for _ in range(layout.integers(1, 4)):  # buildings, always at least one
        bw = int(layout.integers(max(2, n // 8), max(3, n // 3) + 1))
        bh_cap = max(2, horizon - 4)
        bh = min(int(layout.integers(max(2, n // 6), max(3, n // 3) + 1)), bh_cap)
        x0 = int(layout.integers(0, n - bw))
        m = np.zeros((n, n), dtype=bool)
        m[horizon - bh : horizon, x0 : x0 + bw] = True
        paint_texture(img, m, BUILDING, tex, style.texture_freq)
        lab[m] = BUILDING

    yy = np.arange(n)[:, None]
    xx = np.arange(n)[None, :]
    for _ in range(layout.integers(0, 4)):  # vegetation blobs near the skyline
        cy = int(layout.integers(max(0, horizon - n // 5), horizon + max(1, n // 24) + 1))
        cx = int(layout.integers(0, n))
        r_lo, r_hi = max(2, n // 20), max(3, n // 9) + 1
        ry, rx = int(layout.integers(r_lo, r_hi)), int(layout.integers(r_lo, r_hi))
        m = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        paint_texture(img, m, VEGETATION, tex, style.texture_freq)
        lab[m] = VEGETATION

    for _ in range(layout.integers(0, 4)):  # cars on the road band
        cw_ = int(layout.integers(max(3, n // 9), max(4, n // 5) + 1))
        ch_ = int(layout.integers(max(2, n // 16), max(3, n // 10) + 1))
        y0 = int(layout.integers(horizon + 1, n - ch_))
        x0 = int(layout.integers(0, n - cw_))
        m = np.zeros((n, n), dtype=bool)
        m[y0 : y0 + ch_, x0 : x0 + cw_] = True
        paint_texture(img, m, CAR, tex, style.texture_freq)
        lab[m] = CAR

    for _ in range(layout.integers(0, 4)):  # poles in front of everything
        pw = int(layout.integers(1, max(1, n // 32) + 1))
        top = max(0, horizon - int(layout.integers(max(3, n // 5), max(4, int(0.4 * n)) + 1)))
        bottom = min(n, horizon + int(layout.integers(1, max(2, n // 10) + 1)))
        x0 = int(layout.integers(0, n - pw))
        m = np.zeros((n, n), dtype=bool)
        m[top:bottom, x0 : x0 + pw] = True
        paint_texture(img, m, POLE, tex, style.texture_freq)
        lab[m] = POLE

    noise_rng = np.random.default_rng([spec.seed, index, 7])
    img = apply_style(img, style, noise_rng)
    return SegSample(image=img, label=lab, domain=domain)


def gen_corpus(
    spec: SceneSpec,
    style: DomainStyle,
    n: int,
    start: int = 0,
    domain: str = "source",
    max_workers: int | None = None,
) -> tuple[list[SegSample], dict[str, str]]:
    """Generate `n` deterministic samples plus a manifest description.

    Per-sample generation is independent; parallelism is capped by the
    IELKIT_THREADS environment variable (default: sequential).
    """
    if n < 1:
        raise UsageError(f"corpus size must be >= 1, got {n}")
    indices = range(start, start + n)
    if max_workers is None:
        max_workers = int(os.environ.get("IELKIT_THREADS", "1") or "1")
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            samples = list(pool.map(lambda i: gen_scene(spec, style, i, domain), indices))
    else:
        samples = [gen_scene(spec, style, i, domain) for i in indices]
    manifest = {
        "seed": str(spec.seed),
        "n": str(n),
        "start": str(start),
        "size": str(spec.size),
        "classes": ",".join(spec.classes),
        "domain": domain,
        "style.gain": repr(style.brightness_gain),
        "style.gamma": repr(style.gamma),
        "style.noise": repr(style.noise_sigma),
        "style.hue": repr(style.hue_rotation),
        "style.texture": repr(style.texture_freq),
    }
    return samples, manifest


# ---------------------------------------------------------------- defects

_FOREGROUND = (BUILDING, CAR, POLE, VEGETATION)
_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def _instances(label: np.ndarray, class_id: int):
    comp, count = ndimage.label(label == class_id, structure=_FOUR_CONN)
    return [(comp == i) for i in range(1, count + 1)]


def _sub_rectangle(mask: np.ndarray, rng) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    hh, ww = y1 - y0, x1 - x0
    rh = max(1, int(round(hh * rng.uniform(0.3, 0.8))))
    rw = max(1, int(round(ww * rng.uniform(0.3, 0.8))))
    ry = y0 + int(rng.integers(0, hh - rh + 1))
    rx = x0 + int(rng.integers(0, ww - rw + 1))
    rect = np.zeros_like(mask)
    rect[ry : ry + rh, rx : rx + rw] = True
    return rect & mask


def inject_defects(sample: SegSample, cfg: DefectConfig, salt: int = 0) -> SegSample:
    """Corrupt the image (never the label) per object instance.

    hole: a sub-region rendered as background while the label still
    claims the object; swap: the instance rendered with another class's
    texture (the label/content contradiction typical of flawed generated
    imagery); blob: a spurious textured blob somewhere in the image;
    jitter: the instance's texture bleeds one pixel past its boundary.
    """
    if (cfg.hole_rate, cfg.blob_rate, cfg.swap_rate, cfg.jitter_rate) == (0, 0, 0, 0):
        return sample
    rng = np.random.default_rng([cfg.seed, salt])
    img = sample.image.copy()
    lab = sample.label
    n = lab.shape[0]
    for class_id in _FOREGROUND:
        for mask in _instances(lab, class_id):
            if rng.random() < cfg.hole_rate:
                paint_texture(img, _sub_rectangle(mask, rng), BACKGROUND, rng)
            if rng.random() < cfg.swap_rate:
                others = [c for c in (ROAD,) + _FOREGROUND if c != class_id]
                swap_to = others[rng.integers(len(others))]
                paint_texture(img, mask, swap_to, rng)
            if rng.random() < cfg.jitter_rate:
                ring = ndimage.binary_dilation(mask, structure=_FOUR_CONN) & ~mask
                paint_texture(img, ring, class_id, rng)
            if rng.random() < cfg.blob_rate:
                cy, cx = int(rng.integers(0, n)), int(rng.integers(0, n))
                r = int(rng.integers(2, 6))
                yy = np.arange(n)[:, None]
                xx = np.arange(n)[None, :]
                blob = (yy - cy) ** 2 + (xx - cx) ** 2 <= r**2
                blob_class = _FOREGROUND[rng.integers(len(_FOREGROUND))]
                paint_texture(img, blob, blob_class, rng)
    return SegSample(image=img, label=lab.copy(), domain=sample.domain)


# ---------------------------------------------------------------- prompts

PROMPT_TEMPLATE = "A photo of a city street scene with {categories} in {context}"


def build_prompt(categories, context: str = "") -> str:
    """Expand the fixed scene-description template.

    Categories are joined in the given order without deduplication; an
    empty context drops the trailing " in X" clause.
    """
    cats = list(categories)
    if not cats:
        raise UsageError("categories must be non-empty")
    joined = ", ".join(cats)
    if not context:
        return f"A photo of a city street scene with {joined}"
    return PROMPT_TEMPLATE.format(categories=joined, context=context)


def sample_prompt(spec: SceneSpec, sample: SegSample, context: str) -> str:
    """Prompt for one sample from the classes present in its label."""
    present = [spec.classes[c] for c in np.unique(sample.label)]
    return build_prompt(present, context)
