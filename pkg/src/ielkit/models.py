"""Toy encoder/decoder networks wired for inverse-evolution training.

The segmenter is a three-scale conv encoder/decoder.  Each decoder stage
fuses the deeper feature with a projected skip through the frequency
fusion module (or passes the upsampled feature through when fusion is
disabled), applies a 3x3 conv + tanh, and, on the training path
only, an inverse-evolution stack.  The inference path never constructs
an IEL node, which `graph_ops` can prove structurally.

The generator maps (one-hot label planes + a noise channel) through a
small conv bottleneck to a sigmoid-squashed 3-channel image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ielkit import autodiff as ad
from ielkit import freq_fusion
from ielkit.errors import ShapeError
from ielkit.grids import ParamStore
from ielkit.inverse_evolution import IELConfig, iel

CONV_PAD = "replicate"


def _conv_init(rng, cout: int, cin: int, k: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(1.0 / (cin * k * k)), size=(cout, cin, k, k))


@dataclass
class ToySegmenter:
    """Three-scale segmenter; all state lives in the ParamStore."""

    n_classes: int
    stage_channels: tuple[int, ...] = (8, 16, 32)
    mff_enabled: bool = True
    iel_on_logits: bool = False
    params: ParamStore = field(default_factory=ParamStore)

    @property
    def n_stages(self) -> int:
        return len(self.stage_channels)

    @property
    def divisor(self) -> int:
        return 2**self.n_stages

    def init(self, seed: int = 0) -> "ToySegmenter":
        rng = np.random.default_rng([seed, 101])
        p = self.params
        chans = self.stage_channels
        prev = 3
        for i, c in enumerate(chans):
            p.add(f"enc{i}.w", _conv_init(rng, c, prev, 3))
            p.add(f"enc{i}.b", np.zeros(c))
            prev = c
        # decoder junction s fuses the deeper feature (deep_c channels)
        # with a skip projected to the same width, then maps to out_c
        skips = [3] + list(chans[:-1])  # skip sources: image, enc0, enc1, ...
        for s in reversed(range(self.n_stages)):
            deep_c = chans[s]
            out_c = chans[s - 1] if s > 0 else chans[0]
            p.add(f"skip{s}.w", _conv_init(rng, deep_c, skips[s], 1))
            p.add(f"skip{s}.b", np.zeros(deep_c))
            p.add(f"mff{s}.alpha_raw", np.zeros(()))
            p.add(f"mff{s}.beta_raw", np.zeros(()))
            p.add(f"mff{s}.conv_weights", np.zeros((deep_c, deep_c)))
            p.add(f"mff{s}.conv_bias", np.zeros(deep_c))
            p.add(f"dec{s}.w", _conv_init(rng, out_c, deep_c, 3))
            p.add(f"dec{s}.b", np.zeros(out_c))
        p.add("head.w", rng.normal(0.0, 0.1, size=(self.n_classes, chans[0])))
        p.add("head.b", np.zeros(self.n_classes))
        return self


def _check_image(model: ToySegmenter, image: np.ndarray) -> np.ndarray:
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ShapeError(f"image must be (3, H, W), got {x.shape}")
    d = model.divisor
    if x.shape[1] % d or x.shape[2] % d:
        raise ShapeError(f"image sides must be divisible by {d}, got {x.shape[1:]}")
    return x


def trace_segmenter(
    model: ToySegmenter,
    image,
    train: bool,
    iel_cfg: IELConfig | None = None,
) -> tuple[ad.Var, dict]:
    """Build the forward graph; returns (logits node, info).

    info carries the parameter leaves (for gradient harvesting), the
    per-junction fusion residues and the junction intermediates used by
    the visualization dump.
    """
    x = _check_image(model, image)
    leaves = ad.bind_params(model.params)
    img = ad.Var(x)

    feats = []
    h = img
    for i in range(model.n_stages):
        h = ad.tanh(ad.conv2d(h, leaves[f"enc{i}.w"], leaves[f"enc{i}.b"], CONV_PAD))
        h = ad.avgpool2(h)
        feats.append(h)

    skip_sources = [img] + feats[:-1]
    residues: list[float] = []
    junctions: list[dict] = []
    deep = feats[-1]
    apply_iel = train and iel_cfg is not None and iel_cfg.depth > 0
    for s in reversed(range(model.n_stages)):
        up = ad.upsample2x(deep)
        if model.mff_enabled:
            skip = ad.conv2d(
                skip_sources[s], leaves[f"skip{s}.w"], leaves[f"skip{s}.b"], CONV_PAD
            )
            fused, residue = freq_fusion.fuse(
                deep,
                skip,
                leaves[f"mff{s}.alpha_raw"],
                leaves[f"mff{s}.beta_raw"],
                leaves[f"mff{s}.conv_weights"],
                leaves[f"mff{s}.conv_bias"],
            )
            residues.append(residue)
        else:
            skip = None
            fused = up
        junctions.append(
            {"scale": s, "low_up": up, "skip": skip, "fused": fused}
        )
        deep = ad.tanh(ad.conv2d(fused, leaves[f"dec{s}.w"], leaves[f"dec{s}.b"], CONV_PAD))
        if apply_iel:
            deep = iel(deep, iel_cfg)

    logits = ad.conv1x1(deep, leaves["head.w"], leaves["head.b"])
    if apply_iel and model.iel_on_logits:
        logits = iel(logits, iel_cfg)
    info = {"leaves": leaves, "residues": residues, "junctions": junctions}
    return logits, info


def forward_train(model: ToySegmenter, image, iel_cfg: IELConfig) -> np.ndarray:
    """Training-path logits: IEL stacks active at every decoder scale."""
    logits, _ = trace_segmenter(model, image, train=True, iel_cfg=iel_cfg)
    return logits.value


def forward_infer(model: ToySegmenter, image) -> np.ndarray:
    """Inference-path logits: same architecture, no IEL nodes anywhere."""
    logits, _ = trace_segmenter(model, image, train=False)
    return logits.value


def predict(model: ToySegmenter, image) -> np.ndarray:
    return np.argmax(forward_infer(model, image), axis=0)


@dataclass
class ToyGenerator:
    """Label-conditioned image generator with one pool/upsample bottleneck."""

    n_classes: int
    hidden: tuple[int, int] = (16, 32)
    params: ParamStore = field(default_factory=ParamStore)

    def init(self, seed: int = 0) -> "ToyGenerator":
        rng = np.random.default_rng([seed, 202])
        p = self.params
        c1, c2 = self.hidden
        cin = self.n_classes + 1  # one-hot planes + noise channel
        p.add("g0.w", _conv_init(rng, c1, cin, 3))
        p.add("g0.b", np.zeros(c1))
        p.add("g1.w", _conv_init(rng, c2, c1, 3))
        p.add("g1.b", np.zeros(c2))
        p.add("g2.w", _conv_init(rng, c1, c2, 3))
        p.add("g2.b", np.zeros(c1))
        p.add("out.w", rng.normal(0.0, 0.1, size=(3, c1)))
        p.add("out.b", np.zeros(3))
        return self


def generator_input(n_classes: int, label: np.ndarray, noise: np.ndarray) -> np.ndarray:
    onehot = np.zeros((n_classes,) + label.shape)
    h, w = label.shape
    onehot[label, np.arange(h)[:, None], np.arange(w)[None, :]] = 1.0
    return np.concatenate([onehot, noise[None] if noise.ndim == 2 else noise], axis=0)


def trace_generator(gen: ToyGenerator, label: np.ndarray, noise: np.ndarray) -> tuple[ad.Var, dict]:
    leaves = ad.bind_params(gen.params)
    x = ad.Var(generator_input(gen.n_classes, label, noise))
    h = ad.tanh(ad.conv2d(x, leaves["g0.w"], leaves["g0.b"], CONV_PAD))
    h = ad.avgpool2(h)
    h = ad.tanh(ad.conv2d(h, leaves["g1.w"], leaves["g1.b"], CONV_PAD))
    h = ad.upsample2x(h)
    h = ad.tanh(ad.conv2d(h, leaves["g2.w"], leaves["g2.b"], CONV_PAD))
    out = ad.sigmoid(ad.conv1x1(h, leaves["out.w"], leaves["out.b"]))
    return out, {"leaves": leaves}


def generate(gen: ToyGenerator, label: np.ndarray, noise: np.ndarray) -> np.ndarray:
    out, _ = trace_generator(gen, label, noise)
    return out.value
