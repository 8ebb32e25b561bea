"""Benchmark construction and the depth / component ablation runners.

The default benchmark mirrors the training condition the toolkit
studies: a clean source corpus, a style-shifted *and* defect-injected
generated corpus (holes, class swaps, spurious blobs, boundary jitter),
and a test corpus whose style lies outside the source domain.  Seeds
passed to the runners vary model init and batch order while the corpora
stay fixed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from ielkit import models
from ielkit.grids import ParamStore
from ielkit.inverse_evolution import IELConfig
from ielkit.metrics import (
    boundary_f1,
    confusion_matrix,
    embed_gray_pool,
    miou_from_confusion,
    mmd,
    spectral_energy_split,
)
from ielkit.scenes import (
    DefectConfig,
    DomainStyle,
    SceneSpec,
    SegSample,
    gen_corpus,
    inject_defects,
)
from ielkit.training import (
    TrainSchedule,
    reconstruction_noise,
    train_gen,
    train_seg,
)

SOURCE_STYLE = DomainStyle(brightness_gain=1.0, gamma=1.0, noise_sigma=0.01)
GENERATED_STYLE = DomainStyle(
    brightness_gain=0.85, gamma=1.15, noise_sigma=0.03, hue_rotation=0.35, texture_freq=1.4
)
TEST_STYLE = DomainStyle(
    brightness_gain=1.2, gamma=0.8, noise_sigma=0.02, hue_rotation=-0.3, texture_freq=1.6
)
DEFAULT_DEFECTS = DefectConfig(
    hole_rate=0.5, blob_rate=0.3, swap_rate=0.5, jitter_rate=0.3, seed=123
)


@dataclass
class BenchmarkConfig:
    scene: SceneSpec = field(default_factory=SceneSpec)
    n_source: int = 40
    n_generated: int = 40
    n_test: int = 16
    n_gen_eval: int = 8
    style_source: DomainStyle = field(default_factory=lambda: SOURCE_STYLE)
    style_generated: DomainStyle = field(default_factory=lambda: GENERATED_STYLE)
    style_test: DomainStyle = field(default_factory=lambda: TEST_STYLE)
    defects: DefectConfig = field(default_factory=lambda: DEFAULT_DEFECTS)
    epochs: int = 6
    batch_size: int = 4
    learning_rate: float = 0.05
    tau: float = 0.1
    boundary: str = "replicate"
    stage_channels: tuple[int, ...] = (8, 16, 32)
    gen_hidden: tuple[int, int] = (12, 20)
    gen_epochs: int = 6
    gen_learning_rate: float = 0.3


@dataclass
class Benchmark:
    source: list[SegSample]
    generated: list[SegSample]
    test: list[SegSample]
    gen_eval: list[SegSample]
    n_classes: int


def build_benchmark(cfg: BenchmarkConfig) -> Benchmark:
    """Source (clean), generated (shifted style + injected defects), test
    (shifted style, clean labels) and a held-out reconstruction set."""
    base = cfg.scene
    source, _ = gen_corpus(base, cfg.style_source, cfg.n_source, domain="source")
    gen_spec = replace(base, seed=base.seed + 1000)
    generated_clean, _ = gen_corpus(
        gen_spec, cfg.style_generated, cfg.n_generated, domain="generated"
    )
    generated = [
        inject_defects(s, cfg.defects, salt=i) for i, s in enumerate(generated_clean)
    ]
    test_spec = replace(base, seed=base.seed + 2000)
    test, _ = gen_corpus(test_spec, cfg.style_test, cfg.n_test, domain="test")
    gen_eval, _ = gen_corpus(
        base, cfg.style_source, cfg.n_gen_eval, start=cfg.n_source, domain="source"
    )
    return Benchmark(
        source=source,
        generated=generated,
        test=test,
        gen_eval=gen_eval,
        n_classes=len(base.classes),
    )


def evaluate_segmenter(model: models.ToySegmenter, samples) -> dict:
    cm = None
    bf1 = []
    for s in samples:
        pred = models.predict(model, s.image)
        c = confusion_matrix(pred, s.label, model.n_classes)
        cm = c if cm is None else cm + c
        bf1.append(boundary_f1(pred, s.label, 1))
    per_class, mean_iou = miou_from_confusion(cm)
    return {
        "miou": mean_iou,
        "boundary_f1": float(np.mean(bf1)),
        "per_class_iou": per_class,
        "confusion": cm,
    }


def train_and_eval_seg(
    bench: Benchmark,
    cfg: BenchmarkConfig,
    seed: int,
    depth: int,
    mff_enabled: bool = True,
    mixing: str = "alternate",
) -> dict:
    schedule = TrainSchedule(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        seed=seed,
        iel=IELConfig(depth=depth, tau=cfg.tau, boundary=cfg.boundary),
        mff_enabled=mff_enabled,
        mixing=mixing,
    )
    model = models.ToySegmenter(
        n_classes=bench.n_classes,
        stage_channels=cfg.stage_channels,
        mff_enabled=mff_enabled,
    ).init(seed)
    result = train_seg(model, bench.source, bench.generated, schedule, val_set=bench.test)
    metrics = evaluate_segmenter(model, bench.test)
    metrics["history"] = result.history
    metrics["model"] = model
    return metrics


def gen_residual_metrics(gen: models.ToyGenerator, samples, noise_seed: int = 0) -> dict:
    """High-frequency residual energy and set discrepancy of reconstructions."""
    high_energies = []
    recon_vecs, target_vecs = [], []
    for i, s in enumerate(samples):
        noise = reconstruction_noise(noise_seed + i, s.label.shape)
        recon = models.generate(gen, s.label, noise)
        _, high = spectral_energy_split(recon - s.image, 0.5)
        high_energies.append(high)
        recon_vecs.append(embed_gray_pool(recon))
        target_vecs.append(embed_gray_pool(s.image))
    return {
        "hf_residual": float(np.mean(high_energies)),
        "mmd": mmd(np.array(recon_vecs), np.array(target_vecs)),
    }


def train_and_eval_gen(bench: Benchmark, cfg: BenchmarkConfig, seed: int, depth: int) -> dict:
    schedule = TrainSchedule(
        epochs=cfg.gen_epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.gen_learning_rate,
        seed=seed,
        iel=IELConfig(depth=depth, tau=cfg.tau, boundary=cfg.boundary),
    )
    gen = models.ToyGenerator(n_classes=bench.n_classes, hidden=cfg.gen_hidden).init(seed)
    result = train_gen(gen, bench.source, schedule)
    metrics = gen_residual_metrics(gen, bench.gen_eval)
    metrics["history"] = result.history
    metrics["model"] = gen
    return metrics


def run_depth_ablation(
    cfg: BenchmarkConfig,
    depths: list[int],
    seeds: list[int],
    bench: Benchmark | None = None,
) -> list[dict]:
    """One row per (depth, seed): segmenter test quality and generator
    residual metrics at that stack depth."""
    bench = bench if bench is not None else build_benchmark(cfg)
    rows = []
    for depth in depths:
        for seed in seeds:
            seg = train_and_eval_seg(bench, cfg, seed=seed, depth=depth)
            gen = train_and_eval_gen(bench, cfg, seed=seed, depth=depth)
            rows.append(
                {
                    "depth": depth,
                    "seed": seed,
                    "miou": f"{seg['miou']:.10g}",
                    "boundary_f1": f"{seg['boundary_f1']:.10g}",
                    "gen_hf_residual": f"{gen['hf_residual']:.10g}",
                    "gen_mmd": f"{gen['mmd']:.10g}",
                }
            )
    return rows


COMPONENT_GRID = (
    ("baseline", False, 0),
    ("mff", True, 0),
    ("iel", False, 5),
    ("mff+iel", True, 5),
)


def run_component_ablation(
    cfg: BenchmarkConfig,
    seeds: list[int],
    bench: Benchmark | None = None,
    iel_depth: int = 5,
) -> list[dict]:
    """mIoU of {baseline, +fusion, +stacks, both} on the default benchmark."""
    bench = bench if bench is not None else build_benchmark(cfg)
    rows = []
    for name, mff_on, depth in COMPONENT_GRID:
        depth = iel_depth if depth else 0
        for seed in seeds:
            seg = train_and_eval_seg(bench, cfg, seed=seed, depth=depth, mff_enabled=mff_on)
            rows.append(
                {
                    "config": name,
                    "mff": int(mff_on),
                    "iel_depth": depth,
                    "seed": seed,
                    "miou": f"{seg['miou']:.10g}",
                    "boundary_f1": f"{seg['boundary_f1']:.10g}",
                }
            )
    return rows


def write_rows_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def save_checkpoint(store: ParamStore, path) -> None:
    store.save(path)
