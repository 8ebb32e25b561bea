"""Scene generation: determinism, label/image consistency, defects and
the prompt template."""

import hashlib

import numpy as np
import pytest

from ielkit.errors import ConfigError, UsageError
from ielkit.imageio import (
    format_manifest,
    parse_manifest,
    read_corpus,
    read_pgm,
    read_ppm,
    write_corpus,
    write_pgm,
    write_ppm,
)
from ielkit.scenes import (
    CAR,
    CLASS_LUMINANCE_BANDS,
    DEFAULT_CLASSES,
    NEUTRAL_STYLE,
    DefectConfig,
    DomainStyle,
    SceneSpec,
    SegSample,
    build_prompt,
    gen_corpus,
    gen_scene,
    inject_defects,
    sample_prompt,
)

SPEC = SceneSpec(seed=11, size=64)


def checksum(sample):
    h = hashlib.sha256()
    h.update(sample.image.tobytes())
    h.update(sample.label.tobytes())
    return h.hexdigest()


class TestGenScene:
    def test_deterministic(self):
        style = DomainStyle(brightness_gain=0.9, noise_sigma=0.02)
        a = gen_scene(SPEC, style, 3)
        b = gen_scene(SPEC, style, 3)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.label, b.label)

    def test_labels_in_range_and_shapes(self):
        s = gen_scene(SPEC, NEUTRAL_STYLE, 0)
        assert s.image.shape == (3, 64, 64)
        assert s.label.shape == (64, 64)
        assert s.label.min() >= 0 and s.label.max() < len(DEFAULT_CLASSES)
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0

    def test_class_frequencies_over_corpus(self):
        # measured once over the fixed seed-11 corpus and pinned
        counts = np.zeros(len(DEFAULT_CLASSES))
        n = 200
        for i in range(n):
            present = np.unique(gen_scene(SPEC, NEUTRAL_STYLE, i).label)
            counts[present] += 1
        freq = counts / n
        assert freq[0] == 1.0 and freq[1] == 1.0  # background, road always
        assert (freq >= 0.6).all(), freq

    def test_style_does_not_change_labels(self):
        shifted = DomainStyle(
            brightness_gain=1.3, gamma=0.8, noise_sigma=0.05, hue_rotation=0.4, texture_freq=1.5
        )
        a = gen_scene(SPEC, NEUTRAL_STYLE, 5)
        b = gen_scene(SPEC, shifted, 5)
        assert np.array_equal(a.label, b.label)
        assert not np.array_equal(a.image, b.image)

    def test_class_textures_within_luminance_bands(self):
        # label/image consistency on clean samples: each labeled region's
        # pixels come from that class's texture family
        for i in range(12):
            s = gen_scene(SPEC, NEUTRAL_STYLE, i)
            gray = s.image.mean(axis=0)
            for cid, (lo, hi) in CLASS_LUMINANCE_BANDS.items():
                mask = s.label == cid
                if mask.sum() < 20:
                    continue
                mean = gray[mask].mean()
                assert lo <= mean <= hi, (i, cid, mean)

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            SceneSpec(classes=("only",))
        with pytest.raises(ConfigError):
            SceneSpec(size=63)
        with pytest.raises(ConfigError):
            DomainStyle(brightness_gain=2.0)


class TestDefects:
    def _sample_with_car(self):
        for i in range(50):
            s = gen_scene(SPEC, NEUTRAL_STYLE, i)
            if (s.label == CAR).sum() >= 20:
                return s
        raise AssertionError("no car found in 50 samples")

    def test_zero_rates_unchanged(self):
        s = gen_scene(SPEC, NEUTRAL_STYLE, 1)
        out = inject_defects(s, DefectConfig())
        assert np.array_equal(out.image, s.image)
        assert np.array_equal(out.label, s.label)

    def test_hole_erases_car_texture_but_not_label(self):
        s = self._sample_with_car()
        cfg = DefectConfig(hole_rate=1.0, seed=5)
        out = inject_defects(s, cfg)
        assert np.array_equal(out.label, s.label)
        car_mask = s.label == CAR
        lo, hi = CLASS_LUMINANCE_BANDS[CAR]
        before = np.sum((s.image.mean(axis=0) >= lo) & (s.image.mean(axis=0) <= hi) & car_mask)
        after_gray = out.image.mean(axis=0)
        after = np.sum((after_gray >= lo) & (after_gray <= hi) & car_mask)
        assert after < before

    def test_deterministic(self):
        s = gen_scene(SPEC, NEUTRAL_STYLE, 2)
        cfg = DefectConfig(hole_rate=0.5, blob_rate=0.5, swap_rate=0.5, jitter_rate=0.5, seed=9)
        a = inject_defects(s, cfg)
        b = inject_defects(s, cfg)
        assert np.array_equal(a.image, b.image)

    def test_swap_changes_image_only(self):
        s = self._sample_with_car()
        out = inject_defects(s, DefectConfig(swap_rate=1.0, seed=3))
        assert np.array_equal(out.label, s.label)
        assert not np.array_equal(out.image, s.image)

    def test_shapes_never_change(self):
        s = gen_scene(SPEC, NEUTRAL_STYLE, 4)
        cfg = DefectConfig(hole_rate=1, blob_rate=1, swap_rate=1, jitter_rate=1, seed=1)
        out = inject_defects(s, cfg)
        assert out.image.shape == s.image.shape
        assert out.label.shape == s.label.shape

    def test_rate_validation(self):
        with pytest.raises(ConfigError):
            DefectConfig(hole_rate=1.5)


class TestPrompts:
    def test_template(self):
        got = build_prompt(["car", "road"], "foggy night")
        assert got == "A photo of a city street scene with car, road in foggy night"

    def test_empty_context_omits_clause(self):
        assert build_prompt(["pole"], "") == "A photo of a city street scene with pole"

    def test_duplicates_preserved(self):
        got = build_prompt(["car", "car", "pole"], "rain")
        assert got == "A photo of a city street scene with car, car, pole in rain"

    def test_empty_categories_rejected(self):
        with pytest.raises(UsageError):
            build_prompt([], "day")

    def test_sample_prompt_uses_present_classes(self):
        s = gen_scene(SPEC, NEUTRAL_STYLE, 0)
        prompt = sample_prompt(SPEC, s, "dusk")
        assert prompt.startswith("A photo of a city street scene with background, road")
        assert prompt.endswith("in dusk")


class TestCorpus:
    def test_count_and_manifest(self):
        samples, manifest = gen_corpus(SPEC, NEUTRAL_STYLE, 5)
        assert len(samples) == 5
        assert manifest["n"] == "5"
        assert manifest["classes"].split(",") == list(DEFAULT_CLASSES)

    def test_reproducible_checksums(self):
        a, _ = gen_corpus(SPEC, NEUTRAL_STYLE, 4)
        b, _ = gen_corpus(SPEC, NEUTRAL_STYLE, 4)
        assert [checksum(s) for s in a] == [checksum(s) for s in b]

    def test_disjoint_ranges_no_duplicates(self):
        a, _ = gen_corpus(SPEC, NEUTRAL_STYLE, 6, start=0)
        b, _ = gen_corpus(SPEC, NEUTRAL_STYLE, 6, start=6)
        sums = {checksum(s) for s in a} | {checksum(s) for s in b}
        assert len(sums) == 12

    def test_zero_rejected(self):
        with pytest.raises(UsageError):
            gen_corpus(SPEC, NEUTRAL_STYLE, 0)

    def test_thread_pool_matches_sequential(self):
        seq, _ = gen_corpus(SPEC, NEUTRAL_STYLE, 6, max_workers=1)
        par, _ = gen_corpus(SPEC, NEUTRAL_STYLE, 6, max_workers=4)
        assert [checksum(s) for s in seq] == [checksum(s) for s in par]


class TestImageIO:
    def test_ppm_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.uniform(size=(3, 16, 16))
        path = tmp_path / "x.ppm"
        write_ppm(path, img)
        back = read_ppm(path)
        assert back.shape == img.shape
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-9  # 8-bit quantization

    def test_pgm_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        lab = rng.integers(0, 6, size=(12, 10))
        path = tmp_path / "x.pgm"
        write_pgm(path, lab)
        assert np.array_equal(read_pgm(path), lab)

    def test_corpus_round_trip(self, tmp_path):
        samples, manifest = gen_corpus(SPEC, NEUTRAL_STYLE, 3)
        write_corpus(tmp_path / "corpus", samples, manifest)
        back, mf = read_corpus(tmp_path / "corpus")
        assert len(back) == 3
        assert mf["seed"] == manifest["seed"]
        for orig, loaded in zip(samples, back):
            assert np.array_equal(loaded.label, orig.label)
            assert np.abs(loaded.image - orig.image).max() <= 0.5 / 255 + 1e-9

    def test_corpus_bytes_reproducible(self, tmp_path):
        samples, manifest = gen_corpus(SPEC, NEUTRAL_STYLE, 2)
        write_corpus(tmp_path / "a", samples, manifest)
        samples2, manifest2 = gen_corpus(SPEC, NEUTRAL_STYLE, 2)
        write_corpus(tmp_path / "b", samples2, manifest2)
        for name in ("img_00000.ppm", "lab_00001.pgm", "manifest.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_round_trip(self):
        entries = {"seed": "3", "classes": "a,b,c"}
        assert parse_manifest(format_manifest(entries)) == entries
