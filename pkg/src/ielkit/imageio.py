"""Binary PPM/PGM image files, corpus directories and manifests."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ielkit.errors import DataError
from ielkit.scenes import SceneSpec, SegSample


def write_ppm(path, image: np.ndarray) -> None:
    """(3,H,W) floats in [0,1] -> binary P6, 8 bit."""
    _, h, w = image.shape
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.transpose(1, 2, 0).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, dims, maxval, body = _split_header(blob, b"P6", path)
    w, h = dims
    pixels = np.frombuffer(body, dtype=np.uint8, count=3 * h * w)
    return pixels.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float64) / maxval


def write_pgm(path, grid: np.ndarray) -> None:
    """(H,W) integer grid (e.g. class ids) -> binary P5, 8 bit."""
    h, w = grid.shape
    if grid.min(initial=0) < 0 or grid.max(initial=0) > 255:
        raise DataError("pgm values must fit in 8 bits")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(grid.astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    _, dims, _, body = _split_header(blob, b"P5", path)
    w, h = dims
    return np.frombuffer(body, dtype=np.uint8, count=h * w).reshape(h, w).astype(np.int64)


def write_pgm_normalized(path, plane: np.ndarray) -> None:
    """Min-max normalize a float plane to 0..255 and write as P5."""
    lo, hi = float(plane.min()), float(plane.max())
    scaled = np.zeros_like(plane) if hi == lo else (plane - lo) / (hi - lo)
    write_pgm(path, np.rint(scaled * 255.0).astype(np.int64))


def _split_header(blob: bytes, magic: bytes, path):
    tokens = []
    i = 0
    while len(tokens) < 4:
        # skip whitespace and comment lines
        while i < len(blob) and blob[i : i + 1].isspace():
            i += 1
        if blob[i : i + 1] == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
            continue
        start = i
        while i < len(blob) and not blob[i : i + 1].isspace():
            i += 1
        tokens.append(blob[start:i])
    i += 1  # single whitespace after maxval
    if tokens[0] != magic:
        raise DataError(f"{path}: expected {magic.decode()} file, got {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    return tokens[0], (w, h), maxval, blob[i:]


def format_manifest(entries: dict[str, str]) -> str:
    return "".join(f"{k}={v}\n" for k, v in entries.items())


def parse_manifest(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def write_corpus(directory, samples: list[SegSample], manifest: dict[str, str]) -> None:
    d = Path(directory)
    os.makedirs(d, exist_ok=True)
    for i, s in enumerate(samples):
        write_ppm(d / f"img_{i:05d}.ppm", s.image)
        write_pgm(d / f"lab_{i:05d}.pgm", s.label)
    (d / "manifest.txt").write_text(format_manifest(manifest), encoding="utf-8")


def read_corpus(directory) -> tuple[list[SegSample], dict[str, str]]:
    d = Path(directory)
    manifest_path = d / "manifest.txt"
    if not manifest_path.exists():
        raise DataError(f"{d}: no manifest.txt; not a corpus directory")
    manifest = parse_manifest(manifest_path.read_text(encoding="utf-8"))
    domain = manifest.get("domain", "source")
    samples = []
    for img_path in sorted(d.glob("img_*.ppm")):
        lab_path = d / img_path.name.replace("img_", "lab_").replace(".ppm", ".pgm")
        if not lab_path.exists():
            raise DataError(f"{lab_path}: missing label for {img_path.name}")
        samples.append(
            SegSample(image=read_ppm(img_path), label=read_pgm(lab_path), domain=domain)
        )
    if not samples:
        raise DataError(f"{d}: corpus directory contains no samples")
    return samples, manifest


def spec_from_manifest(manifest: dict[str, str]) -> SceneSpec:
    return SceneSpec(
        seed=int(manifest["seed"]),
        classes=tuple(manifest["classes"].split(",")),
        size=int(manifest["size"]),
    )


def write_prompts(path, prompts: list[str]) -> None:
    Path(path).write_text("".join(p + "\n" for p in prompts), encoding="utf-8")
