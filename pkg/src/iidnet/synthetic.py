"""Procedural Lambertian scenes with known reflectance/shading ground truth.

Each scene is a textured albedo field lit by a single directional light:
either a matte sphere over a ground plane or a tilted plane. The rendered
image is shading times albedo under a white illuminant, so the ground-truth
decomposition is exact by construction. Used for desk-scale training runs
and for exercising the benchmark harness without external datasets.
"""

from __future__ import annotations

import os

import numpy as np

from .fileio import write_pfm
from .image import GrayMap, LinearImage

AMBIENT = 0.2


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _albedo(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth random color field plus a few flat elliptical patches."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    albedo = np.zeros((size, size, 3))
    for ch in range(3):
        field = np.zeros((size, size))
        for _ in range(3):
            fy, fx = rng.uniform(0.5, 3.0, size=2)
            phase = rng.uniform(0, 2 * np.pi, size=2)
            field += rng.uniform(0.3, 1.0) * np.cos(2 * np.pi * (fy * yy + phase[0])) \
                * np.cos(2 * np.pi * (fx * xx + phase[1]))
        lo, hi = field.min(), field.max()
        albedo[:, :, ch] = 0.15 + 0.6 * (field - lo) / max(hi - lo, 1e-9)
    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0.1, 0.9, size=2) * size
        ry, rx = rng.uniform(0.06, 0.22, size=2) * size
        color = rng.uniform(0.1, 0.9, size=3)
        mask = ((yy * size - cy) / ry) ** 2 + ((xx * size - cx) / rx) ** 2 <= 1.0
        albedo[mask] = color
    return albedo


def _sphere_shading(rng: np.random.Generator, size: int) -> np.ndarray:
    center = rng.uniform(0.35, 0.65, size=2) * size
    radius = rng.uniform(0.25, 0.4) * size
    light = _unit(np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 1.5)]))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = (yy - center[0]) / radius, (xx - center[1]) / radius
    r2 = dy * dy + dx * dx
    inside = r2 <= 1.0
    nz = np.sqrt(np.clip(1.0 - r2, 0.0, 1.0))
    ndotl = dx * light[0] + dy * light[1] + nz * light[2]
    shading = np.full((size, size), AMBIENT + (1.0 - AMBIENT) * max(float(light[2]), 0.0) * 0.55)
    shading[inside] = AMBIENT + (1.0 - AMBIENT) * np.clip(ndotl[inside], 0.0, None)
    return shading


def _plane_shading(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    direction = rng.uniform(0, 2 * np.pi)
    slope = rng.uniform(0.3, 0.8)
    ramp = (yy - 0.5) * np.cos(direction) + (xx - 0.5) * np.sin(direction)
    return AMBIENT + (1.0 - AMBIENT) * np.clip(0.5 + slope * ramp, 0.0, 1.0)


def make_scene(rng: np.random.Generator, size: int = 128) -> tuple[LinearImage, LinearImage, GrayMap]:
    """Render one scene; returns (image, reflectance, gray shading)."""
    albedo = _albedo(rng, size)
    shading = _sphere_shading(rng, size) if rng.random() < 0.7 else _plane_shading(rng, size)
    image = shading[:, :, None] * albedo
    return LinearImage(image), LinearImage(albedo), GrayMap(shading)


def generate_dataset(outdir: str, count: int, size: int = 128, seed: int = 0) -> list[str]:
    """Write `count` rendered images (originals only) as PFM files."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        image, _, _ = make_scene(rng, size)
        path = os.path.join(outdir, f"scene_{i:03d}.pfm")
        write_pfm(path, image)
        paths.append(path)
    return paths


def generate_benchmark(outdir: str, count: int, size: int = 128, seed: int = 1000) -> list[str]:
    """Write (original, reflectance, shading) PFM triples for the benchmark
    harness; returns the scene names."""
    os.makedirs(outdir, exist_ok=True)
    names = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        image, reflectance, shading = make_scene(rng, size)
        name = f"scene_{i:03d}"
        write_pfm(os.path.join(outdir, f"{name}_original.pfm"), image)
        write_pfm(os.path.join(outdir, f"{name}_reflectance.pfm"), reflectance)
        write_pfm(os.path.join(outdir, f"{name}_shading.pfm"), shading)
        names.append(name)
    return names
