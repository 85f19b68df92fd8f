"""Shared synthetic data builders for the test suite."""

import numpy as np
import pytest

from lpmm.landmarks import LandmarkDataset, LandmarkRecord, LandmarkSet


def stylized_face(scale: float = 1.0, center=(0.5, 0.5)) -> np.ndarray:
    """A deterministic 68-point face in canonical coordinates.

    Follows the standard ordering: jaw 0-16, brows 17-26, nose 27-35,
    eyes 36-47 (36/45 are the outer corners), mouth 48-67. Inter-ocular
    distance is 0.4 * scale.
    """
    cx, cy = center
    pts = []
    # jaw: arc through the chin
    for t in np.linspace(np.pi, 2 * np.pi, 17):
        pts.append((0.5 + 0.30 * np.cos(t), 0.45 - 0.32 * np.sin(t)))
    # brows
    for x in np.linspace(0.28, 0.44, 5):
        pts.append((x, 0.33 - 0.25 * (x - 0.36) ** 2))
    for x in np.linspace(0.56, 0.72, 5):
        pts.append((x, 0.33 - 0.25 * (x - 0.64) ** 2))
    # nose bridge + nostril row
    for y in np.linspace(0.38, 0.50, 4):
        pts.append((0.5, y))
    for x in np.linspace(0.44, 0.56, 5):
        pts.append((x, 0.545))
    # eyes: hexagons, outer corners at x=0.30 and x=0.70
    for ex, sign in ((0.36, 1.0), (0.64, -1.0)):
        hexagon = [
            (-0.06, 0.0), (-0.03, -0.02), (0.03, -0.02),
            (0.06, 0.0), (0.03, 0.02), (-0.03, 0.02),
        ]
        if sign < 0:  # mirror so index order starts at the inner corner side
            hexagon = [(-dx, dy) for dx, dy in hexagon]
            hexagon = hexagon[3:] + hexagon[:3]
        for dx, dy in hexagon:
            pts.append((ex + dx, 0.40 + dy))
    # mouth: outer 12, inner 8
    for t in np.linspace(0, 2 * np.pi, 12, endpoint=False):
        pts.append((0.5 + 0.10 * np.cos(t), 0.64 + 0.045 * np.sin(t)))
    for t in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        pts.append((0.5 + 0.06 * np.cos(t), 0.64 + 0.018 * np.sin(t)))
    arr = np.asarray(pts, dtype=np.float64)
    assert arr.shape == (68, 2)
    return (arr - [0.5, 0.5]) * scale + [cx, cy]


def synthetic_dataset(n_samples: int, variances, seed: int = 0, n: int = 68,
                      noise: float = 0.0, return_directions: bool = False):
    """Low-rank landmark dataset: stylized mean face + seeded orthonormal
    directions with the given per-direction variances."""
    rng = np.random.default_rng(seed)
    dim = 2 * n
    if n == 68:
        mean = stylized_face().reshape(-1)
    else:
        t = np.linspace(0, 2 * np.pi, n, endpoint=False)
        mean = (0.5 + 0.25 * np.column_stack([np.cos(t), np.sin(t)])).reshape(-1)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    directions = q[:, : len(variances)]
    coeffs = rng.standard_normal((n_samples, len(variances))) * np.sqrt(variances)
    X = mean + coeffs @ directions.T
    if noise:
        X = X + rng.normal(0.0, noise, X.shape)
    records = [
        LandmarkRecord(f"id{i % 7}", f"frame{i}", LandmarkSet(X[i].reshape(-1, 2)))
        for i in range(n_samples)
    ]
    dataset = LandmarkDataset(records)
    if return_directions:
        return dataset, directions, mean
    return dataset


@pytest.fixture(scope="session")
def face68() -> LandmarkSet:
    return LandmarkSet(stylized_face())


@pytest.fixture(scope="session")
def rank5_dataset():
    return synthetic_dataset(120, [0.01, 0.005, 0.0025, 0.001, 0.0005], seed=42)
