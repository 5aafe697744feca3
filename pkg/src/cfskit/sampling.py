"""Deterministic sampling of point pairs inside a chart's normal neighbourhood."""
from __future__ import annotations

import numpy as np

from .geometry import MetricChart


def sample_points(chart: MetricChart, n: int, rng: np.random.Generator, spread: float = 0.3,
                  t_sigma: float | None = None) -> np.ndarray:
    """Base points around the chart's base point, time coordinate pinned to t_sigma if given."""
    R = chart.normal_radius
    X = chart.base_point + rng.uniform(-spread, spread, (n, 4)) * R
    if t_sigma is not None:
        X[:, 0] = t_sigma
    return X


def sample_pairs(chart: MetricChart, n: int, rng: np.random.Generator, *, scale: float = 0.5,
                 spread: float = 0.3, transverse: float | None = 0.5,
                 t_sigma: float | None = None, kind: str = "any"):
    """Pairs (X, Y) with coordinate separation up to ``scale`` normal radii.

    ``transverse`` enforces |dt| >= transverse * |dx| so that the extended
    geodesic crosses the Cauchy surface at a well-conditioned angle.
    ``kind`` = "spacelike" draws pairs with |dt| < 0.5 |dx| instead (for the
    pipeline checks that do not need a regularising field crossing).
    """
    R = chart.normal_radius
    X = sample_points(chart, n, rng, spread, t_sigma)
    D = rng.uniform(-scale, scale, (n, 4)) * R
    dx = np.linalg.norm(D[:, 1:], axis=1)
    if kind == "spacelike":
        D[:, 0] = np.clip(D[:, 0], -0.5 * dx, 0.5 * dx)
    elif transverse is not None:
        sgn = np.where(D[:, 0] >= 0, 1.0, -1.0)
        D[:, 0] = sgn * np.maximum(np.abs(D[:, 0]), transverse * dx)
    return X, X + D
