"""Deterministic polar-sector clustering of 2-D item coordinates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class ClusterAssignment:
    """Items split into rho radial x theta angular sectors.

    cluster id = radial_bin * theta + angular_bin.
    """

    rho: int
    theta: int
    center: np.ndarray
    radial_boundaries: np.ndarray
    assign: np.ndarray

    @property
    def n_clusters(self) -> int:
        return self.rho * self.theta

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assign, minlength=self.n_clusters)


def angular_bins(coords: np.ndarray, center: np.ndarray, theta: int) -> np.ndarray:
    """Sector index from the positive x-axis; a point on a boundary goes to the lower bin."""
    ang = np.arctan2(coords[:, 1] - center[1], coords[:, 0] - center[0])
    pos = theta * (ang + np.pi) / (2.0 * np.pi)
    return np.clip(np.ceil(pos).astype(np.int64) - 1, 0, theta - 1)


def radial_boundaries(radii: np.ndarray, rho: int, mode: str = "quantile") -> np.ndarray:
    """rho - 1 strictly increasing radii separating the annuli."""
    if rho == 1:
        return np.empty(0)
    if mode == "quantile":
        b = np.quantile(radii, np.arange(1, rho) / rho)
    elif mode == "equal":
        b = radii.max() * np.arange(1, rho) / rho
    else:
        raise ValueError(f"unknown radial mode {mode!r}")
    b = np.asarray(b, dtype=np.float64)
    for k in range(1, len(b)):
        if b[k] <= b[k - 1]:
            b[k] = np.nextafter(b[k - 1], np.inf)
    return b


def polar_partition(
    coords: np.ndarray,
    rho: int,
    theta: int,
    mode: str = "quantile",
    center: np.ndarray | None = None,
) -> ClusterAssignment:
    """Assign each 2-D point to a polar sector around the centroid (or ``center``)."""
    if rho < 1 or theta < 1:
        raise ValueError("rho and theta must be >= 1")
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 1:
        raise ValueError(f"expected an (n, 2) array, got shape {coords.shape}")
    center = coords.mean(axis=0) if center is None else np.asarray(center, dtype=np.float64)
    radii = np.hypot(coords[:, 0] - center[0], coords[:, 1] - center[1])
    bounds = radial_boundaries(radii, rho, mode)
    r_bin = np.searchsorted(bounds, radii, side="left")
    a_bin = angular_bins(coords, center, theta)
    assign = (r_bin * theta + a_bin).astype(np.int64)
    return ClusterAssignment(rho, theta, center, bounds, assign)


def membership_matrix(a: ClusterAssignment) -> sp.csr_matrix:
    """One-hot n x (rho * theta) matrix w with w[j, k] = 1 iff item j is in cluster k."""
    n = len(a.assign)
    return sp.csr_matrix(
        (np.ones(n), (np.arange(n), a.assign)),
        shape=(n, a.n_clusters),
    )
