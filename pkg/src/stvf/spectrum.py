"""Dirichlet Laplacian spectra on boxes and Sobolev-scale modal weights.

Every spatial operator in the package is ``-Δ`` with homogeneous Dirichlet
conditions on a box, so the spatial side of a space-time problem reduces to
the list of eigenvalues ``λ_k`` of the normalized sine eigenfunctions.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class SobolevWeight(enum.Enum):
    """Modal weight ``w(λ)`` such that ``‖u‖² = Σ_k w(λ_k) c_k²``."""

    L2 = "L2"
    H1_0 = "H1_0"
    H_MINUS1 = "H_minus1"
    GRAPH = "graph_HDelta_H1_0"

    def __call__(self, lam):
        return self.evaluate(lam)

    def evaluate(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self is SobolevWeight.L2:
            out = np.ones_like(lam)
        elif self is SobolevWeight.H1_0:
            out = lam.copy()
        elif self is SobolevWeight.H_MINUS1:
            out = 1.0 / lam
        else:
            # ‖∇·‖² + ‖Δ·‖²
            out = lam + lam**2
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class SpatialSpectrum:
    """Ascending positive eigenvalues of ``-Δ`` with multi-index labels."""

    eigenvalues: np.ndarray
    mode_labels: tuple[tuple[int, ...], ...]
    lengths: tuple[float, ...] = field(default=(1.0,))

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise ValueError("spectrum must hold at least one eigenvalue")
        if np.any(lam <= 0) or np.any(np.diff(lam) < 0):
            raise ValueError("eigenvalues must be positive and sorted ascending")
        if len(self.mode_labels) != lam.size:
            raise ValueError("one label per eigenvalue required")
        lam.flags.writeable = False
        object.__setattr__(self, "eigenvalues", lam)

    def __len__(self) -> int:
        return self.eigenvalues.size

    def __getitem__(self, k):
        return self.eigenvalues[k]

    @property
    def poincare_constant(self) -> float:
        return poincare_constant(self)


def build_interval_spectrum(length: float, K: int) -> SpatialSpectrum:
    """Eigenvalues ``(kπ/L)²``, ``k = 1..K`` of ``-d²/dx²`` on ``(0, L)``."""
    if not length > 0:
        raise ValueError(f"interval length must be positive, got {length}")
    if int(K) != K or K < 1:
        raise ValueError(f"mode count must be a positive integer, got {K}")
    k = np.arange(1, int(K) + 1, dtype=float)
    return SpatialSpectrum(
        (k * math.pi / length) ** 2,
        tuple((int(i),) for i in k),
        (float(length),),
    )


def build_box_spectrum(lengths: Sequence[float], K_per_dim: int) -> SpatialSpectrum:
    """Tensor-product spectrum of a box, ``K_per_dim`` sine modes per axis.

    Eigenvalues are sorted ascending; ties keep lexicographic order of the
    multi-indices so the result is deterministic.
    """
    lengths = tuple(float(L) for L in lengths)
    if not lengths:
        raise ValueError("box needs at least one side length")
    if any(not L > 0 for L in lengths):
        raise ValueError(f"side lengths must be positive, got {lengths}")
    if int(K_per_dim) != K_per_dim or K_per_dim < 1:
        raise ValueError(f"modes per dimension must be a positive integer, got {K_per_dim}")

    labels = list(itertools.product(range(1, int(K_per_dim) + 1), repeat=len(lengths)))
    values = [
        sum((k * math.pi / L) ** 2 for k, L in zip(idx, lengths)) for idx in labels
    ]
    order = sorted(range(len(labels)), key=lambda i: (values[i], labels[i]))
    return SpatialSpectrum(
        np.array([values[i] for i in order]),
        tuple(labels[i] for i in order),
        lengths,
    )


def poincare_constant(spec: SpatialSpectrum) -> float:
    """``C_Ω = 1/√λ_1``, so that ``‖u‖_{L²} ≤ C_Ω ‖∇u‖_{L²}``."""
    return 1.0 / math.sqrt(spec.eigenvalues[0])


def modal_norm(coefficients, weight: SobolevWeight, spec: SpatialSpectrum) -> float:
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (len(spec),):
        raise ValueError(f"expected {len(spec)} modal coefficients, got shape {c.shape}")
    return float(np.sqrt(np.sum(weight.evaluate(spec.eigenvalues) * c**2)))
