"""Synthetic crowds with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GroundTruth, ResponseMatrix
from .numerics import validate_prob_vector


@dataclass(frozen=True)
class CrowdSpec:
    """Generative description of a crowd: class priors, per-annotator
    confusion matrices, and per-annotator response probabilities."""

    n_items: int
    n_annotators: int
    n_classes: int
    pi_star: np.ndarray
    gamma_star: np.ndarray
    mu: np.ndarray
    seed: int = 0

    def __post_init__(self):
        pi = validate_prob_vector(self.pi_star)
        gamma = np.asarray(self.gamma_star, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if gamma.shape != (self.n_annotators, self.n_classes, self.n_classes):
            raise ValueError("gamma_star must be (M, K, K)")
        if np.any(np.abs(gamma.sum(axis=2) - 1.0) > 1e-9):
            raise ValueError("gamma_star rows must sum to 1")
        if np.any(gamma < 0):
            raise ValueError("gamma_star entries must be nonnegative")
        if mu.shape != (self.n_annotators,) or np.any(mu <= 0) or np.any(mu > 1):
            raise ValueError("mu must be length M with entries in (0, 1]")
        object.__setattr__(self, "pi_star", pi)
        object.__setattr__(self, "gamma_star", gamma)
        object.__setattr__(self, "mu", mu)

    @property
    def rho_pi(self) -> float:
        return float(self.pi_star.min())

    @property
    def rho_gamma(self) -> float:
        return float(self.gamma_star.min())

    def to_dict(self) -> dict:
        return {
            "n_items": self.n_items,
            "n_annotators": self.n_annotators,
            "n_classes": self.n_classes,
            "pi_star": self.pi_star.tolist(),
            "gamma_star": self.gamma_star.tolist(),
            "mu": self.mu.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CrowdSpec":
        return cls(
            n_items=int(data["n_items"]),
            n_annotators=int(data["n_annotators"]),
            n_classes=int(data["n_classes"]),
            pi_star=np.asarray(data["pi_star"], dtype=float),
            gamma_star=np.asarray(data["gamma_star"], dtype=float),
            mu=np.asarray(data["mu"], dtype=float),
            seed=int(data.get("seed", 0)),
        )


def diag_dominant_spec(n_items: int, n_annotators: int, n_classes: int,
                       diag: float, seed: int = 0,
                       mu: float = 1.0) -> CrowdSpec:
    """Uniform class priors and identical confusion matrices with `diag` on
    the diagonal and the remainder spread evenly. `diag` must exceed 1/K."""
    if not diag > 1.0 / n_classes:
        raise ValueError(f"diag must exceed 1/K = {1.0 / n_classes}")
    if diag > 1.0:
        raise ValueError("diag cannot exceed 1")
    off = (1.0 - diag) / (n_classes - 1)
    row = np.full((n_classes, n_classes), off) + (diag - off) * np.eye(n_classes)
    gamma = np.broadcast_to(row, (n_annotators, n_classes, n_classes)).copy()
    return CrowdSpec(
        n_items=n_items,
        n_annotators=n_annotators,
        n_classes=n_classes,
        pi_star=np.full(n_classes, 1.0 / n_classes),
        gamma_star=gamma,
        mu=np.full(n_annotators, mu),
        seed=seed,
    )


def generate(spec: CrowdSpec) -> tuple[ResponseMatrix, GroundTruth]:
    """Draw truth labels from the class priors, then independent responses
    per (annotator, item): respond with probability mu_m and, if responding,
    emit a label from the annotator's confusion row for the true class.

    The root seed is split into separate streams for the truth draw, the
    response mask, and the response labels, so resizing one dimension does
    not reshuffle the others.
    """
    streams = np.random.SeedSequence(spec.seed).spawn(3)
    rng_truth = np.random.default_rng(streams[0])
    rng_mask = np.random.default_rng(streams[1])
    rng_labels = np.random.default_rng(streams[2])

    y0 = rng_truth.choice(spec.n_classes, size=spec.n_items, p=spec.pi_star)
    mask = rng_mask.random((spec.n_annotators, spec.n_items)) < \
        spec.mu[:, None]
    u = rng_labels.random((spec.n_annotators, spec.n_items))

    cdf = np.cumsum(spec.gamma_star, axis=2)
    ann_idx, item_idx = np.nonzero(mask)
    rows = cdf[ann_idx, y0[item_idx]]
    emitted0 = np.argmax(u[ann_idx, item_idx][:, None] < rows, axis=1)

    entries = {(int(m), int(n)): int(lab) + 1
               for m, n, lab in zip(ann_idx, item_idx, emitted0)}
    rm = ResponseMatrix(n_items=spec.n_items, n_annotators=spec.n_annotators,
                        entries=entries, n_classes=spec.n_classes)
    return rm, GroundTruth(labels=y0 + 1)
