"""Synthetic member scores with a controllable per-group diversity gap.

Each sample has a latent logit centred on ``+m`` (y=1) or ``-m`` (y=0).
Every member sees that logit plus its own Gaussian noise. Group 0 members
use noise scale ``sigma0``; group 1 members use ``sigma0 + gap * alpha``.
Extra member noise means more disagreement among members and so more
predictive diversity in group 1.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import LabeledPredictions, RunSet


@dataclass(frozen=True)
class SyntheticConfig:
    per_cell: int = 1000
    members: int = 10  # per run
    runs: int = 5
    separation: float = 1.0
    sigma0: float = 0.2
    gap: float = 1.5
    alpha: float = 1.0
    spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.per_cell < 1 or self.members < 1 or self.runs < 1:
            raise ValueError("per_cell, members and runs must be >= 1")
        if self.sigma0 < 0 or self.gap < 0 or self.spread < 0:
            raise ValueError("sigma0, gap and spread must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    @property
    def sigma1(self) -> float:
        return self.sigma0 + self.gap * self.alpha

    @classmethod
    def from_json(cls, text: str) -> "SyntheticConfig":
        return cls(**json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)


def _logistic(z: np.ndarray) -> np.ndarray:
    # two-branch form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def generate_synthetic(config: SyntheticConfig) -> RunSet:
    """Samples are laid out cell by cell: (y, a) = (0, 0), (0, 1), (1, 0), (1, 1).

    Latent logits and member noise come from separate child streams of the
    seed, so changing the member count leaves the latents unchanged.
    """
    c = config
    cells = [(y, a) for y in (0, 1) for a in (0, 1)]
    labels = np.repeat([y for y, _ in cells], c.per_cell)
    groups = np.repeat([a for _, a in cells], c.per_cell)
    k = labels.size
    n = c.members * c.runs

    latent_ss, noise_ss = np.random.SeedSequence(c.seed).spawn(2)
    mu = np.random.default_rng(latent_ss).normal((2 * labels - 1) * c.separation, c.spread)
    noise = np.random.default_rng(noise_ss).standard_normal((k, n))
    sigma = np.where(groups == 1, c.sigma1, c.sigma0)
    scores = _logistic(mu[:, None] + sigma[:, None] * noise)
    # saturated logistic outputs would sit exactly on 0 or 1
    scores = np.clip(scores, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))

    width = len(str(k - 1))
    data = LabeledPredictions(
        tuple(f"s{i:0{width}d}" for i in range(k)),
        labels,
        groups,
        scores,
        tuple(f"m{j}" for j in range(n)),
    )
    return RunSet(data, tuple(j // c.members for j in range(n)))
