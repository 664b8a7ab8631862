"""Synthetic test sets with controllable noise and discretisation.

Latent quality of system ``i`` on segment ``s`` is::

    offset[i] + difficulty[s] + disturbance[i, s]

with ``offset ~ N(0, SYSTEM_SD)``, ``difficulty ~ N(0, SEGMENT_SD)`` and
``disturbance ~ N(0, ITEM_SD)``. Gold is the latent score; each synthetic
evaluator adds its own Gaussian noise and may be binned afterwards. The same
noise draw is shared by the continuous and binned variants of an evaluator,
so the two differ only by discretisation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AnnotatedDataset, ScoreTable

SYSTEM_SD = 0.5
SEGMENT_SD = 1.0
ITEM_SD = 1.0
GOLD_ID = "gold"


@dataclass(frozen=True)
class SynthConfig:
    n_segments: int
    n_systems: int
    noise_sd: tuple[float, ...] = (0.1, 0.5, 1.0)
    bins: tuple[int, ...] = (0,)
    seed: int = 0
    gold_bins: int = 0

    def __post_init__(self):
        if self.n_segments < 1:
            raise ValueError("n_segments must be >= 1")
        if self.n_systems < 2:
            raise ValueError("n_systems must be >= 2")
        if any(sd < 0 for sd in self.noise_sd):
            raise ValueError("noise_sd must be >= 0")
        if any(b < 0 or b == 1 for b in (*self.bins, self.gold_bins)):
            raise ValueError("bins must be 0 (continuous) or >= 2")


def evaluator_id(noise_sd: float, bins: int) -> str:
    name = f"noise{noise_sd:g}"
    return name if bins == 0 else f"{name}-bins{bins}"


def _table(name: str, systems, segments, values: np.ndarray) -> ScoreTable:
    return ScoreTable(name, tuple(
        (sys, seg, float(values[i, j]))
        for i, sys in enumerate(systems) for j, seg in enumerate(segments)
    ))


def gen_dataset(config: SynthConfig) -> AnnotatedDataset:
    rng = np.random.default_rng(config.seed)
    systems = [f"sys{i:02d}" for i in range(config.n_systems)]
    segments = [f"seg{j:04d}" for j in range(config.n_segments)]
    shape = (config.n_systems, config.n_segments)
    latent = (
        rng.normal(0.0, SYSTEM_SD, config.n_systems)[:, None]
        + rng.normal(0.0, SEGMENT_SD, config.n_segments)[None, :]
        + rng.normal(0.0, ITEM_SD, shape)
    )
    gold = _table(GOLD_ID, systems, segments, latent)
    if config.gold_bins:
        gold = discretize(gold, config.gold_bins)
    tables = [gold]
    for sd in config.noise_sd:
        noisy = _table("", systems, segments, latent + rng.normal(0.0, 1.0, shape) * sd)
        for b in config.bins:
            t = noisy if b == 0 else discretize(noisy, b)
            tables.append(ScoreTable(evaluator_id(sd, b), t.rows))
    return AnnotatedDataset.from_tables(
        tables, testset_id=f"synth-seed{config.seed}", langpair="xx-yy",
        systems=systems, segments=segments,
    )


def discretize(table: ScoreTable, bins: int) -> ScoreTable:
    """Map scores to the midpoints of ``bins`` equal-width bins over their range.

    The top edge belongs to the last bin. A constant table is returned as is.
    """
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    if not table.rows:
        return table
    values = np.array([r[2] for r in table.rows])
    lo, hi = values.min(), values.max()
    if hi == lo:
        return table
    width = (hi - lo) / bins
    idx = np.clip(np.floor((values - lo) / width), 0, bins - 1)
    mids = lo + (idx + 0.5) * width
    return ScoreTable(
        table.evaluator_id,
        tuple((sys, seg, float(m)) for (sys, seg, _), m in zip(table.rows, mids)),
    )
