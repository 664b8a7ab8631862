"""Meta-evaluation measures: PA, SPA and pairwise accuracy with tie calibration.

System-level measures (PA, SPA) compare system rankings; the segment-level
measure compares the ordering of translations of the same segment. Array
helpers with a leading batch axis serve the permutation tests in
:mod:`metameval.significance`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import ScoreTable, UndefinedResultError

DEFAULT_PERMUTATIONS = 1000


@dataclass(frozen=True)
class PairwiseCounts:
    C: int = 0
    D: int = 0
    T_e: int = 0
    T_g: int = 0
    T_eg: int = 0

    @property
    def total(self) -> int:
        return self.C + self.D + self.T_e + self.T_g + self.T_eg


@dataclass(frozen=True)
class TieThreshold:
    epsilon: float = 0.0
    calibrated: bool = False

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"tie threshold must be >= 0, got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class ConfidenceMatrix:
    """``p[i, j]``: p-value for "system i is better than system j".

    The diagonal is NaN.
    """

    systems: tuple[str, ...]
    p: np.ndarray
    n_perm: int
    seed: int

    def __post_init__(self):
        off = self.p[~np.eye(len(self.systems), dtype=bool)]
        if off.size and not ((off >= 0) & (off <= 1)).all():
            raise ValueError("p-values outside [0, 1]")

    def __getitem__(self, pair: tuple[str, str]) -> float:
        i, j = (self.systems.index(s) for s in pair)
        return float(self.p[i, j])

    def upper(self) -> np.ndarray:
        """p[i, j] for i < j, in np.triu_indices order."""
        return self.p[np.triu_indices(len(self.systems), 1)]


# -- system level ---------------------------------------------------------


def pa(gold_sys: Mapping[str, float], eval_sys: Mapping[str, float]) -> float:
    """Fraction of system pairs ordered the same way as gold.

    Pairs tied exactly in gold are left out of both numerator and
    denominator; a tie on the evaluator side counts as disagreement.
    """
    if set(gold_sys) != set(eval_sys):
        raise ValueError("gold and evaluator cover different systems")
    if len(gold_sys) < 2:
        raise ValueError("PA needs at least two systems")
    systems = sorted(gold_sys)
    counted = agree = 0
    for a, b in itertools.combinations(systems, 2):
        dg = gold_sys[a] - gold_sys[b]
        if dg == 0:
            continue
        counted += 1
        de = eval_sys[a] - eval_sys[b]
        agree += (dg > 0 and de > 0) or (dg < 0 and de < 0)
    if not counted:
        raise UndefinedResultError("all system pairs are tied in gold")
    return agree / counted


def pa_batch(gold_means: np.ndarray, eval_means: np.ndarray) -> np.ndarray:
    """PA of each row of ``eval_means`` (B, M) against ``gold_means`` (M,)."""
    i, j = np.triu_indices(len(gold_means), 1)
    dg = np.sign(gold_means[i] - gold_means[j])
    keep = dg != 0
    if not keep.any():
        raise UndefinedResultError("all system pairs are tied in gold")
    de = np.sign(eval_means[..., i] - eval_means[..., j])
    return ((de == dg) & keep).sum(axis=-1) / keep.sum()


def sign_flips(n_perm: int, n_items: int, seed: int) -> np.ndarray:
    """Boolean (n_perm, n_items) mask; True means the pair's scores swap."""
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    return np.random.default_rng(seed).random((n_perm, n_items)) < 0.5


def _pair_counts(scores: np.ndarray, flips: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Counts of flipped sums <= 0 and >= 0 for every system pair i < j.

    ``scores`` is (..., M, N). Flipping the signs of a subset F of the
    per-segment differences d gives a mean at least the observed one exactly
    when sum(d over F) <= 0, which avoids comparing two rounded means.
    """
    m = scores.shape[-2]
    i, j = np.triu_indices(m, 1)
    diffs = scores[..., i, :] - scores[..., j, :]  # (..., P, N)
    sums = flips.astype(np.float64) @ np.swapaxes(diffs, -1, -2)  # (..., n_perm, P)
    return (sums <= 0).sum(axis=-2), (sums >= 0).sum(axis=-2)


def pvalues_upper(scores: np.ndarray, flips: np.ndarray, smoothing: float = 1.0) -> np.ndarray:
    """p[i, j] for i < j from a (..., M, N) score array."""
    le, _ = _pair_counts(scores, flips)
    return (smoothing + le) / (len(flips) + smoothing)


def system_pvalue_matrix(
    table: ScoreTable,
    segments: Sequence[str],
    seed: int,
    n_perm: int = DEFAULT_PERMUTATIONS,
    systems: Sequence[str] | None = None,
    smoothing: float = 1.0,
) -> ConfidenceMatrix:
    """Paired sign-flip permutation p-values for every ordered system pair.

    Each permutation swaps the two systems' scores on every segment
    independently with probability 1/2; all pairs share the same draws.
    """
    systems = tuple(sorted({s for s, _ in table.scores}) if systems is None else systems)
    segments = list(segments)
    x = table.matrix(systems, segments)
    flips = sign_flips(n_perm, len(segments), seed)
    le, ge = _pair_counts(x, flips)
    m = len(systems)
    p = np.full((m, m), np.nan)
    i, j = np.triu_indices(m, 1)
    p[i, j] = (smoothing + le) / (n_perm + smoothing)
    p[j, i] = (smoothing + ge) / (n_perm + smoothing)
    return ConfidenceMatrix(systems, p, n_perm, seed)


def spa(p_gold: ConfidenceMatrix, p_eval: ConfidenceMatrix) -> float:
    if tuple(p_gold.systems) != tuple(p_eval.systems):
        raise ValueError("confidence matrices cover different systems")
    if len(p_gold.systems) < 2:
        raise ValueError("SPA needs at least two systems")
    return float(spa_batch(p_gold.upper(), p_eval.upper()))


def spa_batch(gold_upper: np.ndarray, eval_upper: np.ndarray) -> np.ndarray:
    return (1.0 - np.abs(gold_upper - eval_upper)).mean(axis=-1)


# -- segment level --------------------------------------------------------


def pair_diffs(scores: np.ndarray) -> np.ndarray:
    """Same-segment differences x[i] - x[j], i < j, flattened over (pair, segment)."""
    i, j = np.triu_indices(scores.shape[-2], 1)
    d = scores[..., i, :] - scores[..., j, :]
    return d.reshape(*scores.shape[:-2], -1)


def counts_from_diffs(dg: np.ndarray, de: np.ndarray, eps_g: float, eps_e: float) -> PairwiseCounts:
    tied_g = np.abs(dg) <= eps_g
    tied_e = np.abs(de) <= eps_e
    both = ~tied_g & ~tied_e
    same = np.sign(dg) == np.sign(de)
    return PairwiseCounts(
        C=int((both & same).sum()),
        D=int((both & ~same).sum()),
        T_e=int((tied_e & ~tied_g).sum()),
        T_g=int((tied_g & ~tied_e).sum()),
        T_eg=int((tied_g & tied_e).sum()),
    )


def _eps(t: TieThreshold | float) -> float:
    return t.epsilon if isinstance(t, TieThreshold) else float(t)


def pairwise_counts(
    gold: ScoreTable,
    eval: ScoreTable,
    eps_g: TieThreshold | float,
    eps_e: TieThreshold | float,
    segments: Sequence[str],
    systems: Sequence[str],
) -> PairwiseCounts:
    dg = pair_diffs(gold.matrix(systems, segments))
    de = pair_diffs(eval.matrix(systems, segments))
    return counts_from_diffs(dg, de, _eps(eps_g), _eps(eps_e))


def acc_eq(counts: PairwiseCounts) -> float:
    if counts.total == 0:
        raise UndefinedResultError("no comparable translation pairs")
    return (counts.C + counts.T_eg) / counts.total


def calibrate_batch(dg: np.ndarray, de: np.ndarray, eps_g: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Best tie threshold and its accuracy for each row of ``de``.

    ``dg`` holds the (Q,) gold differences, ``de`` the (B, Q) evaluator
    differences. Candidates are 0 and every ``|de|``; the first maximum in
    ascending order wins. The denominator is Q for every threshold, so the
    scan only tracks the numerator C + T_eg: an untied pair contributes when
    it is concordant and gold is untied, a tied pair when gold is tied too.
    """
    dg = np.asarray(dg, dtype=np.float64)
    de = np.atleast_2d(np.asarray(de, dtype=np.float64))
    q = dg.shape[-1]
    if q == 0:
        raise UndefinedResultError("no comparable translation pairs")
    tied_g = np.abs(dg) <= eps_g
    mag = np.abs(de)
    concordant = ~tied_g & (de != 0) & (np.sign(de) == np.sign(dg))
    base = concordant.sum(axis=1)
    delta = tied_g.astype(np.int64) - concordant.astype(np.int64)
    order = np.argsort(mag, axis=1, kind="stable")
    mag_s = np.take_along_axis(mag, order, axis=1)
    numer = base[:, None] + np.cumsum(np.take_along_axis(delta, order, axis=1), axis=1)
    last = np.ones_like(mag_s, dtype=bool)
    last[:, :-1] = mag_s[:, :-1] != mag_s[:, 1:]
    cand_num = np.hstack([np.where(mag_s[:, :1] > 0, base[:, None], -1), np.where(last, numer, -1)])
    cand_eps = np.hstack([np.zeros((len(de), 1)), mag_s])
    best = cand_num.argmax(axis=1)
    rows = np.arange(len(de))
    return cand_eps[rows, best], cand_num[rows, best] / q


def tie_calibrate(
    gold: ScoreTable,
    eval: ScoreTable,
    eps_g: TieThreshold | float,
    segments: Sequence[str],
    systems: Sequence[str],
) -> tuple[TieThreshold, float]:
    dg = pair_diffs(gold.matrix(systems, segments))
    de = pair_diffs(eval.matrix(systems, segments))
    eps, acc = calibrate_batch(dg, de[None, :], _eps(eps_g))
    return TieThreshold(float(eps[0]), calibrated=True), float(acc[0])
