"""PERM-BOTH significance testing between evaluators and ranking reports."""

from __future__ import annotations

import itertools
import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import AnnotatedDataset, ScoreTable, ValidationError
from .metaeval import (
    DEFAULT_PERMUTATIONS,
    calibrate_batch,
    pa_batch,
    pair_diffs,
    pvalues_upper,
    sign_flips,
    spa_batch,
)

log = logging.getLogger(__name__)

MEASURES = ("spa", "acc-eq", "pa")
MEASURE_TITLES = {"spa": "SPA", "acc-eq": "acc*_eq", "pa": "PA"}
GRANULARITIES = ("item", "segment")

# upper bound on floats held by one batched evaluation
_BATCH_BUDGET = 20_000_000


@dataclass(frozen=True)
class MeasureConfig:
    eps_gold: float = 0.0
    spa_perm: int = DEFAULT_PERMUTATIONS
    spa_seed: int = 0
    smoothing: float = 1.0


def parse_measures(text: str | Iterable[str]) -> tuple[str, ...]:
    items = text.split(",") if isinstance(text, str) else list(text)
    out = []
    for m in items:
        m = m.strip().lower().replace("_", "-")
        if m in ("acc-eq*", "acceq", "acc*-eq"):
            m = "acc-eq"
        if m not in MEASURES:
            raise ValueError(f"unknown measure {m!r}; choose from {', '.join(MEASURES)}")
        if m not in out:
            out.append(m)
    if not out:
        raise ValueError("no measure selected")
    return tuple(out)


Scorer = Callable[[np.ndarray], np.ndarray]


def make_scorer(measure: str, gold: np.ndarray, config: MeasureConfig = MeasureConfig()) -> Scorer:
    """Vectorised measure against a fixed gold (M, N) score array.

    The returned callable maps a (B, M, N) batch of evaluator scores to B
    measure values.
    """
    m, n = gold.shape
    if measure == "pa":
        gold_means = gold.mean(axis=1)
        return lambda x: pa_batch(gold_means, x.mean(axis=-1))
    if measure == "acc-eq":
        dg = pair_diffs(gold)
        chunk = max(1, _BATCH_BUDGET // (16 * max(dg.size, 1)))

        def acc(x):
            return np.concatenate([
                calibrate_batch(dg, pair_diffs(x[s:s + chunk]), config.eps_gold)[1]
                for s in range(0, len(x), chunk)
            ])
        return acc
    if measure == "spa":
        flips = sign_flips(config.spa_perm, n, config.spa_seed)
        gold_p = pvalues_upper(gold, flips, config.smoothing)
        chunk = max(1, _BATCH_BUDGET // (config.spa_perm * max(m * (m - 1) // 2, 1) + m * n))

        def soft(x):
            return np.concatenate([
                spa_batch(gold_p, pvalues_upper(x[s:s + chunk], flips, config.smoothing))
                for s in range(0, len(x), chunk)
            ])
        return soft
    raise ValueError(f"unknown measure {measure!r}")


def derive_seed(seed: int, *labels: str) -> int:
    """Stable per-task seed from a base seed and string labels."""
    entropy = [int(seed)] + [zlib.crc32(lab.encode("utf-8")) for lab in labels]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def _swap_masks(rng: np.random.Generator, b: int, shape: tuple[int, int], granularity: str) -> np.ndarray:
    m, n = shape
    if granularity == "item":
        return rng.random((b, m, n)) < 0.5
    if granularity == "segment":
        return np.broadcast_to((rng.random((b, 1, n)) < 0.5), (b, m, n))
    raise ValueError(f"unknown swap granularity {granularity!r}")


def perm_both_arrays(
    scorer: Scorer,
    x: np.ndarray,
    y: np.ndarray,
    n_perm: int,
    seed: int,
    granularity: str = "item",
    smoothing: float = 1.0,
) -> tuple[float, float, float]:
    """Paired permutation test on ``scorer(x) - scorer(y)``.

    Returns (observed delta, p-value for "x beats y", p-value for "y beats
    x"); both p-values come from the same permutations.
    """
    if x.shape != y.shape:
        raise ValueError("evaluator score arrays differ in shape")
    if n_perm < 1:
        raise ValueError("n_perm must be >= 1")
    obs = scorer(np.stack([x, y]))
    delta_obs = obs[0] - obs[1]
    rng = np.random.default_rng(seed)
    chunk = max(1, min(n_perm, _BATCH_BUDGET // (8 * x.size)))
    ge = le = 0
    for start in range(0, n_perm, chunk):
        b = min(chunk, n_perm - start)
        swap = _swap_masks(rng, b, x.shape, granularity)
        px = np.where(swap, y, x)
        py = np.where(swap, x, y)
        vals = scorer(np.concatenate([px, py]))
        delta = vals[:b] - vals[b:]
        ge += int((delta >= delta_obs).sum())
        le += int((delta <= delta_obs).sum())
    return (
        float(delta_obs),
        (smoothing + ge) / (n_perm + smoothing),
        (smoothing + le) / (n_perm + smoothing),
    )


def perm_both_test(
    gold: ScoreTable,
    eval_x: ScoreTable,
    eval_y: ScoreTable,
    measure: str,
    n_perm: int,
    seed: int,
    segments: Sequence[str],
    systems: Sequence[str],
    config: MeasureConfig = MeasureConfig(),
    granularity: str = "item",
) -> float:
    """p-value for "eval_x scores higher than eval_y under ``measure``".

    Tie thresholds for acc*_eq are recalibrated inside every permutation.
    """
    g = gold.matrix(systems, segments)
    x = eval_x.matrix(systems, segments)
    y = eval_y.matrix(systems, segments)
    scorer = make_scorer(measure, g, config)
    return perm_both_arrays(scorer, x, y, n_perm, seed, granularity, config.smoothing)[1]


def cluster_ranks(
    measure_values: Mapping[str, float],
    pairwise_p: Mapping[str, Mapping[str, float]],
    alpha: float = 0.05,
) -> dict[str, int]:
    """Significance cluster rank per evaluator.

    An evaluator starts at 1 + the number of evaluators with a higher value
    that beat it significantly (``pairwise_p[better][worse] < alpha``); it
    then inherits the largest such start among higher-valued evaluators so
    ranks never decrease down the sorted list.
    """
    start = {
        e: 1 + sum(
            1 for o, vo in measure_values.items()
            if vo > v and pairwise_p[o][e] < alpha
        )
        for e, v in measure_values.items()
    }
    return {
        e: max([start[e]] + [start[o] for o, vo in measure_values.items() if vo > v])
        for e, v in measure_values.items()
    }


@dataclass(frozen=True)
class RankConfig:
    seed: int
    measures: tuple[str, ...] = ("spa", "acc-eq")
    alpha: float = 0.05
    n_perm: int = DEFAULT_PERMUTATIONS
    spa_perm: int = DEFAULT_PERMUTATIONS
    eps_gold: float = 0.0
    granularity: str = "item"
    smoothing: float = 1.0
    threads: int = 1

    def measure_config(self) -> MeasureConfig:
        return MeasureConfig(self.eps_gold, self.spa_perm, self.seed, self.smoothing)


@dataclass
class ReportRow:
    evaluator_id: str
    is_human: bool
    values: dict[str, float]
    ranks: dict[str, int]


@dataclass
class RankingReport:
    gold_id: str
    testset_id: str
    langpair: str
    measures: tuple[str, ...]
    rows: list[ReportRow]
    n_segments: int
    n_systems: int
    config: dict = field(default_factory=dict)
    pvalues: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)

    def row(self, evaluator_id: str) -> ReportRow:
        for r in self.rows:
            if r.evaluator_id == evaluator_id:
                return r
        raise KeyError(evaluator_id)

    def to_json(self) -> str:
        obj = asdict(self)
        obj["measures"] = list(self.measures)
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RankingReport":
        obj = json.loads(text)
        obj["measures"] = tuple(obj["measures"])
        obj["rows"] = [ReportRow(**r) for r in obj["rows"]]
        return cls(**obj)

    def to_tsv(self) -> str:
        header = ["evaluator", "human"]
        for m in self.measures:
            header += [m, f"{m}_rank"]
        lines = ["\t".join(header)]
        for r in self.rows:
            cells = [r.evaluator_id, "1" if r.is_human else "0"]
            for m in self.measures:
                cells += [f"{r.values[m]:.6f}", str(r.ranks[m])]
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        name = self.testset_id + (f" ({self.langpair})" if self.langpair else "")
        lines = [
            f"Test set {name}: gold = {self.gold_id}, "
            f"{self.n_segments} segments, {self.n_systems} systems",
            "",
        ]
        header = "| Metric |" + "".join(
            f" {MEASURE_TITLES[m]} Rank | {MEASURE_TITLES[m]} Acc. |" for m in self.measures
        )
        lines += [header, "|:--|" + "--:|--:|" * len(self.measures)]
        for r in self.rows:
            label = f"**{r.evaluator_id}**" if r.is_human else r.evaluator_id
            cells = "".join(f" {r.ranks[m]} | {100 * r.values[m]:.2f} |" for m in self.measures)
            lines.append(f"| {label} |{cells}")
        cfg = self.config
        lines += [
            "",
            "Bold rows are human evaluators. Rank: significance cluster from "
            f"PERM-BOTH tests (alpha={cfg.get('alpha')}, {cfg.get('n_perm')} permutations, "
            f"seed {cfg.get('seed')}).",
        ]
        return "\n".join(lines) + "\n"


def rank_table(
    dataset: AnnotatedDataset,
    gold_id: str,
    human_ids: Iterable[str],
    measures: Sequence[str] | None = None,
    config: RankConfig | None = None,
    evaluators: Sequence[str] | None = None,
) -> RankingReport:
    """Score every evaluator against gold and cluster them by significance."""
    if config is None:
        raise ValueError("a RankConfig with an explicit seed is required")
    measures = parse_measures(measures or config.measures)
    human_ids = set(human_ids)
    if gold_id not in dataset.score_tables:
        raise ValidationError(f"gold evaluator {gold_id!r} not in dataset")
    if evaluators is None:
        evaluators = [e for e in dataset.evaluators if e != gold_id]
    elif gold_id in evaluators:
        raise ValueError(f"gold evaluator {gold_id!r} listed among scored evaluators")
    evaluators = sorted(evaluators)
    if not evaluators:
        raise ValueError("no evaluators to rank")
    unknown = human_ids - set(dataset.score_tables)
    if unknown:
        raise ValidationError(f"unknown human evaluators: {sorted(unknown)}")

    systems, segments = list(dataset.systems), list(dataset.segments)
    gold = dataset.table(gold_id).matrix(systems, segments)
    scores = {e: dataset.table(e).matrix(systems, segments) for e in evaluators}
    mcfg = config.measure_config()
    scorers = {m: make_scorer(m, gold, mcfg) for m in measures}
    values = {
        m: {e: float(scorers[m](scores[e][None])[0]) for e in evaluators} for m in measures
    }

    pairs = list(itertools.combinations(evaluators, 2))
    tasks = [(m, a, b) for m in measures for a, b in pairs]

    def run(task):
        m, a, b = task
        seed = derive_seed(config.seed, a, b)
        return perm_both_arrays(
            scorers[m], scores[a], scores[b], config.n_perm, seed, config.granularity, config.smoothing
        )

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    pvalues: dict[str, dict[str, dict[str, float]]] = {
        m: {e: {} for e in evaluators} for m in measures
    }
    for (m, a, b), (_, p_ab, p_ba) in zip(tasks, results):
        pvalues[m][a][b] = p_ab
        pvalues[m][b][a] = p_ba
    ranks = {m: cluster_ranks(values[m], pvalues[m], config.alpha) for m in measures}

    primary = measures[0]
    order = sorted(evaluators, key=lambda e: (-values[primary][e], e))
    rows = [
        ReportRow(
            evaluator_id=e,
            is_human=e in human_ids,
            values={m: values[m][e] for m in measures},
            ranks={m: ranks[m][e] for m in measures},
        )
        for e in order
    ]
    cfg = asdict(config)
    cfg["measures"] = list(measures)
    cfg.pop("threads")
    return RankingReport(
        gold_id=gold_id,
        testset_id=dataset.testset_id,
        langpair=dataset.langpair,
        measures=measures,
        rows=rows,
        n_segments=len(segments),
        n_systems=len(systems),
        config=cfg,
        pvalues=pvalues,
    )
