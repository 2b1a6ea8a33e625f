"""Top-n ranking generation and F1/NDCG aggregation over held-out contexts.

Held-out triples are grouped by (user, interval); each group's relevant set
is its held-out items, the candidate set is every item the user has no
training record for, and metrics are averaged over groups. Any scorer
exposing ``item_scores(features, p, r) -> vector`` can be evaluated, so the
tensor model, the matrix baselines, and planted synthetic scorers all share
this code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SplitBundle
from .errors import DataError

_SEED_MASK = (1 << 63) - 1


@dataclass
class RankingResult:
    """Scored top-n list for one (user, interval) context."""

    user: int
    interval: int
    ranked_items: np.ndarray
    scores: np.ndarray
    relevant: frozenset
    truncated: bool = False  # fewer candidates than requested


def top_n(model, features, train_ds, context, n: int, relevant=()) -> RankingResult:
    """Rank the user's non-training items by score, ties to the lower index.

    When fewer than ``n`` candidates exist, all are returned and the result
    is flagged truncated.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    p, r = context
    scores = np.asarray(model.item_scores(features, p, r), dtype=np.float64)
    if scores.shape != (train_ds.n_items,):
        raise DataError("scorer returned a vector of the wrong length")
    candidates = np.ones(train_ds.n_items, dtype=bool)
    candidates[train_ds.items_of_user(p)] = False
    candidate_idx = np.flatnonzero(candidates)
    # stable sort on negated scores: equal scores keep ascending item index
    order = candidate_idx[np.argsort(-scores[candidate_idx], kind="stable")]
    truncated = len(order) < n
    top = order[:n]
    return RankingResult(
        user=p,
        interval=r,
        ranked_items=top,
        scores=scores[top],
        relevant=frozenset(int(q) for q in relevant),
        truncated=truncated,
    )


def f1_at_n(result: RankingResult, n: int) -> float:
    """Harmonic mean of precision (hits/n) and recall (hits/|relevant|)."""
    if not result.relevant:
        raise ValueError("F1 is undefined for an empty relevant set")
    ranked = result.ranked_items[:n]
    hits = sum(1 for q in ranked.tolist() if q in result.relevant)
    precision = hits / n
    recall = hits / len(result.relevant)
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def ndcg_at_n(result: RankingResult, n: int) -> float:
    """Binary-gain NDCG with 1/log2(position + 2) discounting.

    The ideal DCG places min(n, |relevant|) hits at the top ranks.
    """
    if not result.relevant:
        raise ValueError("NDCG is undefined for an empty relevant set")
    ranked = result.ranked_items[:n]
    dcg = sum(
        1.0 / np.log2(i + 2)
        for i, q in enumerate(ranked.tolist())
        if q in result.relevant
    )
    ideal_hits = min(n, len(result.relevant))
    idcg = sum(1.0 / np.log2(i + 2) for i in range(ideal_hits))
    return float(dcg / idcg)


@dataclass
class EvalReport:
    """Per-n mean metrics over (user, interval) groups."""

    mean_f1: dict
    mean_ndcg: dict
    n_groups: int
    n_skipped: int
    rows: list = field(default_factory=list)


def evaluate_split(model, features, bundle: SplitBundle, n_list,
                   subsample: int | None = None, seed: int = 0,
                   part: str = "test") -> EvalReport:
    """Group one held-out part by (user, interval) and average both metrics.

    Relevant items that are also training positives of the user can never be
    ranked (candidates exclude them); groups whose relevant set empties this
    way are skipped and counted. ``subsample`` keeps a uniform random subset
    of groups, deterministic under ``seed``.
    """
    triples = bundle.test if part == "test" else bundle.validation
    if len(triples) == 0:
        raise DataError(f"the {part} split is empty")
    n_list = sorted(set(int(n) for n in n_list))
    if not n_list or n_list[0] < 1:
        raise ValueError("n_list must contain positive cutoffs")
    train_ds = bundle.train

    groups: dict[tuple, set] = {}
    for p, q, r in np.asarray(triples).tolist():
        groups.setdefault((p, r), set()).add(q)

    keys = sorted(groups)
    if subsample is not None and subsample < len(keys):
        rng = np.random.default_rng([seed & _SEED_MASK, 3])
        chosen = rng.choice(len(keys), size=subsample, replace=False)
        keys = [keys[i] for i in sorted(chosen)]

    n_max = max(n_list)
    f1_sums = {n: 0.0 for n in n_list}
    ndcg_sums = {n: 0.0 for n in n_list}
    scored = 0
    skipped = 0
    for key in keys:
        p, r = key
        relevant = {
            q for q in groups[key] if not train_ds.has_pair(p, q)
        }
        if not relevant:
            skipped += 1
            continue
        result = top_n(model, features, train_ds, (p, r), n_max, relevant)
        for n in n_list:
            f1_sums[n] += f1_at_n(result, n)
            ndcg_sums[n] += ndcg_at_n(result, n)
        scored += 1

    if scored == 0:
        raise DataError(f"every group in the {part} split was skipped")
    return EvalReport(
        mean_f1={n: f1_sums[n] / scored for n in n_list},
        mean_ndcg={n: ndcg_sums[n] / scored for n in n_list},
        n_groups=scored,
        n_skipped=skipped,
    )


def write_metrics_csv(path, model_name: str, report: EvalReport) -> None:
    """Metrics report rows: model, n, f1, ndcg, groups, skipped."""
    lines = ["model,n,f1,ndcg,groups,skipped"]
    for n in sorted(report.mean_f1):
        lines.append(
            f"{model_name},{n},{report.mean_f1[n]:.6f},{report.mean_ndcg[n]:.6f},"
            f"{report.n_groups},{report.n_skipped}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
