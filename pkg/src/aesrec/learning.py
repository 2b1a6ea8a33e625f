"""Pairwise ranking objectives, gradients, sampling, and the training loop.

For a purchase (p, q, r) the trainer ranks q above unlabeled items, q above
its neighbor items, and neighbor items above the remaining unlabeled pool.
Each relation contributes a log-sigmoid margin on the tensor score plus
coupled margins on the two matrix scores weighted by ``lambda_c``; the three
relations are weighted 1, eta1, eta2. User-side pairs update only the
user-preference half of the model (user/item/user-visual matrices) with
neighbors drawn from the user-graph and feature-cluster sets; time-side
pairs update only the time half with neighbors from the time-graph and
feature-cluster sets.

RNG discipline: all draws derive from ``hp.seed`` with one substream per
epoch and one per record index, so a run is reproducible and record
sampling is independent of batch boundaries. Stream ids:
(seed, epoch, 0, 0) shuffles the epoch, (seed, epoch, 1, i) samples record
i, (seed, 0, 2, 0) picks the fixed validation subsample.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset, SplitBundle
from .errors import ConfigError, DataError, TrainingDivergedError
from .model import BASIC, HYBRID, Hyperparams, ModelParams, init_params
from .neighbors import NeighborIndex

_SEED_MASK = (1 << 63) - 1

POS_VS_NEG = "pos-vs-neg"
POS_VS_NEIGHBOR = "pos-vs-neighbor"
NEIGHBOR_VS_NEG = "neighbor-vs-neg"
RELATIONS = (POS_VS_NEG, POS_VS_NEIGHBOR, NEIGHBOR_VS_NEG)

USER_SIDE = "userSide"
TIME_SIDE = "timeSide"


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _record_rng(seed: int, epoch: int, index: int):
    return np.random.default_rng([seed & _SEED_MASK, epoch, 1, index])


def _shuffle_rng(seed: int, epoch: int):
    return np.random.default_rng([seed & _SEED_MASK, epoch, 0, 0])


def _sorted_contains(arr, value) -> bool:
    i = np.searchsorted(arr, value)
    return i < len(arr) and arr[i] == value


class UnlabeledPool:
    """Items neither purchased by user p nor purchased in interval r.

    Supports uniform sampling (rejection against the sorted excluded set,
    cheap at realistic sparsity) and membership tests. Construction fails if
    the pool is empty (a degenerate interval covering every item).
    """

    def __init__(self, ds: Dataset, p: int, r: int):
        if not 0 <= p < ds.n_users or not 0 <= r < ds.n_intervals:
            raise IndexError(f"context out of range: ({p}, {r})")
        self.excluded = np.union1d(ds.items_of_user(p), ds.items_in_interval(r))
        self.n_items = ds.n_items
        self.size = self.n_items - len(self.excluded)
        if self.size <= 0:
            raise DataError(
                f"unlabeled pool for user {p}, interval {r} is empty"
            )
        self._members = None
        self._minus_cache: dict = {}

    def __contains__(self, q) -> bool:
        return 0 <= q < self.n_items and not _sorted_contains(self.excluded, q)

    def members(self):
        if self._members is None:
            self._members = np.setdiff1d(
                np.arange(self.n_items, dtype=np.int64), self.excluded
            )
        return self._members

    def sample(self, rng) -> int:
        # rejection is cheap while the pool covers most of the catalog;
        # dense exclusion flips to direct indexing of the member array
        if 2 * self.size < self.n_items:
            members = self.members()
            return int(members[rng.integers(len(members))])
        for _ in range(10_000):
            cand = int(rng.integers(self.n_items))
            if not _sorted_contains(self.excluded, cand):
                return cand
        members = self.members()
        return int(members[rng.integers(len(members))])

    def sample_excluding(self, rng, extra_sorted, cache_key=None,
                         max_tries: int = 50):
        """Uniform draw from the pool minus ``extra_sorted``; None if empty.

        ``cache_key`` memoizes the set difference on the pool, worthwhile
        when the same exclusion recurs every epoch.
        """
        if cache_key is not None:
            members = self._minus_cache.get(cache_key)
            if members is None:
                members = np.setdiff1d(self.members(), extra_sorted)
                self._minus_cache[cache_key] = members
            if len(members) == 0:
                return None
            return int(members[rng.integers(len(members))])
        if 2 * self.size >= self.n_items:
            for _ in range(max_tries):
                cand = int(rng.integers(self.n_items))
                if _sorted_contains(self.excluded, cand):
                    continue
                if _sorted_contains(extra_sorted, cand):
                    continue
                return cand
        members = np.setdiff1d(self.members(), extra_sorted)
        if len(members) == 0:
            return None
        return int(members[rng.integers(len(members))])


@dataclass(frozen=True)
class TrainingPair:
    """One ranked pair; the relation determines which fields are populated."""

    p: int
    r: int
    q_pos: int
    q_mid: int | None
    q_neg: int | None
    relation: str

    def ranked_items(self):
        """(higher-ranked item, lower-ranked item) for this relation."""
        if self.relation == POS_VS_NEG:
            return self.q_pos, self.q_neg
        if self.relation == POS_VS_NEIGHBOR:
            return self.q_pos, self.q_mid
        return self.q_mid, self.q_neg


class GradAccumulator:
    """Dense gradient blocks, entity-major so scatter-adds hit rows.

    ``user`` is (P, k1), ``item`` (Q, k1), ``time`` (R, k2), ``item_time``
    (Q, k2); hybrid mode adds ``user_visual`` (P, D) and ``time_visual``
    (R, D). Zeroed at batch start.
    """

    def __init__(self, params: ModelParams):
        self.user = np.zeros((params.n_users, params.k1))
        self.item = np.zeros((params.n_items, params.k1))
        self.time = np.zeros((params.n_intervals, params.k2))
        self.item_time = np.zeros((params.n_items, params.k2))
        if params.feature_mode == HYBRID:
            self.user_visual = np.zeros((params.n_users, params.feature_dim))
            self.time_visual = np.zeros((params.n_intervals, params.feature_dim))
        else:
            self.user_visual = None
            self.time_visual = None

    def zero(self):
        for block in self._blocks():
            block[:] = 0.0

    def _blocks(self):
        blocks = [self.user, self.item, self.time, self.item_time]
        if self.user_visual is not None:
            blocks += [self.user_visual, self.time_visual]
        return blocks

    def is_finite(self) -> bool:
        return all(np.isfinite(b).all() for b in self._blocks())


def pair_likelihood_grad(params: ModelParams, features, p: int, qa: int, qb: int,
                         r: int, lambda_c: float, acc: GradAccumulator,
                         weight: float = 1.0) -> float:
    """Likelihood of ranking qa above qb in context (p, r), plus gradients.

    Returns L = ln sig(tensor diff) + lambda_c * [ln sig(user-item diff) +
    ln sig(time-item diff)] and adds ``weight`` times its gradient into
    ``acc``, touching exactly the columns for p, qa, qb, and r in every
    parameter matrix.
    """
    if qa == qb:
        raise ValueError("ranked pair needs two distinct items")
    hybrid = params.feature_mode == HYBRID
    u = params.user_factors[:, p]
    va = params.item_factors[:, qa]
    vb = params.item_factors[:, qb]
    t = params.time_factors[:, r]
    wa = params.item_time_factors[:, qa]
    wb = params.item_time_factors[:, qb]
    s1a = float(u @ va)
    s1b = float(u @ vb)
    s2a = float(t @ wa)
    s2b = float(t @ wb)
    if hybrid:
        fa = features.vector(qa)
        fb = features.vector(qb)
        mu = params.user_visual[:, p]
        nr = params.time_visual[:, r]
        s1a += float(mu @ fa)
        s1b += float(mu @ fb)
        s2a += float(nr @ fa)
        s2b += float(nr @ fb)

    a_diff = s1a * s2a - s1b * s2b
    b_diff = s1a - s1b
    c_diff = s2a - s2b
    value = float(
        _log_sigmoid(a_diff) + lambda_c * (_log_sigmoid(b_diff) + _log_sigmoid(c_diff))
    )

    g_a = weight * float(expit(-a_diff))
    g_b = weight * lambda_c * float(expit(-b_diff))
    g_c = weight * lambda_c * float(expit(-c_diff))

    acc.user[p] += g_a * (s2a * va - s2b * vb) + g_b * (va - vb)
    acc.item[qa] += (g_a * s2a + g_b) * u
    acc.item[qb] -= (g_a * s2b + g_b) * u
    acc.time[r] += g_a * (s1a * wa - s1b * wb) + g_c * (wa - wb)
    acc.item_time[qa] += (g_a * s1a + g_c) * t
    acc.item_time[qb] -= (g_a * s1b + g_c) * t
    if hybrid:
        acc.user_visual[p] += g_a * (s2a * fa - s2b * fb) + g_b * (fa - fb)
        acc.time_visual[r] += g_a * (s1a * fa - s1b * fb) + g_c * (fa - fb)
    return value


def sample_training_pairs(ds: Dataset, nbr: NeighborIndex | None, p: int, q: int,
                          r: int, rho: int, side: str, rng,
                          pool: UnlabeledPool | None = None,
                          include_neighbors: bool = True):
    """Draw the ranked pairs one positive record contributes for one side.

    Emits rho pos-vs-neg pairs (negatives uniform over the unlabeled pool),
    and when the side's neighbor set is non-empty, rho neighbor draws shared
    between the pos-vs-neighbor and neighbor-vs-neg relations, the latter
    with negatives uniform over the pool minus the neighbor set. Returns []
    when the pool is empty (callers count the skip).
    """
    if side not in (USER_SIDE, TIME_SIDE):
        raise ValueError(f"unknown side {side!r}")
    if pool is None:
        try:
            pool = UnlabeledPool(ds, p, r)
        except DataError:
            return []

    pairs = [
        TrainingPair(p, r, q, None, pool.sample(rng), POS_VS_NEG)
        for _ in range(rho)
    ]
    if nbr is None or not include_neighbors:
        return pairs
    members = nbr.user_side[q] if side == USER_SIDE else nbr.time_side[q]
    if len(members) == 0:
        return pairs

    mids = [int(members[rng.integers(len(members))]) for _ in range(rho)]
    for mid in mids:
        pairs.append(TrainingPair(p, r, q, mid, None, POS_VS_NEIGHBOR))
    for mid in mids:
        neg = pool.sample_excluding(rng, members, cache_key=(side, q))
        if neg is None:
            continue
        pairs.append(TrainingPair(p, r, q, mid, neg, NEIGHBOR_VS_NEG))
    return pairs


# ---------------------------------------------------------------------------
# Vectorized batch accumulation
# ---------------------------------------------------------------------------

def _pair_arrays(pairs, weights):
    n = len(pairs)
    p_arr = np.empty(n, dtype=np.int64)
    r_arr = np.empty(n, dtype=np.int64)
    qa_arr = np.empty(n, dtype=np.int64)
    qb_arr = np.empty(n, dtype=np.int64)
    w_arr = np.empty(n)
    for i, pair in enumerate(pairs):
        qa, qb = pair.ranked_items()
        p_arr[i] = pair.p
        r_arr[i] = pair.r
        qa_arr[i] = qa
        qb_arr[i] = qb
        w_arr[i] = weights[pair.relation]
    return p_arr, r_arr, qa_arr, qb_arr, w_arr


def _accumulate_side(params: ModelParams, features, arrays, lambda_c: float,
                     acc: GradAccumulator, side: str) -> float:
    """Add the gradients of one side's pair batch; returns the weighted L sum.

    Touches only the side's own half of the accumulator: user/item/user_visual
    for the user side, time/item_time/time_visual for the time side.
    """
    p_arr, r_arr, qa_arr, qb_arr, w_arr = arrays
    if len(p_arr) == 0:
        return 0.0
    hybrid = params.feature_mode == HYBRID

    u_cols = params.user_factors[:, p_arr]
    va = params.item_factors[:, qa_arr]
    vb = params.item_factors[:, qb_arr]
    t_cols = params.time_factors[:, r_arr]
    wa = params.item_time_factors[:, qa_arr]
    wb = params.item_time_factors[:, qb_arr]
    s1a = np.einsum("kn,kn->n", u_cols, va)
    s1b = np.einsum("kn,kn->n", u_cols, vb)
    s2a = np.einsum("kn,kn->n", t_cols, wa)
    s2b = np.einsum("kn,kn->n", t_cols, wb)
    if hybrid:
        fa = features.matrix[qa_arr]
        fb = features.matrix[qb_arr]
        mu = params.user_visual[:, p_arr].T
        nr = params.time_visual[:, r_arr].T
        s1a = s1a + np.einsum("nd,nd->n", mu, fa)
        s1b = s1b + np.einsum("nd,nd->n", mu, fb)
        s2a = s2a + np.einsum("nd,nd->n", nr, fa)
        s2b = s2b + np.einsum("nd,nd->n", nr, fb)

    a_diff = s1a * s2a - s1b * s2b
    b_diff = s1a - s1b
    c_diff = s2a - s2b
    l_values = _log_sigmoid(a_diff) + lambda_c * (
        _log_sigmoid(b_diff) + _log_sigmoid(c_diff)
    )
    g_a = w_arr * expit(-a_diff)

    if side == USER_SIDE:
        g_b = w_arr * lambda_c * expit(-b_diff)
        np.add.at(
            acc.user, p_arr,
            ((g_a * s2a)[:, None] * va.T - (g_a * s2b)[:, None] * vb.T
             + g_b[:, None] * (va.T - vb.T)),
        )
        np.add.at(acc.item, qa_arr, (g_a * s2a + g_b)[:, None] * u_cols.T)
        np.add.at(acc.item, qb_arr, -((g_a * s2b + g_b)[:, None] * u_cols.T))
        if hybrid:
            np.add.at(
                acc.user_visual, p_arr,
                ((g_a * s2a)[:, None] * fa - (g_a * s2b)[:, None] * fb
                 + g_b[:, None] * (fa - fb)),
            )
    else:
        g_c = w_arr * lambda_c * expit(-c_diff)
        np.add.at(
            acc.time, r_arr,
            ((g_a * s1a)[:, None] * wa.T - (g_a * s1b)[:, None] * wb.T
             + g_c[:, None] * (wa.T - wb.T)),
        )
        np.add.at(acc.item_time, qa_arr, (g_a * s1a + g_c)[:, None] * t_cols.T)
        np.add.at(acc.item_time, qb_arr, -((g_a * s1b + g_c)[:, None] * t_cols.T))
        if hybrid:
            np.add.at(
                acc.time_visual, r_arr,
                ((g_a * s1a)[:, None] * fa - (g_a * s1b)[:, None] * fb
                 + g_c[:, None] * (fa - fb)),
            )
    return float(np.dot(w_arr, l_values))


def _state_digest(*arrays) -> bytes:
    h = hashlib.sha256()
    for arr in arrays:
        if arr is not None:
            h.update(arr.tobytes())
    return h.digest()


def _guard_divergence(params: ModelParams, epoch: int):
    for name, block in params.matrices().items():
        if not np.isfinite(block).all():
            raise TrainingDivergedError(
                f"{name} became non-finite during epoch {epoch}"
            )
        if np.abs(block).max() > 1e6:
            raise TrainingDivergedError(
                f"{name} exceeded 1e6 during epoch {epoch}; lower the learning rate"
            )


@dataclass
class EpochStats:
    """Sampled-objective statistics for one pass over the training positives."""

    epoch: int
    mean_l: float
    weighted_l_sum: float
    n_records: int
    skipped_empty_pool: int
    skipped_mid_neg: int
    pair_counts: dict
    seconds: float


def ranking_epoch(params: ModelParams, features, ds: Dataset,
                  nbr: NeighborIndex | None, hp: Hyperparams, epoch: int,
                  pool_cache: dict | None = None, freeze_time: bool = False,
                  verify_isolation: bool = False, pair_log: list | None = None) -> EpochStats:
    """One shuffled pass over the training positives in mini-batches.

    Per record and side, pairs are sampled from that record's own RNG
    substream; after each batch the side accumulators are applied to their
    own matrices with the regularization pulled in proportionally
    (lambda_r scaled by batch/total so one epoch regularizes once in
    expectation). ``freeze_time`` skips the time side entirely, and
    ``verify_isolation`` checksums the untouched half around each
    application step.
    """
    start = time.perf_counter()
    if pool_cache is None:
        pool_cache = {}
    n_records = ds.n_positives
    if n_records == 0:
        raise DataError("no training positives to iterate")
    include_neighbors = nbr is not None and (hp.eta1 > 0 or hp.eta2 > 0)
    weights = {POS_VS_NEG: 1.0, POS_VS_NEIGHBOR: hp.eta1, NEIGHBOR_VS_NEG: hp.eta2}

    order = np.arange(n_records)
    _shuffle_rng(hp.seed, epoch).shuffle(order)

    user_acc = GradAccumulator(params)
    time_acc = GradAccumulator(params)
    weighted_l = 0.0
    records_done = 0
    skipped_pool = 0
    skipped_mid_neg = 0
    pair_counts = {rel: 0 for rel in RELATIONS}

    for batch_start in range(0, n_records, hp.batch_size):
        batch = order[batch_start: batch_start + hp.batch_size]
        user_pairs: list[TrainingPair] = []
        time_pairs: list[TrainingPair] = []
        for rec_index in batch.tolist():
            p, q, r = ds.positives[rec_index]
            key = (p, r)
            if key not in pool_cache:
                try:
                    pool_cache[key] = UnlabeledPool(ds, p, r)
                except DataError:
                    pool_cache[key] = None
            pool = pool_cache[key]
            if pool is None:
                skipped_pool += 1
                continue
            rng = _record_rng(hp.seed, epoch, rec_index)
            pairs_u = sample_training_pairs(
                ds, nbr, p, q, r, hp.rho, USER_SIDE, rng,
                pool=pool, include_neighbors=include_neighbors,
            )
            user_pairs.extend(pairs_u)
            if include_neighbors and len(nbr.user_side[q]):
                skipped_mid_neg += 2 * hp.rho - sum(
                    1 for pr in pairs_u if pr.relation != POS_VS_NEG
                )
            if not freeze_time:
                pairs_t = sample_training_pairs(
                    ds, nbr, p, q, r, hp.rho, TIME_SIDE, rng,
                    pool=pool, include_neighbors=include_neighbors,
                )
                time_pairs.extend(pairs_t)
            records_done += 1

        for pair in user_pairs:
            pair_counts[pair.relation] += 1
        for pair in time_pairs:
            pair_counts[pair.relation] += 1

        user_arrays = _pair_arrays(user_pairs, weights)
        time_arrays = _pair_arrays(time_pairs, weights)
        if pair_log is not None:
            pair_log.append({
                "user": user_arrays,
                "time": time_arrays,
                "batch_records": len(batch),
            })

        user_acc.zero()
        time_acc.zero()
        weighted_l += _accumulate_side(
            params, features, user_arrays, hp.lambda_c, user_acc, USER_SIDE
        )
        if not freeze_time:
            weighted_l += _accumulate_side(
                params, features, time_arrays, hp.lambda_c, time_acc, TIME_SIDE
            )

        reg = hp.lambda_r * len(batch) / n_records
        lr = hp.learn_rate

        if verify_isolation:
            before_time = _state_digest(
                params.time_factors, params.item_time_factors, params.time_visual
            )
        params.user_factors += lr * (user_acc.user.T - reg * params.user_factors)
        params.item_factors += lr * (user_acc.item.T - reg * params.item_factors)
        if params.feature_mode == HYBRID:
            params.user_visual += lr * (user_acc.user_visual.T - reg * params.user_visual)
        if verify_isolation:
            after_time = _state_digest(
                params.time_factors, params.item_time_factors, params.time_visual
            )
            if before_time != after_time:
                raise AssertionError("user-side step mutated the time half")
            before_user = _state_digest(
                params.user_factors, params.item_factors, params.user_visual
            )
        if not freeze_time:
            params.time_factors += lr * (time_acc.time.T - reg * params.time_factors)
            params.item_time_factors += lr * (
                time_acc.item_time.T - reg * params.item_time_factors
            )
            if params.feature_mode == HYBRID:
                params.time_visual += lr * (
                    time_acc.time_visual.T - reg * params.time_visual
                )
        if verify_isolation:
            after_user = _state_digest(
                params.user_factors, params.item_factors, params.user_visual
            )
            if before_user != after_user:
                raise AssertionError("time-side step mutated the user half")

        _guard_divergence(params, epoch)

    mean_l = weighted_l / records_done if records_done else 0.0
    return EpochStats(
        epoch=epoch,
        mean_l=mean_l,
        weighted_l_sum=weighted_l,
        n_records=records_done,
        skipped_empty_pool=skipped_pool,
        skipped_mid_neg=skipped_mid_neg,
        pair_counts=pair_counts,
        seconds=time.perf_counter() - start,
    )


@dataclass
class TrainResult:
    """Best checkpoint (by validation NDCG@10) plus the full metric history."""

    params: ModelParams
    best_epoch: int
    best_ndcg: float
    history: list = field(default_factory=list)
    final_params: ModelParams | None = None
    epoch_stats: list = field(default_factory=list)


def train_ranking(bundle: SplitBundle, features, nbr: NeighborIndex | None,
                  hp: Hyperparams, eval_every: int = 1,
                  feature_mode: str = BASIC, eval_subsample: int = 1000,
                  resample_eval: bool = False, freeze_time: bool = False,
                  initial_params: ModelParams | None = None,
                  start_epoch: int = 1) -> TrainResult:
    """Run ``hp.max_iters`` ranking epochs with periodic validation scoring.

    Every ``eval_every`` epochs the model is scored on a fixed random
    subsample of the validation triples (resampled per evaluation when
    ``resample_eval``); the checkpoint with the best NDCG@10 is kept. With
    ``max_iters=0`` the initialization checkpoint is returned. Resuming
    from a loaded checkpoint passes its parameters and the next epoch
    number; epoch RNG substreams are keyed by epoch, so a resumed run
    continues the same stream schedule.
    """
    from .evaluate import evaluate_split

    ds = bundle.train
    feature_dim = features.dim if (features is not None and feature_mode == HYBRID) else 0
    if initial_params is not None:
        params = initial_params.copy()
        if params.feature_mode != feature_mode:
            raise ConfigError(
                f"resume checkpoint is {params.feature_mode} mode, "
                f"training requested {feature_mode}"
            )
    else:
        params = init_params(hp, ds.n_users, ds.n_items, ds.n_intervals,
                             feature_dim, feature_mode)

    subsample_rng = np.random.default_rng([hp.seed & _SEED_MASK, 0, 2, 0])

    def validation_bundle(eval_index: int):
        n_val = len(bundle.validation)
        if eval_subsample and n_val > eval_subsample:
            rng = (
                np.random.default_rng([hp.seed & _SEED_MASK, 0, 2, eval_index])
                if resample_eval else subsample_rng
            )
            chosen = rng.choice(n_val, size=eval_subsample, replace=False)
            return bundle.with_validation(bundle.validation[np.sort(chosen)])
        return bundle

    fixed_val = validation_bundle(0)

    best_params = params.copy()
    best_ndcg = float("-inf")
    best_epoch = start_epoch - 1
    history = []
    stats_log = []
    pool_cache: dict = {}

    def eval_now(eval_index: int):
        target = validation_bundle(eval_index) if resample_eval else fixed_val
        report = evaluate_split(params, features, target, n_list=[10],
                                part="validation", seed=hp.seed)
        return report.mean_f1[10], report.mean_ndcg[10]

    last_epoch = start_epoch - 1
    for epoch in range(start_epoch, start_epoch + hp.max_iters):
        last_epoch = epoch
        stats = ranking_epoch(params, features, ds, nbr, hp, epoch,
                              pool_cache=pool_cache, freeze_time=freeze_time)
        stats_log.append(stats)
        f1 = ndcg = None
        if eval_every and epoch % eval_every == 0 and len(bundle.validation):
            f1, ndcg = eval_now(epoch)
            if ndcg > best_ndcg:
                best_ndcg = ndcg
                best_epoch = epoch
                best_params = params.copy()
        history.append((epoch, stats.mean_l, f1, ndcg, stats.seconds * 1000.0))

    if best_ndcg == float("-inf"):
        # never evaluated: keep the last state
        best_params = params.copy()
        best_epoch = last_epoch
    return TrainResult(
        params=best_params,
        best_epoch=best_epoch,
        best_ndcg=(best_ndcg if best_ndcg != float("-inf") else float("nan")),
        history=history,
        final_params=params,
        epoch_stats=stats_log,
    )


# ---------------------------------------------------------------------------
# Exhaustive-pair objective and gradient (oracle path for small instances)
# ---------------------------------------------------------------------------

def _context_l_sum(s1, s2, qa, qb_array, lambda_c: float) -> float:
    """Sum of L over pairs (qa, qb) for a fixed context's score vectors."""
    if len(qb_array) == 0:
        return 0.0
    prod = s1 * s2
    a_diff = prod[qa] - prod[qb_array]
    b_diff = s1[qa] - s1[qb_array]
    c_diff = s2[qa] - s2[qb_array]
    return float(
        (_log_sigmoid(a_diff)
         + lambda_c * (_log_sigmoid(b_diff) + _log_sigmoid(c_diff))).sum()
    )


def exhaustive_objective(params: ModelParams, features, ds: Dataset,
                         nbr: NeighborIndex, lambda_c: float, lambda_r: float,
                         eta1: float, eta2: float, side: str) -> float:
    """Full (unsampled) ranking objective for one side's neighbor sets.

    Enumerates every pos-vs-neg, pos-vs-neighbor, and neighbor-vs-neg pair
    for each training positive. Written independently of the analytic
    gradient path so finite differences of this value check that path.
    """
    from .model import time_item_scores, user_item_scores

    total = 0.0
    all_items = np.arange(ds.n_items, dtype=np.int64)
    for p, q, r in ds.positives.tolist():
        excluded = np.union1d(ds.items_of_user(p), ds.items_in_interval(r))
        pool = np.setdiff1d(all_items, excluded)
        if len(pool) == 0:
            continue
        s1 = user_item_scores(params, features, p)
        s2 = time_item_scores(params, features, r)
        total += _context_l_sum(s1, s2, q, pool, lambda_c)
        members = nbr.user_side[q] if side == USER_SIDE else nbr.time_side[q]
        if len(members) == 0:
            continue
        total += eta1 * _context_l_sum(s1, s2, q, members, lambda_c)
        pool_minus = np.setdiff1d(pool, members)
        if len(pool_minus):
            prod = s1 * s2
            a_diff = prod[members][:, None] - prod[pool_minus][None, :]
            b_diff = s1[members][:, None] - s1[pool_minus][None, :]
            c_diff = s2[members][:, None] - s2[pool_minus][None, :]
            total += eta2 * float(
                (_log_sigmoid(a_diff)
                 + lambda_c * (_log_sigmoid(b_diff) + _log_sigmoid(c_diff))).sum()
            )
    return total - 0.5 * lambda_r * params.squared_norm()


def exhaustive_gradient(params: ModelParams, features, ds: Dataset,
                        nbr: NeighborIndex, lambda_c: float, lambda_r: float,
                        eta1: float, eta2: float, side: str) -> dict:
    """Analytic gradient of :func:`exhaustive_objective`, one block per matrix."""
    acc = GradAccumulator(params)
    all_items = np.arange(ds.n_items, dtype=np.int64)
    for p, q, r in ds.positives.tolist():
        excluded = np.union1d(ds.items_of_user(p), ds.items_in_interval(r))
        pool = np.setdiff1d(all_items, excluded)
        if len(pool) == 0:
            continue
        for neg in pool.tolist():
            pair_likelihood_grad(params, features, p, q, neg, r, lambda_c, acc)
        members = nbr.user_side[q] if side == USER_SIDE else nbr.time_side[q]
        if len(members) == 0:
            continue
        for mid in members.tolist():
            pair_likelihood_grad(params, features, p, q, mid, r, lambda_c, acc,
                                 weight=eta1)
        pool_minus = np.setdiff1d(pool, members)
        for mid in members.tolist():
            for neg in pool_minus.tolist():
                pair_likelihood_grad(params, features, p, mid, neg, r, lambda_c,
                                     acc, weight=eta2)
    grads = {
        "user_factors": acc.user.T - lambda_r * params.user_factors,
        "item_factors": acc.item.T - lambda_r * params.item_factors,
        "time_factors": acc.time.T - lambda_r * params.time_factors,
        "item_time_factors": acc.item_time.T - lambda_r * params.item_time_factors,
    }
    if params.feature_mode == HYBRID:
        grads["user_visual"] = acc.user_visual.T - lambda_r * params.user_visual
        grads["time_visual"] = acc.time_visual.T - lambda_r * params.time_visual
    return grads
