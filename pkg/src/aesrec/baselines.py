"""Reference pairwise rankers on the user-item matrix: BPR, VBPR, WBPR, CPLR.

All four share the split data, the evaluation code, and the mini-batch loop
with the same regularization scheduling as the tensor trainer; they differ
only in scoring (VBPR adds a visual term on the CNN feature block) and in
how negatives are drawn (WBPR popularity-proportional, CPLR three-tier with
co-purchase neighbors). They are time-free: scores ignore the interval.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import Dataset, SplitBundle
from .errors import ConfigError, DataError, TrainingDivergedError
from .learning import (
    NEIGHBOR_VS_NEG,
    POS_VS_NEG,
    POS_VS_NEIGHBOR,
    RELATIONS,
    TrainingPair,
    UnlabeledPool,
    _log_sigmoid,
    _record_rng,
    _shuffle_rng,
)
from .model import CHECKPOINT_MAGIC, CHECKPOINT_VERSION, Hyperparams

_SEED_MASK = (1 << 63) - 1

BASELINE_KINDS = ("bpr", "vbpr", "wbpr", "cplr")


class BaselineParams:
    """Latent factors of a matrix ranker, plus optional kind-specific state.

    ``user_factors`` is (K, P) and ``item_factors`` (K, Q); VBPR carries a
    visual projection (dim_cnn, P) applied to the CNN block of the feature
    matrix; WBPR carries the per-item positive count used to bias negative
    sampling.
    """

    def __init__(self, kind: str, user_factors, item_factors,
                 visual_factors=None, popularity=None):
        if kind not in BASELINE_KINDS:
            raise ConfigError(f"unknown baseline kind {kind!r}")
        self.kind = kind
        self.user_factors = np.ascontiguousarray(user_factors, dtype=np.float64)
        self.item_factors = np.ascontiguousarray(item_factors, dtype=np.float64)
        self.visual_factors = (
            None if visual_factors is None
            else np.ascontiguousarray(visual_factors, dtype=np.float64)
        )
        self.popularity = (
            None if popularity is None
            else np.ascontiguousarray(popularity, dtype=np.int64)
        )
        if self.user_factors.shape[0] != self.item_factors.shape[0]:
            raise ConfigError("user and item factors disagree on rank")

    @property
    def rank(self) -> int:
        return self.user_factors.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_factors.shape[1]

    @property
    def n_items(self) -> int:
        return self.item_factors.shape[1]

    def copy(self) -> "BaselineParams":
        return BaselineParams(
            self.kind,
            self.user_factors.copy(),
            self.item_factors.copy(),
            None if self.visual_factors is None else self.visual_factors.copy(),
            None if self.popularity is None else self.popularity.copy(),
        )

    def score(self, features, p: int, q: int) -> float:
        value = float(self.user_factors[:, p] @ self.item_factors[:, q])
        if self.visual_factors is not None:
            value += float(self.visual_factors[:, p] @ features.cnn_block()[q])
        return value

    def item_scores(self, features, p: int, r: int = 0):
        """Scores over all items; the interval is ignored (time-free model)."""
        scores = self.user_factors[:, p] @ self.item_factors
        if self.visual_factors is not None:
            scores = scores + features.cnn_block() @ self.visual_factors[:, p]
        return scores


def init_baseline(hp: Hyperparams, kind: str, ds: Dataset, features=None) -> BaselineParams:
    """Uniform [-0.01, 0.01] init; K defaults to k1 for parity with the
    tensor model. VBPR requires features; WBPR counts training positives."""
    rng = np.random.default_rng(hp.seed & _SEED_MASK)

    def draw(shape):
        return rng.uniform(-0.01, 0.01, size=shape)

    visual = None
    if kind == "vbpr":
        if features is None:
            raise ConfigError("vbpr requires a feature matrix")
        visual = draw((features.dim_cnn, ds.n_users))
    popularity = None
    if kind == "wbpr":
        popularity = np.zeros(ds.n_items, dtype=np.int64)
        pairs = ds.user_item_pairs
        counts = np.bincount(pairs[:, 1], minlength=ds.n_items)
        popularity[: len(counts)] = counts
    return BaselineParams(
        kind,
        draw((hp.k1, ds.n_users)),
        draw((hp.k1, ds.n_items)),
        visual,
        popularity,
    )


class MatrixPool(UnlabeledPool):
    """Items not purchased by the user (no interval restriction)."""

    def __init__(self, ds: Dataset, p: int):
        if not 0 <= p < ds.n_users:
            raise IndexError(f"user index out of range: {p}")
        self.excluded = ds.items_of_user(p)
        self.n_items = ds.n_items
        self.size = self.n_items - len(self.excluded)
        if self.size <= 0:
            raise DataError(f"user {p} purchased every item; empty pool")
        self._members = None


def bpr_step(params: BaselineParams, p: int, q_pos: int, q_neg: int,
             learn_rate: float, lambda_r: float) -> BaselineParams:
    """Classic single-pair update: ascend ln sig(x_pos - x_neg) minus the
    L2 penalty on the three touched columns. Mutates and returns params."""
    u = params.user_factors[:, p].copy()
    va = params.item_factors[:, q_pos].copy()
    vb = params.item_factors[:, q_neg].copy()
    x = float(u @ va - u @ vb)
    g = float(expit(-x))
    params.user_factors[:, p] += learn_rate * (g * (va - vb) - lambda_r * u)
    params.item_factors[:, q_pos] += learn_rate * (g * u - lambda_r * va)
    params.item_factors[:, q_neg] += learn_rate * (-g * u - lambda_r * vb)
    return params


def vbpr_score(params: BaselineParams, features, p: int, q: int) -> float:
    """Latent dot product plus the user's visual affinity for the CNN block."""
    return params.score(features, p, q)


def wbpr_sample_negative(popularity, pool, rng, cumulative=None) -> int:
    """Draw a pool item with probability proportional to its count + 1.

    The +1 smoothing keeps zero-count items sampleable. Draws from the
    global popularity law and rejects non-pool items.
    """
    popularity = np.asarray(popularity)
    if cumulative is None:
        cumulative = np.cumsum(popularity + 1.0)
    total = cumulative[-1]
    for _ in range(100_000):
        cand = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
        if cand in pool:
            return cand
    # fall back to exact weighted choice over the pool
    members = pool.members()
    weights = popularity[members] + 1.0
    return int(rng.choice(members, p=weights / weights.sum()))


def cplr_pairs(ds: Dataset, co_nbr, p: int, q: int, rho: int, rng,
               pool: MatrixPool | None = None):
    """Three-tier pairs with the co-purchase neighbor set only (time-free).

    Same draw scheme as the tensor sampler: rho uniform negatives, rho
    neighbor draws shared by the two neighbor relations, and rho negatives
    from the pool minus the neighbor set.
    """
    if pool is None:
        try:
            pool = MatrixPool(ds, p)
        except DataError:
            return []
    pairs = [
        TrainingPair(p, 0, q, None, pool.sample(rng), POS_VS_NEG)
        for _ in range(rho)
    ]
    members = co_nbr[q]
    if len(members) == 0:
        return pairs
    mids = [int(members[rng.integers(len(members))]) for _ in range(rho)]
    for mid in mids:
        pairs.append(TrainingPair(p, 0, q, mid, None, POS_VS_NEIGHBOR))
    for mid in mids:
        neg = pool.sample_excluding(rng, members)
        if neg is None:
            continue
        pairs.append(TrainingPair(p, 0, q, mid, neg, NEIGHBOR_VS_NEG))
    return pairs


def _accumulate_matrix_pairs(params: BaselineParams, features, arrays,
                             acc_user, acc_item, acc_visual) -> float:
    """Vectorized gradient of the weighted log-sigmoid margins; returns the
    weighted L sum."""
    p_arr, qa_arr, qb_arr, w_arr = arrays
    if len(p_arr) == 0:
        return 0.0
    u_cols = params.user_factors[:, p_arr]
    va = params.item_factors[:, qa_arr]
    vb = params.item_factors[:, qb_arr]
    x = np.einsum("kn,kn->n", u_cols, va) - np.einsum("kn,kn->n", u_cols, vb)
    if params.visual_factors is not None:
        cnn = features.cnn_block()
        fa = cnn[qa_arr]
        fb = cnn[qb_arr]
        mv = params.visual_factors[:, p_arr].T
        x = x + np.einsum("nd,nd->n", mv, fa - fb)
    g = w_arr * expit(-x)
    np.add.at(acc_user, p_arr, g[:, None] * (va.T - vb.T))
    np.add.at(acc_item, qa_arr, g[:, None] * u_cols.T)
    np.add.at(acc_item, qb_arr, -(g[:, None] * u_cols.T))
    if params.visual_factors is not None:
        np.add.at(acc_visual, p_arr, g[:, None] * (fa - fb))
    return float(np.dot(w_arr, _log_sigmoid(x)))


def _baseline_pair_arrays(pairs, weights):
    n = len(pairs)
    p_arr = np.empty(n, dtype=np.int64)
    qa_arr = np.empty(n, dtype=np.int64)
    qb_arr = np.empty(n, dtype=np.int64)
    w_arr = np.empty(n)
    for i, pair in enumerate(pairs):
        qa, qb = pair.ranked_items()
        p_arr[i] = pair.p
        qa_arr[i] = qa
        qb_arr[i] = qb
        w_arr[i] = weights[pair.relation]
    return p_arr, qa_arr, qb_arr, w_arr


@dataclass
class BaselineEpochStats:
    epoch: int
    mean_l: float
    n_records: int
    skipped_empty_pool: int
    pair_counts: dict
    seconds: float


def baseline_epoch(params: BaselineParams, features, ds: Dataset,
                   hp: Hyperparams, epoch: int, co_nbr=None,
                   pool_cache: dict | None = None, replay=None,
                   pair_log: list | None = None) -> BaselineEpochStats:
    """One shuffled pass over the distinct (user, item) training pairs.

    Uses the same per-epoch/per-record RNG substreams and the same per-batch
    regularization scaling as the tensor trainer. ``replay`` bypasses
    sampling and consumes recorded pair-array batches (for oracle
    equivalence checks against the tensor trainer's pair stream).
    """
    start = time.perf_counter()
    if pool_cache is None:
        pool_cache = {}
    weights = {POS_VS_NEG: 1.0, POS_VS_NEIGHBOR: hp.eta1, NEIGHBOR_VS_NEG: hp.eta2}
    records = ds.user_item_pairs
    n_records = len(records)
    if n_records == 0:
        raise DataError("no training pairs to iterate")
    if params.kind == "cplr" and co_nbr is None and replay is None:
        raise ConfigError("cplr needs co-purchase neighbor sets")
    cumulative = None
    if params.kind == "wbpr":
        cumulative = np.cumsum(params.popularity + 1.0)

    acc_user = np.zeros((params.n_users, params.rank))
    acc_item = np.zeros((params.n_items, params.rank))
    acc_visual = (
        np.zeros((params.visual_factors.shape[1], params.visual_factors.shape[0]))
        if params.visual_factors is not None else None
    )
    weighted_l = 0.0
    records_done = 0
    skipped_pool = 0
    pair_counts = {rel: 0 for rel in RELATIONS}

    if replay is not None:
        batches = [(entry["user"], entry["batch_records"]) for entry in replay]
    else:
        order = np.arange(n_records)
        _shuffle_rng(hp.seed, epoch).shuffle(order)
        batches = []
        for batch_start in range(0, n_records, hp.batch_size):
            batch = order[batch_start: batch_start + hp.batch_size]
            pairs: list[TrainingPair] = []
            for rec_index in batch.tolist():
                p, q = records[rec_index]
                if p not in pool_cache:
                    try:
                        pool_cache[p] = MatrixPool(ds, p)
                    except DataError:
                        pool_cache[p] = None
                pool = pool_cache[p]
                if pool is None:
                    skipped_pool += 1
                    continue
                rng = _record_rng(hp.seed, epoch, rec_index)
                if params.kind == "cplr":
                    new_pairs = cplr_pairs(ds, co_nbr, p, q, hp.rho, rng, pool=pool)
                elif params.kind == "wbpr":
                    new_pairs = [
                        TrainingPair(
                            p, 0, q, None,
                            wbpr_sample_negative(params.popularity, pool, rng,
                                                 cumulative),
                            POS_VS_NEG,
                        )
                        for _ in range(hp.rho)
                    ]
                else:
                    new_pairs = [
                        TrainingPair(p, 0, q, None, pool.sample(rng), POS_VS_NEG)
                        for _ in range(hp.rho)
                    ]
                pairs.extend(new_pairs)
                records_done += 1
            for pair in pairs:
                pair_counts[pair.relation] += 1
            arrays = _baseline_pair_arrays(pairs, weights)
            if pair_log is not None:
                pair_log.append({"user": arrays, "batch_records": len(batch)})
            batches.append((arrays, len(batch)))

    for arrays, batch_records in batches:
        if replay is not None:
            if len(arrays) == 5:  # tensor-trainer log: (p, r, qa, qb, w)
                arrays = (arrays[0], arrays[2], arrays[3], arrays[4])
            records_done += batch_records
        acc_user[:] = 0.0
        acc_item[:] = 0.0
        if acc_visual is not None:
            acc_visual[:] = 0.0
        weighted_l += _accumulate_matrix_pairs(
            params, features, arrays, acc_user, acc_item, acc_visual
        )
        reg = hp.lambda_r * batch_records / n_records
        lr = hp.learn_rate
        params.user_factors += lr * (acc_user.T - reg * params.user_factors)
        params.item_factors += lr * (acc_item.T - reg * params.item_factors)
        if params.visual_factors is not None:
            params.visual_factors += lr * (acc_visual.T - reg * params.visual_factors)
        for name, block in (("user", params.user_factors),
                            ("item", params.item_factors)):
            if not np.isfinite(block).all() or np.abs(block).max() > 1e6:
                raise TrainingDivergedError(
                    f"baseline {name} factors diverged during epoch {epoch}"
                )

    mean_l = weighted_l / records_done if records_done else 0.0
    return BaselineEpochStats(
        epoch=epoch,
        mean_l=mean_l,
        n_records=records_done,
        skipped_empty_pool=skipped_pool,
        pair_counts=pair_counts,
        seconds=time.perf_counter() - start,
    )


@dataclass
class BaselineTrainResult:
    params: BaselineParams
    best_epoch: int
    best_ndcg: float
    history: list = field(default_factory=list)
    final_params: BaselineParams | None = None


def train_baseline(bundle: SplitBundle, features, hp: Hyperparams, kind: str,
                   eval_every: int = 1, eval_subsample: int = 1000) -> BaselineTrainResult:
    """Epoch loop mirroring the tensor trainer's evaluation protocol."""
    from .evaluate import evaluate_split
    from .neighbors import user_graph_neighbors

    ds = bundle.train
    params = init_baseline(hp, kind, ds, features)
    co_nbr = user_graph_neighbors(ds) if kind == "cplr" else None

    n_val = len(bundle.validation)
    if eval_subsample and n_val > eval_subsample:
        rng = np.random.default_rng([hp.seed & _SEED_MASK, 0, 2, 0])
        chosen = np.sort(rng.choice(n_val, size=eval_subsample, replace=False))
        eval_bundle = bundle.with_validation(bundle.validation[chosen])
    else:
        eval_bundle = bundle

    best_params = params.copy()
    best_ndcg = float("-inf")
    best_epoch = 0
    history = []
    pool_cache: dict = {}
    for epoch in range(1, hp.max_iters + 1):
        stats = baseline_epoch(params, features, ds, hp, epoch, co_nbr=co_nbr,
                               pool_cache=pool_cache)
        f1 = ndcg = None
        if eval_every and epoch % eval_every == 0 and len(bundle.validation):
            report = evaluate_split(params, features, eval_bundle, n_list=[10],
                                    part="validation", seed=hp.seed)
            f1, ndcg = report.mean_f1[10], report.mean_ndcg[10]
            if ndcg > best_ndcg:
                best_ndcg = ndcg
                best_epoch = epoch
                best_params = params.copy()
        history.append((epoch, stats.mean_l, f1, ndcg, stats.seconds * 1000.0))

    if best_ndcg == float("-inf"):
        best_params = params.copy()
        best_epoch = hp.max_iters
    return BaselineTrainResult(
        params=best_params,
        best_epoch=best_epoch,
        best_ndcg=(best_ndcg if best_ndcg != float("-inf") else float("nan")),
        history=history,
        final_params=params,
    )


# ---------------------------------------------------------------------------
# Checkpoints (same container as the tensor model, kind recorded in header)
# ---------------------------------------------------------------------------

def save_baseline_checkpoint(path, params: BaselineParams, iteration: int) -> None:
    visual_dim = 0 if params.visual_factors is None else params.visual_factors.shape[0]
    header = struct.pack(
        "<4sI16sIIIIIIII",
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        params.kind.encode("utf-8").ljust(16, b"\0"),
        params.rank,
        0,
        visual_dim,
        params.n_users,
        params.n_items,
        0,
        0,
        iteration,
    )
    out = bytearray(header)
    out += np.ascontiguousarray(params.user_factors, dtype="<f4").tobytes()
    out += np.ascontiguousarray(params.item_factors, dtype="<f4").tobytes()
    if params.visual_factors is not None:
        out += np.ascontiguousarray(params.visual_factors, dtype="<f4").tobytes()
    if params.popularity is not None:
        out += np.ascontiguousarray(params.popularity, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_baseline_checkpoint(path):
    from .model import _HEADER_SIZE, _read_blocks, peek_checkpoint

    raw = Path(path).read_bytes()
    meta = peek_checkpoint(raw, path)
    kind = meta["model_kind"]
    if kind not in BASELINE_KINDS:
        raise ConfigError(f"{path} is not a baseline checkpoint (kind {kind!r})")
    rank, visual_dim = meta["k1"], meta["feature_dim"]
    n_users, n_items = meta["P"], meta["Q"]
    shapes = [(rank, n_users), (rank, n_items)]
    if kind == "vbpr":
        shapes.append((visual_dim, n_users))
    if kind == "wbpr":
        shapes.append((1, n_items))
    arrays, off = _read_blocks(raw, _HEADER_SIZE, shapes, path)
    if off != len(raw):
        raise DataError(f"{path}: trailing bytes in checkpoint")
    visual = arrays[2] if kind == "vbpr" else None
    popularity = (
        arrays[-1].reshape(-1).astype(np.int64) if kind == "wbpr" else None
    )
    params = BaselineParams(kind, arrays[0], arrays[1], visual, popularity)
    return params, meta
