"""Factor matrices, preference scores, and the dense reconstruction objective.

The predictor multiplies two scores: how much the user likes the item
(user-item factors, optionally plus a visual preference term) and how well
the item fits the time interval (time-item factors, optionally plus a visual
term). Checkpoints serialize the six factor matrices as little-endian f32
row-major blocks behind a fixed header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, SplitBundle
from .errors import ConfigError, DataError, TrainingDivergedError

_SEED_MASK = (1 << 63) - 1

CHECKPOINT_MAGIC = b"VRCK"
CHECKPOINT_VERSION = 1

BASIC = "basic"
HYBRID = "hybrid"


@dataclass(frozen=True)
class Hyperparams:
    """Training weights and shapes; defaults follow the tuned values."""

    k1: int = 200
    k2: int = 200
    lambda_c: float = 0.01
    lambda_r: float = 1.5
    eta1: float = 0.1
    eta2: float = 0.01
    rho: int = 5
    batch_size: int = 256
    learn_rate: float = 0.01
    max_iters: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.k1 < 1 or self.k2 < 1:
            raise ConfigError("factor ranks k1 and k2 must be positive")
        if self.lambda_c < 0 or self.lambda_r < 0:
            raise ConfigError("lambda_c and lambda_r must be non-negative")
        if self.eta1 < 0 or self.eta2 < 0:
            raise ConfigError("eta1 and eta2 must be non-negative")
        if self.rho < 1:
            raise ConfigError("sampling rate rho must be a positive integer")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.learn_rate <= 0:
            raise ConfigError("learn_rate must be positive")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be non-negative")


class ModelParams:
    """The factor matrices, stored with one column per entity.

    user_factors (k1, P), item_factors (k1, Q), time_factors (k2, R),
    item_time_factors (k2, Q); in hybrid mode user_visual (D, P) and
    time_visual (D, R) project the per-item feature vectors into both scores.
    Scoring is read-only; mutation happens only inside the trainers.
    """

    def __init__(self, user_factors, item_factors, time_factors,
                 item_time_factors, user_visual=None, time_visual=None,
                 feature_mode: str = BASIC):
        if feature_mode not in (BASIC, HYBRID):
            raise ConfigError(f"unknown feature mode {feature_mode!r}")
        self.user_factors = np.ascontiguousarray(user_factors, dtype=np.float64)
        self.item_factors = np.ascontiguousarray(item_factors, dtype=np.float64)
        self.time_factors = np.ascontiguousarray(time_factors, dtype=np.float64)
        self.item_time_factors = np.ascontiguousarray(item_time_factors, dtype=np.float64)
        self.feature_mode = feature_mode
        if feature_mode == HYBRID:
            if user_visual is None or time_visual is None:
                raise ConfigError("hybrid mode requires user_visual and time_visual")
            self.user_visual = np.ascontiguousarray(user_visual, dtype=np.float64)
            self.time_visual = np.ascontiguousarray(time_visual, dtype=np.float64)
        else:
            self.user_visual = None
            self.time_visual = None
        self._check_shapes()

    def _check_shapes(self):
        if self.user_factors.shape[0] != self.item_factors.shape[0]:
            raise ConfigError("user and item factors disagree on k1")
        if self.time_factors.shape[0] != self.item_time_factors.shape[0]:
            raise ConfigError("time and item-time factors disagree on k2")
        if self.item_factors.shape[1] != self.item_time_factors.shape[1]:
            raise ConfigError("item factor matrices disagree on item count")
        if self.feature_mode == HYBRID:
            if self.user_visual.shape[0] != self.time_visual.shape[0]:
                raise ConfigError("visual matrices disagree on feature dim")
            if self.user_visual.shape[1] != self.n_users:
                raise ConfigError("user_visual shape mismatch")
            if self.time_visual.shape[1] != self.n_intervals:
                raise ConfigError("time_visual shape mismatch")

    @property
    def k1(self) -> int:
        return self.user_factors.shape[0]

    @property
    def k2(self) -> int:
        return self.time_factors.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_factors.shape[1]

    @property
    def n_items(self) -> int:
        return self.item_factors.shape[1]

    @property
    def n_intervals(self) -> int:
        return self.time_factors.shape[1]

    @property
    def feature_dim(self) -> int:
        return 0 if self.user_visual is None else self.user_visual.shape[0]

    def matrices(self) -> dict:
        """Named parameter blocks (hybrid mode includes the visual pair)."""
        out = {
            "user_factors": self.user_factors,
            "item_factors": self.item_factors,
            "time_factors": self.time_factors,
            "item_time_factors": self.item_time_factors,
        }
        if self.feature_mode == HYBRID:
            out["user_visual"] = self.user_visual
            out["time_visual"] = self.time_visual
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.user_factors.copy(),
            self.item_factors.copy(),
            self.time_factors.copy(),
            self.item_time_factors.copy(),
            None if self.user_visual is None else self.user_visual.copy(),
            None if self.time_visual is None else self.time_visual.copy(),
            self.feature_mode,
        )

    def squared_norm(self) -> float:
        return float(sum((m ** 2).sum() for m in self.matrices().values()))

    def item_scores(self, features, p: int, r: int):
        """Predicted scores for every item in context (p, r)."""
        return user_item_scores(self, features, p) * time_item_scores(self, features, r)


def init_params(hp: Hyperparams, n_users: int, n_items: int, n_intervals: int,
                feature_dim: int = 0, feature_mode: str = BASIC) -> ModelParams:
    """Draw all entries i.i.d. uniform in [-0.01, 0.01] from ``hp.seed``.

    The small symmetric range keeps the initial sigmoid arguments near zero.
    """
    rng = np.random.default_rng(hp.seed & _SEED_MASK)

    def draw(shape):
        return rng.uniform(-0.01, 0.01, size=shape)

    user_visual = time_visual = None
    if feature_mode == HYBRID:
        if feature_dim <= 0:
            raise ConfigError("hybrid mode requires a positive feature_dim")
        user_visual = draw((feature_dim, n_users))
        time_visual = draw((feature_dim, n_intervals))
    return ModelParams(
        draw((hp.k1, n_users)),
        draw((hp.k1, n_items)),
        draw((hp.k2, n_intervals)),
        draw((hp.k2, n_items)),
        user_visual,
        time_visual,
        feature_mode,
    )


def _require_features(params: ModelParams, features):
    if params.feature_mode == HYBRID:
        if features is None:
            raise ConfigError("hybrid mode scoring requires a feature matrix")
        if features.dim != params.feature_dim:
            raise ConfigError(
                f"feature dim {features.dim} does not match model {params.feature_dim}"
            )


def user_item_score(params: ModelParams, features, p: int, q: int) -> float:
    """How much user ``p`` likes item ``q`` (the first score of the product)."""
    if not 0 <= p < params.n_users or not 0 <= q < params.n_items:
        raise IndexError(f"user/item index out of range: ({p}, {q})")
    score = float(params.user_factors[:, p] @ params.item_factors[:, q])
    if params.feature_mode == HYBRID:
        _require_features(params, features)
        score += float(params.user_visual[:, p] @ features.vector(q))
    return score


def time_item_score(params: ModelParams, features, r: int, q: int) -> float:
    """How well item ``q`` fits interval ``r`` (the second score)."""
    if not 0 <= r < params.n_intervals or not 0 <= q < params.n_items:
        raise IndexError(f"time/item index out of range: ({r}, {q})")
    score = float(params.time_factors[:, r] @ params.item_time_factors[:, q])
    if params.feature_mode == HYBRID:
        _require_features(params, features)
        score += float(params.time_visual[:, r] @ features.vector(q))
    return score


def predict(params: ModelParams, features, p: int, q: int, r: int) -> float:
    """Composition of the two scores, not a re-derivation."""
    return user_item_score(params, features, p, q) * time_item_score(params, features, r, q)


def user_item_scores(params: ModelParams, features, p: int):
    """Vector of user-item scores over all items."""
    if not 0 <= p < params.n_users:
        raise IndexError(f"user index out of range: {p}")
    scores = params.user_factors[:, p] @ params.item_factors
    if params.feature_mode == HYBRID:
        _require_features(params, features)
        scores = scores + features.matrix @ params.user_visual[:, p]
    return scores


def time_item_scores(params: ModelParams, features, r: int):
    """Vector of time-item scores over all items."""
    if not 0 <= r < params.n_intervals:
        raise IndexError(f"time index out of range: {r}")
    scores = params.time_factors[:, r] @ params.item_time_factors
    if params.feature_mode == HYBRID:
        _require_features(params, features)
        scores = scores + features.matrix @ params.time_visual[:, r]
    return scores


# ---------------------------------------------------------------------------
# Dense reconstruction objective (diagnostic / comparison mode)
# ---------------------------------------------------------------------------

DENSE_CELL_LIMIT = 2_000_000


def _dense_scores(params: ModelParams, features):
    s1 = params.user_factors.T @ params.item_factors
    s2 = params.time_factors.T @ params.item_time_factors
    if params.feature_mode == HYBRID:
        _require_features(params, features)
        s1 = s1 + params.user_visual.T @ features.matrix.T
        s2 = s2 + params.time_visual.T @ features.matrix.T
    return s1, s2


def _dense_tensor(ds: Dataset):
    a = np.zeros((ds.n_users, ds.n_items, ds.n_intervals))
    if ds.n_positives:
        a[ds.positives[:, 0], ds.positives[:, 1], ds.positives[:, 2]] = 1.0
    return a


def _dense_pairs(ds: Dataset):
    b = np.zeros((ds.n_users, ds.n_items))
    c = np.zeros((ds.n_intervals, ds.n_items))
    if len(ds.user_item_pairs):
        b[ds.user_item_pairs[:, 0], ds.user_item_pairs[:, 1]] = 1.0
    if len(ds.interval_item_pairs):
        c[ds.interval_item_pairs[:, 0], ds.interval_item_pairs[:, 1]] = 1.0
    return b, c


def _check_dense_limit(ds: Dataset, dense_limit: int):
    cells = ds.n_users * ds.n_items * ds.n_intervals
    if cells > dense_limit:
        raise ConfigError(
            f"dense reconstruction needs {cells} cells (> limit {dense_limit}); "
            "use the pairwise ranking trainers instead"
        )


def mse_objective(params: ModelParams, features, ds: Dataset,
                  lambda_c: float, lambda_r: float,
                  dense_limit: int = DENSE_CELL_LIMIT) -> float:
    """Squared reconstruction loss of the tensor and both coupled matrices.

    half * ||A - Ahat||^2 + (lambda_c/2) * (||B - Bhat||^2 + ||C - Chat||^2)
    + (lambda_r/2) * ||params||^2, evaluated densely (desk scale only).
    """
    _check_dense_limit(ds, dense_limit)
    s1, s2 = _dense_scores(params, features)
    a = _dense_tensor(ds)
    b, c = _dense_pairs(ds)
    a_hat = np.einsum("pq,rq->pqr", s1, s2)
    value = 0.5 * ((a - a_hat) ** 2).sum()
    value += 0.5 * lambda_c * (((b - s1) ** 2).sum() + ((c - s2) ** 2).sum())
    value += 0.5 * lambda_r * params.squared_norm()
    return float(value)


def mse_gradients(params: ModelParams, features, ds: Dataset,
                  lambda_c: float, lambda_r: float,
                  dense_limit: int = DENSE_CELL_LIMIT) -> dict:
    """Gradient blocks of :func:`mse_objective` keyed like ``matrices()``."""
    _check_dense_limit(ds, dense_limit)
    s1, s2 = _dense_scores(params, features)
    a = _dense_tensor(ds)
    b, c = _dense_pairs(ds)
    a_hat = np.einsum("pq,rq->pqr", s1, s2)
    err = a_hat - a
    g1 = np.einsum("pqr,rq->pq", err, s2) + lambda_c * (s1 - b)
    g2 = np.einsum("pqr,pq->rq", err, s1) + lambda_c * (s2 - c)
    grads = {
        "user_factors": params.item_factors @ g1.T + lambda_r * params.user_factors,
        "item_factors": params.user_factors @ g1 + lambda_r * params.item_factors,
        "time_factors": params.item_time_factors @ g2.T + lambda_r * params.time_factors,
        "item_time_factors": params.time_factors @ g2 + lambda_r * params.item_time_factors,
    }
    if params.feature_mode == HYBRID:
        f_cols = features.matrix.T
        grads["user_visual"] = f_cols @ g1.T + lambda_r * params.user_visual
        grads["time_visual"] = f_cols @ g2.T + lambda_r * params.time_visual
    return grads


def train_mse(bundle: SplitBundle, features, hp: Hyperparams,
              feature_mode: str = BASIC, dense_limit: int = DENSE_CELL_LIMIT):
    """Full-batch gradient descent on :func:`mse_objective`.

    Returns (params, history) where history rows are (iteration, objective).
    Kept as a comparison mode; the ranking trainers are the default.
    """
    ds = bundle.train
    feature_dim = features.dim if (features is not None and feature_mode == HYBRID) else 0
    params = init_params(hp, ds.n_users, ds.n_items, ds.n_intervals,
                         feature_dim, feature_mode)
    history = [(0, mse_objective(params, features, ds, hp.lambda_c, hp.lambda_r,
                                 dense_limit))]
    blocks = params.matrices()
    for it in range(1, hp.max_iters + 1):
        grads = mse_gradients(params, features, ds, hp.lambda_c, hp.lambda_r,
                              dense_limit)
        for name, block in blocks.items():
            block -= hp.learn_rate * grads[name]
            if not np.isfinite(block).all() or np.abs(block).max() > 1e6:
                raise TrainingDivergedError(
                    f"{name} diverged at iteration {it}; lower the learning rate"
                )
        history.append((it, mse_objective(params, features, ds, hp.lambda_c,
                                          hp.lambda_r, dense_limit)))
    return params, history


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: ModelParams, iteration: int,
                    model_kind: str = "vra-aplr") -> None:
    """Serialize header + the six matrices (f32 row-major, basic mode skips
    the visual pair by recording a zero feature dim)."""
    kind_bytes = model_kind.encode("utf-8")
    if len(kind_bytes) > 16:
        raise ConfigError(f"model kind too long for checkpoint header: {model_kind!r}")
    header = struct.pack(
        "<4sI16sIIIIIIII",
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        kind_bytes.ljust(16, b"\0"),
        params.k1,
        params.k2,
        params.feature_dim,
        params.n_users,
        params.n_items,
        params.n_intervals,
        1 if params.feature_mode == HYBRID else 0,
        iteration,
    )
    out = bytearray(header)
    order = ["user_factors", "item_factors", "time_factors", "item_time_factors"]
    if params.feature_mode == HYBRID:
        order += ["user_visual", "time_visual"]
    blocks = params.matrices()
    for name in order:
        out += np.ascontiguousarray(blocks[name], dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_checkpoint(path):
    """Load a checkpoint; returns (ModelParams, meta dict).

    Baseline checkpoints (see ``baselines``) carry other kinds and must be
    loaded with ``baselines.load_baseline_checkpoint``.
    """
    raw = Path(path).read_bytes()
    meta = peek_checkpoint(raw, path)
    if meta["model_kind"] in BASELINE_KINDS:
        raise ConfigError(
            f"{path} holds a {meta['model_kind']} baseline checkpoint; "
            "use the baseline loader"
        )
    k1, k2, d = meta["k1"], meta["k2"], meta["feature_dim"]
    n_users, n_items, n_intervals = meta["P"], meta["Q"], meta["R"]
    shapes = [(k1, n_users), (k1, n_items), (k2, n_intervals), (k2, n_items)]
    if meta["feature_mode"] == HYBRID:
        shapes += [(d, n_users), (d, n_intervals)]
    arrays, off = _read_blocks(raw, _HEADER_SIZE, shapes, path)
    if off != len(raw):
        raise DataError(f"{path}: trailing bytes in checkpoint")
    visual = arrays[4:] if meta["feature_mode"] == HYBRID else [None, None]
    params = ModelParams(arrays[0], arrays[1], arrays[2], arrays[3],
                         visual[0], visual[1], meta["feature_mode"])
    return params, meta


_HEADER_SIZE = 4 + 4 + 16 + 8 * 4

BASELINE_KINDS = ("bpr", "vbpr", "wbpr", "cplr")


def peek_checkpoint(raw: bytes, path="checkpoint") -> dict:
    """Decode a checkpoint header without reading the matrix blocks."""
    if len(raw) < _HEADER_SIZE:
        raise DataError(f"{path}: truncated checkpoint header")
    magic, version, kind, k1, k2, d, n_users, n_items, n_intervals, mode, iteration = \
        struct.unpack_from("<4sI16sIIIIIIII", raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    return {
        "model_kind": kind.rstrip(b"\0").decode("utf-8"),
        "k1": k1,
        "k2": k2,
        "feature_dim": d,
        "P": n_users,
        "Q": n_items,
        "R": n_intervals,
        "feature_mode": HYBRID if mode else BASIC,
        "iteration": iteration,
    }


def _read_blocks(raw, offset, shapes, path):
    arrays = []
    for shape in shapes:
        count = shape[0] * shape[1]
        end = offset + 4 * count
        if end > len(raw):
            raise DataError(f"{path}: checkpoint shorter than its header implies")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        arrays.append(arr.astype(np.float64).reshape(shape))
        offset = end
    return arrays, offset


def check_checkpoint_shapes(meta: dict, ds: Dataset) -> None:
    """Raise when a checkpoint disagrees with the dataset it is applied to."""
    if meta["P"] != ds.n_users or meta["Q"] != ds.n_items:
        raise DataError(
            f"checkpoint is for P={meta['P']}, Q={meta['Q']} but dataset has "
            f"P={ds.n_users}, Q={ds.n_items}"
        )
    if meta["model_kind"] not in BASELINE_KINDS and meta["R"] != ds.n_intervals:
        raise DataError(
            f"checkpoint is for R={meta['R']} but dataset has R={ds.n_intervals}"
        )


def write_history_csv(path, rows) -> None:
    """Write training history rows: epoch, mean_L, f1@10, ndcg@10, wallclock."""
    lines = ["epoch,mean_L,f1@10,ndcg@10,wallclock_ms"]
    for row in rows:
        epoch, mean_l, f1, ndcg, ms = row
        f1_s = "" if f1 is None else f"{f1:.6f}"
        ndcg_s = "" if ndcg is None else f"{ndcg:.6f}"
        lines.append(f"{epoch},{mean_l:.6f},{f1_s},{ndcg_s},{ms:.1f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
