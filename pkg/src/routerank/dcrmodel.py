"""Deep-cross-recurrent route scorer.

Architecture: sparse request fields (day-of-week, hour, user cluster) are
embedded and concatenated with normalized dense route features and the user
profile vector to form x0; x0 feeds a stack of cross layers and a ReLU MLP
(parallel branches by default); per-link sequence features (link-id embedding
plus numeric step attributes) are projected, ReLU-activated and run through a
masked LSTM; the concatenated branch outputs pass through a final affine +
sigmoid to a score in (0, 1). Trained pointwise with binary cross-entropy and
Adam. The no-sequence ablation is the same model with `use_sequence=False`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .artifacts import decode_array, encode_array, read_json, write_json
from .evalkit import auc as auc_metric
from .ndiff import (Adam, BceLoss, CrossLayer, Embedding, Linear, MaskedLstm,
                    NonFiniteGradientError, ReLU)
from .ndiff.layers import zero_grads

N_ROUTE_DENSE = 23
N_PROFILE = 8
N_DOW = 7
N_HOUR = 24
SEQ_NUMERIC_COLS = 4          # compact storage: length, lanes, class idx, level idx
SEQ_STEP_DIM = 10             # expanded: length, lanes, class one-hot(4), level one-hot(4)


class TrainingAborted(RuntimeError):
    """Non-finite loss/gradient during training, with epoch/batch context."""


@dataclass
class DcrConfig:
    link_embed_dim: int = 32
    seq_proj_dim: int = 128
    lstm_hidden: int = 256
    cross_layers: int = 2
    deep_hidden: tuple[int, ...] = (128, 64)
    sparse_embed_dim: int = 8
    lr: float = 0.0001
    batch_size: int = 256
    epochs: int = 20
    max_seq_len: int = 64
    n_clusters: int = 6
    use_sequence: bool = True
    early_stop_patience: int = 5
    combine: str = "parallel"   # or "stacked"
    bucket_batches: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("link_embed_dim", "seq_proj_dim", "lstm_hidden", "cross_layers",
                     "sparse_embed_dim", "batch_size", "epochs", "max_seq_len",
                     "n_clusters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if any(h < 1 for h in self.deep_hidden):
            raise ValueError("deep_hidden sizes must be >= 1")
        if self.combine not in ("parallel", "stacked"):
            raise ValueError(f"unknown combine mode {self.combine!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deep_hidden"] = list(self.deep_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DcrConfig":
        kwargs = dict(d)
        if "deep_hidden" in kwargs:
            kwargs["deep_hidden"] = tuple(kwargs["deep_hidden"])
        unknown = set(kwargs) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**kwargs)


@dataclass
class FeatureDataset:
    """Column store of (request, candidate) rows with ragged link sequences
    (CSR layout: seq_offsets[i]..seq_offsets[i+1] slices the flat arrays)."""

    request_id: np.ndarray
    cand_index: np.ndarray
    user_id: np.ndarray
    dense: np.ndarray            # [N, N_ROUTE_DENSE]
    profile: np.ndarray          # [N, N_PROFILE]
    dow: np.ndarray
    hour: np.ndarray
    cluster: np.ndarray
    y: np.ndarray
    ir: np.ndarray
    eta: np.ndarray
    distance: np.ndarray
    seq_ids: np.ndarray          # int64 [total_steps] raw network link ids
    seq_cols: np.ndarray         # float64 [total_steps, SEQ_NUMERIC_COLS]
    seq_offsets: np.ndarray      # int64 [N+1]

    def __len__(self) -> int:
        return len(self.request_id)

    @property
    def seq_lengths(self) -> np.ndarray:
        return self.seq_offsets[1:] - self.seq_offsets[:-1]

    def subset(self, rows) -> "FeatureDataset":
        rows = np.asarray(rows, dtype=np.int64)
        starts = self.seq_offsets[rows]
        lens = self.seq_offsets[rows + 1] - starts
        new_off = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lens, out=new_off[1:])
        total = int(new_off[-1])
        flat = (np.repeat(starts, lens)
                + (np.arange(total) - np.repeat(new_off[:-1], lens)))
        return FeatureDataset(
            request_id=self.request_id[rows], cand_index=self.cand_index[rows],
            user_id=self.user_id[rows], dense=self.dense[rows],
            profile=self.profile[rows], dow=self.dow[rows], hour=self.hour[rows],
            cluster=self.cluster[rows], y=self.y[rows], ir=self.ir[rows],
            eta=self.eta[rows], distance=self.distance[rows],
            seq_ids=self.seq_ids[flat], seq_cols=self.seq_cols[flat],
            seq_offsets=new_off,
        )


def split_requests(request_ids, seed: int, ratios=(0.8, 0.1, 0.1)) -> dict[int, str]:
    """Deterministic train/val/test assignment per request (all candidates of
    one trip stay together)."""
    uniq = sorted(int(r) for r in set(request_ids))
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(uniq))
    n_train = int(round(len(uniq) * ratios[0]))
    n_val = int(round(len(uniq) * ratios[1]))
    out: dict[int, str] = {}
    for pos, idx in enumerate(perm):
        if pos < n_train:
            part = "train"
        elif pos < n_train + n_val:
            part = "val"
        else:
            part = "test"
        out[uniq[idx]] = part
    return out


@dataclass
class Normalizer:
    dense_mean: np.ndarray
    dense_std: np.ndarray
    len_mean: float
    len_std: float
    lanes_mean: float
    lanes_std: float

    @classmethod
    def fit(cls, ds: FeatureDataset) -> "Normalizer":
        dense = np.concatenate([ds.dense, ds.profile], axis=1)
        mean = dense.mean(axis=0)
        std = dense.std(axis=0)
        std[std == 0.0] = 1.0
        lens = ds.seq_cols[:, 0]
        lanes = ds.seq_cols[:, 1]
        l_std = float(lens.std()) or 1.0
        lane_std = float(lanes.std()) or 1.0
        return cls(dense_mean=mean, dense_std=std,
                   len_mean=float(lens.mean()) if len(lens) else 0.0,
                   len_std=l_std, lanes_mean=float(lanes.mean()) if len(lanes) else 0.0,
                   lanes_std=lane_std)


class DcrNet:
    """Fixed-topology forward/backward composition of ndiff layers."""

    def __init__(self, config: DcrConfig, vocab_size: int, rng: np.random.Generator):
        cfg = config
        self.config = cfg
        self.vocab_size = vocab_size
        E = cfg.sparse_embed_dim
        self.x0_dim = 3 * E + N_ROUTE_DENSE + N_PROFILE

        self.emb_dow = Embedding(N_DOW, E, rng, "emb_dow")
        self.emb_hour = Embedding(N_HOUR, E, rng, "emb_hour")
        self.emb_cluster = Embedding(cfg.n_clusters, E, rng, "emb_cluster")
        self.cross = [CrossLayer(self.x0_dim, rng, f"cross{i}")
                      for i in range(cfg.cross_layers)]
        self.deep_lin: list[Linear] = []
        self.deep_act: list[ReLU] = []
        d_in = self.x0_dim
        for i, h in enumerate(cfg.deep_hidden):
            self.deep_lin.append(Linear(d_in, h, rng, f"deep{i}"))
            self.deep_act.append(ReLU())
            d_in = h
        deep_out = d_in

        head_in = deep_out if cfg.combine == "stacked" else self.x0_dim + deep_out
        if cfg.use_sequence:
            self.emb_link = Embedding(vocab_size + 1, cfg.link_embed_dim, rng,
                                      "emb_link", padding_id=vocab_size)
            self.proj = Linear(cfg.link_embed_dim + SEQ_STEP_DIM, cfg.seq_proj_dim,
                               rng, "seq_proj")
            self.proj_act = ReLU()
            self.lstm = MaskedLstm(cfg.seq_proj_dim, cfg.lstm_hidden, rng, "lstm")
            head_in += cfg.lstm_hidden
        self.head = Linear(head_in, 1, rng, "head")
        self._parts_dims: list[int] = []

    def params(self):
        ps = (self.emb_dow.params() + self.emb_hour.params() + self.emb_cluster.params())
        for c in self.cross:
            ps += c.params()
        for lin in self.deep_lin:
            ps += lin.params()
        if self.config.use_sequence:
            ps += self.emb_link.params() + self.proj.params() + self.lstm.params()
        ps += self.head.params()
        return ps

    def forward(self, batch: dict) -> np.ndarray:
        cfg = self.config
        e = [self.emb_dow.forward(batch["dow"]),
             self.emb_hour.forward(batch["hour"]),
             self.emb_cluster.forward(batch["cluster"])]
        x0 = np.concatenate(e + [batch["dense"]], axis=1)
        self._x0 = x0

        c = x0
        for layer in self.cross:
            c = layer.forward(x0, c)
        if cfg.combine == "stacked":
            d = c
            for lin, act in zip(self.deep_lin, self.deep_act):
                d = act.forward(lin.forward(d))
            parts = [d]
        else:
            d = x0
            for lin, act in zip(self.deep_lin, self.deep_act):
                d = act.forward(lin.forward(d))
            parts = [c, d]

        if cfg.use_sequence:
            ids = batch["seq_vocab_ids"]
            n, T = ids.shape
            e_link = self.emb_link.forward(ids)
            seq_in = np.concatenate([e_link, batch["seq_numeric"]], axis=2)
            self._seq_shape = seq_in.shape
            p = self.proj_act.forward(self.proj.forward(
                seq_in.reshape(n * T, seq_in.shape[2])))
            h = self.lstm.forward(p.reshape(n, T, cfg.seq_proj_dim), batch["mask"])
            parts.append(h)

        self._parts_dims = [p.shape[1] for p in parts]
        z = np.concatenate(parts, axis=1)
        logit = self.head.forward(z)[:, 0]
        score = 1.0 / (1.0 + np.exp(-np.clip(logit, -500.0, 500.0)))
        self._score = score
        return score

    def backward(self, dscore: np.ndarray) -> np.ndarray:
        """Returns the gradient w.r.t. the normalized dense block."""
        cfg = self.config
        s = self._score
        dlogit = (dscore * s * (1.0 - s))[:, None]
        (dz,) = self.head.backward(dlogit)

        splits = np.cumsum(self._parts_dims)[:-1]
        dparts = np.split(dz, splits, axis=1)
        dx0 = np.zeros_like(self._x0)

        if cfg.use_sequence:
            dh = dparts.pop()
            dp = self.lstm.backward(dh)[0]
            n, T, _ = self._seq_shape
            dp2 = self.proj_act.backward(dp.reshape(n * T, cfg.seq_proj_dim))[0]
            dseq_in = self.proj.backward(dp2)[0].reshape(self._seq_shape)
            self.emb_link.backward(dseq_in[:, :, :cfg.link_embed_dim])

        if cfg.combine == "stacked":
            g = dparts[0]
            for lin, act in zip(reversed(self.deep_lin), reversed(self.deep_act)):
                g = lin.backward(act.backward(g)[0])[0]
            dcross = g
        else:
            dc, dd = dparts[0], dparts[1]
            g = dd
            for lin, act in zip(reversed(self.deep_lin), reversed(self.deep_act)):
                g = lin.backward(act.backward(g)[0])[0]
            dx0 += g
            dcross = dc

        g = dcross
        for layer in reversed(self.cross):
            dx0_l, g = layer.backward(g)
            dx0 += dx0_l
        dx0 += g

        E = cfg.sparse_embed_dim
        self.emb_dow.backward(dx0[:, :E])
        self.emb_hour.backward(dx0[:, E:2 * E])
        self.emb_cluster.backward(dx0[:, 2 * E:3 * E])
        return dx0[:, 3 * E:]


@dataclass
class TrainReport:
    seed: int
    config: dict
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    early_stopped: bool = False
    wall_time_s: float | None = None

    def to_dict(self) -> dict:
        """Canonical artifact content; wall time is logged separately so that
        reruns stay byte-identical."""
        return {"seed": self.seed, "config": self.config, "epochs": self.epochs,
                "best_epoch": self.best_epoch, "early_stopped": self.early_stopped}


class DcrRanker(BaseEstimator):
    """sklearn-style wrapper: fit on a FeatureDataset, score candidates with
    predict_proba, rank with rank_candidates."""

    def __init__(self, link_embed_dim=32, seq_proj_dim=128, lstm_hidden=256,
                 cross_layers=2, deep_hidden=(128, 64), sparse_embed_dim=8,
                 lr=0.0001, batch_size=256, epochs=20, max_seq_len=64,
                 n_clusters=6, use_sequence=True, early_stop_patience=5,
                 combine="parallel", bucket_batches=True, random_state=0):
        self.link_embed_dim = link_embed_dim
        self.seq_proj_dim = seq_proj_dim
        self.lstm_hidden = lstm_hidden
        self.cross_layers = cross_layers
        self.deep_hidden = deep_hidden
        self.sparse_embed_dim = sparse_embed_dim
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.max_seq_len = max_seq_len
        self.n_clusters = n_clusters
        self.use_sequence = use_sequence
        self.early_stop_patience = early_stop_patience
        self.combine = combine
        self.bucket_batches = bucket_batches
        self.random_state = random_state

    def _config(self) -> DcrConfig:
        return DcrConfig(
            link_embed_dim=self.link_embed_dim, seq_proj_dim=self.seq_proj_dim,
            lstm_hidden=self.lstm_hidden, cross_layers=self.cross_layers,
            deep_hidden=tuple(self.deep_hidden), sparse_embed_dim=self.sparse_embed_dim,
            lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
            max_seq_len=self.max_seq_len, n_clusters=self.n_clusters,
            use_sequence=self.use_sequence, early_stop_patience=self.early_stop_patience,
            combine=self.combine, bucket_batches=self.bucket_batches,
            seed=self.random_state,
        )

    # -- batching ----------------------------------------------------------

    def _map_ids(self, ds: FeatureDataset) -> np.ndarray:
        """Raw network link ids -> vocabulary indices (error on unknown)."""
        pos = np.searchsorted(self.vocab_, ds.seq_ids)
        pos = np.clip(pos, 0, len(self.vocab_) - 1)
        bad = self.vocab_[pos] != ds.seq_ids
        if np.any(bad):
            raise ValueError(f"unknown link id {int(ds.seq_ids[np.argmax(bad)])} "
                             f"not in the training vocabulary")
        return pos

    def _build_batch(self, ds: FeatureDataset, mapped_ids: np.ndarray,
                     rows: np.ndarray) -> dict:
        cfg = self._config()
        norm = self.norm_
        dense = np.concatenate([ds.dense[rows], ds.profile[rows]], axis=1)
        dense = (dense - norm.dense_mean) / norm.dense_std
        batch = {
            "dense": dense,
            "dow": ds.dow[rows], "hour": ds.hour[rows], "cluster": ds.cluster[rows],
            "y": ds.y[rows],
        }
        if cfg.use_sequence:
            starts = ds.seq_offsets[rows]
            lens = np.minimum(ds.seq_offsets[rows + 1] - starts, cfg.max_seq_len)
            T = max(int(lens.max()), 1)
            n = len(rows)
            pad = len(self.vocab_)
            ids = np.full((n, T), pad, dtype=np.int64)
            numeric = np.zeros((n, T, SEQ_STEP_DIM))
            mask = np.zeros((n, T), dtype=bool)
            for i in range(n):
                L = int(lens[i])
                s = int(starts[i])
                ids[i, :L] = mapped_ids[s:s + L]
                cols = ds.seq_cols[s:s + L]
                numeric[i, :L, 0] = (cols[:, 0] - norm.len_mean) / norm.len_std
                numeric[i, :L, 1] = (cols[:, 1] - norm.lanes_mean) / norm.lanes_std
                numeric[i, np.arange(L), 2 + cols[:, 2].astype(np.int64)] = 1.0
                numeric[i, np.arange(L), 6 + cols[:, 3].astype(np.int64)] = 1.0
                mask[i, :L] = True
            batch.update(seq_vocab_ids=ids, seq_numeric=numeric, mask=mask)
        return batch

    def _batch_order(self, ds: FeatureDataset, perm: np.ndarray,
                     batch_size: int) -> np.ndarray:
        """Optionally sort permuted rows by sequence length inside coarse
        chunks so batches pad less; deterministic."""
        if not self.bucket_batches or not self.use_sequence:
            return perm
        lens = ds.seq_lengths
        chunk = batch_size * 16
        pieces = []
        for s in range(0, len(perm), chunk):
            piece = perm[s:s + chunk]
            pieces.append(piece[np.argsort(lens[piece], kind="stable")])
        return np.concatenate(pieces)

    # -- training ----------------------------------------------------------

    def fit(self, train: FeatureDataset, val: FeatureDataset | None = None):
        t_start = time.perf_counter()
        cfg = self._config()
        if len(train) == 0:
            raise ValueError("empty training set")
        if not np.all(np.isin(train.y, (0.0, 1.0))):
            raise ValueError("labels must be binary")
        self.norm_ = Normalizer.fit(train)
        self.vocab_ = np.unique(train.seq_ids)
        rng = np.random.default_rng(cfg.seed)
        self.net_ = DcrNet(cfg, len(self.vocab_), rng)
        params = self.net_.params()
        self.optimizer_ = Adam(params)
        loss_fn = BceLoss()

        train_ids = self._map_ids(train) if cfg.use_sequence else np.empty(0, np.int64)
        val_ids = (self._map_ids(val) if (val is not None and cfg.use_sequence)
                   else np.empty(0, np.int64))

        report = TrainReport(seed=cfg.seed, config=cfg.to_dict())
        best_auc = -np.inf
        best_params = None
        stale = 0
        n = len(train)
        for epoch in range(1, cfg.epochs + 1):
            perm = rng.permutation(n)
            order = self._batch_order(train, perm, cfg.batch_size)
            total_loss = 0.0
            for b, s in enumerate(range(0, n, cfg.batch_size)):
                rows = order[s:s + cfg.batch_size]
                batch = self._build_batch(train, train_ids, rows)
                scores = self.net_.forward(batch)
                loss = loss_fn.forward(scores, batch["y"])
                if not np.isfinite(loss):
                    raise TrainingAborted(f"non-finite loss at epoch {epoch}, batch {b}")
                total_loss += loss * len(rows)
                zero_grads(params)
                self.net_.backward(loss_fn.backward()[0])
                try:
                    self.optimizer_.step(cfg.lr)
                except NonFiniteGradientError as exc:
                    raise TrainingAborted(
                        f"{exc} at epoch {epoch}, batch {b}") from exc
            entry = {"epoch": epoch, "train_loss": total_loss / n}
            if val is not None and len(val):
                val_scores = self._predict_mapped(val, val_ids)
                entry["val_loss"] = loss_fn.forward(val_scores, val.y)
                entry["val_auc"] = auc_metric(val_scores, val.y.astype(np.int64))
            report.epochs.append(entry)

            cur = entry.get("val_auc")
            if cur is not None and cur > best_auc:
                best_auc = cur
                best_params = [p.value.copy() for p in params]
                report.best_epoch = epoch
                stale = 0
            elif cur is not None:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    report.early_stopped = True
                    break
        if best_params is not None:
            for p, v in zip(params, best_params):
                p.value[...] = v
        else:
            report.best_epoch = len(report.epochs)
        report.wall_time_s = time.perf_counter() - t_start
        self.report_ = report
        return self

    # -- scoring -----------------------------------------------------------

    def _predict_mapped(self, ds: FeatureDataset, mapped_ids: np.ndarray,
                        batch_size: int = 1024) -> np.ndarray:
        out = np.empty(len(ds))
        lens = ds.seq_lengths if self.use_sequence else None
        order = np.arange(len(ds))
        if self.use_sequence:
            order = order[np.argsort(lens, kind="stable")]
        for s in range(0, len(ds), batch_size):
            rows = order[s:s + batch_size]
            batch = self._build_batch(ds, mapped_ids, rows)
            out[rows] = self.net_.forward(batch)
        return out

    def predict_proba(self, ds: FeatureDataset) -> np.ndarray:
        """Score in (0, 1) per (request, candidate) row."""
        if not hasattr(self, "net_"):
            raise RuntimeError("DcrRanker is not fitted")
        mapped = self._map_ids(ds) if self.use_sequence else np.empty(0, np.int64)
        return self._predict_mapped(ds, mapped)


def rank_candidates(scores, etas) -> np.ndarray:
    """Order candidate indices by descending score; ties by ascending ETA
    then ascending candidate index."""
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) == 0:
        raise ValueError("no candidates to rank")
    etas = np.asarray(etas, dtype=np.float64)
    idx = np.arange(len(scores))
    return np.lexsort((idx, etas, -scores))


# ---------------------------------------------------------------------------
# Checkpointing (bit-exact; see docs/formats.md)

def save_checkpoint(ranker: DcrRanker, path: Path | str) -> None:
    net = ranker.net_
    params = {p.name: encode_array(p.value) for p in net.params()}
    opt = ranker.optimizer_
    adam_arrays = {name: encode_array(a) for name, a in opt.state_arrays().items()}
    payload = {
        "kind": "dcr_checkpoint",
        "format_version": 1,
        "config": net.config.to_dict(),
        "vocab": encode_array(ranker.vocab_),
        "norm": {
            "dense_mean": encode_array(ranker.norm_.dense_mean),
            "dense_std": encode_array(ranker.norm_.dense_std),
            "len_mean": ranker.norm_.len_mean, "len_std": ranker.norm_.len_std,
            "lanes_mean": ranker.norm_.lanes_mean, "lanes_std": ranker.norm_.lanes_std,
        },
        "params": params,
        "adam": {"t": opt.t, "arrays": adam_arrays},
    }
    write_json(path, payload)


def load_checkpoint(path: Path | str) -> DcrRanker:
    payload = read_json(path)
    if payload.get("kind") != "dcr_checkpoint":
        raise ValueError(f"{path} is not a model checkpoint")
    cfg = DcrConfig.from_dict(payload["config"])
    ranker = DcrRanker(
        link_embed_dim=cfg.link_embed_dim, seq_proj_dim=cfg.seq_proj_dim,
        lstm_hidden=cfg.lstm_hidden, cross_layers=cfg.cross_layers,
        deep_hidden=cfg.deep_hidden, sparse_embed_dim=cfg.sparse_embed_dim,
        lr=cfg.lr, batch_size=cfg.batch_size, epochs=cfg.epochs,
        max_seq_len=cfg.max_seq_len, n_clusters=cfg.n_clusters,
        use_sequence=cfg.use_sequence, early_stop_patience=cfg.early_stop_patience,
        combine=cfg.combine, bucket_batches=cfg.bucket_batches,
        random_state=cfg.seed,
    )
    ranker.vocab_ = decode_array(payload["vocab"])
    norm = payload["norm"]
    ranker.norm_ = Normalizer(
        dense_mean=decode_array(norm["dense_mean"]),
        dense_std=decode_array(norm["dense_std"]),
        len_mean=float(norm["len_mean"]), len_std=float(norm["len_std"]),
        lanes_mean=float(norm["lanes_mean"]), lanes_std=float(norm["lanes_std"]),
    )
    ranker.net_ = DcrNet(cfg, len(ranker.vocab_), np.random.default_rng(cfg.seed))
    for p in ranker.net_.params():
        p.value[...] = decode_array(payload["params"][p.name])
    ranker.optimizer_ = Adam(ranker.net_.params())
    adam = payload["adam"]
    ranker.optimizer_.load_state_arrays(
        {name: decode_array(a) for name, a in adam["arrays"].items()}, int(adam["t"]))
    return ranker


# ---------------------------------------------------------------------------
# Finite-difference check of the full composition

def model_grad_check(net: DcrNet, batch: dict, eps: float = 1e-5) -> float:
    """Max relative error between analytic parameter gradients of the BCE
    objective and central finite differences, over every parameter element."""
    loss_fn = BceLoss()
    y = batch["y"]

    def objective() -> float:
        return loss_fn.forward(net.forward(batch), y)

    params = net.params()
    zero_grads(params)
    objective()
    net.backward(loss_fn.backward()[0])
    analytic = [p.grad.copy() for p in params]

    max_err = 0.0
    for p, a in zip(params, analytic):
        flat_v = p.value.reshape(-1)
        flat_a = a.reshape(-1)
        for i in range(flat_v.size):
            orig = flat_v[i]
            flat_v[i] = orig + eps
            f_plus = objective()
            flat_v[i] = orig - eps
            f_minus = objective()
            flat_v[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(flat_a[i] - numeric) / max(abs(flat_a[i]), abs(numeric), 1e-8)
            max_err = max(max_err, err)
    return max_err
