"""User-preference clustering: K-Means over profile vectors and a 2-D
stochastic neighbor embedding for the visualization artifact.

Both estimators standardize features internally (z-score) and are fully
deterministic given `random_state`. The embedding is analysis-only; cluster
ids fed downstream always come from K-Means.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .featset import PROFILE_FEATURES
from .validation import check_array, check_fitted, check_same_features


class KMeans(BaseEstimator):
    """Lloyd iterations with k-means++ seeding on standardized features.

    Seeding draws against a canonical (lexicographic) row ordering, so
    permuting the input rows yields the same partition with permuted labels.
    Zero-variance feature dimensions are dropped with a warning. Inertia is
    recorded every iteration and must never increase.
    """

    def __init__(self, n_clusters: int = 6, max_iter: int = 100, random_state: int = 0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.random_state = random_state

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        return (X[:, self.retained_mask_] - self.feature_means_) / self.feature_scales_

    def fit(self, X, y=None):
        X = check_array(X, name="profiles")
        n, d = X.shape
        k = self.n_clusters
        if n < k:
            raise ValueError(f"need at least n_clusters={k} samples, got {n}")

        means = X.mean(axis=0)
        stds = X.std(axis=0)
        retained = stds > 0.0
        if not np.all(retained):
            dropped = [i for i in range(d) if not retained[i]]
            warnings.warn(f"dropping zero-variance feature dimensions {dropped}")
        if not np.any(retained):
            raise ValueError("all feature dimensions have zero variance")
        self.retained_mask_ = retained
        self.feature_means_ = means[retained]
        self.feature_scales_ = stds[retained]
        Z = self._standardize(X)

        rng = np.random.default_rng(self.random_state)
        order = np.lexsort(Z.T[::-1])
        centers = self._kmeanspp(Z[order], k, rng)

        labels = np.zeros(n, dtype=np.int64)
        self.inertia_history_ = []
        for it in range(self.max_iter):
            d2 = ((Z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = np.argmin(d2, axis=1)
            inertia = float(d2[np.arange(n), new_labels].sum())
            if self.inertia_history_ and inertia > self.inertia_history_[-1] * (1 + 1e-12) + 1e-12:
                raise RuntimeError(
                    f"inertia increased at iteration {it}: "
                    f"{self.inertia_history_[-1]} -> {inertia}"
                )
            self.inertia_history_.append(inertia)
            if it > 0 and np.array_equal(new_labels, labels):
                labels = new_labels
                break
            labels = new_labels
            for c in range(k):
                members = Z[labels == c]
                if len(members):
                    centers[c] = members.mean(axis=0)
                # empty cluster keeps its previous center
        self.cluster_centers_ = centers
        self.labels_ = labels
        self.inertia_ = self.inertia_history_[-1]
        self.n_iter_ = len(self.inertia_history_)
        return self

    @staticmethod
    def _kmeanspp(Z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        n = len(Z)
        centers = np.empty((k, Z.shape[1]))
        centers[0] = Z[rng.integers(n)]
        d2 = ((Z - centers[0]) ** 2).sum(axis=1)
        for c in range(1, k):
            total = d2.sum()
            if total <= 0.0:
                centers[c] = Z[rng.integers(n)]
            else:
                target = rng.uniform(0.0, total)
                idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
                centers[c] = Z[min(idx, n - 1)]
            d2 = np.minimum(d2, ((Z - centers[c]) ** 2).sum(axis=1))
        return centers

    def predict(self, X) -> np.ndarray:
        """Index of the nearest centroid (squared Euclidean on standardized
        features); ties resolve to the lowest index."""
        check_fitted(self, "cluster_centers_")
        X = check_array(X, name="profiles")
        check_same_features(len(self.retained_mask_), X, name="profiles")
        Z = self._standardize(X)
        d2 = ((Z[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_


class TSNE(BaseEstimator):
    """Plain t-SNE to 2 dimensions: per-point Gaussian bandwidths solved by
    bisection to match the target perplexity, symmetrized affinities, a
    Student-t low-dimensional kernel, and momentum gradient descent with
    early exaggeration (x12 for the first 250 iterations, momentum 0.5 then
    0.8). Records the KL divergence trace against the true affinities."""

    def __init__(self, perplexity: float = 30.0, n_iter: int = 1000,
                 learning_rate: float = 200.0, early_exaggeration: float = 12.0,
                 exaggeration_iters: int = 250, random_state: int = 0):
        self.perplexity = perplexity
        self.n_iter = n_iter
        self.learning_rate = learning_rate
        self.early_exaggeration = early_exaggeration
        self.exaggeration_iters = exaggeration_iters
        self.random_state = random_state

    def _conditional_p(self, D2: np.ndarray) -> np.ndarray:
        """Row-stochastic conditional affinities; each row's bandwidth is
        bisected until exp(entropy) matches perplexity within 1e-4 relative."""
        n = D2.shape[0]
        P = np.zeros((n, n))
        target = float(self.perplexity)
        achieved = np.empty(n)
        for i in range(n):
            d = np.delete(D2[i], i)
            beta, lo, hi = 1.0, 0.0, np.inf
            for _ in range(200):
                w = np.exp(-d * beta)
                s = w.sum()
                if s <= 0.0:
                    perp = 0.0
                    p = w
                else:
                    p = w / s
                    h = -np.sum(p[p > 0] * np.log(p[p > 0]))
                    perp = float(np.exp(h))
                if abs(perp - target) / target <= 1e-4:
                    break
                if perp > target:
                    lo = beta
                    beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
                else:
                    hi = beta
                    beta = 0.5 * (beta + lo)
            achieved[i] = perp
            row = np.insert(p, i, 0.0)
            P[i] = row / row.sum()
        self.achieved_perplexity_ = achieved
        return P

    def fit_transform(self, X, y=None) -> np.ndarray:
        X = check_array(X, name="profiles")
        n = len(X)
        if n <= 3 * self.perplexity:
            raise ValueError(
                f"perplexity {self.perplexity} infeasible for n={n}; need n > 3*perplexity"
            )
        stds = X.std(axis=0)
        keep = stds > 0.0
        Z = (X[:, keep] - X[:, keep].mean(axis=0)) / stds[keep]

        sq = (Z**2).sum(axis=1)
        D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T), 0.0)
        P_cond = self._conditional_p(D2)
        P = (P_cond + P_cond.T) / (2.0 * n)
        P = np.maximum(P, 1e-12)

        rng = np.random.default_rng(self.random_state)
        Y = rng.normal(0.0, 1e-4, size=(n, 2))
        dY = np.zeros_like(Y)
        gains = np.ones_like(Y)
        kl_trace = []

        for it in range(self.n_iter):
            Pe = P * self.early_exaggeration if it < self.exaggeration_iters else P
            ysq = (Y**2).sum(axis=1)
            num = 1.0 / (1.0 + np.maximum(ysq[:, None] + ysq[None, :] - 2.0 * (Y @ Y.T), 0.0))
            np.fill_diagonal(num, 0.0)
            Q = np.maximum(num / num.sum(), 1e-12)
            PQ = (Pe - Q) * num
            grad = 4.0 * ((np.diag(PQ.sum(axis=1)) - PQ) @ Y)

            momentum = 0.5 if it < self.exaggeration_iters else 0.8
            flip = np.sign(grad) != np.sign(dY)
            gains = np.where(flip, gains + 0.2, gains * 0.8)
            gains = np.maximum(gains, 0.01)
            dY = momentum * dY - self.learning_rate * gains * grad
            Y = Y + dY
            Y = Y - Y.mean(axis=0)

            kl_trace.append(float(np.sum(P * np.log(P / Q))))

        self.embedding_ = Y
        self.kl_trace_ = kl_trace
        self.kl_post_exaggeration_ = kl_trace[self.exaggeration_iters] \
            if self.n_iter > self.exaggeration_iters else kl_trace[0]
        self.kl_divergence_ = kl_trace[-1]
        return Y


@dataclass
class Embedding2D:
    points: np.ndarray
    kl_divergence: float


def tsne_project(profiles, perplexity: float = 30.0, iters: int = 1000,
                 seed: int = 0) -> Embedding2D:
    t = TSNE(perplexity=perplexity, n_iter=iters, random_state=seed)
    pts = t.fit_transform(profiles)
    return Embedding2D(points=pts, kl_divergence=t.kl_divergence_)


@dataclass
class ClusterReport:
    """Mean profile features per cluster, for manual archetype labeling."""

    feature_names: tuple[str, ...]
    counts: np.ndarray          # [k]
    means: np.ndarray           # [k, d]; NaN rows for empty clusters
    empty: tuple[int, ...]

    def rows(self):
        for c in range(len(self.counts)):
            mean_cells = ["" if c in self.empty else float(m) for m in self.means[c]]
            yield [c, int(self.counts[c])] + mean_cells


def cluster_report(model: KMeans, profiles,
                   feature_names: tuple[str, ...] = PROFILE_FEATURES) -> ClusterReport:
    check_fitted(model, "cluster_centers_")
    X = check_array(profiles, name="profiles")
    labels = model.predict(X)
    k = model.n_clusters
    counts = np.zeros(k, dtype=np.int64)
    means = np.full((k, X.shape[1]), np.nan)
    empty = []
    for c in range(k):
        members = X[labels == c]
        counts[c] = len(members)
        if len(members):
            means[c] = members.mean(axis=0)
        else:
            empty.append(c)
    return ClusterReport(feature_names=tuple(feature_names), counts=counts,
                         means=means, empty=tuple(empty))
