"""Natural-gradient boosting with a Gaussian predictive distribution.

The model keeps two additive ensembles of shallow regression trees, one
for the mean and one for the log standard deviation. Each stage fits both
trees to the natural gradient of the Gaussian negative log-likelihood,
picks a step size by a bounded geometric line search on the full training
set, and applies it shrunk by the learning rate.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from solarprob.dist import SIGMA_FLOOR, GaussianPrediction, gaussian_nll
from solarprob.errors import DegenerateTargets, DimensionMismatch

log = logging.getLogger(__name__)

LINE_SEARCH_STEPS = tuple(2.0**-i for i in range(9))


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        def walk(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth):
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            go_left = X[rows, np.where(inner, feat, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)
        return self.value[node]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            feature=np.array(d["feature"], dtype=np.int64),
            threshold=np.array(d["threshold"], dtype=float),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            value=np.array(d["value"], dtype=float),
            max_depth=int(d["max_depth"]),
        )


def _best_split(X, g, order, member, min_samples_leaf):
    """Best (gain, feature, threshold) for the rows flagged in ``member``.

    Gains are variance reductions computed from prefix sums of the centred
    targets. Ties go to the lowest feature index, then the lowest threshold.
    """
    n = int(member.sum())
    best = (0.0, -1, 0.0)
    if n < 2 * min_samples_leaf:
        return best
    g_node = g[member]
    centred_total = g_node - g_node.mean()
    sse = float(np.dot(centred_total, centred_total))
    if sse <= 0.0:
        return best
    mean = g_node.mean()
    sizes = np.arange(1, n)
    ok_size = (sizes >= min_samples_leaf) & (n - sizes >= min_samples_leaf)
    for f in range(X.shape[1]):
        o = order[:, f]
        o = o[member[o]]
        xs = X[o, f]
        prefix = np.cumsum(g[o] - mean)
        cs, total = prefix[:-1], prefix[-1]
        gain = cs * cs / sizes + (total - cs) ** 2 / (n - sizes)
        valid = ok_size & (xs[1:] > xs[:-1])
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0]:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if thr >= xs[i + 1]:
                thr = xs[i]
            best = (float(gain[i]), f, float(thr))
    if best[0] <= 1e-12 * sse:
        return (0.0, -1, 0.0)
    return best


def fit_tree(
    X: np.ndarray,
    g: np.ndarray,
    max_depth: int = 3,
    min_samples_leaf: int = 1,
    *,
    order: np.ndarray | None = None,
    sample_mask: np.ndarray | None = None,
) -> RegressionTree:
    """Greedy CART regression tree minimising within-node squared error.

    ``order`` may carry a precomputed ``argsort(X, axis=0)`` and
    ``sample_mask`` restricts fitting to a subset of rows (``g`` is read
    only where the mask is true).
    """
    X = np.asarray(X, dtype=float)
    g = np.asarray(g, dtype=float)
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot fit a tree on zero rows")
    if order is None:
        order = np.argsort(X, axis=0, kind="stable")
    if sample_mask is None:
        sample_mask = np.ones(n, dtype=bool)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0)):
            lst.append(v)
        return len(feature) - 1

    root = new_node()
    stack = [(root, sample_mask, 0)]
    while stack:
        node, member, depth = stack.pop()
        value[node] = float(g[member].mean())
        if depth >= max_depth:
            continue
        gain, f, thr = _best_split(X, g, order, member, min_samples_leaf)
        if f < 0:
            continue
        goes_left = X[:, f] <= thr
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node] = f, thr, lnode, rnode
        # push right first so the left subtree is numbered first
        stack.append((rnode, member & ~goes_left, depth + 1))
        stack.append((lnode, member & goes_left, depth + 1))

    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
        max_depth=max_depth,
    )


def natural_gradient(mu, log_sigma, y):
    """Fisher-preconditioned gradient of the Gaussian NLL in ``(mu, log sigma)``.

    The Fisher information in this parameterisation is
    ``diag(1 / sigma**2, 2)``, so the ordinary gradient
    ``((mu - y) / sigma**2, 1 - z**2)`` becomes ``(mu - y, (1 - z**2) / 2)``.
    """
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    z = (y - mu) * np.exp(-np.asarray(log_sigma, dtype=float))
    return mu - y, 0.5 * (1.0 - z * z)


def mean_nll(mu, log_sigma, y) -> float:
    return float(np.mean(gaussian_nll(mu, np.exp(log_sigma), y)))


@dataclass(frozen=True)
class NGBoostConfig:
    n_estimators: int = 500
    learning_rate: float = 0.01
    max_depth: int = 3
    min_samples_leaf: int = 1
    minibatch_frac: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("n_estimators, max_depth and min_samples_leaf must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.minibatch_frac <= 1.0:
            raise ValueError("minibatch_frac must lie in (0, 1]")


@dataclass(frozen=True)
class Stage:
    tree_mu: RegressionTree
    tree_log_sigma: RegressionTree
    rho: float


@dataclass(frozen=True, eq=False)
class NGBoostModel:
    config: NGBoostConfig
    init_mu: float
    init_log_sigma: float
    n_features: int
    stages: tuple = ()
    train_nll: tuple = field(default=(), repr=False)

    def predict_params(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``(mu, sigma)`` for each row of ``X``; sigma is floored."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got shape {X.shape}")
        eta = self.config.learning_rate
        mu = np.full(X.shape[0], self.init_mu)
        log_sigma = np.full(X.shape[0], self.init_log_sigma)
        for stage in self.stages:
            mu -= eta * stage.rho * stage.tree_mu.predict(X)
            log_sigma -= eta * stage.rho * stage.tree_log_sigma.predict(X)
        return mu, np.maximum(np.exp(log_sigma), SIGMA_FLOOR)

    def predict(self, X) -> list[GaussianPrediction]:
        mu, sigma = self.predict_params(X)
        return [GaussianPrediction(m, s) for m, s in zip(mu, sigma)]

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "init_mu": self.init_mu,
            "init_log_sigma": self.init_log_sigma,
            "n_features": self.n_features,
            "stages": [
                {"rho": s.rho, "mu": s.tree_mu.to_dict(), "log_sigma": s.tree_log_sigma.to_dict()} for s in self.stages
            ],
            "train_nll": list(self.train_nll),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NGBoostModel":
        return cls(
            config=NGBoostConfig(**d["config"]),
            init_mu=d["init_mu"],
            init_log_sigma=d["init_log_sigma"],
            n_features=d["n_features"],
            stages=tuple(
                Stage(RegressionTree.from_dict(s["mu"]), RegressionTree.from_dict(s["log_sigma"]), s["rho"])
                for s in d["stages"]
            ),
            train_nll=tuple(d.get("train_nll", ())),
        )


def ngboost_fit(data, config: NGBoostConfig | None = None, y=None) -> NGBoostModel:
    """Fit a Gaussian NGBoost model.

    ``data`` is a :class:`~solarprob.ingest.SupervisedDataset` (features and
    clearness-index targets are used) or a feature matrix with ``y`` given.
    """
    config = config or NGBoostConfig()
    if y is None:
        X, y = data.features, data.targets_k
    else:
        X = data
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n == 0 or X.shape[0] != n:
        raise DimensionMismatch("features and targets must be nonempty and aligned")

    init_mu = float(np.mean(y))
    spread = float(np.std(y))
    if spread <= 0.0:
        warnings.warn("targets have zero variance; returning an initial-only model", DegenerateTargets, stacklevel=2)
        return NGBoostModel(config, init_mu, math.log(SIGMA_FLOOR), X.shape[1], (), ())
    init_log_sigma = math.log(max(spread, SIGMA_FLOOR))

    rng = np.random.default_rng(config.seed)
    order = np.argsort(X, axis=0, kind="stable")
    mu = np.full(n, init_mu)
    log_sigma = np.full(n, init_log_sigma)
    nll = mean_nll(mu, log_sigma, y)
    trace = [nll]
    stages = []
    batch = max(1, int(round(config.minibatch_frac * n)))
    eta = config.learning_rate

    for m in range(config.n_estimators):
        if batch < n:
            mask = np.zeros(n, dtype=bool)
            mask[rng.choice(n, size=batch, replace=False)] = True
        else:
            mask = np.ones(n, dtype=bool)
        g_mu, g_ls = natural_gradient(mu, log_sigma, y)
        tree_mu = fit_tree(X, g_mu, config.max_depth, config.min_samples_leaf, order=order, sample_mask=mask)
        tree_ls = fit_tree(X, g_ls, config.max_depth, config.min_samples_leaf, order=order, sample_mask=mask)
        d_mu = tree_mu.predict(X)
        d_ls = tree_ls.predict(X)

        best_rho, best_nll = None, nll
        for rho in LINE_SEARCH_STEPS:
            with np.errstate(over="ignore", invalid="ignore"):
                cand = mean_nll(mu - rho * d_mu, log_sigma - rho * d_ls, y)
            if np.isfinite(cand) and cand < best_nll:
                best_rho, best_nll = rho, cand
        if best_rho is None:
            log.debug("stage %d: no step size reduces the training NLL; stopping", m)
            break
        new_mu = mu - eta * best_rho * d_mu
        new_ls = log_sigma - eta * best_rho * d_ls
        new_nll = mean_nll(new_mu, new_ls, y)
        if not new_nll <= nll:
            log.debug("stage %d: shrunk step increases the training NLL; stopping", m)
            break
        mu, log_sigma, nll = new_mu, new_ls, new_nll
        trace.append(nll)
        stages.append(Stage(tree_mu, tree_ls, best_rho))

    return NGBoostModel(config, init_mu, init_log_sigma, X.shape[1], tuple(stages), tuple(trace))


def ngboost_predict(model: NGBoostModel, X) -> list[GaussianPrediction]:
    return model.predict(X)
