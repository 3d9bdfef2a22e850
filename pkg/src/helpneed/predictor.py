"""Class-weighted random forests for HelpNeed, feature selection, expert weights and grouped CV.

Tree growing is delegated to scikit-learn; fitted trees are exported to
plain arrays so that prediction, the model file and its reload do not depend
on scikit-learn internals.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .features import FEATURE_NAMES, FREE_FEATURES, STATE_FEATURES, StepDataset
from .stats import SingleClass, recall, roc_auc

STATE_BASED = "state_based"
STATE_FREE = "state_free"
MODEL_FORMAT = "helpneed-forest"
MODEL_VERSION = 1


class ManifestMismatch(ValueError):
    pass


class TooFewGroups(ValueError):
    pass


def candidate_features(variant: str) -> tuple:
    if variant == STATE_BASED:
        return FEATURE_NAMES
    if variant == STATE_FREE:
        return FREE_FEATURES
    raise ValueError(f"unknown variant {variant!r}")


# ---------------------------------------------------------------------------
# normalization and weights


@dataclass(frozen=True)
class Normalizer:
    mean: tuple
    sd: tuple

    @classmethod
    def fit(cls, X: np.ndarray) -> "Normalizer":
        return cls(tuple(X.mean(axis=0).tolist()), tuple(X.std(axis=0).tolist()))

    def transform(self, X: np.ndarray) -> np.ndarray:
        mu = np.asarray(self.mean)
        sd = np.asarray(self.sd)
        safe = np.where(sd > 0, sd, 1.0)
        # zero-variance features collapse to 0 after centering
        return np.where(sd > 0, (X - mu) / safe, 0.0)


def automated_weights(labels) -> dict:
    """Balanced class weights ``n / (2 n_c)``."""
    y = np.asarray(labels).astype(int)
    n1 = int(y.sum())
    n0 = len(y) - n1
    if n0 == 0 or n1 == 0:
        raise SingleClass("class weights need both classes")
    n = len(y)
    return {0: n / (2.0 * n0), 1: n / (2.0 * n1)}


# ---------------------------------------------------------------------------
# forest


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    max_features: str = "sqrt"
    min_samples_leaf: int = 1


@dataclass(frozen=True)
class TreeArrays:
    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    p1: np.ndarray  # class-1 probability per node

    def apply(self, X32: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X32), dtype=np.int64)
        active = self.left[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X32[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.left[node] >= 0
        return node

    def to_json(self) -> dict:
        return {"left": self.left.tolist(), "right": self.right.tolist(),
                "feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "p1": self.p1.tolist()}

    @classmethod
    def from_json(cls, d) -> "TreeArrays":
        return cls(np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["feature"], dtype=np.int64),
                   np.array(d["threshold"], dtype=np.float64), np.array(d["p1"], dtype=np.float64))


def _export_tree(est) -> TreeArrays:
    t = est.tree_
    value = t.value[:, 0, :]
    total = value.sum(axis=1)
    p1 = np.divide(value[:, 1], total, out=np.zeros_like(total), where=total > 0)
    feature = np.where(t.children_left >= 0, t.feature, 0)
    return TreeArrays(t.children_left.astype(np.int64), t.children_right.astype(np.int64),
                      feature.astype(np.int64), t.threshold.astype(np.float64), p1)


@dataclass
class ForestModel:
    variant: str
    features: tuple
    normalizer: Normalizer
    trees: list
    weights: dict
    seed: int
    params: ForestParams = field(default_factory=ForestParams)
    importances: tuple = ()

    def _matrix(self, X, names=FEATURE_NAMES) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] == len(self.features) and names is None:
            return X
        if X.shape[1] != len(names):
            raise ManifestMismatch(f"expected {len(names)} columns, got {X.shape[1]}")
        pos = {n: i for i, n in enumerate(names)}
        try:
            cols = [pos[f] for f in self.features]
        except KeyError as exc:
            raise ManifestMismatch(f"feature {exc.args[0]!r} missing from input") from None
        return X[:, cols]

    def _packed(self):
        packed = self.__dict__.get("_pack")
        if packed is None:
            sizes = [len(t.left) for t in self.trees]
            offs = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
            left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(self.trees, offs)])
            right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(self.trees, offs)])
            packed = (offs, left, right, np.concatenate([t.feature for t in self.trees]),
                      np.concatenate([t.threshold for t in self.trees]),
                      np.concatenate([t.p1 for t in self.trees]))
            self.__dict__["_pack"] = packed
        return packed

    def predict_proba(self, X, names=FEATURE_NAMES) -> np.ndarray:
        """P(HelpNeed) per row, averaging tree leaf distributions."""
        Z = self.normalizer.transform(self._matrix(X, names)).astype(np.float32)
        if not self.trees:
            return np.zeros(len(Z))
        offs, left, right, feature, threshold, p1 = self._packed()
        # walk every tree for every row at once
        node = np.broadcast_to(offs, (len(Z), len(offs))).copy()
        rows = np.arange(len(Z))[:, None]
        while True:
            inner = left[node] >= 0
            if not inner.any():
                break
            go_left = Z[rows, feature[node]] <= threshold[node]
            node = np.where(inner, np.where(go_left, left[node], right[node]), node)
        return p1[node].mean(axis=1)

    def predict(self, X, names=FEATURE_NAMES) -> np.ndarray:
        return (self.predict_proba(X, names) >= 0.5).astype(int)

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT, "version": MODEL_VERSION, "variant": self.variant,
            "features": list(self.features),
            "normalizer": {"mean": list(self.normalizer.mean), "sd": list(self.normalizer.sd)},
            "weights": {str(k): v for k, v in sorted(self.weights.items())},
            "seed": self.seed, "params": asdict(self.params),
            "importances": list(self.importances),
            "trees": [t.to_json() for t in self.trees],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, d) -> "ForestModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError("not a helpneed forest model file")
        return cls(d["variant"], tuple(d["features"]),
                   Normalizer(tuple(d["normalizer"]["mean"]), tuple(d["normalizer"]["sd"])),
                   [TreeArrays.from_json(t) for t in d["trees"]],
                   {int(k): v for k, v in d["weights"].items()}, d["seed"],
                   ForestParams(**d["params"]), tuple(d.get("importances", ())))

    @classmethod
    def loads(cls, text: str) -> "ForestModel":
        return cls.from_json(json.loads(text))


def _fit_sklearn(Z, y, params: ForestParams, weights: dict, seed: int):
    if len(np.unique(y)) < 2:
        raise SingleClass("training data has a single class")
    rf = RandomForestClassifier(
        n_estimators=params.n_trees, max_depth=params.max_depth,
        max_features=params.max_features, min_samples_leaf=params.min_samples_leaf,
        class_weight={0: float(weights[0]), 1: float(weights[1])},
        bootstrap=True, random_state=seed, n_jobs=1)
    rf.fit(Z, y)
    return rf


def train_forest(X, y, features, weights=None, seed: int = 0, params: ForestParams = ForestParams(),
                 variant: str = STATE_FREE, normalizer: Normalizer = None) -> ForestModel:
    """Fit a forest on columns ``features`` of ``X`` (``X`` already restricted to them)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if weights is None:
        weights = automated_weights(y)
    normalizer = normalizer or Normalizer.fit(X)
    rf = _fit_sklearn(normalizer.transform(X), y, params, weights, seed)
    return ForestModel(variant, tuple(features), normalizer, [_export_tree(e) for e in rf.estimators_],
                       dict(weights), seed, params, tuple(rf.feature_importances_.tolist()))


def select_features(X, y, features, seed: int = 0, params: ForestParams = ForestParams(),
                    floor: int = 5) -> tuple:
    """Keep features whose impurity importance is at least the mean; never fewer than ``floor``."""
    prelim = train_forest(X, y, features, seed=seed, params=params)
    imp = np.asarray(prelim.importances)
    keep = imp >= imp.mean()
    if keep.sum() < min(floor, len(features)):
        order = np.argsort(-imp, kind="mergesort")[:floor]
        keep = np.zeros(len(features), dtype=bool)
        keep[order] = True
    return tuple(f for f, k in zip(features, keep) if k)


def _columns(data: StepDataset, names) -> np.ndarray:
    pos = {n: i for i, n in enumerate(data.names)}
    return data.X[:, [pos[n] for n in names]]


def variant_rows(data: StepDataset, variant: str) -> StepDataset:
    """State-based models only see steps whose state matched; state-free models see all."""
    return data.subset(data.state_known) if variant == STATE_BASED else data


def fit_pipeline(train: StepDataset, variant: str, multiplier: float = 1.0, seed: int = 0,
                 params: ForestParams = ForestParams(), selected=None) -> ForestModel:
    """Normalize, select features, weight and fit on one training set."""
    cand = candidate_features(variant)
    if selected is None:
        selected = select_features(_columns(train, cand), train.y, cand, seed, params)
    w = automated_weights(train.y)
    w = {0: w[0], 1: w[1] * multiplier}
    return train_forest(_columns(train, selected), train.y, selected, w, seed, params, variant)


def predict_step(models: dict, features, state_known: bool, names=FEATURE_NAMES):
    """Route to the state-based model iff the state is known; label 1 iff P(1) >= 0.5."""
    model = models[STATE_BASED] if state_known else models[STATE_FREE]
    p = float(model.predict_proba(np.asarray(features, dtype=float)[None, :], names)[0])
    return int(p >= 0.5), p


# ---------------------------------------------------------------------------
# cross-validation


def grouped_stratified_folds(groups, y, k: int = 10, seed: int = 0) -> dict:
    """Map each student to a fold.

    Students are ordered by their positive-label rate (seeded tiebreak) and
    dealt to folds in blocks of ``k`` with a random fold order per block, so
    every fold gets a similar spread of rates.
    """
    groups = np.asarray(groups, dtype=object)
    y = np.asarray(y).astype(int)
    students = sorted(set(groups.tolist()))
    if len(students) < k:
        raise TooFewGroups(f"{len(students)} students for {k} folds")
    rate = {s: float(y[groups == s].mean()) for s in students}
    rng = np.random.default_rng(seed)
    tiebreak = dict(zip(students, rng.permutation(len(students)).tolist()))
    ordered = sorted(students, key=lambda s: (rate[s], tiebreak[s]))
    out = {}
    for b in range(0, len(ordered), k):
        block = ordered[b:b + k]
        for s, f in zip(block, rng.permutation(k)[:len(block)]):
            out[s] = int(f)
    return out


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    positives: int
    recall: float
    auc: float
    features: tuple


@dataclass
class CVReport:
    variant: str
    multiplier: float
    folds: list
    fold_of: dict
    weights_note: str = "automated n/(2 n_c) times multiplier on class 1"

    @property
    def mean_recall(self) -> float:
        return float(np.nanmean([f.recall for f in self.folds]))

    @property
    def mean_auc(self) -> float:
        return float(np.nanmean([f.auc for f in self.folds]))

    def leakage_violations(self, data: StepDataset) -> int:
        """Students whose rows appear in more than one fold (always 0 by construction)."""
        seen = {}
        bad = set()
        for s in data.groups:
            f = self.fold_of[s]
            if seen.setdefault(s, f) != f:
                bad.add(s)
        return len(bad)

    def to_json(self) -> dict:
        return {"variant": self.variant, "multiplier": self.multiplier,
                "mean_recall": self.mean_recall, "mean_auc": self.mean_auc,
                "folds": [dict(asdict(f), features=list(f.features)) for f in self.folds],
                "fold_of": dict(sorted(self.fold_of.items()))}


def _safe(fn, *args):
    try:
        return fn(*args)
    except SingleClass:
        return float("nan")


def cross_validate_grid(data: StepDataset, variant: str, multipliers=(1.0,), k: int = 10,
                        seed: int = 0, params: ForestParams = ForestParams(),
                        mode: str = "kfold") -> dict:
    """CV reports for several class-1 weight multipliers sharing folds and feature selection.

    Normalization, selection and weights are re-fit inside each training fold.
    ``mode="semester"`` uses the dataset tags as folds instead.
    """
    rows = variant_rows(data, variant)
    if mode == "semester":
        tags = sorted(set(rows.tags.tolist()))
        if len(tags) < 2:
            raise TooFewGroups("semester mode needs at least two corpus tags")
        fold_of = {}
        for s, t in zip(rows.groups, rows.tags):
            fold_of.setdefault(s, tags.index(t))
        n_folds = len(tags)
        row_fold = np.array([tags.index(t) for t in rows.tags])
    elif mode == "kfold":
        fold_of = grouped_stratified_folds(rows.groups, rows.y, k, seed)
        n_folds = k
        row_fold = np.array([fold_of[s] for s in rows.groups])
    else:
        raise ValueError(f"unknown CV mode {mode!r}")
    cand = candidate_features(variant)
    results = {m: [] for m in multipliers}
    for f in range(n_folds):
        tr, te = rows.subset(row_fold != f), rows.subset(row_fold == f)
        fold_seed = seed * 1000 + f
        selected = select_features(_columns(tr, cand), tr.y, cand, fold_seed, params)
        for m in multipliers:
            model = fit_pipeline(tr, variant, m, fold_seed, params, selected)
            if len(te):
                proba = model.predict_proba(_columns(te, selected), None)
                rec = _safe(recall, (proba >= 0.5).astype(int), te.y)
                auc = _safe(roc_auc, proba, te.y)
            else:
                rec = auc = float("nan")
            results[m].append(FoldResult(f, len(tr), len(te), int(te.y.sum()), rec, auc, selected))
    return {m: CVReport(variant, m, results[m], fold_of) for m in multipliers}


def cross_validate(data: StepDataset, variant: str, k: int = 10, seed: int = 0,
                   params: ForestParams = ForestParams(), multiplier: float = 1.0,
                   mode: str = "kfold") -> CVReport:
    return cross_validate_grid(data, variant, (multiplier,), k, seed, params, mode)[multiplier]


DEFAULT_GRID = tuple(1.0 + 0.25 * i for i in range(9))


def choose_multiplier(reports: dict, auc_slack: float = 0.02) -> float:
    """Highest mean recall among multipliers whose mean AUC is within ``auc_slack`` of the best."""
    best_auc = max(r.mean_auc for r in reports.values())
    eligible = [m for m, r in reports.items() if r.mean_auc >= best_auc - auc_slack]
    return min(eligible, key=lambda m: (-reports[m].mean_recall, m))


@dataclass
class WeightSearch:
    variant: str
    multiplier: float
    automated: CVReport
    expert: CVReport
    reports: dict

    @property
    def expert_w1_scale(self) -> float:
        return self.multiplier

    def to_json(self) -> dict:
        return {"variant": self.variant, "multiplier": self.multiplier,
                "automated": self.automated.to_json(), "expert": self.expert.to_json(),
                "grid": {str(m): {"recall": r.mean_recall, "auc": r.mean_auc}
                         for m, r in sorted(self.reports.items())}}


def expert_weight_search(data: StepDataset, variant: str, grid=DEFAULT_GRID, k: int = 10,
                         seed: int = 0, params: ForestParams = ForestParams(),
                         auc_slack: float = 0.02, mode: str = "kfold") -> WeightSearch:
    """Grid search over class-1 weight multipliers scored by CV recall and AUC.

    The grid always contains 1.0 (the automated weights).  Reporting reuses
    the same folds, as a single non-nested search.
    """
    grid = tuple(sorted(set(float(g) for g in grid) | {1.0}))
    reports = cross_validate_grid(data, variant, grid, k, seed, params, mode)
    m = choose_multiplier(reports, auc_slack)
    return WeightSearch(variant, m, reports[1.0], reports[m], reports)


def train_models(data: StepDataset, multipliers=None, seed: int = 0,
                 params: ForestParams = ForestParams()) -> dict:
    """Final state-based and state-free models on all rows."""
    multipliers = multipliers or {}
    out = {}
    for variant in (STATE_BASED, STATE_FREE):
        rows = variant_rows(data, variant)
        out[variant] = fit_pipeline(rows, variant, multipliers.get(variant, 1.0), seed, params)
    return out


def save_models(models: dict, path):
    doc = {v: m.to_json() for v, m in sorted(models.items())}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def load_models(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return {v: ForestModel.from_json(d) for v, d in doc.items()}


def state_feature_share(model: ForestModel) -> float:
    """Fraction of a model's impurity importance carried by quality/progress features."""
    imp = np.asarray(model.importances)
    if imp.sum() == 0:
        return 0.0
    mask = np.array([f in STATE_FEATURES for f in model.features])
    return float(imp[mask].sum() / imp.sum())


def top_feature(model: ForestModel) -> str:
    return model.features[int(np.argmax(model.importances))]

