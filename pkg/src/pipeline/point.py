"""
Accident-level severity classification: four learner configurations
compared by stratified cross-validated ROC AUC.

SMOTE runs on the training partition of each fold only. The `leaky`
setting oversamples the whole table before splitting instead, which
reproduces the optimistic protocol for comparison.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.config import RunConfig
from src.features import smote
from src.features.tables import POINT_FEATURES
from src.learners.boosting import GBMModel, gbm_fit
from src.learners.forest import rf_fit
from src.learners.importance import ImportanceReport, feature_importance
from src.learners.logistic import logistic_fit
from src.metrics.folds import FoldPlan, fold_seed, kfold
from src.metrics.performance_evaluator import RocCurve, fold_auc, roc_auc, summarize_folds
from src.pipeline.persistence import ModelBundle

logger = logging.getLogger(__name__)

POINT_MODELS = ("gbm_smote", "gbm", "rf", "logreg")
SMOTE_MODELS = {"gbm_smote"}
REFIT_MODELS = ("gbm_smote", "gbm")


@dataclass
class PointModelResult:
    name: str
    auc: float
    roc_curve: RocCurve
    smote_enabled: bool
    oof_scores: np.ndarray
    fold_auc: Dict[str, float] = field(default_factory=dict)


@dataclass
class PointFitReport:
    results: List[PointModelResult]
    importance: Optional[ImportanceReport]
    final_model: Optional[GBMModel]
    plan: FoldPlan
    leaky_smote: bool
    n_rows: int
    positive_share: float
    train_positive_share: Dict[str, float] = field(default_factory=dict)
    final_name: Optional[str] = None

    def result(self, name: str) -> PointModelResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def bundle(self) -> ModelBundle:
        if self.final_model is None:
            raise ValueError("no boosted model was refit")
        return ModelBundle(name=self.final_name or "gbm", model=self.final_model, feature_names=list(POINT_FEATURES))

    def to_report(self) -> Dict[str, Any]:
        return {
            "models": [
                {
                    "name": r.name,
                    "auc": r.auc,
                    "smote_enabled": r.smote_enabled,
                    "per_fold_auc": r.fold_auc,
                    "roc_points": len(r.roc_curve),
                }
                for r in self.results
            ],
            "leaky_smote": self.leaky_smote,
            "refit_model": self.final_name,
            "rows": self.n_rows,
            "positive_share": self.positive_share,
            "train_positive_share": self.train_positive_share,
            "folds": {
                "k": self.plan.k,
                "seed": self.plan.seed,
                "stratified": self.plan.stratified,
                "sizes": self.plan.fold_sizes().tolist(),
            },
            "importance": (
                [{"feature": name, "share": share} for name, share in self.importance.ranking()]
                if self.importance is not None else None
            ),
        }


def _oversample(X: np.ndarray, y: np.ndarray, cfg: RunConfig, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    return smote.smote_balance(X, y, cfg.smote.params(seed))


def _fit_scores(name: str, X_train: np.ndarray, y_train: np.ndarray, X_test: np.ndarray, cfg: RunConfig, seed: int) -> np.ndarray:
    if name in ("gbm", "gbm_smote"):
        model = gbm_fit(X_train, y_train, cfg.gbm.params(loss="logistic", seed=seed))
    elif name == "rf":
        model = rf_fit(X_train, y_train, cfg.rf.params(seed=seed))
    elif name == "logreg":
        model = logistic_fit(X_train, y_train, cfg.logreg.params())
    else:
        raise ValueError(f"unknown point model {name!r}; expected one of {POINT_MODELS}")
    return model.predict(X_test)


def _run_fold(name: str, fold: int, train: np.ndarray, test: np.ndarray, X: np.ndarray, y: np.ndarray, cfg: RunConfig, in_fold_smote: bool):
    seed = fold_seed(cfg.seed, fold)
    X_train, y_train = X[train], y[train]
    if in_fold_smote:
        X_train, y_train = _oversample(X_train, y_train, cfg, seed)
    scores = _fit_scores(name, X_train, y_train, X[test], cfg, seed)
    return name, fold, scores, float(np.mean(y_train))


def run_point(
    table: pd.DataFrame,
    cfg: Optional[RunConfig] = None,
    models: Sequence[str] = POINT_MODELS,
    refit: bool = True
) -> PointFitReport:
    """
    Compare classifiers by pooled out-of-fold AUC.

    Args:
        table: Point table (POINT_FEATURES plus label)
        cfg: Run configuration
        models: Subset of POINT_MODELS, in report order
        refit: Refit the first boosted learner in `models` on all rows for
            importance and persistence, balanced only when it is gbm_smote

    Returns:
        PointFitReport

    Raises:
        ValueError: when the labels hold a single class
    """
    cfg = cfg or RunConfig()
    missing = [c for c in [*POINT_FEATURES, "label"] if c not in table.columns]
    if missing:
        raise ValueError(f"missing column {missing[0]!r}")
    unknown = [m for m in models if m not in POINT_MODELS]
    if unknown:
        raise ValueError(f"unknown point model {unknown[0]!r}; expected one of {POINT_MODELS}")

    # Build design matrix
    X = table[POINT_FEATURES].to_numpy(dtype=float)
    y = table["label"].to_numpy(dtype=int)
    if len(np.unique(y)) < 2:
        raise ValueError("single class: point classification needs both severe and non-severe rows")
    positive_share = float(y.mean())

    leaky = cfg.smote.leaky and cfg.smote.enabled
    if leaky:
        logger.warning("Leaky SMOTE: oversampling before the split, AUC will be optimistic")
        X, y = _oversample(X, y, cfg, cfg.seed)

    k = cfg.cv.point_folds
    if len(y) < k:
        raise ValueError(f"insufficient rows: {len(y)} rows for {k}-fold cross-validation")
    plan = kfold(len(y), k, seed=cfg.seed, labels=y if cfg.cv.stratify_point else None)
    logger.info(
        f"Point model: {len(y)} rows, positive share {positive_share:.3f}, {k}-fold CV over {list(models)}"
    )

    smote_for = {m: (m in SMOTE_MODELS and cfg.smote.enabled and not leaky) for m in models}
    jobs = [
        delayed(_run_fold)(name, fold, train, test, X, y, cfg, smote_for[name])
        for name in models
        for fold, train, test in plan.splits()
    ]
    outputs = Parallel(n_jobs=cfg.threads)(jobs)

    # Collect out-of-fold scores per model
    oof = {name: np.zeros(len(y)) for name in models}
    train_share: Dict[str, List[float]] = {name: [] for name in models}
    for name, fold, scores, share in outputs:
        oof[name][plan.test_index(fold)] = scores
        train_share[name].append(share)

    results = []
    for name in models:
        curve, auc = roc_auc(oof[name], y)
        results.append(PointModelResult(
            name=name,
            auc=auc,
            roc_curve=curve,
            smote_enabled=smote_for[name] or (leaky and name in SMOTE_MODELS),
            oof_scores=oof[name],
            fold_auc=summarize_folds(fold_auc(oof[name], y, plan.assignments)),
        ))
        logger.info(f"{name}: pooled AUC {auc:.3f}")

    final_model = None
    importance = None
    final_name = next((m for m in models if m in REFIT_MODELS), None) if refit else None
    if final_name is not None:
        X_full, y_full = X, y
        if smote_for[final_name]:
            X_full, y_full = _oversample(X, y, cfg, cfg.seed)
        final_model = gbm_fit(
            X_full, y_full, cfg.gbm.params(loss="logistic", seed=cfg.seed), feature_names=list(POINT_FEATURES)
        )
        importance = feature_importance(final_model, list(POINT_FEATURES))
        logger.info(f"Refit {final_name} on {len(y_full)} rows")

    return PointFitReport(
        results=results,
        importance=importance,
        final_model=final_model,
        plan=plan,
        leaky_smote=leaky,
        n_rows=int(len(table)),
        positive_share=positive_share,
        train_positive_share={name: float(np.mean(v)) for name, v in train_share.items()},
        final_name=final_name,
    )
