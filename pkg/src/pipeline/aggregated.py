"""
Tract-level two-stage model: gradient boosting on network features, then
a Gaussian Process on the projected centroids fitted to the boosting
residuals.

Cross-validation pools out-of-fold predictions: r2_stage1 is the R² of the
boosting predictions alone, r2_incremental what the GP adds on top.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.config import RunConfig
from src.features.tables import AGGREGATED_COLUMNS, CENTROID_COLUMNS, SPATIAL_FEATURES
from src.learners.boosting import GBMModel, gbm_fit, gbm_predict
from src.learners.gaussian_process import GPModel, gp_fit, gp_predict, select_gp_hyperparameters
from src.learners.importance import ImportanceReport, feature_importance
from src.metrics.folds import FoldPlan, fold_seed, kfold
from src.metrics.performance_evaluator import fold_r_squared, r_squared, summarize_folds
from src.pipeline.persistence import ModelBundle

logger = logging.getLogger(__name__)


@dataclass
class AggregatedFit:
    stage1: GBMModel
    stage2: Optional[GPModel]
    r2_stage1: float
    r2_incremental: float
    r2_combined: float
    importance: ImportanceReport
    plan: FoldPlan
    oof_stage1: np.ndarray
    oof_stage2: np.ndarray
    fold_metrics: Dict[str, Dict[str, float]] = field(default_factory=dict)
    in_sample: Dict[str, float] = field(default_factory=dict)
    gp_kernels: List[Dict[str, float]] = field(default_factory=list)

    def predict(self, X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
        """f(s) + g(x) with the models refit on all rows."""
        scores = gbm_predict(self.stage1, X)
        if self.stage2 is not None:
            scores = scores + gp_predict(self.stage2, centroids)
        return scores

    def bundle(self) -> ModelBundle:
        return ModelBundle(
            name="aggregated",
            model=self.stage1,
            feature_names=list(SPATIAL_FEATURES),
            gp=self.stage2,
            centroid_columns=list(CENTROID_COLUMNS) if self.stage2 is not None else [],
        )

    def to_report(self) -> Dict[str, Any]:
        return {
            "r2_stage1": self.r2_stage1,
            "r2_incremental": self.r2_incremental,
            "r2_combined": self.r2_combined,
            "stage2_enabled": self.stage2 is not None,
            "folds": {
                "k": self.plan.k,
                "seed": self.plan.seed,
                "stratified": self.plan.stratified,
                "sizes": self.plan.fold_sizes().tolist(),
            },
            "per_fold": self.fold_metrics,
            "in_sample": self.in_sample,
            "gp_kernels": self.gp_kernels,
            "importance": [{"feature": name, "share": share} for name, share in self.importance.ranking()],
        }


def _fit_stage2(C: np.ndarray, residuals: np.ndarray, cfg: RunConfig) -> GPModel:
    kernel, _ = select_gp_hyperparameters(C, residuals, cfg.gp.lengthscale_factors, cfg.gp.noise_ratios)
    return gp_fit(C, residuals, kernel)


def _run_fold(
    fold: int,
    train: np.ndarray,
    test: np.ndarray,
    X: np.ndarray,
    C: np.ndarray,
    y: np.ndarray,
    cfg: RunConfig,
    stage2: bool
):
    params = cfg.gbm.params(loss="squared", seed=fold_seed(cfg.seed, fold))
    gbm = gbm_fit(X[train], y[train], params, feature_names=list(SPATIAL_FEATURES))
    f_test = gbm_predict(gbm, X[test])
    g_test = np.zeros(len(test))
    kernel = None
    if stage2:
        residuals = y[train] - gbm_predict(gbm, X[train])
        gp = _fit_stage2(C[train], residuals, cfg)
        g_test = gp_predict(gp, C[test])
        kernel = {"variance": gp.kernel.variance, "lengthscale": gp.kernel.lengthscale, "noise": gp.kernel.noise}
    logger.debug(f"Aggregated fold {fold}: {len(train)} train / {len(test)} test rows")
    return fold, f_test, g_test, kernel


def run_aggregated(table: pd.DataFrame, cfg: Optional[RunConfig] = None, stage2: Optional[bool] = None) -> AggregatedFit:
    """
    Cross-validate and refit the two-stage aggregated model.

    Per fold, boosting is fit on the training rows, its training residuals
    are modelled by a GP over training centroids, and held-out rows get
    f(s) + g(x). Test rows never reach either fit.

    Args:
        table: Aggregated table (AGGREGATED_COLUMNS)
        cfg: Run configuration (folds, boosting and GP settings, seed)
        stage2: Override cfg.gp.enabled

    Returns:
        AggregatedFit with pooled metrics and the models refit on all rows

    Raises:
        ValueError: with fewer than 2k rows for k folds
    """
    cfg = cfg or RunConfig()
    stage2 = cfg.gp.enabled if stage2 is None else stage2
    missing = [c for c in AGGREGATED_COLUMNS if c not in table.columns]
    if missing:
        raise ValueError(f"missing column {missing[0]!r}")

    k = cfg.cv.aggregated_folds
    n = len(table)
    if n < 2 * k:
        raise ValueError(f"insufficient rows: {n} rows for {k}-fold cross-validation (need at least {2 * k})")

    # Build design matrix and target
    X = table[SPATIAL_FEATURES].to_numpy(dtype=float)
    C = table[CENTROID_COLUMNS].to_numpy(dtype=float)
    y = table["y"].to_numpy(dtype=float)

    plan = kfold(n, k, seed=cfg.seed, labels=y if cfg.cv.stratify_aggregated else None)
    logger.info(f"Aggregated model: {n} tracts, {k}-fold CV, GP stage {'on' if stage2 else 'off'}")

    results = Parallel(n_jobs=cfg.threads)(
        delayed(_run_fold)(fold, train, test, X, C, y, cfg, stage2)
        for fold, train, test in plan.splits()
    )
    # Pool held-out predictions in fold order
    oof_f = np.zeros(n)
    oof_g = np.zeros(n)
    kernels: List[Dict[str, float]] = []
    for fold, f_test, g_test, kernel in sorted(results, key=lambda r: r[0]):
        test = plan.test_index(fold)
        oof_f[test] = f_test
        oof_g[test] = g_test
        if kernel is not None:
            kernels.append(kernel)

    # Calculate pooled and per-fold R2
    r2_stage1 = r_squared(y, oof_f)
    r2_combined = r_squared(y, oof_f + oof_g) if stage2 else r2_stage1
    fold_metrics = {"r2_stage1": summarize_folds(fold_r_squared(y, oof_f, plan.assignments))}
    if stage2:
        fold_metrics["r2_combined"] = summarize_folds(fold_r_squared(y, oof_f + oof_g, plan.assignments))

    # Refit both stages on all rows
    final_params = cfg.gbm.params(loss="squared", seed=cfg.seed)
    gbm = gbm_fit(X, y, final_params, feature_names=list(SPATIAL_FEATURES))
    f_all = gbm_predict(gbm, X)
    in_sample = {"r2_stage1": r_squared(y, f_all)}
    gp = None
    if stage2:
        gp = _fit_stage2(C, y - f_all, cfg)
        in_sample["r2_combined"] = r_squared(y, f_all + gp_predict(gp, C))

    fit = AggregatedFit(
        stage1=gbm,
        stage2=gp,
        r2_stage1=r2_stage1,
        r2_incremental=r2_combined - r2_stage1,
        r2_combined=r2_combined,
        importance=feature_importance(gbm, list(SPATIAL_FEATURES)),
        plan=plan,
        oof_stage1=oof_f,
        oof_stage2=oof_g,
        fold_metrics=fold_metrics,
        in_sample=in_sample,
        gp_kernels=kernels,
    )
    logger.info(
        f"Aggregated CV: R² stage 1 {fit.r2_stage1:.3f}, incremental {fit.r2_incremental:.3f}, "
        f"combined {fit.r2_combined:.3f}"
    )
    return fit
