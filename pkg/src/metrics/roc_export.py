"""ROC curve export: CSV points and an 800x800 SVG plot."""

import logging
from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from src.metrics.performance_evaluator import RocCurve  # noqa: E402

logger = logging.getLogger(__name__)

SVG_SIZE_PX = 800
SVG_DPI = 72


def roc_frame(curve: RocCurve) -> pd.DataFrame:
    return pd.DataFrame({"threshold": curve.thresholds, "fpr": curve.fpr, "tpr": curve.tpr})


def write_roc_csv(curve: RocCurve, target: Union[str, Path]) -> None:
    """CSV with columns threshold,fpr,tpr; the first threshold is inf."""
    roc_frame(curve).to_csv(target, index=False, lineterminator="\n")


def write_roc_svg(curve: RocCurve, target: Union[str, Path], title: Optional[str] = None, auc: Optional[float] = None) -> None:
    """
    Render the curve with a diagonal reference on a fixed 800x800 canvas.
    Output bytes depend only on the curve (no timestamps, fixed id salt).
    """
    with plt.rc_context({"svg.hashsalt": "crashlens", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(SVG_SIZE_PX / SVG_DPI, SVG_SIZE_PX / SVG_DPI), dpi=SVG_DPI)
        label = f"AUC = {auc:.3f}" if auc is not None else None
        ax.plot(curve.fpr, curve.tpr, lw=1.5, color="tab:blue", label=label)
        ax.plot([0, 1], [0, 1], lw=1, linestyle="--", color="k")
        ax.set_xlim([-0.02, 1.02])
        ax.set_ylim([-0.02, 1.02])
        ax.set_xlabel("False Positive Rate")
        ax.set_ylabel("True Positive Rate")
        if title:
            ax.set_title(title)
        if label:
            ax.legend(loc="lower right")
        fig.savefig(target, format="svg", metadata={"Date": None})
        plt.close(fig)
    logger.debug(f"ROC plot written to {target}")
