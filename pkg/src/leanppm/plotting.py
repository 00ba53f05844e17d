"""Report figures: validation-loss curves and parameter counts."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}

MODEL_COLORS = {
    "mtlformer": "#1f77b4",
    "mtlformer_light": "#ff7f0e",
    "transformer_simple": "#2ca02c",
    "lstm": "#d62728",
    "lstm_light": "#9467bd",
}


def plot_loss_curves(histories, path, title=None):
    """histories: mapping label -> TrainHistory (or list of (epoch, val_loss))."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for label, hist in histories.items():
            pts = [(r.epoch, r.val_loss) for r in hist.epochs] if hasattr(hist, "epochs") else hist
            if not pts:
                continue
            xs, ys = zip(*pts)
            ax.plot(xs, ys, label=label, color=MODEL_COLORS.get(label.split(":")[-1]), lw=1.4)
        ax.set_xlabel("epoch")
        ax.set_ylabel("validation loss")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_param_counts(rows, path, title=None):
    """rows: iterable of (label, model_type, params) drawn as horizontal bars."""
    rows = list(rows)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 0.35 * len(rows) + 1.2))
        labels = [r[0] for r in rows]
        ax.barh(range(len(rows)), [r[2] for r in rows],
                color=[MODEL_COLORS.get(r[1], "0.5") for r in rows])
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels(labels)
        ax.invert_yaxis()
        ax.set_xlabel("trainable parameters")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
