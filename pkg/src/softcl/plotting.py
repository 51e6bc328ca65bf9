"""Figure helpers for the CLI reports. Everything renders off-screen to files."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_history(history, path):
    """Loss components and validation accuracy per epoch."""
    epochs = [r.epoch for r in history.epochs]
    with plt.rc_context(STYLE):
        fig, (ax_l, ax_a) = plt.subplots(1, 2, figsize=(8, 3))
        ax_l.plot(epochs, [r.total for r in history.epochs], "k-o", ms=3, label="total")
        for key, style in (("l_cross", "C0--"), ("l_mono", "C1--")):
            vals = [getattr(r, key) for r in history.epochs]
            if any(vals):
                ax_l.plot(epochs, vals, style, label=key)
        if history.step0_loss is not None:
            ax_l.axhline(history.step0_loss, color="0.6", lw=0.8, ls=":", label="step 0")
        ax_l.set_xlabel("epoch")
        ax_l.set_ylabel("mean training loss")
        ax_l.legend(frameon=False)

        accs = [r.val_acc for r in history.epochs]
        if history.initial_val_acc is not None:
            ax_a.plot([0] + epochs, [history.initial_val_acc] + accs, "C2-o", ms=3)
        else:
            ax_a.plot(epochs, accs, "C2-o", ms=3)
        if history.best_epoch:
            ax_a.axvline(history.best_epoch, color="0.6", lw=0.8, ls=":")
        ax_a.set_ylim(0, 1.02)
        ax_a.set_xlabel("epoch")
        ax_a.set_ylabel("validation retrieval accuracy")
        return _save(fig, path)


def plot_label_matrices(matrices: dict, path):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(matrices), figsize=(3.2 * len(matrices), 3), squeeze=False)
        for ax, (name, m) in zip(axes[0], matrices.items()):
            im = ax.imshow(np.asarray(m), vmin=0.0, vmax=1.0, cmap="viridis")
            ax.set_title(name)
            ax.set_xlabel("j")
            ax.set_ylabel("i")
        fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8)
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        return path


def plot_similarity(cos, path, title="student cosine (source x target)"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3.5))
        im = ax.imshow(np.asarray(cos), vmin=-1.0, vmax=1.0, cmap="RdBu_r")
        ax.set_title(title)
        ax.set_xlabel("target")
        ax.set_ylabel("source")
        fig.colorbar(im, ax=ax, shrink=0.8)
        return _save(fig, path)
