"""Matplotlib figure rendering for training, benchmark and sweep reports."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

KIND_LABELS = {"rote": "RotE", "roth": "RotH", "rotl": "RotL", "rot2l": "Rot2L"}


def plot_training_curve(train_log, path):
    """Loss per epoch plus validation Hits@10 where it was measured."""
    epochs = [r["epoch"] for r in train_log.epochs]
    losses = [r["loss"] for r in train_log.epochs]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, losses, color="tab:blue", label="training loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    val = [(r["epoch"], r["val_hits10"]) for r in train_log.epochs
           if r.get("val_hits10") is not None]
    if val:
        ax2 = ax.twinx()
        ax2.plot(*zip(*val), color="tab:orange", marker="o",
                 label="valid Hits@10")
        ax2.set_ylabel("valid Hits@10")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_epoch_times(bench, path):
    """Bar chart of median seconds per epoch for each model kind."""
    kinds = list(bench["seconds"])
    secs = [bench["seconds"][k] for k in kinds]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar([KIND_LABELS.get(k, k) for k in kinds], secs, color="tab:blue")
    ax.set_ylabel("seconds / epoch (median)")
    for i, s in enumerate(secs):
        ax.text(i, s, f"{s:.2f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_dimension_sweep(rows, path):
    """Hits@10 against embedding dimension, one line per model kind."""
    fig, ax = plt.subplots(figsize=(6, 4))
    kinds = sorted({r["kind"] for r in rows})
    for kind in kinds:
        pts = sorted((r["dim"], r["hits@10"]) for r in rows if r["kind"] == kind)
        ax.plot(*zip(*pts), marker="o", label=KIND_LABELS.get(kind, kind))
    ax.set_xlabel("embedding dimension")
    ax.set_ylabel("Hits@10")
    ax.set_xscale("log", base=2)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
