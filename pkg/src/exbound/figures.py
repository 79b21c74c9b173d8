"""Matplotlib renderings written next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def boundary_figure(strike, times, b_fd, b_model, path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.step(times, b_fd, where="mid", label="finite difference", lw=1.8)
    if b_model is not None:
        ax.step(times, b_model, where="mid", label="learned operator",
                lw=1.4, ls="--")
    ax.set_xlabel("time t")
    ax.set_ylabel("critical price b(t)")
    ax.set_title(f"Early-exercise boundary, K = {strike:g}")
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def loss_figure(epoch_losses, path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogy(range(1, len(epoch_losses) + 1), epoch_losses, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training MSE (normalized units)")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def eval_figure(metrics, path) -> None:
    strikes = [m.strike for m in metrics]
    errors = [m.rel_l2_error for m in metrics]
    colors = ["tab:red" if m.held_out else "tab:blue" for m in metrics]
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.bar(strikes, errors, color=colors, width=0.7)
    ax.set_xlabel("strike")
    ax.set_ylabel("relative L2 surface error vs FD")
    ax.set_title("blue = trained strikes, red = held out")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
