"""Loss and h-norm curves (median with 25-75% band) rendered to PNG."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from deva.errors import IoError  # noqa: E402


def _band(ax, steps, q, label):
    line, = ax.plot(steps, q[1], label=label)
    ax.fill_between(steps, q[0], q[2], color=line.get_color(), alpha=0.25, linewidth=0)


def render(summaries, out_dir, name="curves.png"):
    """Plot every summary on shared log-scale axes; returns the written path.

    A second panel shows the h-norm trace when any summary carries one.
    """
    with_h = [s for s in summaries if s.hnorm_q is not None]
    ncols = 2 if with_h else 1
    fig, axes = plt.subplots(1, ncols, figsize=(5.5 * ncols, 4), squeeze=False)
    ax = axes[0, 0]
    for s in summaries:
        if s.loss_q is not None:
            _band(ax, s.steps, s.loss_q, s.label)
    ax.set(xlabel="step", ylabel="loss", yscale="log", title="loss")
    ax.legend(fontsize="small")
    if with_h:
        ax = axes[0, 1]
        for s in with_h:
            _band(ax, s.steps, s.hnorm_q, s.label)
        ax.set(xlabel="step", ylabel="weighted h-norm", yscale="log", title="h-norm trace")
        ax.legend(fontsize="small")
    fig.tight_layout()
    path = os.path.join(out_dir, name)
    try:
        fig.savefig(path, dpi=120)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path
