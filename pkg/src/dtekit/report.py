"""Score reports: text block, machine-readable key-value section, TSV, figures.

Every report path writes the delimited output first and then renders the
matching matplotlib figure next to it (PNG, Agg backend).
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .decoder import ClassificationScores, RecognitionScores
from .errors import ConfigError


def _fmt(value, digits=6):
    if value is None:
        return "nan"
    return f"{value:.{digits}f}"


def render_score_report(system: str, split: str, cls: ClassificationScores,
                        rec: RecognitionScores, params=None) -> str:
    """Human-readable block followed by a `[scores]` key-value section."""
    lines = ["dtekit score report", f"system: {system}   split: {split}"]
    if cls.frames > 0:
        lines.append(
            f"framewise (non-silence): tied {100 * cls.tied_accuracy:.2f}%  "
            f"phone {100 * cls.phone_accuracy:.2f}%  over {cls.frames} frames"
        )
    else:
        lines.append("framewise (non-silence): no non-silence frames, not reported")
    lines.append(
        f"recognition: acc {100 * rec.accuracy:.2f}%  (corr {100 * rec.correctness:.2f}%)  "
        f"S={rec.substitutions} D={rec.deletions} I={rec.insertions} N={rec.n_ref}"
    )
    if params is not None:
        lines.append(
            f"decode: mode={params.mode} lm_scale={params.lm_scale:g} "
            f"penalty={params.insertion_penalty:g}"
        )
    lines.append("")
    lines.append("[scores]")
    lines.append(f"tied_acc={_fmt(cls.tied_accuracy)}")
    lines.append(f"phone_acc={_fmt(cls.phone_accuracy)}")
    lines.append(f"rec_acc={_fmt(rec.accuracy)}")
    lines.append(f"rec_correctness={_fmt(rec.correctness)}")
    lines.append(f"S={rec.substitutions}")
    lines.append(f"D={rec.deletions}")
    lines.append(f"I={rec.insertions}")
    lines.append(f"N={rec.n_ref}")
    lines.append(f"frames={cls.frames}")
    return "\n".join(lines) + "\n"


def parse_score_report(text: str) -> dict:
    """Key-value section of a report, numbers parsed."""
    values = {}
    in_section = False
    for line in text.splitlines():
        if line.strip() == "[scores]":
            in_section = True
            continue
        if in_section and "=" in line:
            key, _, raw = line.partition("=")
            values[key.strip()] = float(raw)
    if not values:
        raise ConfigError("no [scores] section found in report")
    return values


def write_scores_tsv(rows, path) -> None:
    """Delimited output: one row per system with the headline metrics."""
    header = "system\ttied_acc\tphone_acc\trec_acc\trec_correctness\tS\tD\tI\tN\tframes"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row['system']}\t{_fmt(row['tied_acc'])}\t{_fmt(row['phone_acc'])}\t"
            f"{_fmt(row['rec_acc'])}\t{_fmt(row['rec_correctness'])}\t"
            f"{row['S']}\t{row['D']}\t{row['I']}\t{row['N']}\t{row['frames']}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def plot_system_scores(rows, path) -> None:
    """Grouped bars: framewise phone accuracy and recognition accuracy per system."""
    systems = [row["system"] for row in rows]
    phone = [100 * (row["phone_acc"] or 0.0) for row in rows]
    rec = [100 * (row["rec_acc"] or 0.0) for row in rows]
    x = np.arange(len(systems))
    width = 0.38
    fig, ax = plt.subplots(figsize=(1.8 + 1.2 * len(systems), 4.0))
    ax.bar(x - width / 2, phone, width, label="phone classification")
    ax.bar(x + width / 2, rec, width, label="phoneme recognition")
    ax.set_xticks(x)
    ax.set_xticklabels(systems, rotation=20, ha="right")
    ax.set_ylabel("accuracy [%]")
    ax.set_ylim(0, 100)
    ax.grid(axis="y", alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_curves(history, path, title="") -> None:
    if not history:
        return
    epochs = [row["epoch"] for row in history]
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.plot(epochs, [row["train_ce"] for row in history], marker="o",
            markersize=3, label="train CE")
    ax.plot(epochs, [row["dev_ce"] for row in history], marker="s",
            markersize=3, label="dev CE")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy")
    if title:
        ax.set_title(title, fontsize=9)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_tuning_grid(grid, path, title="") -> None:
    """Heatmap of dev recognition accuracy over the (lm_scale, penalty) grid."""
    scales = sorted({row[0] for row in grid})
    pens = sorted({row[1] for row in grid})
    acc = np.full((len(pens), len(scales)), np.nan)
    for scale, pen, value in grid:
        acc[pens.index(pen), scales.index(scale)] = 100 * value
    fig, ax = plt.subplots(figsize=(1.5 + 0.8 * len(scales), 1.5 + 0.6 * len(pens)))
    im = ax.imshow(acc, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(scales)))
    ax.set_xticklabels([f"{s:g}" for s in scales])
    ax.set_yticks(range(len(pens)))
    ax.set_yticklabels([f"{p:g}" for p in pens])
    ax.set_xlabel("LM scale")
    ax.set_ylabel("insertion penalty")
    if title:
        ax.set_title(title, fontsize=9)
    fig.colorbar(im, ax=ax, label="dev accuracy [%]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_em_history(history, path, title="EM training") -> None:
    if not history:
        return
    iters = [row[0] for row in history]
    ll = [row[1] for row in history]
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.plot(iters, ll, marker="o", markersize=3)
    ax.set_xlabel("EM iteration")
    ax.set_ylabel("aligned log-likelihood")
    ax.set_title(title, fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
