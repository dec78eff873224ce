"""Figure rendering for the convergence report path.

Renders the in-sample versus out-of-sample revenue bands (mean plus/minus
one standard deviation across replications) from aggregated plot rows to a
PNG next to the delimited output.  Rendering is optional everywhere; the
CSV stays the source of truth.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["parse_plot_csv", "render_convergence_figure"]


def parse_plot_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        row = dict(zip(header, parts))
        rows.append(
            {
                "N": int(row["N"]),
                "in_mean": float(row["in_mean"]),
                "in_sd": float(row["in_sd"]),
                "out_mean": float(row["out_mean"]),
                "out_sd": float(row["out_sd"]),
                "reps": int(row["reps"]),
            }
        )
    return rows


def render_convergence_figure(rows: list[dict], path: str, title: str | None = None) -> None:
    """Mean +/- sd bands of in-sample and out-of-sample expected revenue."""
    ns = [r["N"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for key, label, color in (
        ("in", "in-sample", "#d4a017"),
        ("out", "out-of-sample", "#7b2d8b"),
    ):
        mean = [r[f"{key}_mean"] for r in rows]
        sd = [r[f"{key}_sd"] for r in rows]
        ax.plot(ns, mean, marker="o", label=label, color=color)
        ax.fill_between(
            ns,
            [m - s for m, s in zip(mean, sd)],
            [m + s for m, s in zip(mean, sd)],
            alpha=0.2,
            color=color,
        )
    ax.set_xlabel("sample size N")
    ax.set_ylabel("expected revenue")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
