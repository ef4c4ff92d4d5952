"""SVG charts for the metric tables: decade trend lines and heatmaps."""

from __future__ import annotations

import csv
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

matplotlib.rcParams["svg.hashsalt"] = "posterlens"

CATEGORY_COLORS = {
    "Asian": "#e09f3e",
    "Black": "#540b0e",
    "Indian": "#9e2a2b",
    "White": "#335c67",
    "Other": "#7f8c8d",
}

_EXCLUDED_COLUMNS = ("n_movies", "n_actors")


def read_metric_csv(path: str | os.PathLike[str]) -> tuple[list[str], list[str], list[list[float | None]]]:
    """Wide metric CSV -> (row labels, column names, value grid)."""
    with open(path, encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header = rows[0]
    labels = [r[0] for r in rows[1:]]
    columns = header[1:]
    values = [[float(cell) if cell != "" else None for cell in r[1:]] for r in rows[1:]]
    return labels, columns, values


def _category_columns(columns: list[str]) -> list[int]:
    return [
        i
        for i, col in enumerate(columns)
        if col not in _EXCLUDED_COLUMNS and not col.startswith("mean_count:")
    ]


def line_chart(csv_path: str | os.PathLike[str], out_svg: str | os.PathLike[str],
               title: str, ylabel: str) -> None:
    labels, columns, values = read_metric_csv(csv_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    x = np.arange(len(labels))
    for idx in _category_columns(columns):
        series = [row[idx] for row in values]
        xs = [xi for xi, val in zip(x, series) if val is not None]
        ys = [val for val in series if val is not None]
        ax.plot(xs, ys, marker="o", label=columns[idx],
                color=CATEGORY_COLORS.get(columns[idx]))
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)


def heatmap(labels: list[str], columns: list[str], grid: np.ndarray,
            out_svg: str | os.PathLike[str], title: str) -> None:
    fig, ax = plt.subplots(figsize=(1.2 + 0.6 * len(columns), 1.2 + 0.45 * len(labels)))
    masked = np.ma.masked_invalid(grid)
    im = ax.imshow(masked, cmap="viridis", aspect="auto", vmin=0.0)
    ax.set_xticks(np.arange(len(columns)))
    ax.set_xticklabels(columns, rotation=45, ha="right")
    ax.set_yticks(np.arange(len(labels)))
    ax.set_yticklabels(labels)
    mask = np.ma.getmaskarray(masked)
    for r in range(len(labels)):
        for c in range(len(columns)):
            if not mask[r, c]:
                ax.text(c, r, f"{grid[r, c]:.2f}", ha="center", va="center", fontsize=7, color="white")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)


def heatmap_from_csv(csv_path: str | os.PathLike[str], out_svg: str | os.PathLike[str], title: str) -> None:
    labels, columns, values = read_metric_csv(csv_path)
    keep = _category_columns(columns)
    grid = np.array([[row[i] if row[i] is not None else np.nan for i in keep] for row in values])
    heatmap(labels, [columns[i] for i in keep], grid, out_svg, title)


def genre_heatmaps(csv_path: str | os.PathLike[str], out_dir: str | os.PathLike[str]) -> list[Path]:
    """The long-form genre CSV renders into two heatmaps."""
    views: dict[str, dict[tuple[str, str], float]] = {}
    with open(csv_path, encoding="utf-8") as fh:
        for rec in csv.DictReader(line for line in fh if not line.startswith("#")):
            views.setdefault(rec["view"], {})[(rec["genre"], rec["category"])] = float(rec["value"])
    out = Path(out_dir)
    written = []
    titles = {
        "share_of_genre": "Category distribution within each genre",
        "share_of_race": "Genre distribution of each category",
    }
    for view, cells in views.items():
        genres = sorted({g for g, _ in cells})
        cats = sorted({c for _, c in cells})
        if view == "share_of_genre":
            labels, columns = genres, cats
            grid = np.array([[cells.get((g, c), np.nan) for c in cats] for g in genres])
        else:
            labels, columns = cats, genres
            grid = np.array([[cells.get((g, c), np.nan) for g in genres] for c in cats])
        path = out / f"genre_{view}.svg"
        heatmap(labels, columns, grid, path, titles[view])
        written.append(path)
    return written


def render_all(metrics_dir: str | os.PathLike[str], plots_dir: str | os.PathLike[str]) -> list[Path]:
    """Render every chart the metrics directory supports; returns paths."""
    metrics = Path(metrics_dir)
    plots = Path(plots_dir)
    plots.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    line_specs = [
        ("frequency_by_decade.csv", "Ethnic representation on posters by decade", "share of matched actors"),
        ("relative_face_size.csv", "Face size relative to the largest face", "mean relative size"),
        ("center_distance.csv", "Distance from poster center", "normalized distance"),
        ("unique_actor_buckets.csv", "Composition by unique actors per movie", "share of actors"),
    ]
    for name, title, ylabel in line_specs:
        src = metrics / name
        if src.exists():
            dst = plots / (src.stem + ".svg")
            line_chart(src, dst, title, ylabel)
            written.append(dst)

    heat_specs = [
        ("conditional_race_given_largest.csv", "P(category | largest face category)"),
        ("rank_race_ratio.csv", "Category share by cast rank"),
    ]
    for name, title in heat_specs:
        src = metrics / name
        if src.exists():
            dst = plots / (src.stem + ".svg")
            heatmap_from_csv(src, dst, title)
            written.append(dst)

    genre_csv = metrics / "genre_race.csv"
    if genre_csv.exists():
        written.extend(genre_heatmaps(genre_csv, plots))
    return written
