"""Embedding distance between original and anonymized faces, plus histograms."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from anonypipe.errors import EvaluationError, UndefinedMetricError


@dataclass(frozen=True)
class EmbeddingDistanceRecord:
    image_path: str
    face_index: int
    l2_distance: float


def embedding_l2(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance between the unit-normalized vectors; lies in [0, 2]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise EvaluationError(f"embedding dimensions differ: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedMetricError("cannot normalize a zero embedding")
    return float(min(np.linalg.norm(a / na - b / nb), 2.0))


@dataclass
class Histogram:
    edges: list[float]
    counts: list[int]
    below: int = 0
    above: int = 0

    @property
    def bins(self) -> list[tuple[float, float, int]]:
        return [(self.edges[i], self.edges[i + 1], c) for i, c in enumerate(self.counts)]

    @property
    def total(self) -> int:
        return sum(self.counts) + self.below + self.above

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in self.bins:
            writer.writerow([f"{left:.6f}", f"{right:.6f}", count])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "bins": [{"bin_left": l, "bin_right": r, "count": c} for l, r, c in self.bins],
            "overflow": {"below": self.below, "above": self.above},
        }

    def to_svg(self, width: int = 640, height: int = 320, title: str = "") -> str:
        margin = 30
        peak = max(self.counts, default=0) or 1
        bar_w = (width - 2 * margin) / max(len(self.counts), 1)
        plot_h = height - 2 * margin
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<text x="{margin}" y="{margin - 10}" font-size="12">{_escape(title)}</text>',
        ]
        for i, count in enumerate(self.counts):
            bar_h = plot_h * count / peak
            x = margin + i * bar_w
            y = margin + plot_h - bar_h
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w * 0.9:.2f}" height="{bar_h:.2f}" fill="#4c72b0">'
                f"<title>[{self.edges[i]:.3f}, {self.edges[i + 1]:.3f}): {count}</title></rect>"
            )
        axis_y = margin + plot_h
        parts.append(f'<line x1="{margin}" y1="{axis_y}" x2="{width - margin}" y2="{axis_y}" stroke="black"/>')
        parts.append(f'<text x="{margin}" y="{axis_y + 15}" font-size="10">{self.edges[0]:g}</text>')
        parts.append(
            f'<text x="{width - margin}" y="{axis_y + 15}" font-size="10" text-anchor="end">{self.edges[-1]:g}</text>'
        )
        parts.append("</svg>")
        return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def histogram(values: Iterable[float], bins: int = 50, lo: float = 0.0, hi: float = 2.0) -> Histogram:
    """Equal-width bins over [lo, hi]; ``hi`` itself falls in the last bin.

    Values outside the range (and NaN, counted as above) go to the overflow
    counts, so every input is accounted for exactly once.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    arr = np.asarray(list(values), dtype=np.float64)
    below = int(np.sum(arr < lo))
    inside = arr[(arr >= lo) & (arr <= hi)]
    above = arr.size - below - inside.size
    counts, edges = np.histogram(inside, bins=bins, range=(lo, hi))
    return Histogram(edges.tolist(), counts.tolist(), below, above)


def write_records_csv(records: Sequence[EmbeddingDistanceRecord], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_path", "face_index", "l2_distance"])
        for rec in records:
            writer.writerow([rec.image_path, rec.face_index, f"{rec.l2_distance:.10f}"])


def read_distances_csv(path, column: str = "l2_distance") -> list[float]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise EvaluationError(f"{path}: no column {column!r}")
        return [float(row[column]) for row in reader]
