"""CSV logging and a dependency-free SVG plot of evaluation curves."""

from __future__ import annotations

import csv
import os
from collections import defaultdict
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .experiment import EvalRecord

CSV_FIELDS = ("seed", "epoch", "phase", "condition", "epsilon_policy", "normalized_reward_mean", "ci95")
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _writable(path) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise OSError(f"cannot write {path}: directory {parent} does not exist")


def emit_csv(records: Sequence[EvalRecord], path) -> None:
    if not records:
        raise ValueError("no records to write")
    _writable(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([r.seed, r.epoch, r.phase, r.condition, r.epsilon_policy,
                        repr(float(r.normalized_reward_mean)), repr(float(r.ci95))])


def parse_csv(path) -> list[EvalRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_FIELDS:
            raise ValueError(f"{path}: header must be {','.join(CSV_FIELDS)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_FIELDS):
                raise ValueError(f"{path}:{lineno}: expected {len(CSV_FIELDS)} fields, got {len(row)}")
            out.append(EvalRecord(int(row[0]), int(row[1]), int(row[2]), row[3], row[4],
                                  float(row[5]), float(row[6])))
    return out


def curves(records: Sequence[EvalRecord]) -> dict:
    """Per (condition, epsilon policy): epochs, seed-mean reward and a 95% band across seeds."""
    grouped = defaultdict(lambda: defaultdict(list))
    for r in records:
        grouped[(r.condition, r.epsilon_policy)][r.epoch].append(r.normalized_reward_mean)
    out = {}
    for key, by_epoch in grouped.items():
        epochs = sorted(by_epoch)
        means, bands = [], []
        for e in epochs:
            x = np.asarray(by_epoch[e])
            means.append(float(x.mean()))
            bands.append(float(1.96 * x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0)
        out[key] = (np.asarray(epochs), np.asarray(means), np.asarray(bands))
    return out


def phase_boundaries(records: Sequence[EvalRecord]) -> list[float]:
    """Epoch positions (midway between evaluations) where the phase index changes."""
    first_of = {}
    last_of = {}
    for r in records:
        first_of[r.phase] = min(first_of.get(r.phase, r.epoch), r.epoch)
        last_of[r.phase] = max(last_of.get(r.phase, r.epoch), r.epoch)
    phases = sorted(first_of)
    return [(last_of[a] + first_of[b]) / 2 for a, b in zip(phases, phases[1:])]


def emit_svg(records: Sequence[EvalRecord], path, width: int = 720, height: int = 360,
             title: str = "Normalized reward") -> None:
    if not records:
        raise ValueError("no records to plot")
    _writable(path)
    data = curves(records)
    all_epochs = np.concatenate([c[0] for c in data.values()])
    x0, x1 = float(all_epochs.min()), float(all_epochs.max())
    if x1 == x0:
        x1 = x0 + 1
    lows = [float((m - b).min()) for _, m, b in data.values()]
    y0, y1 = min(-0.2, min(lows)), 1.0
    ml, mr, mt, mb = 56, 150, 30, 40
    pw, ph = width - ml - mr, height - mt - mb

    def sx(e):
        return ml + (e - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + (y1 - v) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<text x="{ml}" y="18" font-family="sans-serif" font-size="13">{escape(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for v in np.linspace(y0, y1, 5):
        parts.append(f'<line x1="{ml - 4}" y1="{sy(v):.2f}" x2="{ml}" y2="{sy(v):.2f}" stroke="#444"/>')
        parts.append(f'<text x="{ml - 6}" y="{sy(v) + 4:.2f}" font-family="sans-serif" font-size="10" '
                     f'text-anchor="end">{v:.2f}</text>')
    if y0 < 0 < y1:
        parts.append(f'<line x1="{ml}" y1="{sy(0):.2f}" x2="{ml + pw}" y2="{sy(0):.2f}" stroke="#bbb" '
                     'stroke-dasharray="2,3"/>')
    for b in phase_boundaries(records):
        parts.append(f'<line class="phase" x1="{sx(b):.2f}" y1="{mt}" x2="{sx(b):.2f}" y2="{mt + ph}" '
                     'stroke="#888" stroke-dasharray="4,3"/>')
    parts.append(f'<text x="{ml + pw / 2}" y="{height - 8}" font-family="sans-serif" font-size="11" '
                 'text-anchor="middle">epoch</text>')
    for i, ((cond, eps), (epochs, means, bands)) in enumerate(sorted(data.items())):
        colour = _PALETTE[i % len(_PALETTE)]
        upper = [f"{sx(e):.2f},{sy(min(m + b, y1)):.2f}" for e, m, b in zip(epochs, means, bands)]
        lower = [f"{sx(e):.2f},{sy(max(m - b, y0)):.2f}" for e, m, b in zip(epochs, means, bands)]
        parts.append(f'<polygon class="band" points="{" ".join(upper + lower[::-1])}" fill="{colour}" '
                     'fill-opacity="0.18" stroke="none"/>')
        line = " ".join(f"{sx(e):.2f},{sy(m):.2f}" for e, m in zip(epochs, means))
        label = escape(f"{cond} ({eps})")
        parts.append(f'<polyline class="series" data-condition="{escape(cond)}" points="{line}" fill="none" '
                     f'stroke="{colour}" stroke-width="1.6"><title>{label}</title></polyline>')
        ly = mt + 14 + 16 * i
        parts.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 28}" y2="{ly}" stroke="{colour}" '
                     'stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 32}" y="{ly + 4}" font-family="sans-serif" font-size="11">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
