"""Minimal deterministic SVG rendering for run diagnostics.

Hand-rolled vector output (scatter panels, overlaid histograms, line
charts) so figures carry no raster or plotting-stack dependency and are
byte-identical across runs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _svg(path: str | Path, width: float, height: float, body: list[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        '<rect width="100%" height="100%" fill="white"/>',
        *body,
        "</svg>",
    ]
    path.write_text("\n".join(doc) + "\n")


def scatter_panels(
    panels: list[tuple[str, np.ndarray]],
    path: str | Path,
    size: float = 340.0,
    pad: float = 38.0,
    radius: float = 1.6,
) -> None:
    """Side-by-side equal-aspect scatter panels, one per (title, points)."""
    body = []
    for p, (title, pts) in enumerate(panels):
        pts = np.asarray(pts, dtype=np.float64)
        x0 = p * size
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        span = float(max((hi - lo).max(), 1e-12))
        center = (lo + hi) / 2.0
        scale = (size - 2 * pad) / span
        xs = x0 + size / 2 + (pts[:, 0] - center[0]) * scale
        ys = size / 2 - (pts[:, 1] - center[1]) * scale + 6
        body.append(
            f'<rect x="{_fmt(x0 + 4)}" y="10" width="{_fmt(size - 8)}" '
            f'height="{_fmt(size - 14)}" fill="none" stroke="#999" stroke-width="1"/>'
        )
        body.append(
            f'<text x="{_fmt(x0 + size / 2)}" y="{_fmt(size + 16)}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="13">{title}</text>'
        )
        for x, y in zip(xs, ys):
            body.append(
                f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(radius)}" '
                f'fill="{PALETTE[0]}" fill-opacity="0.6"/>'
            )
    _svg(path, size * len(panels), size + 26, body)


def multi_histogram(
    bin_lo: np.ndarray,
    bin_hi: np.ndarray,
    series: list[tuple[str, np.ndarray]],
    path: str | Path,
    log_scale: bool = False,
    reference: float | None = None,
    width: float = 560.0,
    height: float = 320.0,
) -> None:
    """Overlaid translucent histograms sharing bins; optional reference line."""
    pad = 42.0
    lo = float(bin_lo[0])
    hi = float(bin_hi[-1])
    span = max(hi - lo, 1e-12)

    def transform(counts: np.ndarray) -> np.ndarray:
        vals = np.asarray(counts, dtype=np.float64)
        return np.log10(vals + 1.0) if log_scale else vals

    peak = max(float(transform(c).max()) for _, c in series) or 1.0
    body = []
    for s, (label, counts) in enumerate(series):
        color = PALETTE[s % len(PALETTE)]
        vals = transform(counts)
        for b in range(len(counts)):
            if counts[b] == 0:
                continue
            x = pad + (bin_lo[b] - lo) / span * (width - 2 * pad)
            w = (bin_hi[b] - bin_lo[b]) / span * (width - 2 * pad)
            h = vals[b] / peak * (height - 2 * pad)
            body.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(height - pad - h)}" width="{_fmt(w)}" '
                f'height="{_fmt(h)}" fill="{color}" fill-opacity="0.45"/>'
            )
        body.append(
            f'<text x="{_fmt(width - pad)}" y="{_fmt(18 + 14 * s)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12" fill="{color}">{label}</text>'
        )
    if reference is not None and lo <= reference <= hi:
        x = pad + (reference - lo) / span * (width - 2 * pad)
        body.append(
            f'<line x1="{_fmt(x)}" y1="{_fmt(pad)}" x2="{_fmt(x)}" '
            f'y2="{_fmt(height - pad)}" stroke="#444" stroke-dasharray="5,4"/>'
        )
    body.append(
        f'<line x1="{_fmt(pad)}" y1="{_fmt(height - pad)}" x2="{_fmt(width - pad)}" '
        f'y2="{_fmt(height - pad)}" stroke="#333"/>'
    )
    for frac in (0.0, 0.5, 1.0):
        x = pad + frac * (width - 2 * pad)
        body.append(
            f'<text x="{_fmt(x)}" y="{_fmt(height - pad + 16)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(lo + frac * span)}</text>'
        )
    _svg(path, width, height, body)


def line_chart(
    xs: np.ndarray,
    series: list[tuple[str, np.ndarray]],
    path: str | Path,
    log_y: bool = False,
    width: float = 560.0,
    height: float = 320.0,
) -> None:
    """Polyline chart of one or more series over shared x values."""
    pad = 46.0
    xs = np.asarray(xs, dtype=np.float64)
    ys_all = np.concatenate([np.asarray(v, dtype=np.float64) for _, v in series])
    if log_y:
        ys_all = np.log10(np.maximum(ys_all, 1e-300))
    y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
    y_span = max(y_hi - y_lo, 1e-12)
    x_lo, x_hi = float(xs.min()), float(xs.max())
    x_span = max(x_hi - x_lo, 1e-12)
    body = []
    for s, (label, ys) in enumerate(series):
        color = PALETTE[s % len(PALETTE)]
        vals = np.asarray(ys, dtype=np.float64)
        if log_y:
            vals = np.log10(np.maximum(vals, 1e-300))
        pts = " ".join(
            f"{_fmt(pad + (x - x_lo) / x_span * (width - 2 * pad))},"
            f"{_fmt(height - pad - (y - y_lo) / y_span * (height - 2 * pad))}"
            for x, y in zip(xs, vals)
        )
        body.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        body.append(
            f'<text x="{_fmt(width - pad)}" y="{_fmt(18 + 14 * s)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12" fill="{color}">{label}</text>'
        )
    body.append(
        f'<line x1="{_fmt(pad)}" y1="{_fmt(height - pad)}" x2="{_fmt(width - pad)}" '
        f'y2="{_fmt(height - pad)}" stroke="#333"/>'
    )
    body.append(
        f'<line x1="{_fmt(pad)}" y1="{_fmt(pad)}" x2="{_fmt(pad)}" '
        f'y2="{_fmt(height - pad)}" stroke="#333"/>'
    )
    _svg(path, width, height, body)
