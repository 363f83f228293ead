"""Brute-force references for self-verification.

These deliberately avoid the vectorised paths they check: stylization is
done one bank element at a time, votes are tallied in plain Python and
curves are integrated on a uniform threshold grid.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import InputError


def exact_smoothed_prediction(x, f, stylizer, bank) -> tuple[int, list[float]]:
    """Exact majority class over the empirical bank and its vote probabilities."""
    images = getattr(bank, "images", bank)
    if len(images) == 0:
        raise InputError("style bank is empty")
    x = np.asarray(x, dtype=np.float64)
    n_classes = len(getattr(f, "classes_", [])) or None
    tally: dict[int, int] = {}
    for style in images:
        out = stylizer.transform(x[None], np.asarray(style)[None])
        label = int(np.asarray(f.predict(out))[0])
        tally[label] = tally.get(label, 0) + 1
    if n_classes is None:
        n_classes = max(tally) + 1
    total = len(images)
    probs = [tally.get(k, 0) / total for k in range(n_classes)]
    best = 0
    for k in range(1, n_classes):
        if probs[k] > probs[best]:
            best = k
    return best, probs


def finite_diff_grad(loss_fn: Callable[[np.ndarray], float], params, h: float = 1e-6) -> np.ndarray:
    """Central differences (loss(p + h e_i) - loss(p - h e_i)) / 2h per coordinate."""
    if h <= 0:
        raise InputError("step h must be positive")
    p = np.array(params, dtype=np.float64)
    grad = np.zeros_like(p)
    flat_p, flat_g = p.reshape(-1), grad.reshape(-1)
    for i in range(flat_p.size):
        orig = flat_p[i]
        flat_p[i] = orig + h
        up = float(loss_fn(p))
        flat_p[i] = orig - h
        down = float(loss_fn(p))
        flat_p[i] = orig
        flat_g[i] = (up - down) / (2 * h)
    return grad


def grid_auc(preds, step: float) -> float:
    """Accuracy-vs-abstention area from a uniform threshold grid over [0, 1]."""
    if step <= 0:
        raise InputError("step must be positive")
    n = len(preds)
    points: list[tuple[float, float]] = []
    n_steps = int(round(1.0 / step))
    for j in range(n_steps + 1):
        alpha = round(j * step, 12)
        kept = 0
        right = 0
        for p in preds:
            if not p.score < alpha:
                kept += 1
                right += p.label == p.predicted
        if kept == 0:
            continue
        frac = (n - kept) / n
        if points and points[-1][0] == frac:
            continue
        points.append((frac, right / kept))
    if not points:
        raise InputError("no threshold keeps any sample")
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2
    last_x, last_y = points[-1]
    return area + last_y * (1.0 - last_x)


def relative_error(a, b) -> float:
    """||a - b|| / max(||a||, ||b||, tiny), the norm-wise relative gap used by the gradient checks."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
