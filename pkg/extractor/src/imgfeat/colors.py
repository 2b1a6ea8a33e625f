"""HSV conversion, per-channel histograms, and aesthetic-proxy statistics."""

from __future__ import annotations

import warnings

import numpy as np
from PIL import Image


def load_rgb(path):
    """Decode an image to a float RGB array in [0, 1], or None on failure."""
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
        return rgb
    except Exception as exc:  # undecodable image: caller skips the row
        warnings.warn(f"skipping undecodable image {path}: {exc}", stacklevel=2)
        return None


def rgb_to_hsv(rgb):
    """Vectorized RGB -> HSV with every channel scaled into [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    span = maxc - minc

    value = maxc
    saturation = np.where(maxc > 0, span / np.where(maxc > 0, maxc, 1.0), 0.0)

    hue = np.zeros_like(maxc)
    mask = span > 0
    safe_span = np.where(mask, span, 1.0)
    rc = (maxc - r) / safe_span
    gc = (maxc - g) / safe_span
    bc = (maxc - b) / safe_span
    hue = np.where((r == maxc) & mask, bc - gc, hue)
    hue = np.where((g == maxc) & (r != maxc) & mask, 2.0 + rc - bc, hue)
    hue = np.where((b == maxc) & (r != maxc) & (g != maxc) & mask, 4.0 + gc - rc, hue)
    hue = (hue / 6.0) % 1.0
    return hue, saturation, value


def channel_histograms(rgb, bins: int):
    """Unit-normalized hue/saturation/value histograms, shape (3, bins)."""
    hue, saturation, value = rgb_to_hsv(rgb)
    out = np.empty((3, bins))
    for i, channel in enumerate((hue, saturation, value)):
        counts, _ = np.histogram(channel.ravel(), bins=bins, range=(0.0, 1.0))
        total = counts.sum()
        out[i] = counts / total if total else 0.0
    return out


def _moments(values, weights=None):
    """Mean, standard deviation, skew; zeros when the weight mass vanishes."""
    values = values.ravel()
    if weights is None:
        weights = np.ones_like(values)
    else:
        weights = weights.ravel()
    total = weights.sum()
    if total <= 1e-12:
        return 0.0, 0.0, 0.0
    mean = float((weights * values).sum() / total)
    var = float((weights * (values - mean) ** 2).sum() / total)
    std = var ** 0.5
    if std <= 1e-12:
        return mean, 0.0, 0.0
    skew = float((weights * ((values - mean) / std) ** 3).sum() / total)
    return mean, std, skew


AESTHETIC_DIM = 13


def aesthetic_proxy(rgb, bins: int = 32):
    """Hand-engineered stand-in for a trained aesthetic embedding.

    Layout (13 values): hue mean/std/skew (saturation-weighted, so grayscale
    images score near zero), saturation mean/std/skew, value mean/std/skew,
    complementary-color score (hue mass aligned with the opposite hue),
    duotone score (mass of the second hue mode), hue entropy, and the
    10-90 percentile value range.
    """
    hue, saturation, value = rgb_to_hsv(rgb)

    h_stats = _moments(hue, weights=saturation)
    s_stats = _moments(saturation)
    v_stats = _moments(value)

    weight_total = saturation.sum()
    if weight_total > 1e-12:
        hue_hist, _ = np.histogram(hue.ravel(), bins=bins, range=(0.0, 1.0),
                                   weights=saturation.ravel())
        hue_hist = hue_hist / weight_total
    else:
        hue_hist = np.zeros(bins)

    complementary = float((hue_hist * np.roll(hue_hist, bins // 2)).sum())

    peak = int(hue_hist.argmax())
    masked = hue_hist.copy()
    for offset in (-1, 0, 1):
        masked[(peak + offset) % bins] = 0.0
    duotone = float(masked.max())

    positive = hue_hist[hue_hist > 0]
    entropy = float(-(positive * np.log(positive)).sum()) if len(positive) else 0.0

    v_flat = value.ravel()
    v_range = float(np.percentile(v_flat, 90) - np.percentile(v_flat, 10))

    return np.array([
        *h_stats, *s_stats, *v_stats, complementary, duotone, entropy, v_range,
    ])
