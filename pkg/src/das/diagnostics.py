"""Image statistics used to check generations: radial power spectrum, PSNR, ablation tables."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

PSNR_EXACT = math.inf  # returned for identical images


@dataclass
class SpectrumReport:
    frequencies: np.ndarray  # cycles per image, one per integer-radius bin
    power: np.ndarray  # mean power in each bin
    slope: Optional[float]  # None marks a degenerate (constant) image
    intercept: Optional[float]
    fit_band: tuple[float, float]
    residual: Optional[float]  # RMS of the log-log fit residuals
    side: int

    @property
    def degenerate(self) -> bool:
        return self.slope is None

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "slope": self.slope,
            "intercept": self.intercept,
            "degenerate": self.degenerate,
            "fit_band": list(self.fit_band),
            "residual": self.residual,
            "frequencies": [float(f) for f in self.frequencies],
            "power": [float(p) for p in self.power],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frequency", "power"])
        for f, p in zip(self.frequencies, self.power):
            writer.writerow([int(f), repr(float(p))])
        return buf.getvalue()


def luminance(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    return image.mean(axis=2) if image.ndim == 3 else image


def power_spectrum(image: np.ndarray) -> SpectrumReport:
    """Radially averaged power spectrum with a log-log slope fit over [4, side/4]."""
    lum = luminance(image)
    if lum.ndim != 2 or lum.shape[0] != lum.shape[1]:
        raise ValueError(f"expected a square image, got {np.shape(image)}")
    n = lum.shape[0]
    if n < 32:
        raise ValueError(f"image side must be >= 32, got {n}")
    lum = lum - lum.mean()
    power2d = np.abs(np.fft.fft2(lum)) ** 2
    k = np.fft.fftfreq(n) * n
    radius = np.rint(np.hypot(k[None, :], k[:, None])).astype(np.int64)
    nbins = n // 2 + 1
    keep = radius < nbins
    sums = np.bincount(radius[keep], power2d[keep], minlength=nbins)
    counts = np.bincount(radius[keep], minlength=nbins)
    freqs = np.arange(1, nbins, dtype=np.float64)
    power = sums[1:] / counts[1:]

    band = (4.0, n / 4.0)
    sel = (freqs >= band[0]) & (freqs <= band[1])
    if not np.any(power[sel] > 0):
        return SpectrumReport(freqs, power, None, None, band, None, n)
    x, y = np.log(freqs[sel]), np.log(power[sel])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return SpectrumReport(freqs, power, float(slope), float(intercept), band, resid, n)


def power_law_field(side: int, alpha: float, seed: int = 0) -> np.ndarray:
    """Random field with power proportional to ``1/f**alpha`` (for estimator calibration)."""
    from das.rng import root_stream

    stream = root_stream(seed).child("power-law", side)
    noise = stream.normal(side * side).reshape(side, side)
    k = np.fft.fftfreq(side) * side
    f = np.hypot(k[None, :], k[:, None])
    f[0, 0] = 1.0
    amp = f ** (-alpha / 2.0)
    amp[0, 0] = 0.0
    return np.real(np.fft.ifft2(np.fft.fft2(noise) * amp))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images on a [0, 1] scale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_EXACT
    return 10.0 * math.log10(1.0 / mse)


@dataclass
class AblationRow:
    name: str
    final_objective: float
    slope: Optional[float]
    runtime_s: float
    scores: dict = field(default_factory=dict)


ABLATION_COLUMNS = ("pixel", "pixel+augment", "das")


def ablation_report(cfg, objective, columns: Sequence[str] = ABLATION_COLUMNS) -> list[AblationRow]:
    """Run the pixel / augmented-pixel / multi-resolution variants on one seed and objective.

    ``pixel`` disables augmentation and the pyramid; ``pixel+augment`` keeps the
    configured augmentation (and whatever ensemble ``objective`` wraps);
    ``das`` is the full method.
    """
    from das.optimizer import das_optimize, pixel_ascent

    if len(columns) < 2:
        raise ValueError("an ablation needs at least two columns")
    rows = []
    for name in columns:
        t0 = time.perf_counter()
        if name == "pixel":
            trace = pixel_ascent(replace(cfg, augment=False), objective)
        elif name == "pixel+augment":
            trace = pixel_ascent(replace(cfg, augment=True), objective)
        elif name == "das":
            trace = das_optimize(replace(cfg, augment=True), objective)
        else:
            raise ValueError(f"unknown ablation column {name!r}")
        elapsed = time.perf_counter() - t0
        rows.append(AblationRow(name, trace.final_objective, power_spectrum(trace.image).slope,
                                elapsed, trace.final_scores))
    return rows


def format_ablation(rows: Sequence[AblationRow]) -> str:
    lines = [f"{'column':<16}{'objective':>12}{'slope':>10}{'runtime_s':>12}"]
    for r in rows:
        slope = "n/a" if r.slope is None else f"{r.slope:.3f}"
        lines.append(f"{r.name:<16}{r.final_objective:>12.4f}{slope:>10}{r.runtime_s:>12.2f}")
    return "\n".join(lines)
