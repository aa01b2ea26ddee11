"""Counting statistics and curve fits for coincidence data."""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit


def binomial_stderr(p: float, n: int) -> float:
    """Standard error sqrt(p(1-p)/n) of a Bernoulli frequency."""
    if n <= 0:
        return 0.0
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def visibility_stderr(v: float, n: int) -> float:
    """Standard error of a +-1 correlator estimated from n events."""
    if n <= 0:
        return 0.0
    return math.sqrt(max(1 - v * v, 0.0) / n)


def four_phase_visibility(p0: float, p90: float, p180: float, p270: float) -> float:
    """Fringe visibility of P = (1 + V cos(phi + phi0))/2 sampled at 0, pi/2, pi, 3pi/2."""
    return math.hypot(p0 - p180, p90 - p270)


def _sigma(stderr: Optional[Sequence[float]]):
    # curve_fit cannot weight by zero errors (exact-engine data)
    if stderr is None:
        return None
    s = np.asarray(stderr, dtype=float)
    if np.any(s <= 0):
        return None
    return s


@dataclass(frozen=True)
class SinusoidFit:
    mean: float
    visibility: float
    phase: float
    visibility_stderr: float


def _sinusoid(x, mean, visibility, phase, harmonic):
    return mean * (1 + visibility * np.cos(harmonic * x - phase))


def fit_sinusoid(
    x: Sequence[float],
    y: Sequence[float],
    stderr: Optional[Sequence[float]] = None,
    harmonic: float = 1.0,
) -> SinusoidFit:
    """
    Fit y = mean (1 + V cos(harmonic x - phase)).

    Returns:
        SinusoidFit with V >= 0.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    mean0 = float(np.mean(y)) or 1e-12
    v0 = min(float(np.ptp(y)) / (2 * abs(mean0)), 1.0)
    phase0 = float(x[int(np.argmax(y))] * harmonic)
    sigma = _sigma(stderr)

    popt, pcov = curve_fit(
        lambda t, m, v, ph: _sinusoid(t, m, v, ph, harmonic),
        x,
        y,
        p0=[mean0, v0, phase0],
        sigma=sigma,
        absolute_sigma=sigma is not None,
        maxfev=20000,
    )
    mean, vis, phase = popt
    if vis < 0:
        vis, phase = -vis, phase + np.pi
    err = float(np.sqrt(pcov[1, 1])) if np.all(np.isfinite(pcov)) else 0.0
    return SinusoidFit(float(mean), float(vis), float(np.mod(phase, 2 * np.pi)), err)


def _exponential(t, amplitude, tau):
    return amplitude * np.exp(-t / tau)


def _gaussian(t, amplitude, tau):
    return amplitude * np.exp(-((t / tau) ** 2))


def _fit_decay(model, x, y, stderr, tau0) -> Tuple[float, float]:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    sigma = _sigma(stderr)
    popt, pcov = curve_fit(
        model,
        x,
        y,
        p0=[float(np.max(y)), tau0],
        sigma=sigma,
        absolute_sigma=sigma is not None,
        bounds=([0.0, 1e-12], [np.inf, np.inf]),
        maxfev=20000,
    )
    err = float(np.sqrt(pcov[1, 1])) if np.all(np.isfinite(pcov)) else 0.0
    return float(popt[1]), err


def fit_exponential_decay(
    x: Sequence[float], y: Sequence[float], stderr: Optional[Sequence[float]] = None
) -> Tuple[float, float]:
    """Time constant (and its stderr) of y = A exp(-x / tau)."""
    return _fit_decay(_exponential, x, y, stderr, tau0=float(np.ptp(x)) or 1.0)


def fit_gaussian_decay(
    x: Sequence[float], y: Sequence[float], stderr: Optional[Sequence[float]] = None
) -> Tuple[float, float]:
    """Time constant (and its stderr) of y = A exp(-(x / tau)^2)."""
    return _fit_decay(_gaussian, x, y, stderr, tau0=float(np.ptp(x)) / 2 or 1.0)
