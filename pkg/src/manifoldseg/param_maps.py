"""Voxelwise exponential-decay fitting for ADC and T2 parameter maps.

A decaying signal S(c) = S0 * exp(-rate * c) is fit in log space by ordinary
least squares over all frames, so the two-frame case reduces exactly to the
log-ratio formula. The rate is the negated slope, which keeps ADC and 1/T2
positive for physically decaying signals.
"""

from __future__ import annotations

import numpy as np

from . import parallel
from .errors import DegenerateFit, DimensionMismatch, NonPositiveSignal
from .volume import AcquisitionSeries, LabelMap, ParametricVolume

# Below this decay rate (per control unit) a signal is treated as flat and
# the T2 reciprocal is not formed.
RATE_FLOOR = 1e-9


def fit_exponential_decay(signal, control) -> tuple[float, float]:
    """Fit S = amplitude * exp(-rate * control) by OLS on log(signal).

    Parameters
    ----------
    signal : array-like of positive floats
    control : array-like, same length, not all equal

    Returns
    -------
    (amplitude, rate) : floats. For a noiseless exponential the fit is exact.

    Raises
    ------
    NonPositiveSignal : any signal value <= 0
    DegenerateFit : all control values equal
    """
    s = np.asarray(signal, dtype=float)
    c = np.asarray(control, dtype=float)
    if s.shape != c.shape or s.ndim != 1 or s.size < 2:
        raise ValueError("signal and control must be equal-length 1-D, length >= 2")
    if np.any(s <= 0):
        raise NonPositiveSignal("signal values must be positive for the log fit")
    c_center = c - c.mean()
    denom = float(np.dot(c_center, c_center))
    if denom == 0.0:
        raise DegenerateFit("all control values are equal")
    y = np.log(s)
    slope = float(np.dot(c_center, y)) / denom
    intercept = float(y.mean() - slope * c.mean())
    return float(np.exp(intercept)), -slope + 0.0


def _fit_rates(stack: np.ndarray, control: np.ndarray, fit_mask: np.ndarray):
    """Vectorized log-space OLS over voxel columns selected by fit_mask.

    Returns (rates, amplitudes) arrays of length n_voxels, zero outside
    fit_mask. Runs over fixed-size voxel blocks (see parallel module).
    """
    n_vox = stack.shape[1]
    rates = np.zeros(n_vox)
    amps = np.zeros(n_vox)
    c = control - control.mean()
    denom = float(np.dot(c, c))

    def run(a, b):
        sel = fit_mask[a:b]
        if not np.any(sel):
            return None
        cols = stack[:, a:b][:, sel]
        y = np.log(cols)
        slope = c @ y / denom
        intercept = y.mean(axis=0) - slope * control.mean()
        block_rates = np.zeros(b - a)
        block_amps = np.zeros(b - a)
        block_rates[sel] = -slope
        block_amps[sel] = np.exp(intercept)
        rates[a:b] = block_rates
        amps[a:b] = block_amps
        return None

    parallel.map_blocks(run, n_vox)
    return rates, amps


def _fittable(series: AcquisitionSeries, mask: LabelMap | None):
    """Voxels eligible for fitting: masked in and strictly positive signal."""
    stack = series.signal_stack()
    n_vox = stack.shape[1]
    if mask is not None:
        if (mask.width, mask.height) != (series.width, series.height):
            raise DimensionMismatch("mask dimensions differ from series frames")
        keep = mask.inside().ravel()
    else:
        keep = np.ones(n_vox, dtype=bool)
    positive = np.all(stack > 0, axis=0)
    return stack, keep & positive, keep


def compute_adc_map(series: AcquisitionSeries, mask: LabelMap | None = None) -> ParametricVolume:
    """ADC map (mm^2/s) from a diffusion series with b-values as controls.

    The first b-value must be 0. Unmasked or non-fittable voxels are set to 0
    and the output name gains a ``[masked]`` suffix.
    """
    control = np.asarray(series.control_values, dtype=float)
    if control[0] != 0.0:
        raise ValueError("diffusion series must start at b = 0")
    stack, fit_mask, keep = _fittable(series, mask)
    denom = control - control.mean()
    if float(np.dot(denom, denom)) == 0.0:
        raise DegenerateFit("all b-values are equal")
    rates, _ = _fit_rates(stack, control, fit_mask)
    name = "adc[masked]" if not np.all(fit_mask) else "adc"
    return ParametricVolume(
        name=name,
        width=series.width,
        height=series.height,
        spacing=series.spacing,
        values=rates.reshape(series.height, series.width),
    )


def compute_t2_map(series: AcquisitionSeries, mask: LabelMap | None = None) -> ParametricVolume:
    """T2 map (ms) from a multi-echo series with echo times as controls.

    T2 = 1 / rate per voxel; voxels whose fitted rate is below RATE_FLOOR
    (flat signal, no measurable decay) are set to 0.
    """
    control = np.asarray(series.control_values, dtype=float)
    stack, fit_mask, keep = _fittable(series, mask)
    denom = control - control.mean()
    if float(np.dot(denom, denom)) == 0.0:
        raise DegenerateFit("all echo times are equal")
    rates, _ = _fit_rates(stack, control, fit_mask)
    t2 = np.zeros_like(rates)
    ok = fit_mask & (rates > RATE_FLOOR)
    t2[ok] = 1.0 / rates[ok]
    name = "t2[masked]" if not np.all(ok) else "t2"
    return ParametricVolume(
        name=name,
        width=series.width,
        height=series.height,
        spacing=series.spacing,
        values=t2.reshape(series.height, series.width),
    )
