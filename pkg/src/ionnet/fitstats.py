"""Parity-fringe and decay fits, bootstrap and binomial errors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import curve_fit

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    pass


@dataclass
class FringeFit:
    C: float
    varphi: float
    N_lock: int
    C_err: float
    residuals: np.ndarray
    covariance: np.ndarray
    C_raw: float = float("nan")
    clamped: bool = False
    ci: dict = field(default_factory=dict)

    def predict(self, phases) -> np.ndarray:
        return self.C * np.cos(self.N_lock * np.asarray(phases) - self.varphi)


def phase_grid(n: int, n_points: int | None = None) -> np.ndarray:
    """Default analysis phases: ``2N + 2`` points uniformly over one fringe period."""
    k = 2 * n + 2 if n_points is None else n_points
    return np.arange(k) * (2 * np.pi / n) / k


def fit_parity_fringe(phases, expectations, errors, n: int) -> FringeFit:
    """Weighted linear fit of ``C cos(N phi - varphi)`` with the frequency locked to ``N``.

    Parameters
    ----------
    phases, expectations, errors : array_like
        Analysis phases, parity expectation values and their 1-sigma errors.
    n : int
        Number of qubits; sets the fringe frequency.

    Returns
    -------
    FringeFit
        ``C`` is bias corrected, ``C^2 = a^2 + b^2 - (var_a + var_b)`` floored at 0.
    """
    phases = np.asarray(phases, dtype=float)
    y = np.asarray(expectations, dtype=float)
    err = np.asarray(errors, dtype=float)
    if len(np.unique(phases)) < 2 * n + 1:
        raise FitError(f"need at least {2 * n + 1} distinct phases for an N={n} fringe")
    wrapped = np.sort(np.mod(n * phases, 2 * np.pi))
    gaps = np.diff(np.concatenate([wrapped, wrapped[:1] + 2 * np.pi]))
    if gaps.max() > np.pi:
        raise FitError("phase scan does not cover a fringe period")
    w = 1.0 / np.maximum(err, 1e-12)
    design = np.column_stack([np.cos(n * phases), np.sin(n * phases)])
    coef, *_ = np.linalg.lstsq(design * w[:, None], y * w, rcond=None)
    cov = np.linalg.inv((design * w[:, None] ** 2).T @ design)
    a, b = coef
    raw2 = a * a + b * b
    c2 = max(raw2 - cov[0, 0] - cov[1, 1], 0.0)
    c = np.sqrt(c2)
    c_raw = np.sqrt(raw2)
    if c_raw > 0:
        grad = np.array([a, b]) / c_raw
        c_err = float(np.sqrt(grad @ cov @ grad))
    else:
        c_err = float(np.sqrt((cov[0, 0] + cov[1, 1]) / 2))
    clamped = c > 1
    if clamped:
        c = 1.0
    resid = y - design @ coef
    fit = FringeFit(float(c), float(np.arctan2(b, a)), int(n), c_err, resid, cov, float(c_raw), clamped)
    fit.ci["C"] = (max(fit.C - 1.96 * c_err, 0.0), min(fit.C + 1.96 * c_err, 1.0))
    return fit


@dataclass
class DecayFit:
    T: float
    amplitude: float
    offset: float
    T_err: float
    model: str
    identifiable: bool = True
    ci: dict = field(default_factory=dict)

    def predict(self, t) -> np.ndarray:
        return self.offset + self.amplitude * np.exp(-np.asarray(t, dtype=float) / self.T)


def _decay(t, a, tau, c):
    return c + a * np.exp(-t / tau)


def _fit_once(t, y, err, model, p0):
    if model == "floor":
        f = lambda tt, a, tau: _decay(tt, a, tau, 0.5)
        popt, pcov = curve_fit(f, t, y, p0=p0[:2], sigma=err, absolute_sigma=True,
                               bounds=([0, 1e-12], [0.5, np.inf]), maxfev=20000)
        return np.array([popt[0], popt[1], 0.5]), pcov
    if model == "free":
        popt, pcov = curve_fit(_decay, t, y, p0=p0, sigma=err, absolute_sigma=True,
                               bounds=([0, 1e-12, 0], [1, np.inf, 1]), maxfev=20000)
        return popt, pcov
    raise ValueError(f"unknown decay model {model!r}")


def fit_exp_decay(times, fidelities, errors, model: str = "floor", rng=None,
                  n_boot: int = 200) -> DecayFit:
    """Fit ``F(t) = offset + A exp(-t/T)``.

    ``model="floor"`` pins the offset to 0.5 (fully mixed pair). ``model="free"``
    fits the asymptote, needed when population decay drives the fidelity
    below one half. The CI on ``T`` comes from a parametric bootstrap.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(fidelities, dtype=float)
    err = np.asarray(errors, dtype=float)
    if len(t) < 3:
        raise FitError("decay fit needs at least 3 points")
    span = np.ptp(y)
    if span < 1e-12 or (model == "floor" and np.all(np.abs(y - 0.5) < 1e-12)):
        c = 0.5 if model == "floor" else float(y.mean())
        return DecayFit(float("inf"), float(y.mean() - c), c, float("inf"), model, identifiable=False)
    base = 0.5 if model == "floor" else float(min(y.min(), 0.5))
    a0 = max(y[np.argmin(t)] - base, 1e-3)
    # initial T from the 1/e crossing
    target = base + a0 / np.e
    below = np.nonzero(y <= target)[0]
    tau0 = t[below[0]] if len(below) else 2 * t.max()
    p0 = [min(a0, 0.5 if model == "floor" else 1.0), max(tau0, 1e-6), base]
    try:
        popt, pcov = _fit_once(t, y, err, model, p0)
    except RuntimeError as exc:
        raise FitError(f"decay fit did not converge: {exc}") from exc
    a, tau, c = popt
    tau_err = float(np.sqrt(pcov[1, 1])) if np.all(np.isfinite(pcov)) else float("inf")
    fit = DecayFit(float(tau), float(a), float(c), tau_err, model)
    if rng is not None and n_boot:
        pred = _decay(t, a, tau, c)
        taus = []
        for _ in range(n_boot):
            yb = pred + rng.standard_normal(len(t)) * err
            try:
                taus.append(_fit_once(t, yb, err, model, popt)[0][1])
            except RuntimeError:
                continue
        taus = np.array(taus)
        if len(taus) >= 0.8 * n_boot:
            fit.ci["T"] = (float(np.percentile(taus, 2.5)), float(np.percentile(taus, 97.5)))
    if "T" not in fit.ci:
        fit.ci["T"] = (tau - 1.96 * tau_err, tau + 1.96 * tau_err)
    return fit


def binomial_error(p: float, n: int) -> float:
    if n <= 0:
        raise ValueError("n must be positive")
    return float(np.sqrt(p * (1 - p) / n))


def bootstrap(records: Sequence, statistic: Callable, n_resamples: int, rng,
              level: float = 0.95) -> tuple[float, tuple[float, float]]:
    """Percentile bootstrap over shot-level resamples.

    Returns the statistic on the full sample and the percentile interval.
    """
    if n_resamples < 100:
        raise ValueError("need at least 100 resamples")
    data = np.asarray(records) if not isinstance(records, np.ndarray) else records
    n = len(data)
    if n == 0:
        raise ValueError("no records to resample")
    vals = np.empty(n_resamples)
    for k in range(n_resamples):
        vals[k] = statistic(data[rng.integers(0, n, n)])
    lo, hi = np.percentile(vals, [50 * (1 - level), 50 * (1 + level)])
    return float(statistic(data)), (float(lo), float(hi))


def format_report(rows: Sequence[dict]) -> str:
    """Plain-text fit report, one parameter per line."""
    lines = [f"{'parameter':<16}{'value':>14}{'ci_low':>14}{'ci_high':>14}{'n':>8}"]
    for r in rows:
        lo, hi = r.get("ci", (float("nan"), float("nan")))
        lines.append(f"{r['name']:<16}{r['value']:>14.6g}{lo:>14.6g}{hi:>14.6g}{r.get('n', 0):>8d}")
    return "\n".join(lines) + "\n"
