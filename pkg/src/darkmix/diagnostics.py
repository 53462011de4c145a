"""Exploratory and post-fit checks on dark-frame panels."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DiagnosticError, DimensionError
from .model import MixtureModel, PixelPanel


@dataclass(frozen=True)
class TrimResult:
    mask: np.ndarray
    kept_fraction: float


def trim_by_mean(panel: PixelPanel, threshold: float) -> TrimResult:
    """Keep pixels whose grand mean is at most ``threshold``."""
    if not np.isfinite(threshold):
        raise DiagnosticError("threshold must be finite")
    mask = panel.grand_means <= threshold
    if not mask.any():
        raise DiagnosticError(f"no pixel has grand mean <= {threshold}")
    return TrimResult(mask, float(mask.mean()))


@dataclass(frozen=True)
class BlockCovariance:
    matrix: np.ndarray
    counts: np.ndarray


def block_avg_cov(panel: PixelPanel) -> BlockCovariance:
    """Average the raw ``(E*r) x (E*r)`` covariance within each condition block.

    Variances (the main diagonal) are left out of the diagonal blocks, so
    every cell estimates the covariance shared by distinct readings.
    """
    design = panel.design
    E, r = design.n_conditions, design.replicates
    if r < 2:
        raise DiagnosticError("need at least 2 replicates: with r = 1 the diagonal blocks "
                              "hold nothing but variances")
    if panel.n < 2:
        raise DiagnosticError("need at least 2 pixels to estimate a covariance")
    cov = np.cov(panel.data, rowvar=False).reshape(E, r, E, r)
    sums = cov.sum(axis=(1, 3))
    diag = np.einsum("ejej->e", cov)
    counts = np.full((E, E), float(r * r))
    sums[np.diag_indices(E)] -= diag
    counts[np.diag_indices(E)] = r * r - r
    return BlockCovariance(sums / counts, counts.astype(int))


@dataclass(frozen=True)
class HmTestReport:
    """Log-linear fit ``log c[e, f] = intercept + effect[e] + effect[f]``.

    ``effects`` sum to zero.  ``residual_variance`` is computed from the
    back-transformed residuals ``c - exp(fit)`` over the cells used, with
    ``cells - (E + 1)`` degrees of freedom; cells are unweighted.
    """

    effects: np.ndarray
    intercept: float
    residual_variance: float
    mean_cell: float
    ratio: float
    excluded: int
    used: int
    multiplicative: bool


def hm_test(block_cov: BlockCovariance | np.ndarray, ratio_threshold: float = 0.15,
            max_excluded_fraction: float = 0.1) -> HmTestReport:
    """Check whether block-averaged covariances factor as ``v_e * v_f``.

    Non-positive cells cannot be logged; they are dropped with a warning and
    counted.  ``multiplicative`` is set when at most ``max_excluded_fraction``
    of the cells were dropped and ``residual_variance / mean_cell`` is below
    ``ratio_threshold``.
    """
    C = block_cov.matrix if isinstance(block_cov, BlockCovariance) else np.asarray(block_cov, float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionError("block covariance must be square")
    E = C.shape[0]
    ee, ff = np.meshgrid(np.arange(E), np.arange(E), indexing="ij")
    ok = C > 0
    used = int(ok.sum())
    excluded = E * E - used
    if used < E + 1:
        raise DiagnosticError(f"only {used} positive cells; at least {E + 1} needed")
    if excluded:
        warnings.warn(f"{excluded} non-positive block covariances left out of the log-linear fit",
                      RuntimeWarning, stacklevel=2)
    e, f = ee[ok], ff[ok]
    X = np.zeros((used, E + 1))
    X[:, 0] = 1.0
    np.add.at(X, (np.arange(used), 1 + e), 1.0)
    np.add.at(X, (np.arange(used), 1 + f), 1.0)
    coef = np.linalg.lstsq(X, np.log(C[ok]), rcond=None)[0]
    shift = coef[1:].mean()
    effects = coef[1:] - shift
    intercept = coef[0] + 2.0 * shift
    resid = C[ok] - np.exp(intercept + effects[e] + effects[f])
    rvar = float(np.sum(resid**2) / max(used - (E + 1), 1))
    mean_cell = float(C.mean())
    ratio = rvar / mean_cell if mean_cell > 0 else np.inf
    multiplicative = excluded <= max_excluded_fraction * E * E and ratio < ratio_threshold
    return HmTestReport(effects, float(intercept), rvar, mean_cell, float(ratio), excluded, used,
                        bool(multiplicative))


@dataclass(frozen=True)
class QQData:
    theoretical: np.ndarray
    empirical: np.ndarray
    slope: float
    intercept: float
    flagged: bool

    @property
    def residuals(self) -> np.ndarray:
        return self.empirical - (self.intercept + self.slope * self.theoretical)


def qq_data(values, slope_tol: float = 0.02) -> QQData:
    """Normal Q-Q pairs for standardized values, plotting positions ``(i - 0.5)/n``.

    ``flagged`` marks a least-squares slope further than ``slope_tol`` from 1.
    """
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = x.size
    if n < 10:
        raise DiagnosticError(f"need at least 10 values for a Q-Q plot, got {n}")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DiagnosticError("values are constant; cannot standardize")
    z = (x - x.mean()) / sd
    q = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    slope, intercept = np.polyfit(q, z, 1)
    return QQData(q, z, float(slope), float(intercept), bool(abs(slope - 1.0) > slope_tol))


@dataclass(frozen=True)
class Classification:
    labels: np.ndarray
    max_posterior: np.ndarray
    hot: np.ndarray


def classify(result) -> Classification:
    """Hard labels (0 = ordinary) from a fit result or a responsibility matrix.

    Ties go to the lower label; ``hot`` lists pixels outside component 0.
    """
    E = getattr(result, "responsibilities", result)
    E = np.asarray(getattr(E, "matrix", E))
    labels = np.argmax(E, axis=1)
    return Classification(labels, E[np.arange(E.shape[0]), labels], np.flatnonzero(labels > 0))


@dataclass(frozen=True)
class CrossRegression:
    slope: float
    intercept: float
    residual_sd: float
    n_used: int


def cross_condition_regression(avg_a, avg_b, threshold: float) -> CrossRegression:
    """OLS of ``avg_b`` on ``avg_a`` over pixels with ``avg_a`` below ``threshold``."""
    a = np.asarray(avg_a, dtype=np.float64).ravel()
    b = np.asarray(avg_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"average vectors differ in length ({a.size} vs {b.size})")
    keep = a < threshold
    m = int(keep.sum())
    if m < 3:
        raise DiagnosticError(f"only {m} pixels below threshold {threshold}; need 3")
    a, b = a[keep], b[keep]
    X = np.column_stack([np.ones(m), a - a.mean()])
    (c0, slope), *_ = np.linalg.lstsq(X, b, rcond=None)
    resid = b - c0 - slope * (a - a.mean())
    return CrossRegression(float(slope), float(c0 - slope * a.mean()),
                           float(np.sqrt(np.sum(resid**2) / (m - 2))), m)


def trend_table(model: MixtureModel):
    """Rows ``(component, temp_c, duration_s, mu, sigma, tau)`` for trend plots."""
    mu, sig, tau = model.means(), model.sigmas(), model.taus()
    rows = []
    for k in range(model.K):
        for e, c in enumerate(model.design.conditions):
            rows.append((k, c.temp_c, c.duration_s, mu[k, e], sig[k, e], tau[k, e]))
    return rows
