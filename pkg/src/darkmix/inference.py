"""Model selection, likelihood-ratio comparison of mean models, bootstrap.

BIC is ``-2 L + p log n`` (smaller is better), ICL adds twice the posterior
entropy and NEC is ``entropy(K) / (L(K) - L(1))``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

from . import _parallel
from .em import FitConfig, FitResult, fit, model_from_groups
from .errors import BootstrapError, CriteriaError, DarkmixError, DimensionError
from .model import MixtureModel, PixelPanel

LR_NEGATIVE_WARN = 1e-4
MAX_FAILURE_RATE = 0.2


@dataclass(frozen=True)
class CriteriaRow:
    K: int
    loglik: float
    params: int
    bic: float
    icl: float
    entropy: float
    nec: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def criteria(result: FitResult, n: int | None = None, baseline: FitResult | None = None) -> CriteriaRow:
    """BIC, ICL and (given a one-component ``baseline`` on the same data) NEC."""
    n = result.n if n is None else int(n)
    L = result.loglik
    p = result.model.n_params()
    ent = result.responsibilities.entropy()
    bic = -2.0 * L + p * np.log(n)
    nec = None
    if baseline is not None and result.K >= 2:
        if baseline.K != 1:
            raise CriteriaError(f"NEC baseline must have one component, got {baseline.K}")
        gain = L - baseline.loglik
        if not gain > 0:
            raise CriteriaError(f"NEC undefined: L({result.K}) = {L:.6g} does not exceed L(1) = {baseline.loglik:.6g}")
        nec = ent / gain
    return CriteriaRow(result.K, L, p, bic, bic + 2.0 * ent, ent, nec)


def split_top_component(result: FitResult, panel: PixelPanel) -> MixtureModel:
    """Starting model with one more component: the highest component split at its median."""
    labels = result.responsibilities.labels()
    K = result.K
    gm = panel.grand_means
    top = K - 1
    members = np.flatnonzero(labels == top)
    if members.size < 2:
        top = int(np.argmax(np.bincount(labels, minlength=K)))
        members = np.flatnonzero(labels == top)
    order = members[np.argsort(gm[members], kind="stable")]
    new = labels.copy()
    new[order[order.size // 2:]] = K
    mean = result.model.mean_kind
    groups = result.model.components[0].mean.groups if mean == "lei" else None
    return model_from_groups(panel, new, K + 1, mean, groups)


@dataclass
class SweepResult:
    rows: list
    baseline: FitResult | None
    fits: dict = field(default_factory=dict)

    def best(self, criterion: str) -> int | None:
        rows = [r for r in self.rows if r.ok and getattr(r, criterion) is not None]
        if not rows:
            return None
        return min(rows, key=lambda r: getattr(r, criterion)).K


def sweep_k(panel: PixelPanel, Ks, mean: str = "npm", config: FitConfig | None = None) -> SweepResult:
    """Fit each ``K`` in ``Ks`` and tabulate the criteria.

    A one-component fit is always made for NEC.  Each ``K`` keeps the better
    of the configured start and a start grown from the previous ``K`` by
    splitting its highest component.  A ``K`` that fails to fit yields a row
    with ``error`` set.
    """
    Ks = sorted(set(int(k) for k in Ks))
    if not Ks or Ks[0] < 1:
        raise ValueError("Ks must be a non-empty set of positive integers")
    config = config or FitConfig()
    baseline = fit(panel, 1, mean, config)
    fits = {1: baseline}
    rows = []
    prev = baseline
    for K in range(2, Ks[-1] + 1):
        candidates, errors = [], []
        for make in (lambda: fit(panel, K, mean, config),
                     lambda: fit(panel, K, mean, config, init=split_top_component(prev, panel))):
            try:
                candidates.append(make())
            except (DarkmixError, np.linalg.LinAlgError) as exc:
                errors.append(str(exc))
        if candidates:
            fits[K] = prev = max(candidates, key=lambda r: r.loglik)
        elif K in Ks:
            rows.append(CriteriaRow(K, np.nan, 0, np.nan, np.nan, np.nan, None, "; ".join(errors)))
    for K in Ks:
        if K in fits:
            try:
                rows.append(criteria(fits[K], baseline=baseline if K > 1 else None))
            except CriteriaError as exc:
                row = criteria(fits[K])
                rows.append(CriteriaRow(row.K, row.loglik, row.params, row.bic, row.icl,
                                        row.entropy, None, str(exc)))
    rows.sort(key=lambda r: r.K)
    return SweepResult(rows, baseline, fits)


@dataclass(frozen=True)
class LRTest:
    statistic: float
    df: int
    p_value: float
    raw_statistic: float


def lr_test(fit_npm: FitResult, fit_lei: FitResult) -> LRTest:
    """Likelihood ratio of the unrestricted mean model against the nested LEI model."""
    if fit_npm.K != fit_lei.K:
        raise DimensionError(f"fits have different K ({fit_npm.K} vs {fit_lei.K})")
    if fit_npm.n != fit_lei.n or (fit_npm.panel_digest and fit_lei.panel_digest
                                  and fit_npm.panel_digest != fit_lei.panel_digest):
        raise DimensionError("fits were made on different data")
    q_full = fit_npm.model.components[0].mean.n_params
    q_rest = fit_lei.model.components[0].mean.n_params
    df = fit_npm.K * (q_full - q_rest)
    if df < 0:
        raise DimensionError("first fit must be the larger (unrestricted) model")
    raw = 2.0 * (fit_npm.loglik - fit_lei.loglik)
    if raw < -LR_NEGATIVE_WARN:
        warnings.warn(f"negative likelihood ratio {raw:.4g}: the unrestricted fit looks under-converged",
                      RuntimeWarning, stacklevel=2)
    stat = max(raw, 0.0)
    p = 1.0 if df == 0 or stat == 0 else float(stats.chi2.sf(stat, df))
    return LRTest(stat, df, p, raw)


def parameter_vector(model: MixtureModel):
    """Flat ``(names, values)`` of all raw-scale parameters, labels as ordered."""
    names, values = [], []
    for k, (p, c) in enumerate(zip(model.pi, model.components)):
        names.append(f"pi[{k}]")
        values.append(p)
        m = c.mean
        if m.kind == "npm":
            names += [f"mu[{k}][{e}]" for e in range(m.values.size)]
            values += list(m.values)
        else:
            names += [f"beta1[{k}]", f"beta2[{k}]"] + [f"delta[{k}][{g}]" for g in range(m.delta.size)]
            names.append(f"beta_temp[{k}]")
            values += [m.beta1, m.beta2] + list(m.delta) + [m.beta_temp]
        names += [f"alpha[{k}][{q}]" for q in range(3)] + [f"gamma[{k}][{q}]" for q in range(3)]
        values += list(c.alpha) + list(c.gamma)
    return names, np.array(values, dtype=np.float64)


def align_labels(model: MixtureModel, reference: MixtureModel) -> MixtureModel:
    """Reorder components to match ``reference`` by nearest grand mean."""
    cost = np.abs(model.grand_means()[:, None] - reference.grand_means()[None, :])
    rows, cols = linear_sum_assignment(cost)
    order = np.empty(model.K, dtype=int)
    order[cols] = rows
    return model.permuted(order)


@dataclass(frozen=True)
class BootstrapTable:
    names: list
    estimate: np.ndarray
    se: np.ndarray
    replicates: np.ndarray
    B: int
    failures: int

    def as_rows(self):
        return [(nm, float(e), float(s)) for nm, e, s in zip(self.names, self.estimate, self.se)]


def _default_resample(rng, n):
    return rng.integers(0, n, size=n)


def replicate_generator(seed, index) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def bootstrap_se(panel: PixelPanel, model: MixtureModel, B: int, seed: int,
                 config: FitConfig | None = None, warm_start: bool = True,
                 resample=None, threads=None) -> BootstrapTable:
    """Non-parametric bootstrap standard errors over pixels.

    Replicate ``b`` resamples ``n`` pixels with replacement using its own
    Philox stream keyed by ``(seed, b)``, refits (warm-started at ``model``
    unless ``warm_start=False``), aligns labels to ``model`` and records the
    parameter vector.  ``resample(rng, n)`` may replace the index draw.
    Failed replicates are dropped; more than 20% failures is an error.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    config = config or FitConfig()
    resample = resample or _default_resample
    names, estimate = parameter_vector(model)
    mean = model.mean_kind
    groups = model.components[0].mean.groups if mean == "lei" else None

    def one(b):
        idx = np.asarray(resample(replicate_generator(seed, b), panel.n))
        sub = panel.take(idx)
        try:
            if warm_start:
                res = fit(sub, model.K, mean, config, init=model)
            else:
                res = fit(sub, model.K, mean, config, groups=groups)
        except (DarkmixError, np.linalg.LinAlgError, FloatingPointError):
            return None
        return parameter_vector(align_labels(res.model, model))[1]

    workers = _parallel.resolve_threads(threads)
    if workers == 1:
        out = [one(b) for b in range(B)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, range(B)))
    reps = [v for v in out if v is not None]
    failures = B - len(reps)
    if failures > MAX_FAILURE_RATE * B or len(reps) < 2:
        raise BootstrapError(f"{failures} of {B} bootstrap replicates failed to fit")
    reps = np.array(reps)
    # shifting by one replicate keeps identical replicates at exactly zero spread
    se = (reps - reps[0]).std(axis=0, ddof=1)
    return BootstrapTable(names, estimate, se, reps, len(reps), failures)
