"""EM estimation of the structured Gaussian mixture.

The E-step works in the log domain.  The M-step splits into the closed form
for the mixing weights and one weighted maximization per component, done by
Fisher scoring with the empirical (outer-product) information matrix and
step halving.

Per-pixel likelihoods only depend on the replicate averages ``ybar`` and the
within-condition sums of squares ``W``.  With ``m = ybar - mu``,
``a = 1/sigma**2``, ``b = tau/sigma**2`` and ``c = r * sum(tau**2 a)``::

    log|Sigma| = 2 r sum(log sigma) + log(1 + c)
    quad       = sum(a (W + r m**2)) - (r sum(b m))**2 / (1 + c)

and the score follows by differentiating these two scalars with respect to
``mu``, ``log sigma`` and ``log tau`` before chaining through the mean model
and the log links.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.special import logsumexp

from . import _parallel
from .errors import ComponentDeathError, DimensionError, EStepError, ScoringError
from .model import (
    ComponentParameters,
    LEIMean,
    MixtureModel,
    MixtureWeights,
    NPMMean,
    PixelPanel,
    default_duration_groups,
    logits_from_weights,
    mean_vector,
)
from .structcov import StructuredCov

LOG_2PI = float(np.log(2.0 * np.pi))
TAU_FLOOR = 1e-3
MAX_HALVINGS = 20
MAX_EXPANSIONS = 10


@dataclass(frozen=True)
class FitConfig:
    """Knobs for `fit`.

    ``fix_gamma`` holds the non-uniformity link at its starting value, which
    together with a very negative intercept pins ``tau`` near zero.
    ``max_log_step`` caps the largest change of any log-scale coefficient in
    one scoring step before halving starts.
    """

    max_em_iters: int = 500
    rel_tol: float = 1e-8
    scoring_max_iters: int = 10
    scoring_ridge: float = 1e-8
    seed: int = 0
    init_strategy: str = "quantile"
    restarts: int = 1
    grad_tol: float = 1e-6
    max_log_step: float = 2.0
    fix_gamma: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.rel_tol <= 0 or self.scoring_ridge < 0 or self.grad_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_em_iters < 0 or self.scoring_max_iters < 0 or self.restarts < 1:
            raise ValueError("iteration counts must be non-negative and restarts >= 1")
        if self.init_strategy not in ("quantile", "random"):
            raise ValueError(f"unknown init strategy {self.init_strategy!r}")


@dataclass(frozen=True)
class Responsibilities:
    matrix: np.ndarray
    manifest_loglik: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def K(self) -> int:
        return self.matrix.shape[1]

    def entropy(self) -> float:
        """``-sum E log E`` with ``0 log 0 = 0``."""
        E = self.matrix
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(E > 0, E * np.log(E), 0.0)
        return float(-np.sum(t))

    def labels(self) -> np.ndarray:
        return np.argmax(self.matrix, axis=1)


@dataclass(frozen=True)
class FitResult:
    model: MixtureModel
    responsibilities: Responsibilities
    trace: np.ndarray
    converged: bool
    iterations: int
    n: int
    panel_digest: str = ""
    config: FitConfig = field(default_factory=FitConfig)

    @property
    def loglik(self) -> float:
        return self.responsibilities.manifest_loglik

    @property
    def K(self) -> int:
        return self.model.K


class ParameterCodec:
    """Maps one component to the flat vector the scoring iterations work on.

    Layout: mean parameters, then ``alpha`` and ``gamma`` against the
    standardized covariates.  NPM means are stored as is; LEI stores
    ``(beta1, beta2, delta_1..delta_D, beta_temp)`` with the temperature part
    re-expressed on the standardized temperature scale.
    """

    def __init__(self, design, template):
        self.design = design
        self.std = design.standardizer
        self.Z = self.std.rows(design)
        self.r = design.replicates
        self.E = design.n_conditions
        mean = template.mean if isinstance(template, ComponentParameters) else template
        self.kind = mean.kind
        if self.kind == "lei":
            self.groups = dict(mean.groups)
            self.gidx = mean.group_index(design)
            self.D = mean.delta.size
            self.n_mean = 3 + self.D
            mean_log = [False, True] + [True] * self.D + [True]
        else:
            if mean.values.size != self.E:
                raise DimensionError(f"NPM mean has {mean.values.size} values for {self.E} conditions")
            self.n_mean = self.E
            mean_log = [False] * self.E
        self.size = self.n_mean + 6
        self.log_mask = np.array(mean_log + [True] * 6)

    @property
    def alpha_slice(self):
        return slice(self.n_mean, self.n_mean + 3)

    @property
    def gamma_slice(self):
        return slice(self.n_mean + 3, self.n_mean + 6)

    def pack(self, comp: ComponentParameters) -> np.ndarray:
        if comp.mean.kind != self.kind:
            raise ValueError(f"codec for {self.kind} cannot pack a {comp.mean.kind} component")
        if self.kind == "lei":
            m = comp.mean
            head = np.concatenate([[m.beta1, m.beta2],
                                   m.delta + m.beta_temp * self.std.t_center,
                                   [m.beta_temp * self.std.t_scale]])
        else:
            head = np.array(comp.mean.values, dtype=np.float64)
        return np.concatenate([head, self.std.link_to_internal(comp.alpha),
                               self.std.link_to_internal(comp.gamma)])

    def unpack(self, vec) -> ComponentParameters:
        vec = np.asarray(vec, dtype=np.float64)
        if self.kind == "lei":
            bt = vec[2 + self.D] / self.std.t_scale
            mean = LEIMean(vec[0], vec[1], vec[2:2 + self.D] - bt * self.std.t_center, bt, self.groups)
        else:
            mean = NPMMean(vec[:self.E].copy())
        return ComponentParameters(mean, self.std.link_to_raw(vec[self.alpha_slice]),
                                   self.std.link_to_raw(vec[self.gamma_slice]))

    def mean_and_jacobian(self, vec):
        if self.kind == "npm":
            return vec[:self.E], np.eye(self.E)
        b1, b2 = vec[0], vec[1]
        delta, bt = vec[2:2 + self.D], vec[2 + self.D]
        d, ts = self.design.durations, self.Z[:, 1]
        with np.errstate(over="ignore"):
            eb2 = np.exp(b2)
            ex = np.exp(delta[self.gidx] + bt * ts)
        mu = b1 + eb2 * d + ex
        J = np.zeros((self.E, self.n_mean))
        J[:, 0] = 1.0
        J[:, 1] = eb2 * d
        J[np.arange(self.E), 2 + self.gidx] = ex
        J[:, 2 + self.D] = ex * ts
        return mu, J

    def natural(self, vec):
        """``(mu, log sigma, log tau)`` per condition."""
        mu = vec[:self.E] if self.kind == "npm" else self.mean_and_jacobian(vec)[0]
        return mu, self.Z @ vec[self.alpha_slice], self.Z @ vec[self.gamma_slice]

    def free_mask(self, fix_gamma=False):
        free = np.ones(self.size, dtype=bool)
        if fix_gamma:
            free[self.gamma_slice] = False
        return free


@dataclass(frozen=True)
class _Rows:
    """Pixel data prepared for repeated evaluation under one component.

    Condition-major arrays: ``yc1`` stacks ``ybar - center`` (``E x n``) over
    a row of ones, and ``P = W + r (ybar - center)**2``.  With
    ``d = mu - center`` and ``m = ybar - mu``, any linear form ``x.m`` is
    ``[x, -x.d] @ yc1`` and ``sum(a (W + r m**2)) = a.P - 2 r (a d).m - r a.d**2``,
    so each evaluation is a couple of small matrix products.  The center is
    the component mean at preparation time, which keeps ``d`` small and the
    expansion free of cancellation for the pixels that carry weight.
    """

    yc1: np.ndarray
    P: np.ndarray
    center: np.ndarray
    r: int

    @property
    def n(self) -> int:
        return self.P.shape[1]

    def cols(self, sl) -> "_Rows":
        return _Rows(self.yc1[:, sl], self.P[:, sl], self.center, self.r)


def _prepare(ybar, wss, r, center) -> _Rows:
    """``_Rows`` from pixel-major ``(n, E)`` condition means and sums of squares."""
    n, E = ybar.shape
    yc1 = np.ones((E + 1, n))
    np.subtract(ybar.T, center[:, None], out=yc1[:E])
    yc = yc1[:E]
    return _Rows(yc1, np.ascontiguousarray(wss.T) + r * yc * yc, center, r)


def _forms(A, d, yc1):
    """Rows ``A @ (ybar - mu)`` for every pixel, via the prepared ``yc1``."""
    return np.hstack([A, -(A @ d)[:, None]]) @ yc1


def _pixel_terms(rows: _Rows, mu, ls, lt, grad=None):
    """Per-pixel log-density and, optionally, score columns.

    ``grad``, when given, is a pair ``(J, Z)`` of Jacobians of the mean and
    of the log-scale links; the derivatives in ``(mu, log sigma, log tau)``
    are projected onto them and returned as a ``(q, n)`` array.
    """
    E, r = mu.size, rows.r
    with np.errstate(over="ignore", under="ignore"):
        a = np.exp(-2.0 * ls)
        tau = np.exp(lt)
    b = tau * a
    g = r * tau * tau * a
    c = float(np.sum(g))
    k = 1.0 / (1.0 + c)
    d = mu - rows.center
    ad2 = a @ (d * d)
    logdet = 2.0 * r * float(np.sum(ls)) + float(np.log1p(c))
    if grad is None:
        F = _forms(np.stack([b, a * d]), d, rows.yc1)
        s = r * F[0]
        quad = a @ rows.P - r * (2.0 * F[1] + ad2) - s * s * k
        return -0.5 * (logdet + quad + E * r * LOG_2PI)
    J, Z = grad
    q = J.shape[1]
    aZ = (a[:, None] * Z).T
    # d_mu = r (a m - u b) with u = k s = k r b.m is itself linear in m
    M_mu = r * ((a[:, None] * J).T - (k * r) * np.outer(b @ J, b))
    F = _forms(np.vstack([M_mu, b, (b[:, None] * Z).T, a * d, aZ * d]), d, rows.yc1)
    S_mu, bm, bZm, adm, aZdm = F[:q], F[q], F[q + 1:q + 4], F[q + 4], F[q + 5:]
    Pr = np.vstack([a, aZ]) @ rows.P
    s = r * bm
    quad = Pr[0] - r * (2.0 * adm + ad2) - s * s * k
    ll = -0.5 * (logdet + quad + E * r * LOG_2PI)
    # per condition:  d_lt = r u b m - k g - u^2 g,
    # d_ls = a (W + r m^2) - r u b m - d_lt - r,  with u = k s
    u = s * k
    gZ = (g @ Z)[:, None]
    ubm = bZm * (r * u)
    S_lt = ubm - gZ * (k + u * u)
    aWm = Pr[1:] - r * (2.0 * aZdm + (aZ @ (d * d))[:, None])
    S_ls = aWm - ubm - S_lt - r * Z.sum(axis=0)[:, None]
    return ll, np.concatenate([S_mu, S_ls, S_lt], axis=0)


def _loglik_vec(codec, vec, rows: _Rows, threads=None):
    mu, ls, lt = codec.natural(vec)
    parts = _parallel.map_chunks(lambda sl: _pixel_terms(rows.cols(sl), mu, ls, lt), rows.n, threads)
    return _parallel.concat_chunks(parts)


def _score_cols(codec, vec, rows: _Rows, threads=None):
    """Per-pixel log-densities and the ``(q, n)`` matrix of score columns."""
    mu, J = codec.mean_and_jacobian(vec)
    ls = codec.Z @ vec[codec.alpha_slice]
    lt = codec.Z @ vec[codec.gamma_slice]
    Z = codec.Z

    def work(sl):
        return _pixel_terms(rows.cols(sl), mu, ls, lt, grad=(J, Z))

    parts = _parallel.map_chunks(work, rows.n, threads)
    return (np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts], axis=1))


def _rows_for(codec, vec, ybar, wss) -> _Rows:
    return _prepare(ybar, wss, codec.r, codec.natural(vec)[0])


def component_loglik(y, mean_vec, cov: StructuredCov) -> float:
    """Log-density of one pixel record ``y`` (length ``E*r``) under one component."""
    y = np.asarray(y, dtype=np.float64).ravel()
    mean_vec = np.asarray(mean_vec, dtype=np.float64).ravel()
    if y.size != cov.dim or mean_vec.size != cov.E:
        raise DimensionError(f"record of length {y.size} / mean of length {mean_vec.size} "
                             f"do not match a {cov.E} x {cov.r} covariance")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(mean_vec))):
        raise ValueError("non-finite input to component_loglik")
    resid = y - np.repeat(mean_vec, cov.r)
    return -0.5 * (cov.log_det() + cov.quad_form(resid) + cov.dim * LOG_2PI)


def _loglik_matrix(ybar, wss, codecs, vecs, threads=None):
    """Component log-densities as a ``(K, n)`` array."""
    return np.stack([_loglik_vec(c, v, _rows_for(c, v, ybar, wss), threads)
                     for c, v in zip(codecs, vecs)])


def _posterior(ll, logpi):
    """Posteriors from ``(K, n)`` log-densities, normalized in the log domain."""
    log_joint = ll + logpi[:, None]
    with np.errstate(invalid="ignore"):
        norm = logsumexp(log_joint, axis=0)
    bad = ~np.isfinite(norm)
    if np.any(bad):
        raise EStepError(int(np.flatnonzero(bad)[0]))
    resp = np.exp(log_joint - norm).T
    return Responsibilities(resp, float(np.sum(norm)))


def _codecs_for(model):
    codecs = [ParameterCodec(model.design, c) for c in model.components]
    return codecs, [cd.pack(c) for cd, c in zip(codecs, model.components)]


def e_step(panel: PixelPanel, model: MixtureModel, threads=None) -> Responsibilities:
    """Posterior membership probabilities and the manifest log-likelihood."""
    if panel.design.width != model.design.width:
        raise DimensionError("panel and model designs differ")
    codecs, vecs = _codecs_for(model)
    return _posterior(_loglik_matrix(panel.condition_means, panel.within_ss, codecs, vecs, threads), np.log(model.pi))


def manifest_loglik(panel, model, threads=None) -> float:
    return e_step(panel, model, threads).manifest_loglik


def m_step_weights(resp: Responsibilities) -> MixtureWeights:
    """Closed-form mixing proportions: column sums over the grand total."""
    col = resp.matrix.sum(axis=0)
    dead = np.flatnonzero(col <= 0)
    if dead.size:
        raise ComponentDeathError(int(dead[0]), 0.0, resp.n)
    pi = col / col.sum()
    if pi.size == 1:
        return MixtureWeights(np.empty(0))
    return MixtureWeights(np.log(pi[1:]) - np.log(pi[0]))


def _active_rows(panel, weights):
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size != panel.n:
        raise DimensionError(f"{w.size} weights for {panel.n} pixels")
    if np.any(w < 0) or np.any(w > 1):
        raise ValueError("weights must lie in [0, 1]")
    keep = w > 0
    return w[keep], panel.condition_means[keep], panel.within_ss[keep]


def component_objective(component, panel, weights, threads=None) -> float:
    """Weighted log-likelihood ``sum_i w_i l_i`` for one component."""
    codec = ParameterCodec(panel.design, component)
    w, ybar, wss = _active_rows(panel, weights)
    if w.size == 0:
        return 0.0
    vec = codec.pack(component)
    return float(np.sum(w * _loglik_vec(codec, vec, _rows_for(codec, vec, ybar, wss), threads)))


def weighted_score(component, panel, weights, threads=None) -> np.ndarray:
    """Gradient of `component_objective` in `ParameterCodec` coordinates."""
    codec = ParameterCodec(panel.design, component)
    w, ybar, wss = _active_rows(panel, weights)
    if w.size == 0:
        return np.zeros(codec.size)
    vec = codec.pack(component)
    _, S = _score_cols(codec, vec, _rows_for(codec, vec, ybar, wss), threads)
    return S @ w


@dataclass
class ScoringStep:
    objective_before: float
    objective_after: float
    halvings: int
    accepted: bool


def _scoring(codec, vec, w, ybar, wss, config, history=None, state=None):
    """Scoring iterations from ``vec``; ``state`` (a dict) carries the
    line-search starting point between calls for the same component."""
    free = codec.free_mask(config.fix_gamma)
    total = float(np.sum(w))
    if total <= 0:
        return vec
    rows = _rows_for(codec, vec, ybar, wss)
    idx, fixed = np.flatnonzero(free), ~free
    threads = _parallel.resolve_threads(config.threads)
    state = {} if state is None else state
    start = state.get("start", 0)  # halvings to begin with, from the previous step
    for _ in range(config.scoring_max_iters):
        ll, S = _score_cols(codec, vec, rows, threads)
        obj = float(w @ ll)
        grad = S @ w
        grad[fixed] = 0.0
        if np.max(np.abs(grad)) / total < config.grad_tol:
            break
        Sf = S if idx.size == S.shape[0] else S[idx]
        F = (Sf * w) @ Sf.T
        dF = F.diagonal()
        act = dF > 1e-14 * dF.max()
        Fa = F if act.all() else F[np.ix_(act, act)]
        Fa.flat[::Fa.shape[0] + 1] += config.scoring_ridge * float(np.mean(Fa.diagonal()))
        # one symmetric eigendecomposition gives both the condition check and the solve
        lam, V = np.linalg.eigh(Fa)
        cond = lam[-1] / lam[0] if lam[0] > 0 else np.inf
        if not np.isfinite(cond) or cond > 1e15:
            raise ScoringError(f"empirical information is numerically singular (condition {cond:.3g})")
        step = np.zeros(codec.size)
        step[idx[act]] = V @ ((V.T @ grad[idx[act]]) / lam)
        big = np.max(np.abs(step[codec.log_mask]), initial=0.0)
        if big > config.max_log_step:
            step *= config.max_log_step / big
            big = config.max_log_step
        accepted = False
        for h in range(start, MAX_HALVINGS + 1):
            cand = vec + step * 0.5**h
            with np.errstate(invalid="ignore", over="ignore"):
                new = float(w @ _loglik_vec(codec, cand, rows, threads))
            if np.isfinite(new) and new >= obj:
                accepted = True
                break
        if accepted and h == 0:
            # outer-product information overstates curvature far from the
            # optimum; stretch the step while it keeps paying off
            for _ in range(MAX_EXPANSIONS):
                if big * 2.0 > config.max_log_step:
                    break
                longer = vec + 2.0 * (cand - vec)
                with np.errstate(invalid="ignore", over="ignore"):
                    val = float(w @ _loglik_vec(codec, longer, rows, threads))
                if not (np.isfinite(val) and val > new):
                    break
                cand, new, big = longer, val, big * 2.0
        if history is not None:
            history.append(ScoringStep(obj, new if accepted else obj, h, accepted))
        if not accepted:
            break
        # resume at the accepted length; after a first-try success probe a longer one
        start = max(h - 1, 0) if h == start else h
        vec = cand
    state["start"] = start
    return vec


def scoring_update(component, panel, weights, config: FitConfig | None = None,
                   history: list | None = None) -> ComponentParameters:
    """Fisher-scoring iterations on one component's weighted log-likelihood.

    Each step solves ``(F + ridge I) delta = score`` with ``F`` the weighted
    outer product of per-pixel scores and halves ``delta`` (at most 20 times)
    until the objective does not decrease; a full step that is accepted is
    instead doubled while the objective keeps rising (within the log-step
    cap), since the outer-product matrix badly overstates curvature far from
    the optimum.  The number of halvings that succeeded on one step becomes
    the starting point of the next step's search, so that slow, boundary-bound
    components do not repeat the same rejected trial steps.  ``history``, when
    given, receives one `ScoringStep` per iteration.
    """
    config = config or FitConfig()
    codec = ParameterCodec(panel.design, component)
    w, ybar, wss = _active_rows(panel, weights)
    return codec.unpack(_scoring(codec, codec.pack(component), w, ybar, wss, config, history))


# ---------------------------------------------------------------------------
# initialization

_TAILS = {1: (), 2: (0.0023,), 3: (0.015, 0.002), 4: (0.015, 0.002, 0.0003)}


def _tail_fractions(K):
    if K in _TAILS:
        return _TAILS[K]
    t = list(_TAILS[4])
    while len(t) < K - 1:
        t.append(t[-1] * 0.15)
    return tuple(t)


def quantile_groups(grand_means, K) -> np.ndarray:
    """Hard initial groups cut from the upper tail of the pixel grand means."""
    n = len(grand_means)
    order = np.argsort(grand_means, kind="stable")
    labels = np.empty(n, dtype=int)
    if K == 1:
        labels[:] = 0
        return labels
    min_size = max(1, min(10, n // (2 * K)))
    above = [int(round(n * t)) for t in _tail_fractions(K)] + [0]
    sizes = [max(above[k - 1] - above[k], min_size) for k in range(1, K)]
    if n - sum(sizes) < min_size:
        sizes = [n // K] * (K - 1)
    start = n - sum(sizes)
    labels[order[:start]] = 0
    for k, size in enumerate(sizes, start=1):
        labels[order[start:start + size]] = k
        start += size
    return labels


def random_groups(ybar, K, rng) -> np.ndarray:
    """Nearest-seed assignment around ``K`` randomly drawn pixels."""
    n = ybar.shape[0]
    seeds = rng.choice(n, size=K, replace=False)
    centers = ybar[seeds]
    d2 = np.stack([np.sum((ybar - c) ** 2, axis=1) for c in centers], axis=1)
    labels = np.argmin(d2, axis=1)
    labels[seeds] = np.arange(K)
    return labels


def _moment_component(ybar, wss, r, design):
    m = ybar.shape[0]
    mu = ybar.mean(axis=0)
    between = ybar.var(axis=0, ddof=1) if m > 1 else np.zeros(ybar.shape[1])
    if r > 1:
        s2 = wss.sum(axis=0) / (m * (r - 1))
        t2 = between - s2 / r
    else:
        s2 = t2 = between / 2.0
    sigma = np.sqrt(np.maximum(s2, TAU_FLOOR**2))
    tau = np.sqrt(np.maximum(t2, TAU_FLOOR**2))
    std = design.standardizer
    Z = std.rows(design)
    alpha = std.link_to_raw(np.linalg.lstsq(Z, np.log(sigma), rcond=None)[0])
    gamma = std.link_to_raw(np.linalg.lstsq(Z, np.log(tau), rcond=None)[0])
    return ComponentParameters(NPMMean(mu), alpha, gamma)


def lei_from_means(mu, design, groups=None) -> LEIMean:
    """Least-squares LEI coefficients reproducing a mean vector as closely as possible."""
    groups = default_duration_groups(design) if groups is None else dict(groups)
    D = max(groups.values()) + 1
    probe = LEIMean(0.0, 0.0, np.zeros(D), 0.0, groups)
    gidx = probe.group_index(design)
    d, t = design.durations, design.temperatures
    mu = np.asarray(mu, dtype=np.float64)
    b1 = float(mu.min()) - 1.0
    slope = np.polyfit(d, mu, 1)[0] if np.ptp(d) > 0 else 0.0
    b2 = float(np.log(max(slope, 1e-6)))
    excess = mu - b1 - np.exp(b2) * d
    delta = np.array([np.log(max(excess[gidx == g].mean(), 1e-3)) if np.any(gidx == g) else 0.0
                      for g in range(D)])
    x0 = np.concatenate([[b1, b2], delta, [0.0]])

    def resid(x):
        with np.errstate(over="ignore"):
            f = x[0] + np.exp(x[1]) * d + np.exp(x[2:2 + D][gidx] + x[2 + D] * t)
        return np.where(np.isfinite(f), f - mu, 1e12)

    x = optimize.least_squares(resid, x0, method="lm" if design.n_conditions >= x0.size else "trf").x
    return LEIMean(x[0], x[1], x[2:2 + D], x[2 + D], groups)


def model_from_groups(panel, labels, K, mean="npm", groups=None):
    ybar, wss = panel.condition_means, panel.within_ss
    comps, counts = [], []
    for k in range(K):
        sel = labels == k
        comps.append(_moment_component(ybar[sel], wss[sel], panel.design.replicates, panel.design))
        counts.append(sel.sum())
    if mean == "lei":
        comps = [ComponentParameters(lei_from_means(c.mean.values, panel.design, groups), c.alpha, c.gamma)
                 for c in comps]
    pi = np.asarray(counts, dtype=np.float64) / panel.n
    return MixtureModel(panel.design, comps, MixtureWeights(logits_from_weights(pi))).sorted()


def initial_model(panel, K, mean="npm", strategy="quantile", seed=0, groups=None) -> MixtureModel:
    if K < 1 or panel.n < K:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={panel.n}")
    if mean not in ("npm", "lei"):
        raise ValueError(f"unknown mean model {mean!r}")
    if strategy == "quantile":
        labels = quantile_groups(panel.grand_means, K)
    elif strategy == "random":
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        labels = random_groups(panel.condition_means, K, rng)
    else:
        raise ValueError(f"unknown init strategy {strategy!r}")
    return model_from_groups(panel, labels, K, mean, groups)


# ---------------------------------------------------------------------------
# driver

MONOTONE_SLACK = 1e-10
# rows whose responsibility is below this fraction of the component's largest
# are left out of the M-step; their total effect on the objective is far below
# double-precision resolution of the log-likelihood
NEGLIGIBLE_WEIGHT = 1e-30


def _run_em(panel, model, config):
    n = panel.n
    ybar, wss = panel.condition_means, panel.within_ss
    threads = _parallel.resolve_threads(config.threads)
    codecs, vecs = _codecs_for(model)
    logpi = np.log(model.pi)
    resp = _posterior(_loglik_matrix(ybar, wss, codecs, vecs, threads), logpi)
    trace = [resp.manifest_loglik]
    states = [{} for _ in codecs]
    converged = False
    it = 0
    for it in range(1, config.max_em_iters + 1):
        col = resp.matrix.sum(axis=0)
        pi = col / col.sum()
        k_dead = int(np.argmin(pi))
        if pi[k_dead] < 1.0 / n:
            raise ComponentDeathError(k_dead, float(pi[k_dead]), n, np.array(trace))
        logpi = np.log(pi)
        for k, codec in enumerate(codecs):
            wk = resp.matrix[:, k]
            keep = wk > NEGLIGIBLE_WEIGHT * wk.max()
            vecs[k] = _scoring(codec, vecs[k], wk[keep], ybar[keep], wss[keep], config, state=states[k])
        resp = _posterior(_loglik_matrix(ybar, wss, codecs, vecs, threads), logpi)
        prev, cur = trace[-1], resp.manifest_loglik
        trace.append(cur)
        if cur < prev - MONOTONE_SLACK:
            warnings.warn(f"EM iteration {it} decreased the log-likelihood by {prev - cur:.3g}",
                          RuntimeWarning, stacklevel=3)
        if abs(cur - prev) <= config.rel_tol * abs(prev):
            converged = True
            break
    comps = [c.unpack(v) for c, v in zip(codecs, vecs)]
    pi = np.exp(logpi)
    weights = MixtureWeights(np.log(pi[1:]) - np.log(pi[0]) if pi.size > 1 else np.empty(0))
    fitted = MixtureModel(model.design, comps, weights).sorted()
    # posteriors of the model exactly as returned, so a saved model reproduces them
    resp = e_step(panel, fitted, config.threads)
    return FitResult(fitted, resp, np.array(trace), converged, it, n, panel.digest, config)


def evaluate(panel: PixelPanel, model: MixtureModel, threads=None) -> FitResult:
    """Wrap a given model as a zero-iteration `FitResult` on ``panel``."""
    resp = e_step(panel, model, threads)
    return FitResult(model, resp, np.array([resp.manifest_loglik]), True, 0, panel.n, panel.digest,
                     FitConfig(threads=threads))


def restart_seed(seed, index) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def fit(panel: PixelPanel, K: int, mean: str = "npm", config: FitConfig | None = None,
        init: MixtureModel | None = None, groups=None) -> FitResult:
    """Fit a ``K``-component mixture by EM.

    Parameters
    ----------
    panel : PixelPanel
    K : int
        Number of latent components.
    mean : {"npm", "lei"}
        Mean model, ignored when ``init`` is given.
    config : FitConfig, optional
    init : MixtureModel, optional
        Warm start; otherwise ``config.restarts`` starts are tried (the first
        with ``config.init_strategy``, the rest random) and the best kept.
    groups : dict, optional
        LEI duration-to-group map; defaults to `default_duration_groups`.

    Returns
    -------
    FitResult
        Components are ordered by ascending grand mean.  A fit that hits
        ``max_em_iters`` comes back with ``converged=False``.
    """
    config = config or FitConfig()
    if panel.n < K:
        raise ValueError(f"cannot fit {K} components to {panel.n} pixels")
    if init is not None:
        if init.K != K:
            raise ValueError(f"initial model has {init.K} components, asked for {K}")
        return _run_em(panel, init, config)
    starts = [initial_model(panel, K, mean, config.init_strategy, config.seed, groups)]
    starts += [initial_model(panel, K, mean, "random", restart_seed(config.seed, i), groups)
               for i in range(1, config.restarts)]
    best, first_error = None, None
    for start in starts:
        try:
            res = _run_em(panel, start, config)
        except (ComponentDeathError, ScoringError, EStepError) as exc:
            first_error = first_error or exc
            continue
        if best is None or res.loglik > best.loglik:
            best = res
    if best is None:
        raise first_error
    return best


__all__ = [
    "FitConfig",
    "FitResult",
    "ParameterCodec",
    "Responsibilities",
    "ScoringStep",
    "component_loglik",
    "component_objective",
    "e_step",
    "evaluate",
    "fit",
    "initial_model",
    "lei_from_means",
    "m_step_weights",
    "manifest_loglik",
    "model_from_groups",
    "quantile_groups",
    "random_groups",
    "scoring_update",
    "weighted_score",
]
