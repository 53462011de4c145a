"""Experimental design, mixture parameters, link functions and mean models.

A pixel's record is the vector of ``E * r`` readings taken under ``E``
conditions with ``r`` replicate frames each, replicates running fastest.
Within latent component ``k`` the readings are Gaussian with mean
``mu_k (x) 1_r`` and covariance ``diag(sigma_k**2) (x) I_r + tau_k tau_k' (x) J_r``,
where ``sigma_k`` and ``tau_k`` follow log links in the covariate row
``z_e = (1, temp_e, duration_e)``.

Two mean models are supported:

* NPM: one free mean per condition.
* LEI: ``beta1 + exp(beta2) * d + exp(delta[g(d)] + beta_temp * t)`` where
  ``g`` maps each exposure duration to one of ``D`` intercept groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import DesignError, DimensionError

__all__ = [
    "Condition",
    "ExperimentDesign",
    "build_design",
    "sigma_vector",
    "tau_vector",
    "NPMMean",
    "LEIMean",
    "default_duration_groups",
    "ComponentParameters",
    "mean_vector",
    "MixtureWeights",
    "weights_from_logits",
    "logits_from_weights",
    "MixtureModel",
    "PixelPanel",
]

# exposures shorter than this carry essentially no dark signal and share the
# intercept group of the next shortest duration
NEAR_ZERO_EXPOSURE_S = 1.0


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Condition:
    """One acquisition setting: sensor temperature (deg C) and exposure (s)."""

    temp_c: float
    duration_s: float

    def __post_init__(self):
        if not np.isfinite(self.temp_c):
            raise DesignError(f"temperature must be finite, got {self.temp_c}")
        if not (np.isfinite(self.duration_s) and self.duration_s > 0):
            raise DesignError(f"duration must be positive, got {self.duration_s}")


@dataclass(frozen=True)
class ExperimentDesign:
    conditions: tuple
    replicates: int

    def __post_init__(self):
        if len(self.conditions) < 1:
            raise DesignError("a design needs at least one condition")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise DesignError(f"replicates must be a positive integer, got {self.replicates}")
        seen = {}
        for i, c in enumerate(self.conditions):
            key = (float(c.temp_c), float(c.duration_s))
            if key in seen:
                raise DesignError(
                    f"condition {i} duplicates condition {seen[key]} ({key[0]} C, {key[1]} s)"
                )
            seen[key] = i

    @property
    def n_conditions(self) -> int:
        return len(self.conditions)

    @property
    def width(self) -> int:
        """Number of panel columns, ``E * r``."""
        return self.n_conditions * self.replicates

    @cached_property
    def temperatures(self) -> np.ndarray:
        return _frozen([c.temp_c for c in self.conditions])

    @cached_property
    def durations(self) -> np.ndarray:
        return _frozen([c.duration_s for c in self.conditions])

    @cached_property
    def covariate_rows(self) -> np.ndarray:
        """``(E, 3)`` array of rows ``(1, temp, duration)``."""
        return _frozen(
            np.column_stack([np.ones(self.n_conditions), self.temperatures, self.durations])
        )

    def column(self, e: int, j: int) -> int:
        """Panel column of condition ``e`` and replicate ``j`` (both 0-based)."""
        if not (0 <= e < self.n_conditions and 0 <= j < self.replicates):
            raise IndexError(f"cell ({e}, {j}) outside design")
        return e * self.replicates + j

    @cached_property
    def standardizer(self) -> "Standardizer":
        return Standardizer.from_design(self)


def build_design(conditions: Sequence, replicates: int) -> ExperimentDesign:
    """Build a design from ``(temp_c, duration_s)`` pairs or `Condition` objects.

    Examples
    --------
    >>> d = build_design([(0.0, 3.0)], 1)
    >>> d.covariate_rows.tolist()
    [[1.0, 0.0, 3.0]]
    """
    conds = []
    for i, c in enumerate(conditions):
        if isinstance(c, Condition):
            conds.append(c)
            continue
        try:
            t, d = c
        except (TypeError, ValueError):
            raise DesignError(f"condition {i} is not a (temp_c, duration_s) pair: {c!r}")
        try:
            conds.append(Condition(float(t), float(d)))
        except DesignError as exc:
            raise DesignError(f"condition {i}: {exc}") from None
    return ExperimentDesign(tuple(conds), int(replicates))


@dataclass(frozen=True)
class Standardizer:
    """Affine centring/scaling of temperature and duration.

    Link coefficients are optimized against ``(1, (t - t0)/ts, (d - d0)/ds)``;
    a covariate constant across the design keeps unit scale and becomes an
    all-zero column (its coefficient is then not identified).
    """

    t_center: float
    t_scale: float
    d_center: float
    d_scale: float

    @classmethod
    def from_design(cls, design):
        t, d = design.temperatures, design.durations
        ts, ds = float(np.std(t)), float(np.std(d))
        return cls(float(np.mean(t)), ts if ts > 0 else 1.0, float(np.mean(d)), ds if ds > 0 else 1.0)

    def rows(self, design) -> np.ndarray:
        return np.column_stack([
            np.ones(design.n_conditions),
            (design.temperatures - self.t_center) / self.t_scale,
            (design.durations - self.d_center) / self.d_scale,
        ])

    def link_to_internal(self, coef):
        a0, a1, a2 = coef
        return np.array([a0 + a1 * self.t_center + a2 * self.d_center,
                         a1 * self.t_scale, a2 * self.d_scale])

    def link_to_raw(self, coef):
        s0, s1, s2 = coef
        a1, a2 = s1 / self.t_scale, s2 / self.d_scale
        return np.array([s0 - a1 * self.t_center - a2 * self.d_center, a1, a2])


def _link(coef, design):
    coef = np.asarray(coef, dtype=np.float64)
    if coef.shape != (3,):
        raise DimensionError(f"link coefficients must have length 3, got shape {coef.shape}")
    with np.errstate(over="ignore"):
        return np.exp(design.covariate_rows @ coef)


def sigma_vector(alpha, design: ExperimentDesign) -> np.ndarray:
    """Per-condition image noise scale ``exp(z_e' alpha)``.

    Overflow saturates to ``inf``; callers decide whether that is fatal.
    """
    return _link(alpha, design)


def tau_vector(gamma, design: ExperimentDesign) -> np.ndarray:
    """Per-condition pixel non-uniformity scale ``exp(z_e' gamma)``."""
    return _link(gamma, design)


@dataclass(frozen=True)
class NPMMean:
    """Unrestricted per-condition means."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.ravel(self.values)))

    @property
    def n_params(self) -> int:
        return self.values.size

    kind = "npm"


@dataclass(frozen=True)
class LEIMean:
    """Linear-in-duration mean with a duration-dependent log-scale intercept.

    ``groups`` maps every exposure duration (seconds) to a 0-based index into
    ``delta``.
    """

    beta1: float
    beta2: float
    delta: np.ndarray
    beta_temp: float
    groups: Mapping[float, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "delta", _frozen(np.ravel(self.delta)))
        object.__setattr__(self, "groups", {float(k): int(v) for k, v in dict(self.groups).items()})
        for d, g in self.groups.items():
            if not 0 <= g < self.delta.size:
                raise DesignError(f"duration {d} s mapped to group {g}, but only {self.delta.size} groups")

    @property
    def n_params(self) -> int:
        return 3 + self.delta.size

    kind = "lei"

    def group_index(self, design) -> np.ndarray:
        out = []
        for e, d in enumerate(design.durations):
            g = self.groups.get(float(d))
            if g is None:
                raise DesignError(f"condition {e}: duration {d} s has no LEI intercept group")
            out.append(g)
        return np.array(out, dtype=int)


MeanSpec = Union[NPMMean, LEIMean]


def default_duration_groups(design: ExperimentDesign) -> dict:
    """Assign each distinct duration its own LEI group.

    Near-zero exposures (below one second) share the group of the next
    shortest duration, so the ten-condition layout with durations
    {0.01, 3, 300, 600} s gets three groups.
    """
    distinct = sorted(set(float(d) for d in design.durations))
    lead = [d for d in distinct if d < NEAR_ZERO_EXPOSURE_S]
    rest = [d for d in distinct if d >= NEAR_ZERO_EXPOSURE_S]
    groups = {d: i for i, d in enumerate(rest)}
    for d in lead:
        groups[d] = 0
    if not rest:
        groups = {d: 0 for d in lead}
    return groups


@dataclass(frozen=True)
class ComponentParameters:
    mean: MeanSpec
    alpha: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "gamma"):
            v = _frozen(np.ravel(getattr(self, name)))
            if v.shape != (3,):
                raise DimensionError(f"{name} must have length 3, got {v.size}")
            object.__setattr__(self, name, v)

    @property
    def n_params(self) -> int:
        return self.mean.n_params + 6


def mean_vector(component: ComponentParameters | MeanSpec, design: ExperimentDesign) -> np.ndarray:
    """Length-``E`` mean vector aligned with the design's condition order."""
    spec = component.mean if isinstance(component, ComponentParameters) else component
    if isinstance(spec, NPMMean):
        if spec.values.size != design.n_conditions:
            raise DimensionError(
                f"NPM mean has {spec.values.size} values for {design.n_conditions} conditions"
            )
        return np.array(spec.values)
    g = spec.group_index(design)
    with np.errstate(over="ignore"):
        return (spec.beta1 + np.exp(spec.beta2) * design.durations
                + np.exp(spec.delta[g] + spec.beta_temp * design.temperatures))


def weights_from_logits(theta) -> np.ndarray:
    """Mixing proportions from logits relative to the first component."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if not np.all(np.isfinite(theta)):
        raise ValueError("logits must be finite")
    eta = np.concatenate([[0.0], theta])
    eta -= eta.max()
    w = np.exp(eta)
    return w / w.sum()


def logits_from_weights(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64).ravel()
    if pi.size == 1 and pi[0] == 1.0:
        return np.empty(0)
    if pi.size < 2 or np.any(pi <= 0) or np.any(pi >= 1):
        raise ValueError("proportions must lie strictly inside (0, 1)")
    if abs(pi.sum() - 1.0) > 1e-9:
        raise ValueError(f"proportions sum to {pi.sum()}, not 1")
    return np.log(pi[1:]) - np.log(pi[0])


@dataclass(frozen=True)
class MixtureWeights:
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen(np.ravel(self.theta)))

    @classmethod
    def from_proportions(cls, pi):
        return cls(logits_from_weights(pi))

    @property
    def pi(self) -> np.ndarray:
        return weights_from_logits(self.theta)

    @property
    def n_components(self) -> int:
        return self.theta.size + 1


@dataclass(frozen=True)
class MixtureModel:
    design: ExperimentDesign
    components: tuple
    weights: MixtureWeights

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) < 1:
            raise ValueError("a mixture needs at least one component")
        if self.weights.n_components != len(self.components):
            raise DimensionError(
                f"{self.weights.n_components} weights for {len(self.components)} components"
            )
        kinds = {c.mean.kind for c in self.components}
        if len(kinds) != 1:
            raise ValueError("all components must share one mean model")
        for c in self.components:
            mean_vector(c, self.design)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def mean_kind(self) -> str:
        return self.components[0].mean.kind

    @property
    def pi(self) -> np.ndarray:
        return self.weights.pi

    def means(self) -> np.ndarray:
        return np.array([mean_vector(c, self.design) for c in self.components])

    def sigmas(self) -> np.ndarray:
        return np.array([sigma_vector(c.alpha, self.design) for c in self.components])

    def taus(self) -> np.ndarray:
        return np.array([tau_vector(c.gamma, self.design) for c in self.components])

    def grand_means(self) -> np.ndarray:
        return self.means().mean(axis=1)

    def n_params(self) -> int:
        return (self.K - 1) + sum(c.n_params for c in self.components)

    def label_order(self) -> np.ndarray:
        """Component order by ascending grand mean (stable)."""
        return np.argsort(self.grand_means(), kind="stable")

    def permuted(self, order) -> "MixtureModel":
        order = np.asarray(order, dtype=int)
        pi = self.pi[order]
        return MixtureModel(self.design, tuple(self.components[k] for k in order),
                            MixtureWeights(np.log(pi[1:]) - np.log(pi[0])))

    def sorted(self) -> "MixtureModel":
        return self.permuted(self.label_order())

    def to_npm(self) -> "MixtureModel":
        """Same model with every mean evaluated into free per-condition values."""
        comps = tuple(ComponentParameters(NPMMean(mean_vector(c, self.design)), c.alpha, c.gamma)
                      for c in self.components)
        return MixtureModel(self.design, comps, self.weights)


@dataclass(frozen=True, eq=False)
class PixelPanel:
    """``n x (E*r)`` readings, one pixel per row, condition-major columns."""

    data: np.ndarray
    design: ExperimentDesign

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionError(f"panel must be 2-D, got {data.ndim} dimensions")
        if data.shape[1] != self.design.width:
            raise DimensionError(
                f"panel has {data.shape[1]} columns; design needs "
                f"{self.design.n_conditions} x {self.design.replicates} = {self.design.width}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("panel contains non-finite readings")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def cube(self) -> np.ndarray:
        """View of shape ``(n, E, r)``."""
        return self.data.reshape(self.n, self.design.n_conditions, self.design.replicates)

    @cached_property
    def condition_means(self) -> np.ndarray:
        """``(n, E)`` per-pixel replicate averages."""
        return self.cube().mean(axis=2)

    @cached_property
    def within_ss(self) -> np.ndarray:
        """``(n, E)`` per-pixel sums of squares about the replicate average."""
        dev = self.cube() - self.condition_means[:, :, None]
        return np.einsum("nej,nej->ne", dev, dev)

    @cached_property
    def grand_means(self) -> np.ndarray:
        return self.data.mean(axis=1)

    @cached_property
    def digest(self) -> str:
        import hashlib
        h = hashlib.blake2b(digest_size=16)
        h.update(np.asarray(self.data.shape, dtype=np.int64).tobytes())
        h.update(self.data.tobytes())
        return h.hexdigest()

    def take(self, index) -> "PixelPanel":
        """Sub-panel of the given rows (repeats allowed), reusing cached statistics."""
        index = np.asarray(index)
        sub = PixelPanel(self.data[index], self.design)
        for name in ("condition_means", "within_ss", "grand_means"):
            if name in self.__dict__:
                sub.__dict__[name] = self.__dict__[name][index]
        return sub
