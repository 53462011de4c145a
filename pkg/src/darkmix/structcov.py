"""Diagonal-plus-rank-one Kronecker covariance.

``Sigma = diag(sigma**2) (x) I_r + (tau tau') (x) J_r``

Because ``(tau tau') (x) J_r = u u'`` with ``u = tau (x) 1_r``, Sigma is a
diagonal matrix plus a rank-one update and every operation below costs
``O(E * r)`` through the matrix determinant lemma and Sherman-Morrison.
Vectors indexed by panel column use the condition-major layout (replicate
index fastest).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

MATERIALIZE_CAP = 1000


@dataclass(frozen=True)
class StructuredCov:
    sigma: np.ndarray
    tau: np.ndarray
    r: int

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.float64).ravel()
        tau = np.asarray(self.tau, dtype=np.float64).ravel()
        if sigma.shape != tau.shape:
            raise DimensionError(f"sigma has {sigma.size} entries, tau has {tau.size}")
        if int(self.r) != self.r or self.r < 1:
            raise DimensionError(f"r must be a positive integer, got {self.r}")
        if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
            raise ValueError("sigma must be finite and strictly positive (singular diagonal)")
        if np.any(~np.isfinite(tau)) or np.any(tau < 0):
            raise ValueError("tau must be finite and non-negative")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "r", int(self.r))

    @property
    def E(self) -> int:
        return self.sigma.size

    @property
    def dim(self) -> int:
        return self.E * self.r

    # a = 1/sigma^2, b = tau/sigma^2, c = u' D^-1 u
    @property
    def _a(self):
        return 1.0 / self.sigma**2

    @property
    def _b(self):
        return self.tau / self.sigma**2

    @property
    def _c(self):
        return self.r * float(np.sum(self.tau**2 / self.sigma**2))

    def log_det(self) -> float:
        return self.r * float(np.sum(np.log(self.sigma**2))) + float(np.log1p(self._c))

    def _blocks(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.dim:
            raise DimensionError(f"vector length {v.shape[-1]} does not match dimension {self.dim}")
        return v.reshape(v.shape[:-1] + (self.E, self.r))

    def solve(self, v) -> np.ndarray:
        """``Sigma^-1 v``; ``v`` may carry leading batch axes."""
        vb = self._blocks(v)
        b = self._b
        proj = np.einsum("e,...ej->...", b, vb) / (1.0 + self._c)
        out = vb * self._a[:, None] - b[:, None] * proj[..., None, None]
        return out.reshape(np.shape(v))

    def quad_form(self, resid) -> np.ndarray | float:
        rb = self._blocks(resid)
        sq = np.einsum("e,...ej->...", self._a, rb * rb)
        s = np.einsum("e,...ej->...", self._b, rb)
        q = sq - s * s / (1.0 + self._c)
        return np.maximum(q, 0.0) if np.ndim(q) else max(float(q), 0.0)

    def directional_trace(self, family: str, z) -> float:
        """``tr(Sigma^-1 dSigma)`` for a link-coefficient derivative.

        ``family="alpha"``: ``dSigma = diag(2 sigma**2 z) (x) I_r``.
        ``family="gamma"``: ``dSigma = (w tau' + tau w') (x) J_r`` with ``w = tau * z``.
        ``z`` is the covariate column (length ``E``) of the coefficient.
        """
        z = np.asarray(z, dtype=np.float64).ravel()
        if z.size != self.E:
            raise DimensionError(f"covariate column has {z.size} entries, expected {self.E}")
        a, b, c, r = self._a, self._b, self._c, self.r
        if family == "alpha":
            diag_inv = a - b * b / (1.0 + c)
            return float(r * np.sum(2.0 * self.sigma**2 * z * diag_inv))
        if family == "gamma":
            return float(2.0 * r * np.sum(self.tau**2 * z * a) / (1.0 + c))
        raise ValueError(f"unknown derivative family {family!r}; expected 'alpha' or 'gamma'")

    def materialize(self, cap: int = MATERIALIZE_CAP) -> np.ndarray:
        """Dense ``(E*r, E*r)`` matrix; intended for checking the fast paths."""
        if self.dim > cap:
            raise ValueError(f"dimension {self.dim} exceeds materialization cap {cap}")
        u = np.repeat(self.tau, self.r)
        return np.diag(np.repeat(self.sigma**2, self.r)) + np.outer(u, u)
