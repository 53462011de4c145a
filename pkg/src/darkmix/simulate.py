"""Sampling panels from the structured mixture, plus a camera-like preset.

Each pixel draws its component once, one persistent effect ``eps_i`` shared
by all of its readings, and one independent noise term per reading::

    y[i, e, j] = mu[k, e] + sigma[k, e] * noise[i, e, j] + tau[k, e] * eps_i

Random numbers come from numpy's Philox counter-based generator.  Pixels are
generated in fixed chunks and chunk ``c`` uses the stream keyed by
``SeedSequence([seed, c])``, so the output depends only on ``(model, n,
seed)`` and never on how many threads produced it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _parallel
from .model import (
    ComponentParameters,
    MixtureModel,
    MixtureWeights,
    NPMMean,
    PixelPanel,
    build_design,
    logits_from_weights,
)

ADC_MAX = 2**16 - 1


@dataclass(frozen=True)
class SimOutput:
    panel: PixelPanel
    labels: np.ndarray
    model: MixtureModel
    seed: int


def chunk_generator(seed, chunk_index) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk_index)])))


def simulate_panel(model: MixtureModel, n: int, seed: int, quantize: bool = False,
                   threads=None) -> SimOutput:
    """Draw ``n`` pixel records from ``model``.

    With ``quantize=True`` readings are rounded to integers and clamped to the
    16-bit converter range.  Labels are 0-based component indices.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    design = model.design
    r = design.replicates
    mu = np.repeat(model.means(), r, axis=1)
    sigma = np.repeat(model.sigmas(), r, axis=1)
    tau = np.repeat(model.taus(), r, axis=1)
    pi = model.pi
    K = model.K

    def work(sl):
        m = sl.stop - sl.start
        rng = chunk_generator(seed, sl.start // _parallel.CHUNK_SIZE)
        labels = rng.choice(K, size=m, p=pi)
        eps = rng.standard_normal(m)
        noise = rng.standard_normal((m, design.width))
        y = mu[labels] + sigma[labels] * noise + tau[labels] * eps[:, None]
        return y, labels

    data, labels = _parallel.concat_chunks(_parallel.map_chunks(work, n, threads))
    if quantize:
        data = np.clip(np.rint(data), 0, ADC_MAX)
    return SimOutput(PixelPanel(data, design), labels, model, int(seed))


def _link_from(ref_value, t_slope, d_slope, ref=(-10.0, 0.01)):
    """Log-link coefficients with a given value at the reference condition."""
    return np.array([np.log(ref_value) - t_slope * ref[0] - d_slope * ref[1], t_slope, d_slope])


def atik_design(replicates=10):
    """The ten-condition layout: a short reference frame, then 3 x 3 grid."""
    conds = [(-10.0, 0.01)] + [(t, d) for t in (-10.0, 0.0, 10.0) for d in (3.0, 300.0, 600.0)]
    return build_design(conds, replicates)


def _trend(design, base, warm, rate):
    t, d = design.temperatures, design.durations
    return base + warm * (np.exp(0.08 * (t + 10.0)) - 1.0) + rate * d * np.exp(0.07 * t)


def preset_atik(K: int = 3, replicates: int = 10) -> MixtureModel:
    """Synthetic camera model with ordinary and hot pixel types.

    Offset (about 263), read-out noise (about 16) and the mixing proportions
    are set to the reported values for the studied camera; every trend
    coefficient below (growth with temperature and duration of means,
    ``sigma`` and ``tau``) is an invented placeholder that only respects the
    qualitative picture: dark signal and non-uniformity grow with duration
    and temperature, much faster for hot pixels.
    """
    design = atik_design(replicates)
    ordinary = ComponentParameters(
        NPMMean(_trend(design, 263.0, 1.5, 0.002)),
        _link_from(16.2, 0.0095, 0.0001),
        _link_from(0.9, 0.08, 0.001),
    )
    moderate = ComponentParameters(
        NPMMean(_trend(design, 264.0, 2.0, 0.03)),
        _link_from(16.5, 0.01, 0.0004),
        _link_from(1.5, 0.06, 0.0023),
    )
    very_hot = ComponentParameters(
        NPMMean(_trend(design, 270.0, 10.0, 0.5)),
        _link_from(20.0, 0.015, 0.0008),
        _link_from(5.0, 0.07, 0.0033),
    )
    if K == 3:
        comps, pi = (ordinary, moderate, very_hot), (0.9858, 0.0123, 0.0019)
    elif K == 2:
        comps, pi = (ordinary, very_hot), (0.9977, 0.0023)
    else:
        raise ValueError(f"preset available for K in {{2, 3}}, got {K}")
    return MixtureModel(design, comps, MixtureWeights(logits_from_weights(np.array(pi))))


def boost_separation(model: MixtureModel, factor: float) -> MixtureModel:
    """Stretch every component's mean away from the first component's by ``factor``."""
    means = model.means()
    comps = [model.components[0]] + [
        ComponentParameters(NPMMean(means[0] + factor * (means[k] - means[0])), c.alpha, c.gamma)
        for k, c in enumerate(model.components) if k > 0
    ]
    return MixtureModel(model.design, comps, model.weights)
