"""Reproducible random-stream plumbing for the Monte Carlo laboratory.

All randomness flows from a single 64-bit experiment seed through
counter-based Philox generators, split into named substreams:

* the *instance stream* ``(domain 0, redraw)`` drives codes, channel taps
  and estimation errors of one instance;
* the *symbol stream* ``(domain 1, redraw, trial)`` drives the transmitted
  bits and the noise of one symbol period.

Substream identity depends only on these indices, never on execution
order, so trials can be fanned out across workers (or rerun one at a
time) with bit-identical results.

Gaussian variates are produced by the Box-Muller transform from the
generator's uniforms rather than by the generator's own ``normal`` so the
mapping from uniforms to normals is pinned down here: each consecutive
pair ``(u1, u2)`` yields ``sqrt(-2 log(1-u1)) * (cos, sin)(2 pi u2)``.
"""

from __future__ import annotations

import numpy as np

_INSTANCE_DOMAIN = 0
_SYMBOL_DOMAIN = 1


def _generator(seed: int, *path: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(seq))


def instance_stream(seed: int, redraw: int) -> np.random.Generator:
    """Generator for drawing one instance (codes, taps, estimation error)."""
    return _generator(seed, _INSTANCE_DOMAIN, redraw)


def symbol_stream(seed: int, redraw: int, trial: int) -> np.random.Generator:
    """Generator for one symbol period (bits and noise) of one trial."""
    return _generator(seed, _SYMBOL_DOMAIN, redraw, trial)


def normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal variates via Box-Muller on ``rng``'s uniforms."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape, dtype=np.int64))
    pairs = (n + 1) // 2
    u1 = rng.random(pairs)
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    angle = 2.0 * np.pi * u2
    out = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return out[:n].reshape(shape)
