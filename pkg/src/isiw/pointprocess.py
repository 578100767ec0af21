"""Preferential point-pattern samplers driven by a field realization.

Supports log-Gaussian Cox (LGCP), sigmoidal Cox (SCP), and Thomas cluster
sampling, all conditioned on an exact point count n. For the Cox processes
conditioning on n turns the inhomogeneous Poisson law into a binomial point
process with density proportional to the intensity, which is sampled as a
multinomial over grid cells followed by a uniform jitter within the cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import FieldRealization, SeedStream

LGCP = "lgcp"
SCP = "scp"
THOMAS = "thomas"
SAMPLER_KINDS = (LGCP, SCP, THOMAS)


@dataclass(frozen=True)
class SamplerSpec:
    """Configuration for one point-pattern sampler.

    ``alpha`` and ``beta`` parametrize the Cox intensities
    exp(alpha + beta S) (LGCP) and beta / (1 + exp(-S)) (SCP);
    ``parent_rate`` and ``offspring_scale`` apply to the Thomas process
    (expected parents per unit area, Gaussian displacement sd).
    """

    kind: str
    n: int
    beta: float = 1.0
    alpha: float = 0.0
    parent_rate: float = 25.0
    offspring_scale: float = 0.1
    max_retries: int = 1000

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("target point count must be >= 1")
        if self.kind == THOMAS and not (self.parent_rate > 0 and self.offspring_scale > 0):
            raise ValueError("Thomas process needs positive parent_rate and offspring_scale")


def compute_intensity(kind: str, field: FieldRealization, spec: SamplerSpec) -> np.ndarray:
    """Deterministic per-cell sampling intensity for the Cox processes.

    The Thomas process is rejected: given only the field there is no
    deterministic cell intensity (it depends on the random parent pattern).
    """
    s = field.values
    if kind == LGCP:
        return np.exp(spec.alpha + spec.beta * s)
    if kind == SCP:
        lam = spec.beta / (1.0 + np.exp(-s))
        if np.any(lam <= 0):
            raise ValueError("SCP intensity must be positive; beta must be > 0")
        return lam
    if kind == THOMAS:
        raise ValueError("Thomas process has no deterministic cell intensity")
    raise ValueError(f"unknown sampler kind {kind!r}")


def sample_conditioned(
    field: FieldRealization, intensity: np.ndarray, n: int, seed: SeedStream
) -> np.ndarray:
    """Exactly n points with density proportional to the cell intensity.

    Cells are drawn from a multinomial with probability proportional to
    intensity * cell area (areas are equal on a regular grid), then each
    point is jittered uniformly within its cell.
    """
    grid = field.grid
    intensity = np.asarray(intensity, dtype=float)
    if intensity.shape != (grid.ncells,):
        raise ValueError("intensity does not match the grid")
    if np.any(intensity <= 0) or not np.all(np.isfinite(intensity)):
        raise ValueError("cell intensities must be positive and finite")
    if n < 1:
        raise ValueError("n must be >= 1")

    rng = seed.generator()
    probs = intensity / intensity.sum()
    counts = rng.multinomial(n, probs)
    cells = np.repeat(np.arange(grid.ncells), counts)
    u = rng.random((n, 2))
    ix = cells % grid.nx
    iy = cells // grid.nx
    x = grid.domain.x0 + (ix + u[:, 0]) * grid.dx
    y = grid.domain.y0 + (iy + u[:, 1]) * grid.dy
    return np.column_stack([x, y])


def _reflect_into(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Fold coordinates back into [lo, hi] by reflection at the boundaries."""
    width = hi - lo
    t = np.mod(values - lo, 2.0 * width)
    return lo + np.minimum(t, 2.0 * width - t)


def sample_thomas(field: FieldRealization, spec: SamplerSpec, seed: SeedStream) -> np.ndarray:
    """Thomas cluster sample of exactly n points.

    Parents come from a homogeneous Poisson process; each parent gets a
    Poisson(exp(beta * S(parent))) brood displaced by an isotropic Gaussian
    and reflected back into the domain. A whole realization is regenerated
    until it holds at least n points, then subsampled uniformly without
    replacement (subsampling keeps the clustering structure intact).
    """
    if spec.kind != THOMAS:
        raise ValueError(f"sampler kind must be {THOMAS!r}, got {spec.kind!r}")
    dom = field.grid.domain
    rng = seed.generator()

    for _ in range(spec.max_retries):
        n_parents = rng.poisson(spec.parent_rate * dom.area)
        if n_parents == 0:
            continue
        parents = np.column_stack(
            [
                rng.uniform(dom.x0, dom.x1, n_parents),
                rng.uniform(dom.y0, dom.y1, n_parents),
            ]
        )
        broods = rng.poisson(np.exp(spec.beta * field.at(parents)))
        total = int(broods.sum())
        if total < spec.n:
            continue
        centers = np.repeat(parents, broods, axis=0)
        offsets = rng.normal(0.0, spec.offspring_scale, size=(total, 2))
        pts = centers + offsets
        pts[:, 0] = _reflect_into(pts[:, 0], dom.x0, dom.x1)
        pts[:, 1] = _reflect_into(pts[:, 1], dom.y0, dom.y1)
        keep = rng.choice(total, size=spec.n, replace=False)
        return pts[np.sort(keep)]

    raise RuntimeError(
        f"Thomas sampler never reached {spec.n} points in {spec.max_retries} attempts; "
        "raise parent_rate or the retry budget"
    )
