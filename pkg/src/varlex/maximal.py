"""Dyadic-truncated Hardy-Littlewood, Orlicz-type and fractional Orlicz-type maximal operators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import CubeLattice, GridFunction, expand_blocks, level_blocks, random_indicator_sum
from .exceptions import DomainError
from .exponents import Field
from .gphi import PhiFunction
from .spaces import as_phi, batch_norms, cube_norm_ratio, indicator_norm, indicator_norms, luxemburg_norm

__all__ = ["MaximalSpec", "maximal", "boundedness_probe"]


@dataclass(frozen=True)
class MaximalSpec:
    """``phi=None`` gives plain averages; ``beta`` adds the factor ``||chi_Q||_beta``."""

    lattice: CubeLattice
    phi: Optional[PhiFunction] = None
    beta: Optional[Field] = None
    include_shifted: bool = False

    def __post_init__(self):
        if self.beta is not None and self.beta.minus <= 0:
            raise DomainError("beta must satisfy beta^- > 0")


def _level_ratios(spec: MaximalSpec, f: GridFunction, level: int) -> np.ndarray:
    """Per-cube ratios of an aligned level, in lattice order."""
    N, n = f.cells_per_side, f.n
    lev = max(level, 0)
    if spec.phi is None:
        blocks = level_blocks(np.abs(f.values), lev, n)
        return blocks.mean(axis=1)
    phi = as_phi(spec.phi)
    idx = level_blocks(np.arange(N**n).reshape((N,) * n), lev, n)
    bound = phi.bind_grid(N).take(idx)
    vals = np.abs(f.values.reshape(-1)[idx])
    num, *_ = batch_norms(bound, vals, f.cell_measure)
    den, *_ = batch_norms(bound, np.ones(idx.shape), f.cell_measure)
    return num / den


def _beta_factor_level(spec: MaximalSpec, f: GridFunction, level: int) -> np.ndarray:
    cubes = spec.lattice.level_cubes(level)
    return indicator_norms(spec.beta, cubes)


def maximal(spec: MaximalSpec, f: GridFunction) -> GridFunction:
    """Max over lattice cubes ``Q`` containing each midpoint of ``[||chi_Q||_beta] ||chi_Q f||_phi / ||chi_Q||_phi``."""
    lat = spec.lattice
    if lat.box != f.box:
        raise DomainError("lattice and grid function live on different boxes")
    N, n = f.cells_per_side, f.n
    depth = f.depth
    out = np.zeros(f.values.shape)
    absf = np.abs(f.values)
    for j in lat.levels:
        if j <= depth:
            r = _level_ratios(spec, f, j)
            if spec.beta is not None:
                r = r * _beta_factor_level(spec, f, j)
            lev = max(j, 0)
            out = np.maximum(out, expand_blocks(r, lev, N, n))
        else:
            # sub-cell cubes see a constant |f|; only the beta factor depends on the cube
            vals = absf.copy()
            if spec.beta is not None:
                side = lat.side(j)
                pts = f.midpoints().reshape(-1, n)
                lo = lat.box.lo + np.floor((pts - lat.box.lo) / side) * side
                from .domain import Cube

                cubes = [Cube(tuple(l), side) for l in lo]
                vals = vals * indicator_norms(spec.beta, cubes).reshape(vals.shape)
            out = np.maximum(out, vals)
        if spec.include_shifted:
            pts = f.midpoints()
            for Q in lat.shifted_cubes(j):
                inside = Q.contains(pts)
                if not np.any(inside):
                    continue
                if spec.phi is None:
                    from .domain import average

                    r = average(abs(f), Q)
                else:
                    r = cube_norm_ratio(spec.phi, f, Q)
                if spec.beta is not None:
                    r *= indicator_norm(spec.beta, Q).value
                out = np.where(inside, np.maximum(out, r), out)
    return f.with_values(out)


def boundedness_probe(spec: MaximalSpec, source_p, target_p, trials: int, seed: int = 0,
                      return_worst: bool = False):
    """Largest ``||M f||_target / ||f||_source`` over random nonnegative test functions."""
    if trials < 1:
        raise DomainError("trials must be at least 1")
    src, tgt = as_phi(source_p), as_phi(target_p)
    rng = np.random.default_rng(seed)
    N = 1 << max(spec.lattice.j_max, 1)
    N = min(N, 1 << (12 if spec.lattice.n == 1 else 9))
    best, worst = 0.0, None
    for _ in range(trials):
        f = random_indicator_sum(spec.lattice.box, N, rng)
        den = luxemburg_norm(src, f).value
        if den == 0:
            continue
        r = luxemburg_norm(tgt, maximal(spec, f)).value / den
        if r > best:
            best, worst = r, f
    return (best, worst) if return_worst else best
