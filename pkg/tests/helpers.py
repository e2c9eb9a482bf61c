"""Shared oracles for the test suite."""

import numpy as np

from adas.spectral import SpectralField


def single_mode(grid, m, coeff=1.0, comp=0, ncomp=1):
    """Real field with c(m) = coeff, c(-m) = conj(coeff) in component ``comp``."""
    c = np.zeros((ncomp,) + grid.spectral_shape, complex)
    mx, my, mz = m
    if mz < 0 or (mz == 0 and (my < 0 or (my == 0 and mx < 0))):
        mx, my, mz, coeff = -mx, -my, -mz, np.conj(coeff)
    c[comp, mx % grid.n, my % grid.n, mz] = coeff
    if mz == 0:
        c[comp, -mx % grid.n, -my % grid.n, 0] = np.conj(coeff)
    return SpectralField(grid, c)


def refine(c, grid, fine):
    """Embed half-spectrum coefficients of a resolved field into a finer grid."""
    M = grid.max_retained_index
    out = np.zeros(c.shape[:-3] + fine.spectral_shape, complex)
    idx = np.r_[0 : M + 1, -M:0]
    for i in idx:
        for j in idx:
            out[..., i % fine.n, j % fine.n, : M + 1] = c[..., i % grid.n, j % grid.n, : M + 1]
    return out


def coarsen(c, grid, fine):
    """Inverse of ``refine`` restricted to the retained cube."""
    M = grid.max_retained_index
    out = np.zeros(c.shape[:-3] + grid.spectral_shape, complex)
    idx = np.r_[0 : M + 1, -M:0]
    for i in idx:
        for j in idx:
            out[..., i % grid.n, j % grid.n, : M + 1] = c[..., i % fine.n, j % fine.n, : M + 1]
    return out
