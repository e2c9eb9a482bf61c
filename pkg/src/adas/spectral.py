"""Fourier representation of periodic, mean-zero fields on the cube [0, L]^3.

Fields are stored on the real-transform half spectrum: ``coeffs`` has shape
``(ncomp, n, n, n//2 + 1)`` and holds c(k) in

    phi(x) = sum_k c(k) exp(i k.x),      k = (2 pi / L) m,  m in Z^3,

so ``coeffs = rfftn(samples) / n**3``. The last axis carries m_z >= 0 only;
the missing half is c(-k) = conj(c(k)). The planes m_z = 0 and m_z = n/2 are
self-conjugate and are the only place a Hermitian violation can live.

Nyquist modes (any |m_i| = n/2) carry data so that transforms round-trip, but
they lie outside the dealiased (retained) set: first derivatives annihilate
them and every dynamical operator masks them away.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "SpectralField",
    "HermitianSymmetryError",
    "set_fft_workers",
    "to_spectral",
    "to_physical",
    "gradient",
    "divergence",
    "laplacian",
    "leray_project",
    "helmholtz_filter",
    "helmholtz_operator",
    "fractional_laplacian",
    "fractional_smoothing",
    "dealias",
    "random_divfree_field",
    "random_scalar_field",
    "inner",
    "norm_l2",
    "norm_grad",
    "write_snapshot",
    "read_snapshot",
]

STRUCT_TOL = 1e-12

_fft_workers = 1


def set_fft_workers(n: int) -> None:
    global _fft_workers
    _fft_workers = max(1, int(n))


class HermitianSymmetryError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    n: int
    L: float = 2 * np.pi
    dealias_fraction: Fraction = Fraction(2, 3)

    def __post_init__(self):
        object.__setattr__(self, "dealias_fraction", Fraction(self.dealias_fraction))
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 8, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "L", float(self.L))
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")
        if self.max_retained_index < 1:
            raise ValueError("dealiasing leaves fewer than 2 retained modes per axis")

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.L

    @property
    def lambda1(self) -> float:
        """Smallest eigenvalue of the Stokes operator, (2 pi / L)^2."""
        return self.k0**2

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def volume(self) -> float:
        return self.L**3

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def physical_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def max_retained_index(self) -> int:
        # largest |m| with |m| <= fraction * n / 2
        f = self.dealias_fraction
        return (f.numerator * self.n) // (2 * f.denominator)

    @cached_property
    def m_full(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, 1.0 / self.n).round().astype(np.int64)

    @cached_property
    def m_half(self) -> np.ndarray:
        return np.arange(self.n // 2 + 1, dtype=np.int64)

    def _deriv(self, m):
        k = self.k0 * m.astype(float)
        k[np.abs(m) == self.n // 2] = 0.0
        return k

    @cached_property
    def kx(self) -> np.ndarray:
        """Derivative wavenumbers along x (Nyquist zeroed)."""
        return self._deriv(self.m_full)

    @cached_property
    def ky(self) -> np.ndarray:
        return self._deriv(self.m_full)

    @cached_property
    def kz(self) -> np.ndarray:
        return self._deriv(self.m_half)

    @cached_property
    def kvec(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.kx[:, None, None], self.ky[None, :, None], self.kz[None, None, :])

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2, the symbol of -Laplacian (Nyquist included)."""
        mx = self.m_full[:, None, None]
        my = self.m_full[None, :, None]
        mz = self.m_half[None, None, :]
        return self.k0**2 * (mx**2 + my**2 + mz**2).astype(float)

    @cached_property
    def kd2(self) -> np.ndarray:
        kx, ky, kz = self.kvec
        return kx**2 + ky**2 + kz**2

    @cached_property
    def inv_kd2(self) -> np.ndarray:
        kd2 = self.kd2
        out = np.zeros_like(kd2)
        np.divide(1.0, kd2, out=out, where=kd2 > 0)
        return np.ascontiguousarray(out)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True on retained modes (all |m_i| within the dealias fraction)."""
        M = self.max_retained_index
        mx = np.abs(self.m_full[:, None, None]) <= M
        my = np.abs(self.m_full[None, :, None]) <= M
        mz = self.m_half[None, None, :] <= M
        return mx & my & mz

    @cached_property
    def retained_mask(self) -> np.ndarray:
        """Dealias mask with the mean mode removed, as float for kernels."""
        m = self.dealias_mask.astype(float)
        m[0, 0, 0] = 0.0
        return np.ascontiguousarray(m)

    @cached_property
    def mode_weight(self) -> np.ndarray:
        """Multiplicity of each stored half-spectrum mode in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, x, indexing="ij")

    # raw transforms on arrays of shape (..., n, n, n)

    def fwd(self, samples: np.ndarray) -> np.ndarray:
        c = sfft.rfftn(samples, axes=(-3, -2, -1), norm="forward", workers=_fft_workers)
        # make the self-conjugate planes exactly Hermitian; every symbol
        # operator then preserves it bit for bit
        neg = self._neg
        for iz in (0, self.n // 2):
            p = c[..., iz]
            c[..., iz] = 0.5 * (p + np.conj(p[..., neg, :][..., neg]))
        return c

    @cached_property
    def _neg(self):
        return (-np.arange(self.n)) % self.n

    def inv(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.irfftn(
            coeffs, s=self.physical_shape, axes=(-3, -2, -1), norm="forward", workers=_fft_workers
        )


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable Fourier-coefficient field. The mean mode is always zero.

    The constructor takes ownership of ``coeffs``: it is zeroed at k = 0 and
    made read-only.
    """

    grid: Grid
    coeffs: np.ndarray
    solenoidal: bool = field(default=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim == 3:
            c = c[None]
        if c.shape[1:] != self.grid.spectral_shape or c.shape[0] not in (1, 3):
            raise ValueError(
                f"coefficient shape {c.shape} does not match grid {self.grid.spectral_shape}"
            )
        if c.dtype != np.complex128 or not c.flags.writeable or not c.flags.c_contiguous:
            c = np.array(c, dtype=np.complex128, order="C")
        c[:, 0, 0, 0] = 0.0
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 3) -> SpectralField:
        return cls(grid, np.zeros((ncomp,) + grid.spectral_shape, complex), solenoidal=ncomp == 3)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_vector(self) -> bool:
        return self.ncomp == 3

    def component(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[i : i + 1].copy())

    def replace(self, coeffs: np.ndarray, solenoidal: bool | None = None) -> SpectralField:
        return SpectralField(self.grid, coeffs, self.solenoidal if solenoidal is None else solenoidal)

    def _check(self, other):
        if other.grid != self.grid or other.ncomp != self.ncomp:
            raise ValueError("fields live on different grids or have different rank")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs, self.solenoidal and other.solenoidal)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs, self.solenoidal and other.solenoidal)

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs, self.solenoidal)

    def __mul__(self, a):
        if not np.isscalar(a) or np.iscomplexobj(a):
            return NotImplemented
        return SpectralField(self.grid, self.coeffs * float(a), self.solenoidal)

    __rmul__ = __mul__

    def divergence_residual(self) -> float:
        """max |k.c(k)| relative to max |k| |c(k)|; 0 for the zero field."""
        kx, ky, kz = self.grid.kvec
        c = self.coeffs
        div = np.abs(kx * c[0] + ky * c[1] + kz * c[2]).max()
        scale = (np.sqrt(self.grid.kd2) * np.sqrt((np.abs(c) ** 2).sum(0))).max()
        return 0.0 if scale == 0 else float(div / scale)


def _as_vector_shape(grid, samples):
    a = np.asarray(samples, dtype=float)
    if a.shape == grid.physical_shape:
        return a[None]
    if a.ndim == 4 and a.shape[1:] == grid.physical_shape and a.shape[0] in (1, 3):
        return a
    raise ValueError(f"samples of shape {a.shape} do not match an n^3 = {grid.n}^3 grid")


def to_spectral(grid: Grid, samples: np.ndarray) -> SpectralField:
    """Forward transform of real samples; shape (n, n, n) or (3, n, n, n)."""
    a = _as_vector_shape(grid, samples)
    return SpectralField(grid, grid.fwd(a))


def _hermitian_defect(grid, c):
    neg = (-np.arange(grid.n)) % grid.n
    worst = 0.0
    for iz in {0, grid.n // 2}:
        plane = c[:, :, :, iz]
        mirror = np.conj(plane[:, neg][:, :, neg])
        worst = max(worst, float(np.abs(plane - mirror).max()))
    return worst


def to_physical(f: SpectralField) -> np.ndarray:
    """Inverse transform. Returns (n, n, n) for scalars, (3, n, n, n) for vectors."""
    c = f.coeffs
    scale = float(np.abs(c).max()) if c.size else 0.0
    if scale > 0:
        defect = _hermitian_defect(f.grid, c)
        if defect > STRUCT_TOL * scale:
            raise HermitianSymmetryError(
                f"coefficients violate c(-k) = conj(c(k)) by {defect:.3e} (relative {defect / scale:.3e})"
            )
    out = f.grid.inv(c)
    return out[0] if f.ncomp == 1 else out


def gradient(f: SpectralField) -> SpectralField:
    if f.ncomp != 1:
        raise ValueError("gradient expects a scalar field")
    kx, ky, kz = f.grid.kvec
    c = f.coeffs[0]
    return SpectralField(f.grid, np.stack([1j * kx * c, 1j * ky * c, 1j * kz * c]))


def divergence(u: SpectralField) -> SpectralField:
    if u.ncomp != 3:
        raise ValueError("divergence expects a vector field")
    kx, ky, kz = u.grid.kvec
    c = u.coeffs
    return SpectralField(u.grid, (1j * (kx * c[0] + ky * c[1] + kz * c[2]))[None])


def laplacian(f: SpectralField) -> SpectralField:
    return f.replace(-f.grid.k2 * f.coeffs)


def leray_project(u: SpectralField) -> SpectralField:
    """Per mode c -> c - k (k.c) / |k|^2."""
    if u.ncomp != 3:
        raise ValueError("leray_project expects a vector field")
    kx, ky, kz = u.grid.kvec
    c = u.coeffs
    s = (kx * c[0] + ky * c[1] + kz * c[2]) * u.grid.inv_kd2
    out = np.stack([c[0] - kx * s, c[1] - ky * s, c[2] - kz * s])
    return SpectralField(u.grid, out, solenoidal=True)


def helmholtz_filter(v: SpectralField, alpha: float) -> SpectralField:
    """Solve u - alpha^2 Lap u = v: c(k) -> c(k) / (1 + alpha^2 |k|^2)."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if alpha == 0:
        return v
    return v.replace(v.coeffs / (1.0 + alpha**2 * v.grid.k2))


def helmholtz_operator(u: SpectralField, alpha: float) -> SpectralField:
    """u - alpha^2 Lap u."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return u.replace(u.coeffs * (1.0 + alpha**2 * u.grid.k2))


def fractional_laplacian(f: SpectralField, theta: float) -> SpectralField:
    """(-Lap)^theta: c(k) -> |k|^(2 theta) c(k)."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    return f.replace(f.coeffs * fractional_symbol(f.grid.k2, theta))


def fractional_symbol(k2: np.ndarray, theta: float) -> np.ndarray:
    if theta == 0:
        return np.ones_like(k2)
    if theta == 1:
        return k2.copy()
    return k2**theta


def smoothing_symbol(k2: np.ndarray, alpha: float, theta: float = 1.0) -> np.ndarray:
    """Symbol of [I + (-alpha^2 Lap)^theta]^{-1}."""
    return 1.0 / (1.0 + fractional_symbol(alpha**2 * k2, theta))


def fractional_smoothing(f: SpectralField, alpha: float, theta: float) -> SpectralField:
    if alpha < 0 or theta < 0:
        raise ValueError("alpha and theta must be >= 0")
    return f.replace(f.coeffs * smoothing_symbol(f.grid.k2, alpha, theta))


def dealias(f: SpectralField) -> SpectralField:
    return f.replace(f.coeffs * f.grid.dealias_mask)


def _band(grid, max_shell):
    if max_shell < 1:
        raise ValueError("max_wavenumber_shells must be >= 1")
    if max_shell > grid.max_retained_index:
        raise ValueError(
            f"{max_shell} shells exceed the retained truncation |m| <= {grid.max_retained_index}"
        )
    m = grid.kmag / grid.k0
    return grid.dealias_mask & (m <= max_shell + 0.5)


def random_divfree_field(grid: Grid, energy: float, max_wavenumber_shells: int, seed) -> SpectralField:
    """Random solenoidal field with ||u||^2 = energy, supported in |m| < shells + 1/2."""
    if not energy > 0:
        raise ValueError("energy must be positive")
    band = _band(grid, max_wavenumber_shells)
    rng = np.random.default_rng(seed)
    c = grid.fwd(rng.standard_normal((3,) + grid.physical_shape)) * band
    u = leray_project(SpectralField(grid, c))
    e = norm_l2(u) ** 2
    if e == 0:
        raise ValueError("band contains no solenoidal modes")
    return SpectralField(grid, u.coeffs * np.sqrt(energy / e), solenoidal=True)


def random_scalar_field(grid: Grid, max_wavenumber_shells: int, seed, slope: float = 0.0) -> SpectralField:
    """Random mean-zero scalar of unit L2 norm with amplitude ~ |k|^-slope."""
    band = _band(grid, max_wavenumber_shells)
    rng = np.random.default_rng(seed)
    band = band & (grid.k2 > 0)
    amp = np.zeros_like(grid.k2)
    amp[band] = grid.k2[band] ** (-slope / 2) if slope else 1.0
    c = grid.fwd(rng.standard_normal(grid.physical_shape))[None] * amp
    f = SpectralField(grid, c)
    return f * (1.0 / norm_l2(f))


def inner(f: SpectralField, g: SpectralField) -> float:
    """L2 inner product over the box, via Parseval on the half spectrum."""
    f._check(g)
    w = f.grid.mode_weight
    return float(f.grid.volume * np.sum(w * (f.coeffs * np.conj(g.coeffs)).real))


def norm_l2(f: SpectralField) -> float:
    w = f.grid.mode_weight
    return float(np.sqrt(f.grid.volume * np.sum(w * np.abs(f.coeffs) ** 2)))


def norm_grad(f: SpectralField) -> float:
    """||grad f|| = ||A^(1/2) f||, using the Laplacian symbol |k|^2."""
    w = f.grid.mode_weight
    return float(np.sqrt(f.grid.volume * np.sum(w * f.grid.k2 * np.abs(f.coeffs) ** 2)))


# binary snapshots -----------------------------------------------------------

SNAPSHOT_MAGIC = b"ADAS"
SNAPSHOT_VERSION = 1
HEADER_SIZE = 64
LAYOUT_PHYSICAL_XFAST = 1
_HEADER = struct.Struct("<4sIIdII")


def write_snapshot(path, f: SpectralField) -> None:
    """64-byte header then little-endian f64 physical samples, x fastest, per component."""
    g = f.grid
    samples = _as_vector_shape(g, to_physical(f))
    head = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.n, g.L, samples.shape[0], LAYOUT_PHYSICAL_XFAST)
    with open(path, "wb") as fh:
        fh.write(head.ljust(HEADER_SIZE, b"\0"))
        for comp in samples:
            fh.write(np.ravel(comp, order="F").astype("<f8").tobytes())


def read_snapshot_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, L, ncomp, layout = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if layout != LAYOUT_PHYSICAL_XFAST:
        raise ValueError(f"{path}: unknown layout tag {layout}")
    return {"version": version, "n": n, "L": L, "ncomp": ncomp, "layout": layout}


def read_snapshot(path, grid: Grid | None = None) -> SpectralField:
    head = read_snapshot_header(path)
    n, ncomp = head["n"], head["ncomp"]
    if grid is None:
        grid = Grid(n, head["L"])
    elif grid.n != n or not np.isclose(grid.L, head["L"], rtol=1e-15, atol=0):
        raise ValueError(f"{path}: snapshot grid (n={n}, L={head['L']}) differs from {grid}")
    data = np.frombuffer(Path(path).read_bytes()[HEADER_SIZE:], dtype="<f8")
    if data.size != ncomp * n**3:
        raise ValueError(f"{path}: expected {ncomp * n**3} samples, found {data.size}")
    comps = [data[i * n**3 : (i + 1) * n**3].reshape((n, n, n), order="F") for i in range(ncomp)]
    return to_spectral(grid, np.stack(comps))
