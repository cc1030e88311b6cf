"""Shared builders for test fields: seeded noise, band-limited fields, waves."""

import numpy as np

from metacont.fields import (
    GridSpec,
    ScalarField,
    TensorField,
    VectorField,
    fftn_array,
    ifftn_array,
    make_grid,
    _mode_indices,
)
from metacont.diffops import leray_project

GRID_64 = make_grid((64, 64, 1), (2 * np.pi, 2 * np.pi, 2 * np.pi))
GRID_32_3D = make_grid((32, 32, 32), (2 * np.pi, 2 * np.pi, 2 * np.pi))


def random_scalar_array(grid: GridSpec, rng) -> np.ndarray:
    return rng.standard_normal(grid.shape)


def band_limit_array(grid: GridSpec, values: np.ndarray, fraction: float) -> np.ndarray:
    """Keep only modes with |m_i| <= n_i * fraction in active dims; zero the mean."""
    mask = np.ones(grid.shape, dtype=bool)
    for m, n, active in zip(_mode_indices(grid), grid.dims, grid.active):
        if active:
            mask = mask & (np.abs(m) <= n * fraction)
    coeffs = fftn_array(grid, values) * mask
    coeffs[0, 0, 0] = 0.0
    return ifftn_array(grid, coeffs)


def band_limited_scalar(grid: GridSpec, seed: int, fraction: float = 0.25,
                        amplitude: float = 1.0) -> ScalarField:
    rng = np.random.default_rng(seed)
    arr = band_limit_array(grid, random_scalar_array(grid, rng), fraction)
    peak = np.max(np.abs(arr))
    if peak > 0:
        arr = arr * (amplitude / peak)
    return ScalarField(grid, arr)


def band_limited_vector(grid: GridSpec, seed: int, fraction: float = 0.25,
                        amplitude: float = 1.0, solenoidal: bool = False) -> VectorField:
    rng = np.random.default_rng(seed)
    arrs = [band_limit_array(grid, random_scalar_array(grid, rng), fraction)
            for _ in range(3)]
    v = VectorField.from_arrays(grid, tuple(arrs))
    if solenoidal:
        v = leray_project(v).solenoidal
    peak = max(np.max(np.abs(a)) for a in v.arrays())
    if peak > 0:
        v = v * (amplitude / peak)
    return v


def band_limited_tensor(grid: GridSpec, seed: int, fraction: float = 0.25,
                        amplitude: float = 1.0) -> TensorField:
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(3):
        row = []
        for _ in range(3):
            arr = band_limit_array(grid, random_scalar_array(grid, rng), fraction)
            peak = np.max(np.abs(arr))
            row.append(arr * (amplitude / peak) if peak > 0 else arr)
        rows.append(tuple(row))
    return TensorField.from_arrays(grid, tuple(rows))


def sine_scalar(grid: GridSpec, axis: int = 0, k: int = 1) -> ScalarField:
    """sin(k * 2*pi*x_axis / L_axis) sampled on the grid."""
    coords = grid.coordinates()
    phase = 2.0 * np.pi * k / grid.lengths[axis] * coords[axis]
    return ScalarField(grid, np.broadcast_to(np.sin(phase), grid.shape))


def cosine_scalar(grid: GridSpec, axis: int = 0, k: int = 1) -> ScalarField:
    coords = grid.coordinates()
    phase = 2.0 * np.pi * k / grid.lengths[axis] * coords[axis]
    return ScalarField(grid, np.broadcast_to(np.cos(phase), grid.shape))


def vector_of(grid: GridSpec, fx=None, fy=None, fz=None) -> VectorField:
    """Vector field from optional per-component scalar fields (None = zero)."""
    zero = np.zeros(grid.shape)
    arrs = [f.values if f is not None else zero for f in (fx, fy, fz)]
    return VectorField.from_arrays(grid, tuple(arrs))
