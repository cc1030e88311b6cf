"""Initial-condition generators and the analytic oracles the tests verify against.

Scenario kinds
--------------
- ``plane_shear_wave``     right-travelling transverse wave: v = A p cos(k.x),
                           E = -mu c |k| A p sin(k.x)
- ``standing_shear_wave``  v = A p sin(k.x), E = 0
- ``gaussian_vortex``      velocity from the curl of a Gaussian streamfunction
- ``random_solenoidal``    seeded band-limited noise (|m_i| <= n_i/6), velocity
                           Leray-projected; E is band-limited noise with a
                           generally nonzero divergence so the metacharge laws
                           have content
- ``compression_pulse``    longitudinal displacement u = A sin(k.x) khat, v = 0
- ``uniform_E_decay``      longitudinal stress E = A sin(k.x) khat with v = 0;
                           E is a pure gradient, so the projection keeps v = 0
                           and E decays at exactly exp(-kappa t)

Every generated state carries all optional fields (p = 0, mu_field = mu,
u = 0 unless the scenario defines it), so any governing system can consume it.

Oracles
-------
Eliminating the stress vector for solenoidal plane waves turns the coupled
first-order system into the telegraph equation

    mu v_tt + kappa mu v_t = eta lap v,

whose plane-wave roots solve mu w^2 + i kappa mu w - eta k^2 = 0, i.e.
w = -i kappa/2 +/- sqrt(c^2 k^2 - kappa^2 / 4).  The roots returned by
`dispersion_shear` are verified against an independent polynomial root finder
in the test suite before being used as expected values anywhere.
"""

from __future__ import annotations

import cmath
import csv
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .diffops import curl, grad, leray_project
from .dynamics import (
    FluidState,
    MediumParams,
    StepControl,
    integrate,
)
from .fields import (
    GridSpec,
    ScalarField,
    VectorField,
    fftn_array,
    ifftn_array,
    norm_l2,
    norm_linf,
    _mode_indices,
)

__all__ = [
    "ScenarioError",
    "FitError",
    "ScenarioSpec",
    "SCENARIO_KINDS",
    "generate",
    "ShearDispersion",
    "dispersion_shear",
    "dispersion_compressional",
    "WaveMeasurement",
    "measure_wave",
    "trim_uniform",
    "DeltaSweepRow",
    "DeltaSweepResult",
    "delta_sweep",
    "write_delta_sweep_csv",
]

SCENARIO_KINDS = (
    "plane_shear_wave",
    "standing_shear_wave",
    "gaussian_vortex",
    "random_solenoidal",
    "compression_pulse",
    "uniform_E_decay",
)

_SHEAR_KINDS = frozenset({"plane_shear_wave", "standing_shear_wave"})
_WAVE_KINDS = _SHEAR_KINDS | {"compression_pulse", "uniform_E_decay"}
RANDOM_BAND_FRACTION = 1.0 / 6.0


class ScenarioError(ValueError):
    """Invalid scenario specification."""


class FitError(RuntimeError):
    """Wave measurement could not be performed."""


@dataclass(frozen=True)
class ScenarioSpec:
    """Descriptor of an initial condition.

    polarization is required for the shear kinds and must be orthogonal to
    the wavevector; it is normalized on construction.  seed only matters for
    the random kinds; width (box-relative) only for the Gaussian vortex.
    """

    kind: str
    amplitude: float
    wavevector: tuple[int, int, int] = (1, 0, 0)
    polarization: tuple[float, float, float] | None = None
    seed: int = 0
    width: float = 0.125

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        if not np.isfinite(self.amplitude):
            raise ScenarioError("amplitude must be finite")
        wv = tuple(int(m) for m in self.wavevector)
        if len(wv) != 3:
            raise ScenarioError("wavevector must be an integer triple")
        if self.kind in _WAVE_KINDS and wv == (0, 0, 0):
            raise ScenarioError(f"{self.kind} needs a nonzero wavevector")
        object.__setattr__(self, "wavevector", wv)
        if self.kind in _SHEAR_KINDS:
            if self.polarization is None:
                raise ScenarioError(f"{self.kind} needs a polarization vector")
            pol = np.asarray(self.polarization, dtype=float)
            if pol.shape != (3,) or not np.isfinite(pol).all():
                raise ScenarioError("polarization must be a finite real triple")
            norm = float(np.linalg.norm(pol))
            if norm == 0.0:
                raise ScenarioError("polarization must be nonzero")
            pol = pol / norm
            object.__setattr__(self, "polarization", tuple(float(p) for p in pol))
        if not (0.0 < self.width < 0.5):
            raise ScenarioError("width must lie in (0, 1/2) (box-relative)")


def _physical_wavevector(spec: ScenarioSpec, grid: GridSpec) -> np.ndarray:
    return np.array([
        2.0 * np.pi * m / L for m, L in zip(spec.wavevector, grid.lengths)
    ])


def _check_orthogonal(spec: ScenarioSpec, grid: GridSpec) -> np.ndarray:
    k = _physical_wavevector(spec, grid)
    pol = np.asarray(spec.polarization)
    if abs(float(k @ pol)) > 1e-12 * np.linalg.norm(k):
        raise ScenarioError(
            f"polarization {spec.polarization} is not orthogonal to the "
            f"wavevector {spec.wavevector} on this box"
        )
    return k


def _phase_array(grid: GridSpec, k: np.ndarray) -> np.ndarray:
    x, y, z = grid.coordinates()
    return k[0] * x + k[1] * y + k[2] * z


def _directional_wave(grid: GridSpec, k: np.ndarray, direction: np.ndarray,
                      profile) -> VectorField:
    shape = grid.shape
    wave = profile(_phase_array(grid, k))
    return VectorField.from_arrays(grid, tuple(
        np.broadcast_to(d * wave, shape) for d in direction
    ))


def _band_limited_noise(grid: GridSpec, rng: np.random.Generator,
                        fraction: float = RANDOM_BAND_FRACTION) -> np.ndarray:
    mask = np.ones(grid.shape, dtype=bool)
    for m, n, active in zip(_mode_indices(grid), grid.dims, grid.active):
        if active:
            mask = mask & (np.abs(m) <= n * fraction)
    coeffs = fftn_array(grid, rng.standard_normal(grid.shape)) * mask
    coeffs[0, 0, 0] = 0.0
    return ifftn_array(grid, coeffs)


def _scaled_to_peak(field: VectorField, amplitude: float) -> VectorField:
    peak = norm_linf(field)
    if peak == 0.0:
        return field
    return field * (amplitude / peak)


def generate(spec: ScenarioSpec, grid: GridSpec, params: MediumParams) -> FluidState:
    """Initial state for a scenario; solenoidal v for the incompressible kinds."""
    zeros_v = VectorField.zeros(grid)
    v, E, u = zeros_v, zeros_v, zeros_v

    if spec.kind == "plane_shear_wave":
        k = _check_orthogonal(spec, grid)
        pol = np.asarray(spec.polarization)
        kmag = float(np.linalg.norm(k))
        v = _directional_wave(grid, k, spec.amplitude * pol, np.cos)
        E = _directional_wave(
            grid, k, -params.mu * params.c * kmag * spec.amplitude * pol, np.sin
        )
    elif spec.kind == "standing_shear_wave":
        k = _check_orthogonal(spec, grid)
        pol = np.asarray(spec.polarization)
        v = _directional_wave(grid, k, spec.amplitude * pol, np.sin)
    elif spec.kind == "gaussian_vortex":
        x, y, _ = grid.coordinates()
        lx, ly = grid.lengths[0], grid.lengths[1]
        w = spec.width * min(lx, ly)
        bump = np.exp(-((x - lx / 2) ** 2 + (y - ly / 2) ** 2) / (2.0 * w * w))
        psi = ScalarField(grid, np.broadcast_to(bump, grid.shape))
        stream = VectorField(grid, (ScalarField.zeros(grid),
                                    ScalarField.zeros(grid), psi))
        v = _scaled_to_peak(curl(stream), spec.amplitude)
    elif spec.kind == "random_solenoidal":
        rng = np.random.default_rng(spec.seed)
        raw = VectorField.from_arrays(grid, tuple(
            _band_limited_noise(grid, rng) for _ in range(3)
        ))
        v = _scaled_to_peak(leray_project(raw).solenoidal, spec.amplitude)
        E = _scaled_to_peak(
            VectorField.from_arrays(grid, tuple(
                _band_limited_noise(grid, rng) for _ in range(3)
            )),
            spec.amplitude,
        )
    elif spec.kind == "compression_pulse":
        k = _physical_wavevector(spec, grid)
        khat = k / np.linalg.norm(k)
        u = _directional_wave(grid, k, spec.amplitude * khat, np.sin)
    elif spec.kind == "uniform_E_decay":
        k = _physical_wavevector(spec, grid)
        khat = k / np.linalg.norm(k)
        E = _directional_wave(grid, k, spec.amplitude * khat, np.sin)

    return FluidState(
        time=0.0,
        v=v,
        E=E,
        p=ScalarField.zeros(grid),
        mu_field=ScalarField.full(grid, params.mu),
        u=u,
    )


# ---------------------------------------------------------------------------
# dispersion oracles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShearDispersion:
    """Roots of mu w^2 + i kappa mu w - eta k^2 = 0 (time convention e^{-iwt})."""

    omega_plus: complex
    omega_minus: complex
    regime: str  # underdamped | critical | overdamped

    @property
    def frequency(self) -> float:
        """Oscillation frequency |Re w| of the upper root."""
        return abs(self.omega_plus.real)

    @property
    def decay_rate(self) -> float:
        """Attenuation -Im w of the upper root (kappa/2 when underdamped)."""
        return -self.omega_plus.imag


def dispersion_shear(k_mag: float, params: MediumParams) -> ShearDispersion:
    """Telegraph-equation roots for a solenoidal shear mode of magnitude k."""
    if not k_mag > 0:
        raise ValueError(f"k_mag must be positive, got {k_mag}")
    half_kappa = params.kappa / 2.0
    discriminant = (params.c * k_mag) ** 2 - half_kappa ** 2
    if discriminant > 0.0:
        root = math.sqrt(discriminant)
        return ShearDispersion(
            omega_plus=complex(root, -half_kappa),
            omega_minus=complex(-root, -half_kappa),
            regime="underdamped",
        )
    if discriminant == 0.0:
        w = complex(0.0, -half_kappa)
        return ShearDispersion(w, w, "critical")
    s = math.sqrt(-discriminant)
    return ShearDispersion(
        omega_plus=complex(0.0, -(half_kappa - s)),
        omega_minus=complex(0.0, -(half_kappa + s)),
        regime="overdamped",
    )


def dispersion_compressional(k_mag: float, params: MediumParams) -> tuple[float, float]:
    """Compressional plane-wave frequencies +/- c_s k of the linear solid branch."""
    if not k_mag > 0:
        raise ValueError(f"k_mag must be positive, got {k_mag}")
    w = params.c_s * k_mag
    return (w, -w)


# ---------------------------------------------------------------------------
# wave measurement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveMeasurement:
    """Damped-oscillation fit of a single spectral mode's time series.

    valid is False when the fit residual exceeds 1% of the signal peak;
    degenerate is True when less than a quarter oscillation was observed
    (the frequency estimate is then meaningless, the decay rate may still
    be useful).
    """

    omega: float
    phase_speed: float
    decay_rate: float
    fit_residual: float
    valid: bool
    degenerate: bool


def trim_uniform(times, values):
    """Longest uniformly sampled prefix (drops a shortened final sample)."""
    t = np.asarray(times, dtype=float)
    s = np.asarray(values)
    if len(t) < 2:
        return t, s
    dt = t[1] - t[0]
    n = len(t)
    for i in range(2, len(t)):
        if abs((t[i] - t[i - 1]) - dt) > 1e-9 * max(abs(dt), 1.0):
            n = i
            break
    return t[:n], s[:n]


def _fit_amplitudes(basis: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, float]:
    coef, *_ = np.linalg.lstsq(basis, s, rcond=None)
    residual = s - basis @ coef
    return coef, float(np.sqrt(np.mean(np.abs(residual) ** 2)))


def measure_wave(times, values, k_mag: float = 1.0) -> WaveMeasurement:
    """Fit A e^{-gamma t} cos(w t + phi) to a spectral-mode series.

    Uniform sampling is required (use `trim_uniform` when the final step of a
    run was shortened); recommended input is at least 32 samples spanning two
    oscillation periods.  The fit is linear-prediction based (order 1 for a
    rotating mode, order 2 for a standing one), so it is deterministic; a
    singular fit raises FitError instead of silently returning defaults.
    """
    t = np.asarray(times, dtype=float)
    s = np.asarray(values, dtype=complex)
    if t.shape != s.shape or t.ndim != 1:
        raise FitError("times and values must be 1-D arrays of equal length")
    if len(t) < 8:
        raise FitError(f"need at least 8 samples, got {len(t)}")
    dt = t[1] - t[0]
    if dt <= 0 or np.max(np.abs(np.diff(t) - dt)) > 1e-9 * max(abs(dt), 1.0):
        raise FitError("series must be uniformly sampled in time")

    span = t[-1] - t[0]
    scale = float(np.max(np.abs(s)))
    if scale == 0.0:
        return WaveMeasurement(0.0, 0.0, 0.0, 0.0, True, True)
    if float(np.max(np.abs(s - s.mean()))) < 1e-13 * scale:
        # constant series: frequency unidentifiable
        return WaveMeasurement(0.0, 0.0, 0.0, 0.0, True, True)

    candidates = []
    try:
        # order 1: single rotating/decaying exponential s[n+1] = z s[n]
        denom = np.vdot(s[:-1], s[:-1])
        if abs(denom) > 0:
            z1 = complex(np.vdot(s[:-1], s[1:]) / denom)
            if abs(z1) > 0:
                basis = (z1 ** np.arange(len(s)))[:, None]
                _, res1 = _fit_amplitudes(basis, s)
                candidates.append((res1, z1))
        # order 2 with real coefficients: s[n+2] = a s[n+1] + b s[n]
        lhs = np.concatenate([s[2:].real, s[2:].imag])
        col1 = np.concatenate([s[1:-1].real, s[1:-1].imag])
        col2 = np.concatenate([s[:-2].real, s[:-2].imag])
        ab, *_ = np.linalg.lstsq(np.stack([col1, col2], axis=1), lhs, rcond=None)
        roots = np.roots([1.0, -ab[0], -ab[1]])
        finite = [complex(r) for r in roots if np.isfinite(r) and abs(r) > 0]
        if finite:
            # basis uses the roots exactly as found (a conjugate pair spans a
            # real damped cosine); only the reported root is normalized
            largest = max(abs(r) for r in finite)
            if len(finite) == 2 and abs(finite[0] - finite[1]) <= 1e-12 * largest:
                finite = finite[:1]
            n_idx = np.arange(len(s))
            basis = np.stack([r ** n_idx for r in finite], axis=1)
            _, res2 = _fit_amplitudes(basis, s)
            dominant = max(finite, key=lambda r: (abs(r), r.imag))
            if dominant.imag < 0:
                dominant = dominant.conjugate()
            candidates.append((res2, dominant))
    except np.linalg.LinAlgError as exc:
        raise FitError(f"linear-prediction fit failed: {exc}") from exc

    if not candidates:
        raise FitError("no usable linear-prediction model for this series")
    fit_residual, z = min(candidates, key=lambda c: c[0])
    if abs(z) <= 0.0:
        raise FitError("degenerate recurrence root")
    omega = abs(cmath.phase(z)) / dt
    gamma = -math.log(abs(z)) / dt
    degenerate = omega * span < math.pi / 2.0
    valid = fit_residual <= 0.01 * scale
    return WaveMeasurement(
        omega=omega,
        phase_speed=omega / k_mag,
        decay_rate=gamma,
        fit_residual=fit_residual,
        valid=valid,
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# compressibility sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaSweepRow:
    delta: float
    lam: float
    deviation_l2: float


@dataclass(frozen=True)
class DeltaSweepResult:
    """Deviation of the compressible solid branch from the incompressible run."""

    rows: tuple[DeltaSweepRow, ...]  # sorted by delta descending
    slope: float                     # log-log slope of deviation vs delta


def delta_sweep(params: MediumParams, lambda_values, scenario: ScenarioSpec,
                grid: GridSpec, t_end: float, cfl: float = 0.4) -> DeltaSweepResult:
    """Run the same solenoidal scenario incompressibly and at each lam value.

    deviation = |P(v_compressible(t_end)) - v_incompressible(t_end)|_2 relative
    to |v_incompressible(t_end)|_2, where P is the Leray projection: the
    acoustic (gradient) component of the compressible velocity rings at the
    fast compressional frequency with amplitude ~ sqrt(delta) and has no
    incompressible counterpart (it converges only weakly), so the comparison
    is made on the common solenoidal subspace where the convergence is
    first order in delta.  All runs, including the incompressible reference,
    share the time step dictated by the stiffest lam so that the
    time-integration error cancels in the difference.

    Rows are sorted by delta descending with a single log-log slope attached.
    """
    lambda_values = [float(lam) for lam in lambda_values]
    if not lambda_values:
        raise ValueError("lambda_values must be non-empty")
    state0 = generate(scenario, grid, params)
    stiffest = replace(params, lam=max(lambda_values))
    dt_common = cfl * grid.min_active_spacing() / (stiffest.c_s + norm_linf(state0.v))
    control = StepControl(t_end=t_end, dt=dt_common)
    reference = integrate(state0, params, control, "fi_incompressible")
    ref_norm = norm_l2(reference.v)
    if ref_norm == 0.0:
        raise ValueError("reference trajectory is identically zero")
    rows = []
    for lam in lambda_values:
        p = replace(params, lam=float(lam))
        state = generate(scenario, grid, p)
        final = integrate(state, p, control, "compressible_solid")
        shear_part = leray_project(final.v).solenoidal
        rows.append(DeltaSweepRow(
            delta=p.delta,
            lam=float(lam),
            deviation_l2=norm_l2(shear_part - reference.v) / ref_norm,
        ))
    rows.sort(key=lambda r: r.delta, reverse=True)
    slope = float(np.polyfit(
        np.log10([r.delta for r in rows]),
        np.log10([max(r.deviation_l2, 1e-300) for r in rows]),
        1,
    )[0]) if len(rows) >= 2 else float("nan")
    return DeltaSweepResult(rows=tuple(rows), slope=slope)


def write_delta_sweep_csv(result: DeltaSweepResult, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "lambda", "deviation_l2", "slope_estimate"])
        for r in result.rows:
            writer.writerow([repr(r.delta), repr(r.lam), repr(r.deviation_l2),
                             repr(result.slope)])
    os.replace(tmp, path)
