"""Governing systems and their time integration.

Systems
-------
- ``linear_navier``          linear compressible elastodynamics in (u, v):
      mu v_t = (lam + 2 eta) grad(div u) - eta curl(curl u),   u_t = v
- ``fi_incompressible``      frame-indifferent incompressible elastic fluid in (v, E):
      mu (v_t + v.grad v) = -grad p - E,       div v = 0,
      E_t + v.grad E - E.grad v + (div v) E + kappa E = eta curl(curl v)
  where E is the negative shear-stress vector.  The pressure is realized by
  the Leray projection of the momentum right-hand side, so div v = 0 holds
  discretely at every stage.
- ``second_order``           the stress-eliminated form in (v, v_t):
      mu v_tt + 2 mu (v.grad) v_t + (vv) grad grad v = -(pressure-gradient rate) + eta lap v
  with the pressure-gradient rate realized implicitly by projecting v_tt.
- ``compressible_liquid`` / ``compressible_solid``   slightly compressible
  extension in (v, E, mu_field[, u]); the dilational stress is
  (nu + 2 zeta) div v (liquid) or (lam + 2 eta) div u (solid), and the density
  obeys mu_t = -v.grad mu - mu div v.
- ``classical_maxwell``      reference linear evolution in (E, B):
      B_t = -curl E,   E_t = c^2 curl B.

Time stepping is a fixed four-stage explicit Runge-Kutta scheme; for the
incompressible systems the velocity is re-projected after each step so the
solenoidality invariant holds to round-off along the whole trajectory.
The systems are hyperbolic; kappa of order 1 adds mild attenuation, while
kappa*dt beyond the explicit stability range is rejected rather than treated
implicitly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .diffops import (
    advect_scalar,
    curl,
    curl_curl,
    div,
    divergence_tensor,
    double_advection,
    grad,
    grad_vector,
    laplacian,
    leray_project,
    vector_advection,
)
from .fields import (
    FieldError,
    ScalarField,
    TensorField,
    VectorField,
    dealias_field,
    norm_linf,
)

__all__ = [
    "MediumParams",
    "FluidState",
    "MaxwellState",
    "SecondOrderState",
    "StepControl",
    "SolenoidalityError",
    "DensityError",
    "StepSizeError",
    "IntegrationError",
    "NavierRates",
    "FiRates",
    "SecondOrderRates",
    "CompressibleRates",
    "MaxwellRates",
    "upper_convected_vector",
    "upper_convected_tensor",
    "oldroyd_discrepancy",
    "pressure_rate_conventions",
    "rhs_linear_navier",
    "rhs_fi_incompressible",
    "rhs_second_order",
    "rhs_compressible",
    "rhs_classical_maxwell",
    "step",
    "integrate",
    "auto_step_size",
    "SYSTEMS",
    "INCOMPRESSIBLE_SYSTEMS",
    "wave_speed_for_cfl",
]

# systems whose velocity must stay solenoidal, and systems whose fastest
# signal is compressional (CFL uses c_s instead of c)
SYSTEMS = (
    "linear_navier",
    "fi_incompressible",
    "second_order",
    "compressible_liquid",
    "compressible_solid",
    "classical_maxwell",
)
INCOMPRESSIBLE_SYSTEMS = frozenset({"fi_incompressible", "second_order"})
_COMPRESSIONAL_CFL = frozenset(
    {"linear_navier", "compressible_liquid", "compressible_solid"}
)

DIV_INPUT_TOL = 1e-9          # L-inf bound on div v accepted by the RHS
KAPPA_DT_LIMIT = 2.0          # explicit stability range for the attenuation term


class SolenoidalityError(ValueError):
    """Input velocity (or velocity rate) is not divergence-free."""


class DensityError(ValueError):
    """Density field lost positivity."""


class StepSizeError(ValueError):
    """Step control produced an unusable dt (e.g. kappa*dt too stiff)."""


class IntegrationError(RuntimeError):
    """A step failed; carries the last accepted state for diagnostics."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


# ---------------------------------------------------------------------------
# parameters and states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MediumParams:
    """Constitutive constants of the medium.

    mu     mass density
    eta    apparent shear modulus (eta = zeta / tau)
    lam    dilational Lame coefficient
    kappa  conductivity (linear attenuation of the stress vector)
    tau    stress relaxation time
    zeta   elastic viscosity; derived as eta * tau when omitted
    nu     dilational viscosity (liquid dilational branch)

    Derived: c = sqrt(eta/mu), c_s = sqrt((2 eta + lam)/mu),
    delta = eta / (2 eta + lam) = c^2 / c_s^2 in (0, 1/2].
    """

    mu: float = 1.0
    eta: float = 1.0
    lam: float = 0.0
    kappa: float = 0.0
    tau: float = 1.0
    zeta: float | None = None
    nu: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.nu < 0:
            raise ValueError(f"nu must be non-negative, got {self.nu}")
        if self.zeta is None:
            object.__setattr__(self, "zeta", self.eta * self.tau)
        else:
            if self.zeta < 0:
                raise ValueError(f"zeta must be non-negative, got {self.zeta}")
            if abs(self.eta - self.zeta / self.tau) > 1e-12 * max(self.eta, 1.0):
                raise ValueError(
                    f"inconsistent moduli: eta={self.eta} but zeta/tau="
                    f"{self.zeta / self.tau}"
                )

    @property
    def c(self) -> float:
        """Shear wave speed."""
        return float(np.sqrt(self.eta / self.mu))

    @property
    def c_s(self) -> float:
        """Compressional wave speed."""
        return float(np.sqrt((2.0 * self.eta + self.lam) / self.mu))

    @property
    def delta(self) -> float:
        """Shear-to-compressional modulus ratio, c^2/c_s^2."""
        return self.eta / (2.0 * self.eta + self.lam)


@dataclass(frozen=True)
class FluidState:
    """Evolving unknowns of the fluid systems.

    v is always present; E (negative shear-stress vector) and p (pressure from
    the projection) belong to the incompressible/compressible systems;
    mu_field and u belong to the compressible ones (u only on the solid
    dilational branch, where v = du/dt).
    """

    time: float
    v: VectorField
    E: VectorField | None = None
    p: ScalarField | None = None
    mu_field: ScalarField | None = None
    u: VectorField | None = None


@dataclass(frozen=True)
class MaxwellState:
    """State of the classical reference system."""

    time: float
    E: VectorField
    B: VectorField


@dataclass(frozen=True)
class SecondOrderState:
    """State of the stress-eliminated second-order system."""

    time: float
    v: VectorField
    v_t: VectorField
    p: ScalarField | None = None


@dataclass(frozen=True)
class StepControl:
    """Time-step control: fixed dt or 'auto' (cfl * h_min / (c_max + |v|_max))."""

    t_end: float
    dt: float | str = "auto"
    cfl: float = 0.4

    def __post_init__(self):
        if isinstance(self.dt, str):
            if self.dt != "auto":
                raise StepSizeError(f"dt must be positive or 'auto', got {self.dt!r}")
        elif not self.dt > 0:
            raise StepSizeError(f"dt must be positive, got {self.dt}")
        if not (0.0 < self.cfl <= 1.0):
            raise StepSizeError(f"cfl must be in (0, 1], got {self.cfl}")
        if not self.t_end > 0:
            raise StepSizeError(f"t_end must be positive, got {self.t_end}")


# ---------------------------------------------------------------------------
# Oldroyd (upper-convected) rates
# ---------------------------------------------------------------------------

def upper_convected_vector(E: VectorField, v: VectorField,
                           dE_partial: VectorField | None) -> VectorField:
    """Upper-convected rate of a vector density:
    dE_partial + v.grad E - E.grad v + (div v) E, products dealiased."""
    bracket = (
        vector_advection(v, E)
        - vector_advection(E, v)
        + dealias_field(E * div(v))
    )
    if dE_partial is None:
        return bracket
    return dE_partial + bracket


def upper_convected_tensor(sigma: TensorField, v: VectorField,
                           dsigma_partial: TensorField | None) -> TensorField:
    """Upper-convected rate of a rank-2 density:
    dsigma_partial + v.grad sigma - sigma grad v - (grad v)^T sigma + sigma div v,
    with (grad v)_ij = d_i v_j and all products dealiased."""
    g = sigma.grid
    gv = grad_vector(v)
    gva = [[gv.array(i, j) for j in range(3)] for i in range(3)]
    divv = gva[0][0] + gva[1][1] + gva[2][2]
    varr = v.arrays()

    from .fields import angular_wavenumbers, dealias_array, fftn_array, ifftn_array

    ks = angular_wavenumbers(g)
    rows = []
    for i in range(3):
        row = []
        for j in range(3):
            s_ij = sigma.array(i, j)
            s_hat = fftn_array(g, s_ij)
            conv = np.zeros(g.shape)
            for k in range(3):
                conv = conv + varr[k] * ifftn_array(g, (1j * ks[k]) * s_hat)
            lower = sum(sigma.array(i, k) * gva[k][j] for k in range(3))
            upper = sum(gva[k][i] * sigma.array(k, j) for k in range(3))
            bracket = conv - lower - upper + s_ij * divv
            row.append(dealias_array(g, bracket))
        rows.append(tuple(row))
    out = TensorField.from_arrays(g, tuple(rows))
    if dsigma_partial is None:
        return out
    return dsigma_partial + out


def oldroyd_discrepancy(sigma: TensorField, v: VectorField) -> VectorField:
    """div(tensor rate) - vector rate of (div sigma), both with zero partials.

    Contract: equals -hessian_contract(v, sigma) up to dealiasing, i.e. the
    tensor and vector upper-convected rates differ exactly by the contraction
    of the velocity Hessian with sigma.
    """
    tensor_rate = upper_convected_tensor(sigma, v, None)
    stress_vector = divergence_tensor(sigma)
    vector_rate = upper_convected_vector(stress_vector, v, None)
    return divergence_tensor(tensor_rate) - vector_rate


def pressure_rate_conventions(grad_p_rate_partial: VectorField,
                              grad_p: VectorField,
                              v: VectorField) -> dict[str, VectorField]:
    """Both sign conventions of the convected pressure-gradient rate.

    The stress-eliminated system realizes its pressure-gradient rate
    implicitly through the projection, which makes the sign choice moot for
    the trajectory; this helper evaluates the explicit expressions so both
    conventions can be recorded for diagnostics:

    - 'convected':  d(grad p)/dt + v.grad(grad p) + (grad p).grad v
    - 'negated':   -d(grad p)/dt - v.grad(grad p) - (grad p).grad v
    """
    expr = (
        grad_p_rate_partial
        + vector_advection(v, grad_p)
        + vector_advection(grad_p, v)
    )
    return {"convected": expr, "negated": -expr}


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NavierRates:
    du: VectorField
    dv: VectorField


@dataclass(frozen=True)
class FiRates:
    dv: VectorField
    dE: VectorField
    pressure: ScalarField


@dataclass(frozen=True)
class SecondOrderRates:
    dv: VectorField
    dv_t: VectorField
    pressure_gradient_rate: VectorField


@dataclass(frozen=True)
class CompressibleRates:
    dv: VectorField
    dE: VectorField
    dmu: ScalarField
    du: VectorField | None


@dataclass(frozen=True)
class MaxwellRates:
    dE: VectorField
    dB: VectorField


def rhs_linear_navier(state: FluidState, params: MediumParams) -> NavierRates:
    """Linear compressible elastodynamics:
    mu v_t = (lam + 2 eta) grad(div u) - eta curl(curl u), u_t = v."""
    if state.u is None:
        raise ValueError("linear_navier needs a displacement field u")
    u, v = state.u, state.v
    dv = (grad(div(u)) * (params.lam + 2.0 * params.eta)
          - curl_curl(u) * params.eta) * (1.0 / params.mu)
    return NavierRates(du=v, dv=dv)


def rhs_fi_incompressible(state: FluidState, params: MediumParams) -> FiRates:
    """Frame-indifferent incompressible elastic fluid.

    v_t is the Leray projection of -(v.grad)v - E/mu; the removed gradient
    defines the pressure (it absorbs the Bernoulli head as well).  The stress
    vector evolves by
        E_t = eta curl(curl v) - v.grad E + E.grad v - (div v) E - kappa E,
    with the (div v) E term retained even though div v = 0 analytically, so
    that the derived-law residuals close discretely.

    This is the hot path of every incompressible run, so the forward
    transforms of v and E are shared between the terms; each dealiased
    quantity equals the composed diffops evaluation up to rounding.
    """
    if state.E is None:
        raise ValueError("fi_incompressible needs the stress vector E")
    v, E = state.v, state.E
    g = v.grid

    from .fields import angular_wavenumbers, dealias_array, fftn_array, ifftn_array

    ks = angular_wavenumbers(g)
    va, ea = v.arrays(), E.arrays()
    vh = [fftn_array(g, a) for a in va]
    eh = [fftn_array(g, a) for a in ea]

    # gradient tensors d_i v_j and d_i E_j from the shared transforms
    dv = [[ifftn_array(g, (1j * ks[i]) * vh[j]) for j in range(3)] for i in range(3)]
    de = [[ifftn_array(g, (1j * ks[i]) * eh[j]) for j in range(3)] for i in range(3)]
    divv = dv[0][0] + dv[1][1] + dv[2][2]
    divv_linf = float(np.max(np.abs(divv)))
    if divv_linf > DIV_INPUT_TOL:
        raise SolenoidalityError(
            f"div v = {divv_linf:.3e} exceeds {DIV_INPUT_TOL:.0e} on input"
        )

    # momentum: Leray projection of -(v.grad)v - E/mu
    advection = [
        dealias_array(g, va[0] * dv[0][j] + va[1] * dv[1][j] + va[2] * dv[2][j])
        for j in range(3)
    ]
    raw = [-advection[j] - ea[j] / params.mu for j in range(3)]
    projected = leray_project(VectorField.from_arrays(g, tuple(raw)))

    # stress vector: eta curl(curl v) - [v.grad E - E.grad v + (div v) E] - kappa E
    inner = [
        ifftn_array(g, 1j * (ks[1] * vh[2] - ks[2] * vh[1])),
        ifftn_array(g, 1j * (ks[2] * vh[0] - ks[0] * vh[2])),
        ifftn_array(g, 1j * (ks[0] * vh[1] - ks[1] * vh[0])),
    ]
    ih = [fftn_array(g, a) for a in inner]
    curl2 = [
        ifftn_array(g, 1j * (ks[1] * ih[2] - ks[2] * ih[1])),
        ifftn_array(g, 1j * (ks[2] * ih[0] - ks[0] * ih[2])),
        ifftn_array(g, 1j * (ks[0] * ih[1] - ks[1] * ih[0])),
    ]
    de_arrays = []
    for j in range(3):
        convected = (
            va[0] * de[0][j] + va[1] * de[1][j] + va[2] * de[2][j]
            - (ea[0] * dv[0][j] + ea[1] * dv[1][j] + ea[2] * dv[2][j])
            + ea[j] * divv
        )
        de_arrays.append(
            params.eta * curl2[j]
            - dealias_array(g, convected)
            - params.kappa * ea[j]
        )

    return FiRates(
        dv=projected.solenoidal,
        dE=VectorField.from_arrays(g, tuple(de_arrays)),
        pressure=projected.potential * params.mu,
    )


def rhs_second_order(state: SecondOrderState, params: MediumParams) -> SecondOrderRates:
    """Stress-eliminated second-order form.

    mu v_tt + 2 mu (v.grad) v_t + (vv) grad grad v = -(rate of grad p) + eta lap v.
    All known terms are evaluated and v_tt is Leray-projected, which defines
    the pressure-gradient rate implicitly; the projected-out gradient is
    returned (scaled by mu) so the realized rate can be inspected.
    """
    v, v_t = state.v, state.v_t
    for name, f in (("v", v), ("v_t", v_t)):
        linf = norm_linf(div(f))
        if linf > DIV_INPUT_TOL:
            raise SolenoidalityError(
                f"div {name} = {linf:.3e} exceeds {DIV_INPUT_TOL:.0e} on input"
            )
    raw = (laplacian(v) * (params.eta / params.mu)
           - vector_advection(v, v_t) * 2.0
           - double_advection(v, v) * (1.0 / params.mu))
    projected = leray_project(raw)
    return SecondOrderRates(
        dv=v_t,
        dv_t=projected.solenoidal,
        pressure_gradient_rate=grad(projected.potential) * params.mu,
    )


def rhs_compressible(state: FluidState, params: MediumParams,
                     rheology: str) -> CompressibleRates:
    """Slightly compressible extension.

    mu (v_t + v.grad v) = -E + grad(dilational stress) with the dilational
    stress (nu + 2 zeta) div v (liquid) or (lam + 2 eta) div u (solid); the
    E equation is unchanged from the incompressible system, and
    mu_t = -v.grad mu - mu div v.  The solid branch also advances u_t = v.
    """
    if rheology not in ("liquid", "solid"):
        raise ValueError(f"rheology must be 'liquid' or 'solid', got {rheology!r}")
    if state.E is None or state.mu_field is None:
        raise ValueError("compressible systems need E and mu_field")
    v, E, mu_f = state.v, state.E, state.mu_field
    if float(mu_f.values.min()) <= 0.0:
        raise DensityError(
            f"density lost positivity (min = {float(mu_f.values.min()):.3e})"
        )
    divv = div(v)
    if rheology == "liquid":
        dilational = divv * (params.nu + 2.0 * params.zeta)
        du = None
    else:
        if state.u is None:
            raise ValueError("compressible solid branch needs u")
        dilational = div(state.u) * (params.lam + 2.0 * params.eta)
        du = v
    force = grad(dilational) - E
    inv_mu = 1.0 / mu_f.values
    dv = dealias_field(
        VectorField.from_arrays(v.grid, tuple(a * inv_mu for a in force.arrays()))
    ) - vector_advection(v, v)
    dE = (curl_curl(v) * params.eta
          - upper_convected_vector(E, v, None)
          - E * params.kappa)
    dmu = -advect_scalar(v, mu_f) - dealias_field(mu_f * divv)
    return CompressibleRates(dv=dv, dE=dE, dmu=dmu, du=du)


def rhs_classical_maxwell(state: MaxwellState, params: MediumParams) -> MaxwellRates:
    """Classical reference evolution: B_t = -curl E, E_t = c^2 curl B."""
    return MaxwellRates(
        dE=curl(state.B) * (params.c ** 2),
        dB=-curl(state.E),
    )


# ---------------------------------------------------------------------------
# integrator plumbing: pack states into flat field lists per system
# ---------------------------------------------------------------------------

def _pack(system: str, state):
    if system == "linear_navier":
        return [state.u, state.v]
    if system == "fi_incompressible":
        return [state.v, state.E]
    if system == "second_order":
        return [state.v, state.v_t]
    if system == "compressible_liquid":
        return [state.v, state.E, state.mu_field]
    if system == "compressible_solid":
        return [state.v, state.E, state.mu_field, state.u]
    if system == "classical_maxwell":
        return [state.E, state.B]
    raise ValueError(f"unknown system {system!r}")


def _unpack(system: str, template, fields, time: float):
    if system == "linear_navier":
        return dataclasses.replace(template, time=time, u=fields[0], v=fields[1])
    if system == "fi_incompressible":
        return dataclasses.replace(template, time=time, v=fields[0], E=fields[1])
    if system == "second_order":
        return dataclasses.replace(template, time=time, v=fields[0], v_t=fields[1])
    if system == "compressible_liquid":
        return dataclasses.replace(template, time=time, v=fields[0], E=fields[1],
                                   mu_field=fields[2])
    if system == "compressible_solid":
        return dataclasses.replace(template, time=time, v=fields[0], E=fields[1],
                                   mu_field=fields[2], u=fields[3])
    if system == "classical_maxwell":
        return dataclasses.replace(template, time=time, E=fields[0], B=fields[1])
    raise ValueError(f"unknown system {system!r}")


def _rates_as_list(system: str, state, params: MediumParams):
    """Evaluate the system RHS; returns (field list matching _pack, rates object)."""
    if system == "linear_navier":
        r = rhs_linear_navier(state, params)
        return [r.du, r.dv], r
    if system == "fi_incompressible":
        r = rhs_fi_incompressible(state, params)
        return [r.dv, r.dE], r
    if system == "second_order":
        r = rhs_second_order(state, params)
        return [r.dv, r.dv_t], r
    if system in ("compressible_liquid", "compressible_solid"):
        r = rhs_compressible(state, params,
                             "liquid" if system == "compressible_liquid" else "solid")
        out = [r.dv, r.dE, r.dmu]
        if system == "compressible_solid":
            out.append(r.du)
        return out, r
    if system == "classical_maxwell":
        r = rhs_classical_maxwell(state, params)
        return [r.dE, r.dB], r
    raise ValueError(f"unknown system {system!r}")


def wave_speed_for_cfl(system: str, params: MediumParams) -> float:
    """Fastest signal speed governing the CFL bound for a system."""
    return params.c_s if system in _COMPRESSIONAL_CFL else params.c


def auto_step_size(state, params: MediumParams, control: StepControl,
                   system: str) -> float:
    """cfl * h_min / (c_max + |v|_max); |v|_max is zero for the classical system."""
    grid = _pack(system, state)[0].grid
    vmax = norm_linf(state.v) if hasattr(state, "v") else 0.0
    return control.cfl * grid.min_active_spacing() / (
        wave_speed_for_cfl(system, params) + vmax
    )


def _resolve_dt(state, params, control, system) -> float:
    if control.dt == "auto":
        return auto_step_size(state, params, control, system)
    return float(control.dt)


def step(state, params: MediumParams, control: StepControl, system: str,
         dt: float | None = None):
    """One explicit RK4 step.

    dt overrides the control (used by `integrate` to land exactly on t_end).
    For the incompressible systems the velocity (and velocity rate) are
    re-projected after the update so the solenoidality invariant is restored
    to round-off.  Non-finite values abort with an IntegrationError carrying
    the last accepted state.
    """
    if system not in SYSTEMS:
        raise ValueError(f"unknown system {system!r}")
    h = float(dt) if dt is not None else _resolve_dt(state, params, control, system)
    if not h > 0:
        raise StepSizeError(f"step size must be positive, got {h}")
    uses_kappa = system in ("fi_incompressible", "compressible_liquid",
                            "compressible_solid")
    if uses_kappa and params.kappa * h > KAPPA_DT_LIMIT:
        raise StepSizeError(
            f"kappa*dt = {params.kappa * h:.3g} exceeds the explicit stability "
            f"range ({KAPPA_DT_LIMIT}); reduce dt"
        )

    y0 = _pack(system, state)

    def eval_rhs(fields):
        trial = _unpack(system, state, fields, state.time)
        return _rates_as_list(system, trial, params)

    try:
        k1, rates1 = eval_rhs(y0)
        k2, _ = eval_rhs([y + ki * (h / 2.0) for y, ki in zip(y0, k1)])
        k3, _ = eval_rhs([y + ki * (h / 2.0) for y, ki in zip(y0, k2)])
        k4, _ = eval_rhs([y + ki * h for y, ki in zip(y0, k3)])
        new_fields = [
            y + (a + (b + c) * 2.0 + d) * (h / 6.0)
            for y, a, b, c, d in zip(y0, k1, k2, k3, k4)
        ]
        if system == "fi_incompressible":
            new_fields[0] = leray_project(new_fields[0]).solenoidal
        elif system == "second_order":
            new_fields[0] = leray_project(new_fields[0]).solenoidal
            new_fields[1] = leray_project(new_fields[1]).solenoidal
        new_state = _unpack(system, state, new_fields, state.time + h)
    except (FieldError, FloatingPointError) as exc:
        raise IntegrationError(
            f"step from t={state.time:.6g} with dt={h:.3e} produced non-finite "
            f"values in system {system!r}: {exc}",
            state=state,
        ) from exc

    # the projection potential of the first stage defines the pressure at the
    # step's start; reports re-evaluate the RHS at sample times for exact values
    if system == "fi_incompressible":
        new_state = dataclasses.replace(new_state, p=rates1.pressure)
    return new_state


def integrate(state, params: MediumParams, control: StepControl, system: str,
              observer=None):
    """Advance to control.t_end, shortening the final step to land exactly.

    `observer(step_index, state)` is called with the initial state (index 0)
    and after every accepted step.
    """
    if observer is not None:
        observer(0, state)
    n = 0
    t_end = control.t_end
    eps = 1e-12 * max(1.0, abs(t_end))
    while state.time < t_end - eps:
        h = min(_resolve_dt(state, params, control, system), t_end - state.time)
        state = step(state, params, control, system, dt=h)
        n += 1
        if observer is not None:
            observer(n, state)
    return state
