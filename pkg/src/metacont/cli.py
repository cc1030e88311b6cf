"""Batch experiment runner: `metacont run | verify | sweep`.

Configs are single JSON documents; all quantities are dimensionless with the
convention mu = 1, eta = 1 (so c = 1) unless overridden.  Artifacts are
written atomically (temp file + rename) under the output directory:

    manifest.json     config echo, content hash, checksummed artifact list
    reports.ndjson    one law-residual report per sampled time
    reports.csv       same data as (time, law, l2, linf, norm) rows
    snapshots/        raw f64 + JSON-sidecar field dumps per sampled step
    summary.json      final norms, wave measurement vs oracle when available

Identical configs (including seeds) produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import sys
import time as _time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diffops, dynamics, emlaws, scenarios
from .diffops import curl, div, grad, hessian_contract, leray_project
from .dynamics import (
    FluidState,
    MaxwellState,
    MediumParams,
    SecondOrderState,
    StepControl,
    integrate,
    oldroyd_discrepancy,
    rhs_classical_maxwell,
    rhs_compressible,
    rhs_fi_incompressible,
    rhs_linear_navier,
    rhs_second_order,
)
from .fields import (
    GridSpec,
    ScalarField,
    VectorField,
    atomic_write_text,
    dealias,
    from_spectral,
    make_grid,
    mode_coefficient,
    norm_l2,
    norm_linf,
    spectral_norm_l2,
    to_spectral,
    write_snapshot,
)
from .scenarios import (
    ScenarioSpec,
    dispersion_compressional,
    dispersion_shear,
    generate,
    measure_wave,
    trim_uniform,
)

__all__ = ["ConfigError", "RunConfig", "run", "verify", "sweep", "main"]

TWO_PI = 2.0 * np.pi

_SCENARIO_SYSTEMS = {
    "plane_shear_wave": {"fi_incompressible", "second_order", "classical_maxwell",
                         "compressible_liquid", "compressible_solid", "linear_navier"},
    "standing_shear_wave": {"fi_incompressible", "second_order", "classical_maxwell",
                            "compressible_liquid", "compressible_solid",
                            "linear_navier"},
    "gaussian_vortex": {"fi_incompressible", "second_order", "classical_maxwell",
                        "compressible_liquid", "compressible_solid"},
    "random_solenoidal": {"fi_incompressible", "second_order", "classical_maxwell",
                          "compressible_liquid", "compressible_solid"},
    "compression_pulse": {"linear_navier", "compressible_solid"},
    "uniform_E_decay": {"fi_incompressible", "compressible_liquid",
                        "compressible_solid"},
}

# systems whose states carry the fields needed for law-residual reports
_REPORTING_SYSTEMS = {"fi_incompressible", "compressible_liquid",
                      "compressible_solid", "classical_maxwell"}


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    params: MediumParams
    system: str
    scenario: ScenarioSpec
    control: StepControl
    snapshot_every: int
    report_every: int
    out_dir: Path
    raw: dict

    @classmethod
    def from_dict(cls, doc: dict, out_dir=None) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {"grid", "params", "system", "scenario", "control", "outputs"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            grid_doc = doc.get("grid", {})
            grid = make_grid(
                tuple(grid_doc.get("dims", (64, 64, 1))),
                tuple(grid_doc.get("lengths", (TWO_PI, TWO_PI, TWO_PI))),
            )
            params = MediumParams(**doc.get("params", {}))
            system = doc.get("system")
            if system not in dynamics.SYSTEMS:
                raise ConfigError(
                    f"system must be one of {list(dynamics.SYSTEMS)}, got {system!r}"
                )
            scen_doc = dict(doc.get("scenario", {}))
            if "kind" not in scen_doc or "amplitude" not in scen_doc:
                raise ConfigError("scenario needs at least 'kind' and 'amplitude'")
            if "wavevector" in scen_doc:
                scen_doc["wavevector"] = tuple(scen_doc["wavevector"])
            if scen_doc.get("polarization") is not None:
                scen_doc["polarization"] = tuple(scen_doc["polarization"])
            scenario = ScenarioSpec(**scen_doc)
            control_doc = dict(doc.get("control", {}))
            if "t_end" not in control_doc:
                raise ConfigError("control needs 't_end'")
            control = StepControl(**control_doc)
            outputs = dict(doc.get("outputs", {}))
            snapshot_every = int(outputs.get("snapshot_every", 0))
            report_every = int(outputs.get("report_every", 0))
            resolved_out = Path(out_dir or outputs.get("out_dir", "out"))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if snapshot_every < 0 or report_every < 0:
            raise ConfigError("snapshot_every and report_every must be >= 0")
        if system not in _SCENARIO_SYSTEMS[scenario.kind]:
            raise ConfigError(
                f"scenario {scenario.kind!r} is incompatible with system "
                f"{system!r} (allowed: {sorted(_SCENARIO_SYSTEMS[scenario.kind])})"
            )
        return cls(grid=grid, params=params, system=system, scenario=scenario,
                   control=control, snapshot_every=snapshot_every,
                   report_every=report_every, out_dir=resolved_out, raw=doc)


def load_config(path, out_dir=None) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(doc, out_dir=out_dir)


def config_content_hash(doc: dict) -> str:
    """Git-style blob hash of the canonicalized config document."""
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(blob) + blob).hexdigest()


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _initial_state(config: RunConfig):
    base = generate(config.scenario, config.grid, config.params)
    if config.system == "classical_maxwell":
        return MaxwellState(time=0.0, E=base.E,
                            B=curl(base.v) * config.params.mu)
    if config.system == "second_order":
        rates = rhs_fi_incompressible(base, config.params)
        return SecondOrderState(time=0.0, v=base.v, v_t=rates.dv)
    return base


def _rhs_for(system: str, state, params: MediumParams):
    if system == "fi_incompressible":
        return rhs_fi_incompressible(state, params)
    if system == "linear_navier":
        return rhs_linear_navier(state, params)
    if system == "second_order":
        return rhs_second_order(state, params)
    if system == "compressible_liquid":
        return rhs_compressible(state, params, "liquid")
    if system == "compressible_solid":
        return rhs_compressible(state, params, "solid")
    return rhs_classical_maxwell(state, params)


def _report_for(system: str, state, params: MediumParams):
    if system not in _REPORTING_SYSTEMS:
        return None
    rates = _rhs_for(system, state, params)
    if system == "classical_maxwell":
        return emlaws.classical_report(state, params, rates)
    return emlaws.fi_report(state, params, rates)


def _measurement_target(config: RunConfig):
    """(component picker, k magnitude) for scenarios with a wave oracle."""
    kind = config.scenario.kind
    if kind not in ("plane_shear_wave", "standing_shear_wave",
                    "compression_pulse", "uniform_E_decay"):
        return None
    k = np.array([TWO_PI * m / L for m, L in
                  zip(config.scenario.wavevector, config.grid.lengths)])
    kmag = float(np.linalg.norm(k))
    if kind in ("plane_shear_wave", "standing_shear_wave"):
        direction = np.asarray(config.scenario.polarization)
    else:
        direction = k / kmag

    def pick(state):
        field = state.E if kind == "uniform_E_decay" else state.v
        return sum(
            d * mode_coefficient(c, config.scenario.wavevector)
            for d, c in zip(direction, field.components)
        )

    return pick, kmag


def _oracle_summary(config: RunConfig, kmag: float) -> dict:
    kind = config.scenario.kind
    if kind in ("plane_shear_wave", "standing_shear_wave"):
        disp = dispersion_shear(kmag, config.params)
        return {
            "law": "shear_dispersion",
            "frequency": disp.frequency,
            "phase_speed": disp.frequency / kmag,
            "decay_rate": disp.decay_rate,
            "regime": disp.regime,
        }
    if kind == "compression_pulse":
        w = dispersion_compressional(kmag, config.params)[0]
        return {
            "law": "compressional_dispersion",
            "frequency": w,
            "phase_speed": w / kmag,
            "decay_rate": 0.0,
            "regime": "underdamped",
        }
    return {
        "law": "stress_attenuation",
        "frequency": 0.0,
        "phase_speed": 0.0,
        "decay_rate": config.params.kappa,
        "regime": "decay",
    }


def _snapshot_fields(system: str, state):
    fields = []
    if system == "classical_maxwell":
        return [("E", state.E), ("B", state.B)]
    fields.append(("v", state.v))
    if getattr(state, "E", None) is not None:
        fields.append(("E", state.E))
    if getattr(state, "p", None) is not None:
        fields.append(("p", state.p))
    if getattr(state, "v_t", None) is not None:
        fields.append(("v_t", state.v_t))
    if getattr(state, "mu_field", None) is not None:
        fields.append(("mu", state.mu_field))
    if getattr(state, "u", None) is not None:
        fields.append(("u", state.u))
    return fields


def run(config: RunConfig):
    """Execute one configured simulation; returns (summary dict, final state)."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snap_root = out / "snapshots"

    state0 = _initial_state(config)
    target = _measurement_target(config)
    times, series = [], []
    reports = []
    written: list[Path] = []
    reported_at: set[int] = set()
    snapped_at: set[int] = set()

    def snap(step_index: int, state) -> None:
        snap_dir = snap_root / f"step_{step_index:08d}"
        for name, field in _snapshot_fields(config.system, state):
            written.extend(write_snapshot(field, snap_dir, name, state.time))
        snapped_at.add(step_index)

    def report(step_index: int, state) -> None:
        if config.system in _REPORTING_SYSTEMS:
            reports.append(_report_for(config.system, state, config.params))
        reported_at.add(step_index)

    last = {"index": 0, "state": state0}

    def observer(i, state):
        last["index"] = i
        last["state"] = state
        if target is not None:
            times.append(state.time)
            series.append(target[0](state))
        if i == 0 or (config.report_every and i % config.report_every == 0):
            report(i, state)
        if i == 0 or (config.snapshot_every and i % config.snapshot_every == 0):
            snap(i, state)

    try:
        final_state = integrate(state0, config.params, config.control,
                                config.system, observer=observer)
    except dynamics.IntegrationError as exc:
        # keep a diagnostic snapshot of the last accepted state
        diag = exc.state if exc.state is not None else last["state"]
        for name, field in _snapshot_fields(config.system, diag):
            write_snapshot(field, out / "diagnostic", name, diag.time)
        raise

    # the final state is always reported and snapshotted
    if last["index"] not in reported_at:
        report(last["index"], final_state)
    if last["index"] not in snapped_at:
        snap(last["index"], final_state)

    # measurement vs oracle
    measurement = None
    if target is not None and len(times) >= 8:
        t_arr, s_arr = trim_uniform(np.array(times), np.array(series))
        resampled = False
        if len(t_arr) < len(times):
            # auto dt makes the sampling non-uniform; interpolate onto a
            # uniform grid of the same span for the linear-prediction fit
            t_raw = np.array(times)
            s_raw = np.array(series)
            t_arr = np.linspace(t_raw[0], t_raw[-1], len(t_raw))
            s_arr = (np.interp(t_arr, t_raw, s_raw.real)
                     + 1j * np.interp(t_arr, t_raw, s_raw.imag))
            resampled = True
        if len(t_arr) >= 8:
            m = measure_wave(t_arr, s_arr, k_mag=target[1])
            oracle = _oracle_summary(config, target[1])
            measurement = {
                "resampled": resampled,
                "measured_omega": m.omega,
                "measured_phase_speed": m.phase_speed,
                "measured_decay_rate": m.decay_rate,
                "fit_residual": m.fit_residual,
                "valid": bool(m.valid),
                "degenerate": bool(m.degenerate),
                "oracle": oracle,
            }
            if oracle["frequency"] > 0:
                measurement["phase_speed_rel_error"] = abs(
                    m.phase_speed - oracle["phase_speed"]) / oracle["phase_speed"]
            if oracle["decay_rate"] > 0:
                measurement["decay_rate_rel_error"] = abs(
                    m.decay_rate - oracle["decay_rate"]) / oracle["decay_rate"]

    reports_path = out / "reports.ndjson"
    emlaws.write_reports_ndjson([r for r in reports if r], reports_path)
    csv_path = out / "reports.csv"
    emlaws.write_reports_csv([r for r in reports if r], csv_path)
    written.extend([reports_path, csv_path])

    worst_laws = {}
    for r in reports:
        if r is None:
            continue
        for e in r.entries:
            worst_laws[e.name] = max(worst_laws.get(e.name, 0.0), e.normalized_linf)

    summary = {
        "system": config.system,
        "scenario": config.scenario.kind,
        "final_time": final_state.time,
        "norms": {
            name: {"l2": norm_l2(field), "linf": norm_linf(field)}
            for name, field in _snapshot_fields(config.system, final_state)
        },
        "measurement": measurement,
        "law_residual_max_normalized_linf": worst_laws,
        "samples": len(times),
    }
    summary_path = out / "summary.json"
    atomic_write_text(summary_path, json.dumps(summary, sort_keys=True, indent=2) + "\n")
    written.append(summary_path)

    manifest = {
        "config": config.raw,
        "config_hash": config_content_hash(config.raw),
        "params": {
            "mu": config.params.mu,
            "eta": config.params.eta,
            "lam": config.params.lam,
            "kappa": config.params.kappa,
            "tau": config.params.tau,
            "zeta": config.params.zeta,
            "nu": config.params.nu,
            "c": config.params.c,
            "c_s": config.params.c_s,
            "delta": config.params.delta,
            # both candidate weights for the induction field B = <weight> curl v;
            # the mu form is the one in use, eta*c^2 is reported for comparison
            "b_weight_mu": config.params.mu,
            "b_weight_eta_c2": config.params.eta * config.params.c ** 2,
        },
        "artifacts": {
            str(p.relative_to(out)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(set(written))
        },
    }
    atomic_write_text(out / "manifest.json",
                      json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return summary, final_state


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _tampered(field, enabled: bool):
    """Fault-injection hook: bump one grid point so the check must fail."""
    if not enabled:
        return field
    arr = field.x.values.copy()
    arr[0, 0, 0] += 1e-3
    return VectorField.from_arrays(field.grid, (arr, field.y.values, field.z.values))


def _verify_checks(level: str, tamper: str | None):
    """Yield (name, callable) pairs; each callable returns (measured, bound)."""
    from .fields import dealias_field

    grid2d = make_grid((64, 64, 1), (TWO_PI, TWO_PI, TWO_PI))
    grids = [grid2d]
    if level == "full":
        grids.append(make_grid((128, 128, 1), (TWO_PI, TWO_PI, TWO_PI)))
        grids.append(make_grid((32, 32, 32), (TWO_PI, TWO_PI, TWO_PI)))

    def band_vector(grid, seed, fraction, solenoidal=False, amplitude=1.0):
        rng = np.random.default_rng(seed)
        arrs = [scenarios._band_limited_noise(grid, rng, fraction)
                for _ in range(3)]
        v = VectorField.from_arrays(grid, tuple(arrs))
        if solenoidal:
            v = leray_project(v).solenoidal
        peak = norm_linf(v)
        return v * (amplitude / peak) if peak else v

    checks = []

    for grid in grids:
        tag = "x".join(str(n) for n in grid.dims if n > 1)

        def roundtrip(grid=grid):
            rng = np.random.default_rng(42)
            f = ScalarField(grid, rng.standard_normal(grid.shape))
            back = from_spectral(to_spectral(f))
            return norm_linf(back - f) / norm_linf(f), 1e-13

        checks.append((f"transform_roundtrip_{tag}", roundtrip))

        def parseval(grid=grid):
            rng = np.random.default_rng(43)
            f = ScalarField(grid, rng.standard_normal(grid.shape))
            phys = norm_l2(f)
            return abs(phys - spectral_norm_l2(to_spectral(f))) / phys, 1e-12

        checks.append((f"parseval_{tag}", parseval))

        def div_curl(grid=grid, name=f"div_of_curl_{tag}"):
            v = band_vector(grid, 44, 0.4)
            w = _tampered(curl(v), tamper == name)
            return norm_linf(div(w)), 1e-12

        checks.append((f"div_of_curl_{tag}", div_curl))

        def curl_grad(grid=grid):
            rng = np.random.default_rng(45)
            arr = scenarios._band_limited_noise(grid, rng, 0.25)
            peak = float(np.max(np.abs(arr)))
            f = ScalarField(grid, arr / peak if peak else arr)
            return norm_linf(curl(grad(f))), 1e-12

        checks.append((f"curl_of_grad_{tag}", curl_grad))

        def curl_curl_identity(grid=grid):
            v = band_vector(grid, 46, 0.4)
            direct = diffops.curl_curl(v)
            composed = grad(div(v)) - diffops.laplacian(v)
            return norm_l2(direct - composed) / norm_l2(direct), 1e-12

        checks.append((f"curl_curl_identity_{tag}", curl_curl_identity))

        def leray_idempotent(grid=grid):
            v = band_vector(grid, 47, 0.4)
            once = leray_project(v).solenoidal
            twice = leray_project(once).solenoidal
            return norm_linf(twice - once), 1e-13

        checks.append((f"leray_idempotent_{tag}", leray_idempotent))

        def leray_divfree(grid=grid):
            v = band_vector(grid, 48, 0.4)
            return norm_linf(div(leray_project(v).solenoidal)), 1e-12

        checks.append((f"leray_divergence_free_{tag}", leray_divfree))

        def vector_identity(grid=grid, name=f"vector_identity_triple_{tag}"):
            v = band_vector(grid, 49, 0.25)
            e = band_vector(grid, 50, 0.25)
            v = _tampered(v, tamper == name)
            return norm_linf(diffops.identity_residual_triple(v, e)), 1e-10

        checks.append((f"vector_identity_triple_{tag}", vector_identity))

        def gromeka(grid=grid):
            v = band_vector(grid, 51, 0.25)
            return norm_linf(diffops.gromeka_lamb_residual(v)), 1e-10

        checks.append((f"gromeka_lamb_{tag}", gromeka))

        def oldroyd(grid=grid, name=f"oldroyd_discrepancy_{tag}"):
            from .fields import TensorField
            rng = np.random.default_rng(52)
            rows = []
            for _ in range(3):
                row = []
                for _ in range(3):
                    arr = scenarios._band_limited_noise(grid, rng)
                    peak = float(np.max(np.abs(arr)))
                    row.append(arr / peak if peak else arr)
                rows.append(tuple(row))
            sigma = TensorField.from_arrays(grid, tuple(rows))
            v = band_vector(grid, 53, 1 / 6)
            v = _tampered(v, tamper == name)
            residual = oldroyd_discrepancy(sigma, v) + hessian_contract(v, sigma)
            return norm_linf(residual), 1e-9

        checks.append((f"oldroyd_discrepancy_{tag}", oldroyd))

        def corollaries(grid=grid, name=f"fi_exact_corollaries_{tag}"):
            params = MediumParams(kappa=0.3)
            spec = ScenarioSpec("random_solenoidal", amplitude=1e-2, seed=54)
            state = generate(spec, grid, params)
            state = dataclasses.replace(state, v=_tampered(state.v, tamper == name))
            rates = rhs_fi_incompressible(state, params)
            em = emlaws.extract_em(state, params)
            dB = curl(rates.dv) * params.mu
            report = emlaws.full_report(em, state.v, rates.dE, dB, params, 0.0)
            worst = max(report.entry(law).normalized_linf for law in (
                "faraday_lorentz", "hertz_form", "generalized_ampere",
                "metacharge_continuity"))
            return worst, 1e-9

        checks.append((f"fi_exact_corollaries_{tag}", corollaries))

        def div_b(grid=grid):
            params = MediumParams()
            spec = ScenarioSpec("random_solenoidal", amplitude=0.5, seed=55)
            state = generate(spec, grid, params)
            em = emlaws.extract_em(state, params)
            return norm_linf(div(em.B)), 1e-12

        checks.append((f"div_b_{tag}", div_b))

    def dispersion_roots(name="dispersion_root_residual"):
        worst = 0.0
        for kappa, k in ((0.0, 1.0), (0.5, 1.0), (2.0, 2.0), (8.0, 1.0)):
            params = MediumParams(kappa=kappa)
            d = dispersion_shear(k, params)
            offset = 1e-3 if tamper == name else 0.0
            for w in (d.omega_plus + offset, d.omega_minus):
                res = abs(params.mu * w ** 2 + 1j * kappa * params.mu * w
                          - params.eta * k ** 2)
                worst = max(worst, res / (params.mu * abs(w) ** 2
                                          + params.eta * k ** 2))
        return worst, 1e-12

    checks.append(("dispersion_root_residual", dispersion_roots))

    def kappa_decay(name="kappa_decay_rate"):
        kappa = 0.5
        params = MediumParams(kappa=kappa)
        spec = ScenarioSpec("uniform_E_decay", amplitude=0.1, wavevector=(1, 0, 0))
        state = generate(spec, grid2d, params)
        t_end = 3.0 if tamper != name else 2.0  # tamper: rate measured over wrong span
        out = integrate(state, params, StepControl(t_end=t_end, dt="auto", cfl=0.4),
                        "fi_incompressible")
        rate = -np.log(norm_linf(out.E) / 0.1) / 3.0
        return abs(rate - kappa) / kappa, 0.005

    checks.append(("kappa_decay_rate", kappa_decay))

    def shear_speed(name="shear_wave_speed"):
        params = MediumParams()
        spec = ScenarioSpec("standing_shear_wave", amplitude=1e-3,
                            wavevector=(1, 0, 0), polarization=(0, 1, 0))
        state = generate(spec, grid2d, params)
        times, series = [], []

        def obs(i, s):
            times.append(s.time)
            series.append(mode_coefficient(s.v.y, (1, 0, 0)))

        integrate(state, params, StepControl(t_end=6.5, dt=0.026),
                  "fi_incompressible", obs)
        t, s = trim_uniform(np.array(times), np.array(series))
        m = measure_wave(t, s, k_mag=1.0)
        speed = m.phase_speed * (1.01 if tamper == name else 1.0)
        return abs(speed - params.c) / params.c, 0.005

    checks.append(("shear_wave_speed", shear_speed))

    def energy_drift():
        params = MediumParams()
        spec = ScenarioSpec("standing_shear_wave", amplitude=1e-3,
                            wavevector=(1, 0, 0), polarization=(0, 1, 0))
        state = generate(spec, grid2d, params)
        e0 = 0.5 * norm_l2(state.v) ** 2 + 0.5 * norm_l2(state.E) ** 2
        control = StepControl(t_end=10.0, dt=0.02)
        for _ in range(100):
            state = dynamics.step(state, params, control, "fi_incompressible")
        e1 = 0.5 * norm_l2(state.v) ** 2 + 0.5 * norm_l2(state.E) ** 2
        return abs(e1 - e0) / e0, 1e-8

    checks.append(("energy_drift_100_steps", energy_drift))

    def determinism():
        params = MediumParams()
        spec = ScenarioSpec("random_solenoidal", amplitude=0.1, seed=56)
        digests = []
        for _ in range(2):
            state = generate(spec, grid2d, params)
            out = integrate(state, params, StepControl(t_end=0.2, dt=0.02),
                            "fi_incompressible")
            h = hashlib.sha256()
            for arr in out.v.arrays() + out.E.arrays():
                h.update(arr.tobytes())
            digests.append(h.hexdigest())
        return float(digests[0] != digests[1]), 0.5

    checks.append(("bitwise_determinism", determinism))

    return checks


def verify(level: str = "quick", tamper: str | None = None,
           stream=None) -> tuple[int, list[dict]]:
    """Run the named-check suite; prints one pass/fail line per check.

    Returns (exit_code, results); exit code 1 when any check fails.
    """
    if level not in ("quick", "full"):
        raise ConfigError(f"level must be 'quick' or 'full', got {level!r}")
    stream = stream or sys.stdout
    results = []
    failures = 0
    t_start = _time.perf_counter()
    for name, fn in _verify_checks(level, tamper):
        t0 = _time.perf_counter()
        try:
            measured, bound = fn()
        except Exception as exc:  # a crashing check is a failing check
            measured, bound = float("inf"), 0.0
            note = f" ({type(exc).__name__}: {exc})"
        else:
            note = ""
        elapsed = _time.perf_counter() - t0
        ok = measured < bound
        failures += 0 if ok else 1
        results.append({"check": name, "measured": float(measured),
                        "bound": float(bound), "pass": bool(ok),
                        "seconds": elapsed})
        print(f"{'PASS' if ok else 'FAIL'} {name}: measured={measured:.3e} "
              f"bound={bound:.0e} ({elapsed:.2f}s){note}", file=stream)
    total = _time.perf_counter() - t_start
    print(f"{'PASS' if failures == 0 else 'FAIL'} verify[{level}]: "
          f"{len(results) - failures}/{len(results)} checks in {total:.1f}s",
          file=stream)
    return (0 if failures == 0 else 1), results


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

_SWEEP_AXES = {
    "amplitude": ("scenario", "amplitude"),
    "lambda": ("params", "lam"),
    "kappa": ("params", "kappa"),
    "eta": ("params", "eta"),
    "mu": ("params", "mu"),
    "nu": ("params", "nu"),
}


def _config_with(doc: dict, axis: str, value: float) -> dict:
    section, key = _SWEEP_AXES[axis]
    out = json.loads(json.dumps(doc))  # deep copy
    out.setdefault(section, {})[key] = value
    return out


def _maxwell_limit_distance(config: RunConfig) -> float:
    """Sup over sampled times of the (E, mu curl v) distance to the classical twin."""
    params = config.params
    state = generate(config.scenario, config.grid, params)
    fi_state = state
    cl_state = MaxwellState(time=0.0, E=state.E, B=curl(state.v) * params.mu)
    dt = config.control.dt
    if dt == "auto":
        dt = dynamics.auto_step_size(fi_state, params, config.control,
                                     "fi_incompressible")
    control = StepControl(t_end=config.control.t_end, dt=dt, cfl=config.control.cfl)
    worst = 0.0
    t = 0.0
    while t < control.t_end - 1e-12:
        h = min(dt, control.t_end - t)
        fi_state = dynamics.step(fi_state, params, control, "fi_incompressible", dt=h)
        cl_state = dynamics.step(cl_state, params, control, "classical_maxwell", dt=h)
        t = fi_state.time
        d = np.sqrt(
            norm_l2(fi_state.E - cl_state.E) ** 2
            + norm_l2(curl(fi_state.v) * params.mu - cl_state.B) ** 2
        )
        worst = max(worst, d)
    return worst


def _sweep_one(doc: dict, axis: str, value: float, out_dir: Path) -> dict:
    config = RunConfig.from_dict(_config_with(doc, axis, value), out_dir=out_dir)
    summary, _ = run(config)
    row = {"axis": axis, "value": value, "status": "ok",
           "run_dir": str(out_dir)}
    m = summary.get("measurement")
    if m:
        row["phase_speed"] = m["measured_phase_speed"]
        row["decay_rate"] = m["measured_decay_rate"]
    if axis == "amplitude" and config.system == "fi_incompressible":
        row["maxwell_distance"] = _maxwell_limit_distance(config)
    if axis == "lambda":
        row["delta"] = config.params.delta
    return row


def _final_velocity(run_dir: Path) -> VectorField:
    from .fields import read_snapshot_vector

    snap_dirs = sorted((Path(run_dir) / "snapshots").glob("step_*"))
    if not snap_dirs:
        raise ConfigError(f"no snapshots under {run_dir}")
    v, _ = read_snapshot_vector(snap_dirs[-1], "v")
    return v


def _delta_reference(doc: dict, values) -> tuple[dict, VectorField]:
    """Incompressible reference for a lambda sweep, plus the common-dt doc.

    All runs share the time step of the stiffest lambda so the integration
    error cancels in the deviation; the deviation itself is taken on the
    Leray-projected velocity (the acoustic component has no incompressible
    counterpart; see scenarios.delta_sweep).
    """
    stiff_doc = _config_with(doc, "lambda", max(values))
    stiff = RunConfig.from_dict(stiff_doc)
    state0 = generate(stiff.scenario, stiff.grid, stiff.params)
    dt = dynamics.auto_step_size(state0, stiff.params, stiff.control,
                                 "compressible_solid")
    common = json.loads(json.dumps(doc))
    common.setdefault("control", {})["dt"] = dt
    ref_config = RunConfig.from_dict({**common, "system": "fi_incompressible"})
    ref_state = integrate(generate(ref_config.scenario, ref_config.grid,
                                   ref_config.params),
                          ref_config.params, ref_config.control,
                          "fi_incompressible")
    return common, ref_state.v


def sweep(doc: dict, axis: str, values, out_dir, jobs: int = 1) -> dict:
    """One run per value; aggregated CSV plus slope estimates where registered.

    axis='amplitude' on the incompressible system records the trajectory
    distance to the classical reference (slope ~ 2 expected); axis='lambda'
    on the compressible solid branch records the deviation from a common-dt
    incompressible reference against delta (slope ~ 1 expected).  Individual
    run failures are recorded and the sweep continues; the summary marks
    partial results.
    """
    values = [float(v) for v in values]
    if not values:
        raise ConfigError("sweep needs a non-empty value list")
    if axis not in _SWEEP_AXES:
        raise ConfigError(
            f"axis must be one of {sorted(_SWEEP_AXES)}, got {axis!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    reference_v = None
    if axis == "lambda" and doc.get("system") == "compressible_solid":
        doc, reference_v = _delta_reference(doc, values)

    rows: list[dict] = []
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_sweep_one, doc, axis, v, out / f"run_{i:03d}")
                for i, v in enumerate(values)
            ]
            for v, fut in zip(values, futures):
                try:
                    rows.append(fut.result())
                except Exception as exc:  # run failures recorded, sweep continues
                    rows.append({"axis": axis, "value": v, "status": "failed",
                                 "error": str(exc)})
    else:
        for i, v in enumerate(values):
            try:
                rows.append(_sweep_one(doc, axis, v, out / f"run_{i:03d}"))
            except Exception as exc:
                rows.append({"axis": axis, "value": v, "status": "failed",
                             "error": str(exc)})

    if reference_v is not None:
        ref_norm = norm_l2(reference_v)
        for r in rows:
            if r["status"] != "ok":
                continue
            try:
                final_v = _final_velocity(Path(r["run_dir"]))
                shear = leray_project(final_v).solenoidal
                r["deviation_l2"] = norm_l2(shear - reference_v) / ref_norm
            except Exception as exc:
                r["status"] = "failed"
                r["error"] = f"deviation: {exc}"

    def _loglog_slope(pts):
        pts = [(x, y) for x, y in pts if x and y and x > 0 and y > 0]
        if len(pts) < 2:
            return None
        return float(np.polyfit(np.log10([p[0] for p in pts]),
                                np.log10([p[1] for p in pts]), 1)[0])

    ok_rows = [r for r in rows if r["status"] == "ok"]
    slope = None
    if axis == "amplitude":
        slope = _loglog_slope(
            [(r["value"], r.get("maxwell_distance")) for r in ok_rows])
    elif axis == "lambda":
        slope = _loglog_slope(
            [(r.get("delta"), r.get("deviation_l2")) for r in ok_rows])

    header = ["axis", "value", "status", "phase_speed", "decay_rate",
              "maxwell_distance", "delta", "deviation_l2", "slope_estimate"]
    lines = [",".join(header)]
    for r in rows:
        r["slope_estimate"] = slope
        cells = []
        for h in header:
            val = r.get(h)
            cells.append("" if val is None else
                         (repr(val) if isinstance(val, float) else str(val)))
        lines.append(",".join(cells))
    atomic_write_text(out / "sweep.csv", "\n".join(lines) + "\n")

    summary = {
        "axis": axis,
        "values": values,
        "rows": rows,
        "slope_estimate": slope,
        "partial": any(r["status"] != "ok" for r in rows),
    }
    atomic_write_text(out / "sweep_summary.json",
                      json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return summary


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _error_json(exc: Exception) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="metacont",
        description="Batch runner for the elastic-fluid simulator and its "
                    "electromagnetic-law verification suites.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured simulation")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)

    p_verify = sub.add_parser("verify", help="run the registered check suite")
    p_verify.add_argument("--level", choices=("quick", "full"), default="quick")
    p_verify.add_argument("--tamper", default=None, help=argparse.SUPPRESS)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated numeric values")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--out", default=None)

    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            config = load_config(args.config, out_dir=args.out)
            summary, _ = run(config)
            print(json.dumps(summary, sort_keys=True, indent=2))
            return 0
        if args.command == "verify":
            code, _ = verify(level=args.level, tamper=args.tamper)
            return code
        if args.command == "sweep":
            doc = json.loads(Path(args.config).read_text())
            try:
                values = [float(v) for v in args.values.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad --values: {exc}") from exc
            out_dir = args.out or doc.get("outputs", {}).get("out_dir", "out")
            summary = sweep(doc, args.axis, values, out_dir, jobs=args.jobs)
            print(json.dumps({k: v for k, v in summary.items() if k != "rows"},
                             sort_keys=True, indent=2))
            return 1 if summary["partial"] else 0
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(_error_json(exc), file=sys.stderr)
        return 2
    except (dynamics.IntegrationError, dynamics.StepSizeError,
            scenarios.ScenarioError, scenarios.FitError, ValueError) as exc:
        print(_error_json(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
