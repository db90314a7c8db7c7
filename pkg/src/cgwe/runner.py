"""Config-driven experiment runner: strict schemas, run records and plot data.

Exit codes: 0 every embedded check passed, 1 a check failed, 2 schema
violation (nothing written), 3 numerical failure (record written with detail).
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .cgmf import (CondensateConvergenceError, Grid, GridFunction, MeanFieldProblem,
                   cgwe_propagate, default_initial, make_kernel, solve_condensate,
                   solve_excitation, write_gridfunction, write_gridfunction_csv)
from .effective_mass import (closed_form_d_limit, hydrogenic_chi_tilde, k_matrix_and_spectrum,
                             mass_tensor)
from .golden import GOLDEN
from .model_core import (diagonalize, expectation, long_time_average, random_hermitian,
                         random_model)
from .two_scale import compare_full_vs_cgwe, gaussian_envelope, harmonic_v2
from .vmc import (FAMILIES, CubeSpec, gaussian_pair, harmonic_trap, mc_energy, optimize_lambda)

SUBCOMMANDS = ("theorem-check", "mass-tensor", "cgmf-solve", "cgmf-excite", "cgwe-prop",
               "two-scale", "vmc")
EXIT_PASS, EXIT_FAIL, EXIT_SCHEMA, EXIT_NUMERICAL = 0, 1, 2, 3


class SchemaError(ValueError):
    pass


# --- parameter schemas -----------------------------------------------------------

def _build(cls, doc: Any, where: str):
    """Instantiate dataclass ``cls`` from a dict, rejecting unknown keys."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise SchemaError(f"{where}: expected an object, got {type(doc).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise SchemaError(f"{where}: unknown keys {unknown}; allowed {sorted(known)}")
    kwargs = {}
    for name, value in doc.items():
        sub = _NESTED.get((cls, name))
        if sub is not None and value is not None:
            value = _build(sub, value, f"{where}.{name}")
        kwargs[name] = value
    try:
        obj = cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    return obj


@dataclass(frozen=True)
class GridParams:
    extents: list = field(default_factory=lambda: [20.0])
    points: list = field(default_factory=lambda: [256])
    boundary: str = "box"

    def build(self) -> Grid:
        return Grid(tuple(self.extents), tuple(self.points), self.boundary)


@dataclass(frozen=True)
class KernelParams:
    name: str = "harmonic"
    params: dict = field(default_factory=lambda: {"k": 1.0})


@dataclass(frozen=True)
class GaussianPacketParams:
    center: float = 0.0
    width: float = 1.0
    momentum: float = 0.0


@dataclass(frozen=True)
class TheoremCheckParams:
    dim: int = 8
    n_models: int = 10
    t_factor: float = 1e4          # T = t_factor * hbar / zeta_1
    eta_factor: float = 1e-3       # eta = eta_factor * zeta_1 / hbar
    tol: float = 1e-3


@dataclass(frozen=True)
class MassTensorParams:
    preset: str = "hydrogenic"     # hydrogenic | random
    dim: int = 10
    n_particles: int = 4
    n_components: int = 3
    n_max: int = 2
    eta_factor: float | None = None   # None: the eta -> 0+ limit

    def __post_init__(self):
        if self.preset not in ("hydrogenic", "random"):
            raise ValueError("preset must be 'hydrogenic' or 'random'")


@dataclass(frozen=True)
class CgmfParams:
    grid: GridParams = field(default_factory=GridParams)
    kernel: KernelParams = field(default_factory=KernelParams)
    mu_tilde: list = field(default_factory=lambda: [[-0.2919]])
    n_particles: int = 2
    tol: float = 1e-10
    max_iter: int = 500
    damping: float = 0.5
    count: int = 5                 # excitations requested (cgmf-excite)
    t_final: float = 1.0           # cgwe-prop
    dt: float | None = None        # cgwe-prop; None: 0.1 / lambda_max
    save_every: int = 10
    initial: GaussianPacketParams | None = None   # cgwe-prop; None: start from the condensate

    def problem(self) -> MeanFieldProblem:
        return MeanFieldProblem(self.n_particles, make_kernel(self.kernel.name, **self.kernel.params),
                                np.asarray(self.mu_tilde, dtype=float))


@dataclass(frozen=True)
class TwoScaleParams:
    epsilons: list = field(default_factory=lambda: [1 / 8, 1 / 16, 1 / 32])
    t2: float = 1.0
    v0: float = 2.0
    kappa: float = 1.0
    domain_r: float = 24.0
    points_per_cell: int = 16
    envelope: GaussianPacketParams = field(default_factory=lambda: GaussianPacketParams(1.0, 2.0, 0.0))
    width_factor: float = 2.0
    dt: float = 0.5
    min_slope: float = 0.8
    max_width_change: float = 0.1


@dataclass(frozen=True)
class CubeParams:
    center: list = field(default_factory=lambda: [0.0])
    edge: float = 12.0
    mode: str = "hard"


@dataclass(frozen=True)
class PairParams:
    strength: float = 1.0
    range: float = 1.0


@dataclass(frozen=True)
class VmcParams:
    family: str = "gaussian"
    n_particles: int = 2
    n_star: int = 0
    lambda0: list = field(default_factory=lambda: [0.1, 1.4])
    bounds: list = field(default_factory=lambda: [[0.01, 1.0], [0.5, 2.0]])
    optimize: bool = True
    budget: int = 60
    n_samples_opt: int = 40_000
    n_samples: int = 100_000
    omega: float = 1.0
    pair: PairParams | None = None
    cube: CubeParams | None = None
    reference_energy: float | None = None   # compared within 3 standard errors when given

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {sorted(FAMILIES)}")


PARAMS = {
    "theorem-check": TheoremCheckParams,
    "mass-tensor": MassTensorParams,
    "cgmf-solve": CgmfParams,
    "cgmf-excite": CgmfParams,
    "cgwe-prop": CgmfParams,
    "two-scale": TwoScaleParams,
    "vmc": VmcParams,
}

_NESTED = {
    (CgmfParams, "grid"): GridParams,
    (CgmfParams, "kernel"): KernelParams,
    (CgmfParams, "initial"): GaussianPacketParams,
    (TwoScaleParams, "envelope"): GaussianPacketParams,
    (VmcParams, "pair"): PairParams,
    (VmcParams, "cube"): CubeParams,
}


@dataclass(frozen=True)
class ExperimentConfig:
    subcommand: str
    parameters: Any
    seed: int = 0
    output_dir: str = "runs"

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "parameters": _jsonable(dataclasses.asdict(self.parameters)),
                "seed": self.seed, "output_dir": self.output_dir}


def parse_config(doc: Any, subcommand: str | None = None, seed: int | None = None,
                 output_dir: str | None = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise SchemaError("config must be a JSON object")
    allowed = {"subcommand", "parameters", "seed", "output_dir"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SchemaError(f"config: unknown keys {unknown}; allowed {sorted(allowed)}")
    sub = doc.get("subcommand", subcommand)
    if subcommand is not None and sub != subcommand:
        raise SchemaError(f"config is for {sub!r} but {subcommand!r} was requested")
    if sub not in PARAMS:
        raise SchemaError(f"unknown subcommand {sub!r}; choose from {list(SUBCOMMANDS)}")
    params = _build(PARAMS[sub], doc.get("parameters"), "parameters")
    s = doc.get("seed", 0) if seed is None else seed
    if not isinstance(s, int) or isinstance(s, bool):
        raise SchemaError("seed must be an integer")
    out = doc.get("output_dir", "runs") if output_dir is None else output_dir
    return ExperimentConfig(sub, params, s, str(out))


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc, **overrides)


# --- run record --------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


@dataclass
class RunRecord:
    config: dict
    results: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)     # name -> {"columns": [...], "rows": [[...]]}
    checks: list = field(default_factory=list)     # {"name", "passed", "value", "threshold"}
    golden: list = field(default_factory=list)
    wall_clock: float = 0.0
    version: str = __version__
    status: str = "pass"
    error: str | None = None

    def add_check(self, name: str, passed: bool, value, threshold) -> None:
        self.checks.append({"name": name, "passed": bool(passed), "value": _jsonable(value),
                            "threshold": _jsonable(threshold)})

    def add_series(self, name: str, columns: list, rows) -> None:
        self.series[name] = {"columns": list(columns), "rows": _jsonable([list(r) for r in rows])}

    def to_json(self) -> str:
        return json.dumps(_jsonable(dataclasses.asdict(self)), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))

    @property
    def exit_code(self) -> int:
        if self.status == "error":
            return EXIT_NUMERICAL
        return EXIT_PASS if all(c["passed"] for c in self.checks) else EXIT_FAIL


def atomic_write(path: str | Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(columns: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def emit_plot_data(record: RunRecord, kind: str, out_dir: str | Path | None = None) -> Path:
    """Write one series of ``record`` as headered CSV ``<kind>.csv``."""
    if kind not in record.series:
        raise KeyError(f"record has no series {kind!r}; available: {sorted(record.series)}")
    s = record.series[kind]
    out = Path(out_dir if out_dir is not None else record.config["output_dir"]) / f"{kind}.csv"
    atomic_write(out, _csv_text(s["columns"], s["rows"]))
    return out


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("CGWE_WORKERS", "1")))
    except ValueError:
        return 1


def _mapper():
    n = worker_count()
    if n == 1:
        return map, None
    pool = ProcessPoolExecutor(max_workers=n)
    return pool.map, pool


# --- subcommands --------------------------------------------------------------------

def _theorem_check(cfg: ExperimentConfig, rec: RunRecord, out: Path) -> None:
    p = cfg.parameters
    seeds = np.random.SeedSequence(cfg.seed).spawn(p.n_models)
    rows = []
    for i, sq in enumerate(seeds):
        rng = np.random.default_rng(sq)
        h0 = random_hermitian(p.dim, rng)
        omega = random_hermitian(p.dim, rng)
        spectrum = diagonalize(h0)
        zeta1 = spectrum.gap
        eta = p.eta_factor * zeta1
        ground = spectrum.ground
        target = ground * expectation(ground, omega)
        T = p.t_factor / zeta1
        r1 = float(np.linalg.norm(long_time_average(spectrum, omega, T, eta) - target))
        r2 = float(np.linalg.norm(long_time_average(spectrum, omega, 2 * T, eta) - target))
        rows.append([i, T, r1, r2, r2 / r1])
    rec.add_series("residual", ["model", "T", "residual_T", "residual_2T", "ratio"], rows)
    worst = max(r[2] for r in rows)
    ratios = [r[4] for r in rows]
    rec.results.update(max_residual=worst, ratios=ratios)
    rec.add_check("residual <= tol", worst <= p.tol, worst, p.tol)
    rec.add_check("residual halves per doubling of T (+-20%)",
                  all(0.4 <= q <= 0.6 for q in ratios), [min(ratios), max(ratios)], [0.4, 0.6])


def _mass_tensor(cfg: ExperimentConfig, rec: RunRecord, out: Path) -> None:
    p = cfg.parameters
    if p.preset == "hydrogenic":
        chi = hydrogenic_chi_tilde(p.n_max)
        c = float(chi[0, 0])
        km = k_matrix_and_spectrum(p.n_particles, c)
        rec.results.update(chi_tilde=chi, mu_tilde=km.mu_mean_field, m_eff=km.m_eff,
                           k_spectrum=km.d, closed_form_d=km.closed_form_d,
                           closed_form_d_limit=closed_form_d_limit())
        for name, val in (("chi_tilde_hydrogenic", c), ("chi_tilde_rounded", c),
                          ("mu_tilde_mean_field", km.mu_mean_field), ("m_eff_upper", km.m_eff),
                          ("closed_form_d_limit", closed_form_d_limit())):
            if p.n_max != 2 and name == "chi_tilde_hydrogenic":
                continue
            g = GOLDEN[name].compare(name, val)
            rec.golden.append(g)
            rec.add_check(f"golden {name}", g["passed"], val, [g["golden"], g["tol"]])
        rec.add_series("spectrum", ["index", "d_orthogonal", "d_closed_form"],
                       [[i + 1, float(a), float(b)] for i, (a, b) in
                        enumerate(zip(km.d[::-1], km.closed_form_d))])
    else:
        system = random_model(p.dim, p.n_particles, p.n_components, seed=cfg.seed)
        spectrum = diagonalize(system)
        eta = None if p.eta_factor is None else p.eta_factor * spectrum.gap
        t = mass_tensor(system, spectrum, eta)
        atomic_write(out / "mass_tensor.json", t.to_json())
        herm = np.abs(t.chi_full.reshape(p.n_particles * p.n_components, -1)
                      - t.chi_full.reshape(p.n_particles * p.n_components, -1).conj().T).max()
        rec.results.update(label_independent=t.label_independent, hermiticity_residual=herm,
                           eta=eta)
        rows = []
        for idx in np.ndindex(*t.mu.shape):
            rows.append(list(idx) + [float(t.mu[idx].real), float(t.mu[idx].imag)])
        rec.add_series("tensor", ["l", "a", "lp", "ap", "mu_re", "mu_im"], rows)
        if eta is None:
            rec.add_check("chi~ Hermitian", herm <= 1e-12, herm, 1e-12)


def _condensate(cfg, rec, out):
    p = cfg.parameters
    grid = p.grid.build()
    problem = p.problem()
    sol = solve_condensate(problem, grid, tol=p.tol, max_iter=p.max_iter, damping=p.damping)
    rec.results.update(e_tilde=sol.e_tilde, e_tilde_prime=sol.e_tilde_prime,
                       iterations=sol.iterations, residual=sol.residual)
    h = sol.history
    rec.add_series("scf", ["iteration", "residual", "E_tilde"],
                   list(zip(h["iteration"], h["residual"], h["e_tilde"])))
    rec.add_check("SCF converged", sol.converged, sol.iterations, p.max_iter)
    return problem, grid, sol


def _cgmf_solve(cfg, rec, out):
    _, grid, sol = _condensate(cfg, rec, out)
    write_gridfunction(out / "condensate.cgwf", sol.a)
    if grid.dim == 1:
        write_gridfunction_csv(out / "condensate.csv", sol.a)


def _cgmf_excite(cfg, rec, out):
    problem, grid, sol = _condensate(cfg, rec, out)
    pairs = solve_excitation(problem, sol, cfg.parameters.count)
    overlaps = [abs(sol.a.inner(b)) for b, _ in pairs]
    rec.add_series("spectrum", ["index", "eigenvalue", "overlap_with_A"],
                   [[i, lam, ov] for i, ((_, lam), ov) in enumerate(zip(pairs, overlaps))])
    rec.results.update(eigenvalues=[lam for _, lam in pairs])
    rec.add_check("<A|B> <= 1e-10", max(overlaps) <= 1e-10, max(overlaps), 1e-10)
    for i, (b, _) in enumerate(pairs):
        write_gridfunction(out / f"excitation_{i}.cgwf", b)


def _cgwe_prop(cfg, rec, out):
    p = cfg.parameters
    problem = p.problem()
    grid = p.grid.build()
    if p.initial is None:
        _, _, sol = _condensate(cfg, rec, out)
        w0 = sol.a
    else:
        x = grid.mesh()[0]
        g = p.initial
        w0 = GridFunction(grid, np.exp(-0.5 * ((x - g.center) / g.width) ** 2 + 1j * g.momentum * x))
        w0 = w0.normalized()
    from .cgmf import CgmfOperator, hartree_potential
    lam = CgmfOperator(problem, grid).kinetic_bound() + np.abs(hartree_potential(problem, w0).values).max()
    dt = p.dt if p.dt is not None else 0.1 / lam
    traj = cgwe_propagate(problem, w0, p.t_final, dt, save_every=p.save_every)
    rec.add_series("trajectory", ["t", "norm", "energy"],
                   list(zip(traj.times, traj.norms, traj.energies)))
    nd = float(np.abs(traj.norms - 1).max())
    ed = float(np.abs(traj.energies - traj.energies[0]).max() / max(abs(traj.energies[0]), 1e-300))
    rec.results.update(norm_drift=nd, energy_drift=ed, dt=dt, steps=int(round(p.t_final / dt)))
    rec.add_check("norm drift <= 1e-8 per unit time", nd <= 1e-8 * max(p.t_final, 1.0), nd,
                  1e-8 * max(p.t_final, 1.0))
    rec.add_check("relative energy drift <= 1e-6", ed <= 1e-6, ed, 1e-6)
    write_gridfunction(out / "final_state.cgwf", traj.states[-1])


def _two_scale(cfg, rec, out):
    p = cfg.parameters
    env = p.envelope
    mapper, pool = _mapper()
    try:
        rep = compare_full_vs_cgwe(p.epsilons, p.t2, p.v0, p.domain_r, p.points_per_cell,
                                   harmonic_v2(p.kappa),
                                   gaussian_envelope(env.center, env.width, env.momentum),
                                   p.width_factor, p.dt, mapper=mapper)
    finally:
        if pool is not None:
            pool.shutdown()
    rec.results.update(rep.to_dict())
    rec.add_series("convergence", ["epsilon", "err_norm", "err_half_width", "err_smoothed",
                                   "err_smoothed_half_width"],
                   list(zip(rep.epsilon, rep.err, rep.err_half_width, rep.err_smoothed,
                            rep.err_smoothed_half_width)))
    change = float(rep.half_width_change[-1])
    change_s = float(rep.smoothed_half_width_change[-1])
    rec.add_check("err strictly decreasing", rep.strictly_decreasing, rep.err, "decreasing")
    rec.add_check("slope >= min_slope", rep.slope >= p.min_slope, rep.slope, p.min_slope)
    rec.add_check("width-halving change at smallest eps", change < p.max_width_change, change,
                  p.max_width_change)
    rec.add_check("width-halving change at smallest eps, window-matched reference",
                  change_s < p.max_width_change, change_s, p.max_width_change)


def _vmc(cfg, rec, out):
    p = cfg.parameters
    pair = gaussian_pair(p.pair.strength, p.pair.range) if p.pair else None
    ham = harmonic_trap(p.omega, 1, pair)
    cube = CubeSpec(tuple(p.cube.center), p.cube.edge, p.cube.mode) if p.cube else None
    family = FAMILIES[p.family](p.n_particles) if p.family == "hermite" else \
        FAMILIES[p.family](p.n_particles, p.n_star)
    lam = np.asarray(p.lambda0, dtype=float)
    if p.optimize:
        opt = optimize_lambda(family, ham, lam, p.bounds, budget=p.budget,
                              n_samples=p.n_samples_opt, seed=cfg.seed, cube=cube)
        lam = opt.lam
        rec.add_series("trace", ["step"] + [f"lambda_{i}" for i in range(len(lam))] + ["energy"],
                       [[i] + list(l) + [e] for i, (l, e) in enumerate(opt.trace)])
        rec.results.update(budget_exhausted=opt.budget_exhausted, evaluations=opt.evaluations)
        trace = [e for _, e in opt.trace]
        rec.add_check("energy trace non-increasing", all(np.diff(trace) <= 0), trace[-1], trace[0])
    est = mc_energy(family(lam), ham, cube, p.n_samples, seed=cfg.seed + 1)
    rec.results.update(lambda_star=lam, estimate=est.to_dict())
    rec.add_series("estimate", ["value", "std_error", "n_samples", "acceptance"],
                   [[est.value, est.std_error, est.n_samples, est.acceptance]])
    if p.reference_energy is not None:
        dev = abs(est.value - p.reference_energy)
        rec.add_check("within 3 standard errors of reference", dev <= 3 * est.std_error,
                      dev, 3 * est.std_error)


DISPATCH = {
    "theorem-check": _theorem_check,
    "mass-tensor": _mass_tensor,
    "cgmf-solve": _cgmf_solve,
    "cgmf-excite": _cgmf_excite,
    "cgwe-prop": _cgwe_prop,
    "two-scale": _two_scale,
    "vmc": _vmc,
}

NUMERICAL_ERRORS = (CondensateConvergenceError, FloatingPointError, np.linalg.LinAlgError,
                    ArithmeticError, RuntimeError, ValueError)


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunRecord:
    """Dispatch to the owning module and persist ``record.json`` plus CSV tables."""
    out = Path(cfg.output_dir)
    rec = RunRecord(config=cfg.to_dict())
    if write:
        out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        DISPATCH[cfg.subcommand](cfg, rec, out)
    except NUMERICAL_ERRORS as exc:
        rec.status = "error"
        rec.error = f"{type(exc).__name__}: {exc}"
        hist = getattr(exc, "history", None)
        if hist:
            rec.add_series("scf", ["iteration", "residual", "E_tilde"],
                           list(zip(hist["iteration"], hist["residual"], hist["e_tilde"])))
    rec.wall_clock = time.perf_counter() - t0
    if rec.status != "error":
        rec.status = "pass" if all(c["passed"] for c in rec.checks) else "fail"
    if write:
        atomic_write(out / "record.json", rec.to_json())
        for name in rec.series:
            emit_plot_data(rec, name, out)
    return rec

