"""Command-line front end: evolve | trajectories | check.

Configs are flat ``key = value`` text files with dotted keys; ``#`` starts
a comment. Unknown keys, duplicate keys, bad values and violated
preconditions are all reported with the offending line number and exit
with status 2. Numerical failures during a run exit with status 3. On any
failure nothing is written to the output file.

Floating-point fields in the CSV outputs are printed with nine digits
after the decimal point so reruns are comparable at the byte level; empty
fields mark quantities that are undefined at that point rather than an
error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from .analysis import compare_models, early_time_check, singlet_probability
from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    NumericalFailureError,
    SingularProjectionError,
    StepSizeError,
    UnsupportedModelError,
)
from .master import (
    Model,
    ModelSpec,
    TimeGrid,
    analytic_eq1,
    analytic_eq2,
    analytic_eq3,
    integrate,
)
from .spincore import (
    MAX_NUCLEI,
    PRESETS,
    PROJECTION_CUTOFF,
    build_spin_system,
    density_from_preset,
    zeeman_hamiltonian,
)
from .trajectory import MAX_K_DT, TrajectoryConfig, run_ensemble

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

EVOLVE_HEADER = "t,tr_eq1,ps_eq1norm,ps_eq2,ps_eq3,dist_eq2_eq3,eff_rate_eq2"
TRAJ_HEADER = "t,n_unrec,survival,survival_se,w0_frac,ps_nr,ps_nr_se"

_CONFIG_ERRORS = (
    ConfigError,
    CapacityError,
    ContractError,
    StepSizeError,
    UnsupportedModelError,
)


@dataclass
class RunConfig:
    """Fully resolved run parameters; defaults already substituted."""

    n_nuclei: int = 0
    k_s: float = 0.0
    initial_state: str = "ud"
    hamiltonian: str | None = None
    omega1: float = 0.0
    omega2: float = 0.0
    t_max: float = 0.0
    dt: float = 0.0
    stride: int = 10
    n_traj: int = 100_000
    mc_dt: float = 0.0
    seed: int = 42
    workers: int = 1
    out_path: str | None = None

    def system(self):
        return build_spin_system(self.n_nuclei)

    def model_spec(self, system) -> ModelSpec:
        h = None
        if self.hamiltonian == "zeeman":
            h = zeeman_hamiltonian(system, self.omega1, self.omega2)
        return ModelSpec(system=system, k_s=self.k_s, hamiltonian=h)

    def grid(self) -> TimeGrid:
        return TimeGrid(self.t_max, self.dt, self.stride)

    def trajectory_config(self) -> TrajectoryConfig:
        return TrajectoryConfig(
            n_traj=self.n_traj,
            dt=self.mc_dt,
            t_max=self.t_max,
            seed=self.seed,
            record_stride=self.stride,
        )


def _to_int(raw: str) -> int:
    return int(raw, 10)


def _to_float(raw: str) -> float:
    return float(raw)


def _to_str(raw: str) -> str:
    return raw.strip("\"'")


_SCHEMA = {
    "system.n_nuclei": _to_int,
    "model.k_s": _to_float,
    "model.initial_state": _to_str,
    "model.hamiltonian": _to_str,
    "model.zeeman.omega1": _to_float,
    "model.zeeman.omega2": _to_float,
    "run.t_max": _to_float,
    "run.dt": _to_float,
    "run.stride": _to_int,
    "mc.n_traj": _to_int,
    "mc.dt": _to_float,
    "mc.seed": _to_int,
    "mc.workers": _to_int,
    "output.path": _to_str,
}


def parse_config(path: str) -> RunConfig:
    """Read and validate a config file; every complaint carries its line."""
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.readlines()

    entries: dict[str, tuple[object, int]] = {}
    for lineno, raw in enumerate(raw_lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(
                f"{path}:{lineno}: duplicate key {key!r} "
                f"(first set on line {entries[key][1]})"
            )
        try:
            parsed = _SCHEMA[key](value)
        except ValueError:
            kind = "integer" if _SCHEMA[key] is _to_int else "number"
            raise ConfigError(
                f"{path}:{lineno}: {key}: expected {kind}, got {value!r}"
            ) from None
        entries[key] = (parsed, lineno)

    def _get(key: str, default):
        return entries[key][0] if key in entries else default

    def _where(key: str) -> str:
        return f"{path}:{entries[key][1]}" if key in entries else path

    def _fail(key: str, message: str):
        raise ConfigError(f"{_where(key)}: {key}: {message}")

    if "model.k_s" not in entries:
        raise ConfigError(f"{path}: missing required key model.k_s")
    k_s = entries["model.k_s"][0]
    if k_s <= 0:
        _fail("model.k_s", f"must be positive, got {k_s}")

    cfg = RunConfig(k_s=k_s)
    cfg.n_nuclei = _get("system.n_nuclei", 0)
    if not 0 <= cfg.n_nuclei <= MAX_NUCLEI:
        _fail("system.n_nuclei", f"must be in [0, {MAX_NUCLEI}], got {cfg.n_nuclei}")
    cfg.initial_state = _get("model.initial_state", "ud")
    if cfg.initial_state not in PRESETS:
        _fail(
            "model.initial_state",
            f"unknown preset {cfg.initial_state!r}; expected one of {PRESETS}",
        )
    cfg.hamiltonian = _get("model.hamiltonian", None)
    if cfg.hamiltonian is not None and cfg.hamiltonian != "zeeman":
        _fail(
            "model.hamiltonian",
            f"only the 'zeeman' builder is supported, got {cfg.hamiltonian!r}",
        )
    for key in ("model.zeeman.omega1", "model.zeeman.omega2"):
        if key in entries and cfg.hamiltonian != "zeeman":
            _fail(key, "requires model.hamiltonian = zeeman")
    cfg.omega1 = _get("model.zeeman.omega1", 0.0)
    cfg.omega2 = _get("model.zeeman.omega2", 0.0)

    cfg.t_max = _get("run.t_max", 5.0 / k_s)
    if cfg.t_max <= 0:
        _fail("run.t_max", f"must be positive, got {cfg.t_max}")
    cfg.dt = _get("run.dt", 1e-3 / k_s)
    if cfg.dt <= 0:
        _fail("run.dt", f"must be positive, got {cfg.dt}")
    if cfg.dt > cfg.t_max:
        _fail("run.dt", f"dt={cfg.dt} exceeds t_max={cfg.t_max}")
    cfg.stride = _get("run.stride", 10)
    if cfg.stride < 1:
        _fail("run.stride", f"must be >= 1, got {cfg.stride}")

    cfg.n_traj = _get("mc.n_traj", 100_000)
    if cfg.n_traj < 1:
        _fail("mc.n_traj", f"must be >= 1, got {cfg.n_traj}")
    cfg.mc_dt = _get("mc.dt", 1e-3 / k_s)
    if cfg.mc_dt <= 0:
        _fail("mc.dt", f"must be positive, got {cfg.mc_dt}")
    if cfg.mc_dt > cfg.t_max:
        _fail("mc.dt", f"dt={cfg.mc_dt} exceeds t_max={cfg.t_max}")
    if k_s * cfg.mc_dt > MAX_K_DT:
        _fail("mc.dt", f"k_s*dt = {k_s * cfg.mc_dt:.4g} exceeds {MAX_K_DT}")
    cfg.seed = _get("mc.seed", 42)
    if not 0 <= cfg.seed < 2**64:
        _fail("mc.seed", f"must fit in u64, got {cfg.seed}")
    cfg.workers = _get("mc.workers", 1)
    if cfg.workers < 1:
        _fail("mc.workers", f"must be >= 1, got {cfg.workers}")
    cfg.out_path = _get("output.path", None)
    return cfg


def _fmt(x) -> str:
    """Nine digits after the point; empty string for an undefined value."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return f"{x:.9f}"


def cmd_evolve(cfg: RunConfig) -> str:
    """Integrate all applicable models and render the comparison CSV."""
    system = cfg.system()
    spec = cfg.model_spec(system)
    rho0 = density_from_preset(system, cfg.initial_state)
    report = compare_models(rho0, spec, cfg.grid())
    lines = [EVOLVE_HEADER]
    for i, t in enumerate(report.times):
        lines.append(
            ",".join(
                (
                    _fmt(t),
                    _fmt(report.trace_eq1[i]),
                    _fmt(report.ps_eq1norm[i]),
                    _fmt(report.ps_eq2[i]),
                    _fmt(report.ps_eq3[i]),
                    _fmt(report.dist_eq2_eq3[i]),
                    _fmt(report.effective_rate_eq2[i]),
                )
            )
        )
    return "\n".join(lines) + "\n"


def cmd_trajectories(cfg: RunConfig) -> str:
    """Run the jump ensemble and render the statistics CSV."""
    system = cfg.system()
    spec = cfg.model_spec(system)
    rho0 = density_from_preset(system, cfg.initial_state)
    est = run_ensemble(rho0, spec, cfg.trajectory_config(), workers=cfg.workers)
    lines = [TRAJ_HEADER]
    for i, t in enumerate(est.times):
        lines.append(
            ",".join(
                (
                    _fmt(t),
                    str(int(est.n_unrec[i])),
                    _fmt(est.survival_frac[i]),
                    _fmt(est.survival_se[i]),
                    _fmt(est.w0_frac[i]),
                    _fmt(est.p_singlet_nr[i]),
                    _fmt(est.p_singlet_nr_se[i]),
                )
            )
        )
    return "\n".join(lines) + "\n"


def _oracle_errors(system, spec, rho0, grid) -> dict:
    """Sup-norm integrator-versus-closed-form error per model."""
    oracles = {
        "oracle_max_error_eq1": (Model.EQ1_TRACED, analytic_eq1),
        "oracle_max_error_eq2": (Model.EQ2_NORMALIZED, analytic_eq2),
        "oracle_max_error_eq3": (Model.EQ3_MIXTURE, analytic_eq3),
    }
    out = {}
    qt = system.qt
    eq3_defined = np.trace(qt @ rho0 @ qt).real > PROJECTION_CUTOFF
    for key, (model, closed_form) in oracles.items():
        if model is Model.EQ3_MIXTURE and not eq3_defined:
            out[key] = None
            continue
        sol = integrate(model, rho0, spec, grid)
        worst = 0.0
        for t, state in zip(sol.times, sol.states):
            ref = closed_form(system, rho0, spec.k_s, t)
            worst = max(worst, float(np.abs(state - ref).max()))
        out[key] = worst
    return out


def _sigma(diff: float, se: float) -> float | None:
    if math.isnan(se):
        return None
    if se == 0.0:
        return 0.0 if diff == 0.0 else None
    return abs(diff) / se


def cmd_check(cfg: RunConfig) -> str:
    """Self-check report: early-time defects, oracle errors, MC agreement."""
    system = cfg.system()
    spec = cfg.model_spec(system)
    rho0 = density_from_preset(system, cfg.initial_state)
    grid = cfg.grid()

    et = early_time_check(rho0, spec, cfg.dt)
    report = {
        "defect_eq2": et.defect_eq2,
        "defect_eq3": et.defect_eq3,
        "recombined_fraction_x": et.recombined_fraction_x,
    }
    report.update(_oracle_errors(system, spec, rho0, grid))

    est = run_ensemble(rho0, spec, cfg.trajectory_config(), workers=cfg.workers)
    i_star = int(np.argmin(np.abs(est.times - 1.0 / cfg.k_s)))
    t_star = float(est.times[i_star])
    ps_mc = est.p_singlet_nr[i_star]
    se = est.p_singlet_nr_se[i_star]
    if math.isnan(ps_mc):
        report["mc_vs_eq2_sigma"] = None
        report["mc_vs_eq3_sigma"] = None
    else:
        ps2 = singlet_probability(
            system, analytic_eq2(system, rho0, cfg.k_s, t_star)
        )
        report["mc_vs_eq2_sigma"] = _sigma(ps_mc - ps2, se)
        if report["oracle_max_error_eq3"] is None:
            report["mc_vs_eq3_sigma"] = None
        else:
            ps3 = singlet_probability(
                system, analytic_eq3(system, rho0, cfg.k_s, t_star)
            )
            report["mc_vs_eq3_sigma"] = _sigma(ps_mc - ps3, se)
    return json.dumps(report, indent=2) + "\n"


_COMMANDS = {
    "evolve": cmd_evolve,
    "trajectories": cmd_trajectories,
    "check": cmd_check,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinjump",
        description="Spin-selective recombination models and jump Monte Carlo.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("evolve", "integrate the kinetic models and write a comparison CSV"),
        ("trajectories", "run the jump ensemble and write a statistics CSV"),
        ("check", "write a JSON self-check report"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the config file")
        p.add_argument("--out", help="output path, overrides output.path")
        p.add_argument("--seed", type=int, help="RNG seed, overrides mc.seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError(f"--seed must fit in u64, got {args.seed}")
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_path = args.out
        if cfg.out_path is None:
            raise ConfigError("no output path: set output.path or pass --out")
        text = _COMMANDS[args.command](cfg)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailureError, SingularProjectionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    with open(cfg.out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return EXIT_OK


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())
