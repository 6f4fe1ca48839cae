"""Command-line front end: ``kvnmd <command> [options]``.

Every command accepts ``--config FILE`` (flat ``key = value`` text, keys named
like the long options with ``-`` replaced by ``_``). Values given on the
command line take precedence over the file, which takes precedence over the
built-in defaults. Outputs go to ``--out``, else ``$KVNMD_OUTPUT_DIR``, else
``./kvnmd_out``. Exit status: 0 success, 1 configuration error, 2 resource
guard (grid larger than ``--budget`` amplitudes).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend
from .io import ConfigError, config_hash, parse_config, write_csv, write_json
from .readout import ResourceGuardError

OUTPUT_ENV = "KVNMD_OUTPUT_DIR"
DEFAULT_BUDGET = 1 << 28

# defaults shared by the grid-based commands
SYSTEM_DEFAULTS = {
    "potential": "coupled2", "ensemble": "nve", "nq": 32, "np": 32, "nxi": 32,
    "pmax": 6.0, "ximax": 6.0, "dt": 0.02, "T0": 1.0, "Q": 1.0, "V0": None, "eps_pot": 1.2,
}

COMMAND_DEFAULTS = {
    "vacf": {"steps": 2048},
    "gk": {"manc": "9,10,11"},
    "qpe": {"potential": "cosine1", "nq": 8, "np": 8, "dt": 0.1, "manc": "4"},
    "mlae": {"p0": None, "theta": None, "C0": 1.0, "tau": 1.0, "L": 10, "shots": 30,
             "seeds": 1000, "fit_stages": 4, "naive_max_queries": None},
    "resources": {"qsp": False, "np": 10, "nxi": 4, "eps": 1e-6, "dt": 0.01, "dp": None,
                  "nve": None, "table": False, "c1": 23.0 / 48.0, "nmax": 12},
    "stability": {"axis": "p_boundary", "values": "3,4,5,6,8", "dt_set": "0.01,0.05,0.1",
                  "tsim": 60.0, "nq": 32, "np": 64, "nxi": 64},
    "validate": {},
}

_FLOAT = {"pmax", "ximax", "dt", "T0", "Q", "V0", "eps_pot", "p0", "theta", "C0", "tau", "eps",
          "tsim", "c1"}
_INT = {"nq", "np", "nxi", "steps", "L", "shots", "seeds", "fit_stages", "dp", "nve", "nmax",
        "naive_max_queries", "seed", "budget", "workers"}
_BOOL = {"qsp", "table"}


# configuration -----------------------------------------------------------------

def _convert(key, value):
    if value is None or not isinstance(value, str):
        return value
    try:
        if key in _BOOL:
            low = value.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(value)
            return low in ("1", "true", "yes")
        if key in _INT:
            return int(value)
        if key in _FLOAT:
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def _int_list(text, key):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key} must be a comma-separated integer list, got {text!r}") from None


def _float_list(text, key):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key} must be a comma-separated number list, got {text!r}") from None


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags (highest precedence)."""
    cfg = {"seed": 0, "budget": DEFAULT_BUDGET, "workers": os.cpu_count() or 1}
    if command not in ("mlae", "resources"):
        cfg.update(SYSTEM_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[command])
    if args.config:
        for k, v in parse_config(args.config).items():
            if k not in cfg:
                raise ConfigError(f"unknown key {k!r} for command {command}")
            cfg[k] = _convert(k, v)
    for k, v in vars(args).items():
        if k in ("command", "config", "out", "func") or v is None:
            continue
        cfg[k] = v
    cfg["command"] = command
    return cfg


def output_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV) or "kvnmd_out")


def _versions() -> dict:
    import numba
    import scipy
    return {"kvnmd": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "backend": backend()}


def write_metadata(out: Path, cfg: dict, extra: dict | None = None) -> Path:
    meta = {"config": cfg, "config_hash": config_hash(cfg), "seed": cfg.get("seed"),
            "versions": _versions(), "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")}
    if extra:
        meta.update(extra)
    return write_json(out / f"{cfg['command']}_meta.json", meta)


# shared system construction ----------------------------------------------------------

def _check_pow2(n, name):
    if n < 2 or n & (n - 1):
        raise ConfigError(f"{name} must be a power of two >= 2, got {n}")
    return int(round(math.log2(n)))


def build_system(cfg: dict, extra_factor: int = 1):
    from .engine import StepConfig
    from .phase_space import encode_canonical, make_grid
    from .potentials import coupled_cosine_2p, cosine_1p

    pot = cfg["potential"]
    if pot == "cosine1":
        model = cosine_1p(1.0 if cfg["V0"] is None else cfg["V0"])
    elif pot == "coupled2":
        model = coupled_cosine_2p(5.0 if cfg["V0"] is None else cfg["V0"], cfg["eps_pot"])
    else:
        raise ConfigError(f"potential must be cosine1 or coupled2, got {pot!r}")
    ens = str(cfg["ensemble"]).upper()
    if ens not in ("NVE", "NVT"):
        raise ConfigError(f"ensemble must be nve or nvt, got {cfg['ensemble']!r}")
    if not cfg["dt"] > 0:
        raise ConfigError("dt must be positive")
    nq, npb = _check_pow2(cfg["nq"], "nq"), _check_pow2(cfg["np"], "np")
    nxb = _check_pow2(cfg["nxi"], "nxi") if ens == "NVT" else None
    n = model.n_particles
    size = (cfg["nq"] * cfg["np"]) ** n * (cfg["nxi"] if ens == "NVT" else 1) * extra_factor
    if size > cfg["budget"]:
        raise ResourceGuardError(f"run needs {size} amplitudes, budget is {cfg['budget']}")
    grid = make_grid(n, nq, npb, cfg["pmax"], nxb, cfg["ximax"] if ens == "NVT" else None)
    step = StepConfig(dt=cfg["dt"], ensemble=ens, T0=cfg["T0"], Q=cfg["Q"])
    psi = encode_canonical(grid, model, 1.0 / cfg["T0"], cfg["Q"] if ens == "NVT" else None)
    return grid, model, step, psi


def _flux_state(cfg):
    from .readout import flux_excite, velocity_flux
    grid, model, step, psi = build_system(cfg)
    alpha, C0 = flux_excite(psi, velocity_flux(grid, model))
    return grid, model, step, alpha, C0


# commands --------------------------------------------------------------------------

def cmd_vacf(cfg, out):
    from .readout import vacf_kvn
    if cfg["steps"] < 1:
        raise ConfigError("steps must be >= 1")
    _, model, step, alpha, C0 = _flux_state(cfg)
    ser = vacf_kvn(alpha, model, step, cfg["steps"], C0)
    path = write_csv(out / f"cvv_nq{cfg['nq']}.csv", ["t", "c"], zip(ser.t, ser.c))
    write_metadata(out, cfg, {"C0": C0})
    print(path)
    return 0


def cmd_gk(cfg, out):
    from .readout import d_bartlett, richardson, vacf_kvn
    ms = _int_list(cfg["manc"], "manc")
    if not ms or min(ms) < 1:
        raise ConfigError("manc needs positive ancilla counts")
    _, model, step, alpha, C0 = _flux_state(cfg)
    ser = vacf_kvn(alpha, model, step, 1 << max(ms), C0)
    ests = [d_bartlett(ser, m) for m in ms]
    write_csv(out / "dbart_vs_manc.csv", ["m_anc", "tau", "P0", "D_bart"],
              [(e.m_anc, e.tau, e.P0, e.D) for e in ests])
    summary = {"C0": C0, "D_bart": {str(e.m_anc): e.D for e in ests}}
    if len(set(ms)) >= 2:
        fit = richardson([(e.m_anc, e.D) for e in ests])
        summary.update(D_inf=fit.D_infinity, D_inf_stderr=fit.stderr, a1=fit.a1)
    write_json(out / "gk_summary.json", summary)
    write_metadata(out, cfg)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_qpe(cfg, out):
    from .engine import Propagator
    from .readout import p0_bartlett, qpe_statevector, vacf_kvn
    m = _int_list(cfg["manc"], "manc")
    if len(m) != 1 or m[0] < 1:
        raise ConfigError("qpe takes a single positive manc")
    m = m[0]
    _, model, step, alpha, C0 = _flux_state(cfg)
    if alpha.amp.size << m > cfg["budget"]:
        raise ResourceGuardError(f"QPE register needs {alpha.amp.size << m} amplitudes, budget is {cfg['budget']}")
    prop = Propagator(alpha.grid, model, step)
    bins = qpe_statevector(alpha, prop, m, budget=cfg["budget"])
    p0 = p0_bartlett(vacf_kvn(alpha, model, step, 1 << m, C0, prop), m)
    write_csv(out / f"qpe_bins_m{m}.csv", ["bin", "probability"], enumerate(bins))
    summary = {"P0_qpe": float(bins[0]), "P0_bartlett": p0, "abs_diff": abs(float(bins[0]) - p0)}
    write_metadata(out, cfg, summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_mlae(cfg, out):
    from .amplitude import eis_schedule, mlae_harness, naive_harness, rmse_slope, theta_from_p0
    if cfg["theta"] is not None:
        theta = cfg["theta"]
    elif cfg["p0"] is not None:
        if not 0 < cfg["p0"] < 1:
            raise ConfigError("p0 must lie in (0, 1)")
        theta = theta_from_p0(cfg["p0"])
    else:
        raise ConfigError("mlae needs --theta or --p0")
    if not 0 < theta < math.pi / 2:
        raise ConfigError("theta must lie in (0, pi/2)")
    if cfg["seeds"] < 2 or cfg["L"] < 1 or cfg["shots"] < 1:
        raise ConfigError("need seeds >= 2, L >= 1, shots >= 1")
    sch = eis_schedule(cfg["L"], cfg["shots"])
    reps = mlae_harness(theta, sch, cfg["seeds"], cfg["C0"], cfg["tau"], seed=cfg["seed"])
    nfit = min(cfg["fit_stages"], len(reps))
    slope = rmse_slope(reps[-nfit:]) if nfit >= 2 else float("nan")
    qmax = cfg["naive_max_queries"] or sch.n_queries
    shots = sorted({int(round(cfg["shots"] * 2 ** (i / 2))) for i in range(64)
                    if cfg["shots"] * 2 ** (i / 2) <= qmax})
    naive = naive_harness(theta, shots, cfg["seeds"], cfg["C0"], cfg["tau"], seed=cfg["seed"] + 1)
    naive_slope = rmse_slope(naive) if len(naive) >= 2 else float("nan")
    rows = [(f"eis_L{i + 1}", r.N_queries, r.rmse, slope) for i, r in enumerate(reps)]
    rows += [(f"naive_N{r.N_queries}", r.N_queries, r.rmse, naive_slope) for r in naive]
    write_csv(out / "rmse_vs_queries.csv", ["schedule_id", "N_queries", "rmse", "slope"], rows)
    summary = {"theta": theta, "mlae_slope": slope, "fit_stages": nfit, "naive_slope": naive_slope,
               "per_seed_final": reps[-1].per_seed}
    write_json(out / "rmse_vs_queries.json", summary)
    write_metadata(out, cfg)
    print(json.dumps({"mlae_slope": slope, "naive_slope": naive_slope,
                      "final_rmse": reps[-1].rmse, "final_queries": reps[-1].N_queries}))
    return 0


def cmd_resources(cfg, out):
    from . import resources as rs
    did = False
    if cfg["qsp"]:
        rep = rs.qsp_best_case(cfg["np"], cfg["nxi"], cfg["eps"], cfg["dt"])
        print(rep.cx_count)
        write_json(out / "qsp_cost.json", {"cx_count": rep.cx_count, "inputs": rep.inputs,
                                           "breakdown": rep.breakdown})
        did = True
    if cfg["dp"] is not None:
        d = rs.decompose_dp(cfg["dp"])
        print(f"terms={d.n_terms} weight={d.weight_sum} closed_terms={rs.n_dp_closed(cfg['dp'])} "
              f"closed_weight={rs.w_dp_closed(cfg['dp'])}")
        did = True
    if cfg["nve"] is not None:
        print(rs.nve_cx_model(cfg["nve"]))
        did = True
    if cfg["table"] or not did:
        nmax = cfg["nmax"]
        write_csv(out / "nve_cx.csv", ["n_total", "model", "cx_count"],
                  [(n, "nve", rs.nve_cx_model(n)) for n in range(3, nmax + 1)])
        write_csv(out / "nvt_cx.csv", ["n_p", "n_xi", "model", "cx_count"],
                  [(n, k, "nvt_fit", rs.nvt_cx_fit(n, k)) for k in (2, 3, 4) for n in range(2, 11)])
        write_csv(out / "h3_cx.csv", ["n_total", "model", "cx_count"],
                  rs.h3_cost_table(range(6, nmax + 1), c1=cfg["c1"], eps_qsp=cfg["eps"], dt=cfg["dt"]))
        print(out / "h3_cx.csv")
    write_metadata(out, cfg)
    return 0


def _drift_job(job):
    from .stability import drift_point
    cfg, value, dt, budget = job
    return drift_point(cfg, value, dt, budget)


def cmd_stability(cfg, out):
    from .stability import DriftResult, ScanConfig
    vals = _float_list(cfg["values"], "values")
    if cfg["axis"] in ("N_xi", "N_p"):
        vals = [int(v) for v in vals]
    try:
        sc = ScanConfig(cfg["axis"], vals, tuple(_float_list(cfg["dt_set"], "dt_set")), cfg["tsim"],
                        cfg["nq"], cfg["np"], cfg["nxi"])
        for v in vals:
            sc.point(v)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for v in vals:
        pp = sc.point(v)
        if sc.n_q * pp["n_p"] * pp["n_xi"] > cfg["budget"]:
            raise ResourceGuardError(f"scan point {v} exceeds the amplitude budget {cfg['budget']}")
    jobs = [(sc, v, dt, cfg["budget"]) for v in vals for dt in sc.dt_set]
    workers = max(1, min(cfg["workers"], len(jobs)))
    if workers == 1:
        res = [_drift_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            res = list(pool.map(_drift_job, jobs))
    results, it = [], iter(res)
    for v in vals:
        dT, Tk = {}, {}
        for dt in sc.dt_set:
            dT[dt], Tk[dt] = next(it)
        results.append(DriftResult(float(v), dT, Tk))
    path = write_csv(out / "drift_scan.csv", ["param", "dt", "delta_T"],
                     [(r.value, dt, r.delta_T[dt]) for r in results for dt in sc.dt_set])
    write_metadata(out, cfg)
    print(path)
    return 0


def cmd_validate(cfg, out):
    """Small-instance cross-checks; prints the largest deviation of each."""
    from . import resources as rs
    from .engine import Propagator, StepConfig
    from .phase_space import encode_canonical, make_grid
    from .potentials import coupled_cosine_2p, cosine_1p
    from .readout import (dense_step_matrix, eigenphase_decomposition, fejer_bins, flux_excite,
                          p0_bartlett, qpe_statevector, vacf_kvn, velocity_flux)

    report = {}
    cases = [("1p_n3_m4", cosine_1p(), make_grid(1, 3, 3, 6.0), StepConfig(dt=0.1), 4),
             ("2p_n8_m6", coupled_cosine_2p(), make_grid(2, 2, 2, 6.0), StepConfig(dt=0.02), 6)]
    for name, model, grid, step, m in cases:
        psi = encode_canonical(grid, model, 1.0)
        alpha, C0 = flux_excite(psi, velocity_flux(grid, model))
        prop = Propagator(grid, model, step)
        bins = qpe_statevector(alpha, prop, m)
        p0 = p0_bartlett(vacf_kvn(alpha, model, step, 1 << m, C0, prop), m)
        ph, w = eigenphase_decomposition(dense_step_matrix(prop), alpha.amp.ravel())
        report[f"{name}_bin0_vs_bartlett"] = abs(float(bins[0]) - p0)
        report[f"{name}_bins_vs_fejer"] = float(np.max(np.abs(bins - fejer_bins(ph, w, m))))
    pauli = 0
    for n in range(2, 7):
        d = rs.decompose_dp(n)
        pauli = max(pauli, abs(d.n_terms - rs.n_dp_closed(n)), abs(d.weight_sum - rs.w_dp_closed(n)),
                    d.odd_y_violations())
    report["pauli_count_mismatch"] = pauli
    report["qsp_example_minus_62161"] = rs.qsp_best_case(10, 4, 1e-6, 0.01).cx_count - 62161
    for k, v in report.items():
        print(f"{k}: {v:.3e}")
    write_json(out / "validate.json", report)
    write_metadata(out, cfg)
    return 0


COMMANDS = {"vacf": cmd_vacf, "gk": cmd_gk, "qpe": cmd_qpe, "mlae": cmd_mlae,
            "resources": cmd_resources, "stability": cmd_stability, "validate": cmd_validate}


# argument parsing ---------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./kvnmd_out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int, help=f"amplitude budget (default {DEFAULT_BUDGET})")
    p.add_argument("--workers", type=int, help="worker processes for independent scan points")


def _add_system(p):
    p.add_argument("--potential", choices=["cosine1", "coupled2"])
    p.add_argument("--ensemble", type=str.lower, choices=["nve", "nvt"])
    p.add_argument("--nq", type=int, help="position grid points per particle")
    p.add_argument("--np", type=int, help="momentum grid points per particle")
    p.add_argument("--nxi", type=int, help="thermostat grid points (NVT)")
    p.add_argument("--pmax", type=float)
    p.add_argument("--ximax", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--T0", type=float)
    p.add_argument("--Q", type=float)
    p.add_argument("--V0", type=float)
    p.add_argument("--eps-pot", dest="eps_pot", type=float, help="coupled-cosine epsilon")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kvnmd", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vacf", help="KvN velocity autocorrelation -> cvv_nq{N}.csv")
    _add_common(p), _add_system(p)
    p.add_argument("--steps", type=int)

    p = sub.add_parser("gk", help="Bartlett estimates and Richardson extrapolation")
    _add_common(p), _add_system(p)
    p.add_argument("--manc", help="comma-separated ancilla counts")

    p = sub.add_parser("qpe", help="full ancilla-register phase estimation")
    _add_common(p), _add_system(p)
    p.add_argument("--manc", help="ancilla count")

    p = sub.add_parser("mlae", help="amplitude-estimation RMSE harness")
    _add_common(p)
    p.add_argument("--p0", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--C0", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--L", type=int, help="number of schedule stages")
    p.add_argument("--shots", type=int)
    p.add_argument("--seeds", type=int)
    p.add_argument("--fit-stages", dest="fit_stages", type=int)
    p.add_argument("--naive-max-queries", dest="naive_max_queries", type=int)

    p = sub.add_parser("resources", help="CX cost models")
    _add_common(p)
    p.add_argument("--qsp", action="store_true", default=None, help="QSP best-case total")
    p.add_argument("--np", type=int, help="momentum qubits")
    p.add_argument("--nxi", type=int, help="thermostat qubits")
    p.add_argument("--eps", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--dp", type=int, help="decompose D_p on this many qubits")
    p.add_argument("--nve", type=int, help="NVE model at total qubit count n")
    p.add_argument("--table", action="store_true", default=None, help="write cost tables")
    p.add_argument("--c1", type=float)
    p.add_argument("--nmax", type=int)

    p = sub.add_parser("stability", help="kinetic-temperature drift scan -> drift_scan.csv")
    _add_common(p)
    p.add_argument("--axis", choices=["xi_boundary", "p_boundary", "N_xi", "N_p"])
    p.add_argument("--values")
    p.add_argument("--dt-set", dest="dt_set")
    p.add_argument("--tsim", type=float)
    p.add_argument("--nq", type=int)
    p.add_argument("--np", type=int)
    p.add_argument("--nxi", type=int)

    p = sub.add_parser("validate", help="small-instance cross-checks")
    _add_common(p)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        cfg = resolve_config(args.command, args)
        out = output_dir(args)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, ValueError) as exc:
        print(f"kvnmd: error: {exc}", file=sys.stderr)
        return 1
    except ResourceGuardError as exc:
        print(f"kvnmd: resource guard: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"kvnmd: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
