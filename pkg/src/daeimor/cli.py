"""Command-line interface: ``daeimor <command> [options]``.

Every command echoes its fully resolved configuration to
``config.resolved.json`` in the output directory. Failures print a JSON object
``{"error": code, "message": text}`` on stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from daeimor import lqr as lqr_mod
from daeimor import mtxio
from daeimor.config import RunConfig, interpolation_data
from daeimor.errors import ConfigError, DaeError
from daeimor.reduction import reduce_index2, verify_interpolation
from daeimor.systems import Index2System, ReducedModel
from daeimor.testbed import (DEFAULT_PATCHES, channel_geometry, generate_oseen, generate_planted,
                             generate_random)
from daeimor.transfer import finite_poles, sigma_sweep

log = logging.getLogger("daeimor")
THREADS_ENV = "DAEIMOR_NUM_THREADS"


# -- configuration ---------------------------------------------------------

def load_config(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = mtxio.read_json(args.config)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    cfg = RunConfig.from_dict(data)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "mode", None) is not None:
        cfg.mode = args.mode
    cfg.check()
    return cfg.resolved()


def echo_config(out: Path, cfg: RunConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    mtxio.write_json(out / "config.resolved.json", cfg.to_dict())


# -- system construction -----------------------------------------------------

def _geometry(params):
    return channel_geometry(params.get("nx", 24), params.get("ny", 12),
                            tuple(params.get("extent", (-2.0, 6.0, -2.0, 2.0))),
                            params.get("obstacle", (-0.5, 0.5, -0.5, 0.5)))


def build_system(cfg: RunConfig) -> Index2System:
    params = dict(cfg.system)
    gen = params.get("generator")
    if gen == "oseen":
        geom = _geometry(params)
        patches = params.get("patches", "default")
        patches = DEFAULT_PATCHES if patches == "default" else [tuple(p) for p in patches]
        return generate_oseen(geom, params.get("reynolds", 10.0), params.get("base_flow", "parabolic"),
                              params.get("speed", 1.0), patches)
    if gen == "planted":
        poles = [complex(a, b) for a, b in params["poles"]]
        return generate_planted(params["n1"], params["n2"], poles, params.get("m", 1), params.get("p", 2),
                                cfg.seed)
    if gen == "random":
        return generate_random(params["n1"], params["n2"], params.get("m", 1), params.get("p", 1), cfg.seed,
                               params.get("c2", False), params.get("d", False), params.get("b2", False))
    raise ConfigError(f"unknown generator {gen!r}; use oseen, planted or random")


def _load(path, kind=None):
    if path is None:
        raise ConfigError("missing --bundle/--rom directory")
    obj = mtxio.read_bundle(path)
    if kind is not None and not isinstance(obj, kind):
        raise ConfigError(f"{path} holds a {type(obj).__name__}, expected {kind.__name__}")
    return obj


# -- result writers ----------------------------------------------------------

def write_sweep(path, resp) -> None:
    p, m = resp.values.shape[1:]
    header = ["omega", "sigma_max"]
    if p * m > 1:
        header += [f"abs_G_{i + 1}_{j + 1}" for i in range(p) for j in range(m)]
    rows = []
    for k, w in enumerate(resp.omegas):
        row = [w, resp.norms[k]]
        if p * m > 1:
            row += list(np.abs(resp.values[k]).reshape(-1))
        rows.append(row)
    mtxio.write_csv(path, header, rows)


def write_trajectory(path, traj) -> None:
    m, p = traj.u.shape[1], traj.y.shape[1]
    header = ["t"] + [f"u_{j + 1}" for j in range(m)] + ["x1_norm", "constraint_residual"] \
        + [f"y_{i + 1}" for i in range(p)]
    norms = traj.state_norm
    rows = [[t] + list(traj.u[k]) + [norms[k], traj.constraint_residual[k]] + list(traj.y[k])
            for k, t in enumerate(traj.t)]
    mtxio.write_csv(path, header, rows)


def write_gain_field(path, K_full, cfg: RunConfig) -> bool:
    """Gain fields on the grid, one row per velocity unknown; only for the Oseen generator."""
    if cfg.system.get("generator") != "oseen":
        return False
    geom = _geometry(cfg.system)
    hu, hv = lqr_mod.functional_gains(K_full, geom)
    if hu.ndim == 2:
        hu, hv = hu[None], hv[None]
    uc, vc = geom.u_coords(), geom.v_coords()
    rows = []
    for j in range(hu.shape[0]):
        for comp, grid, index, coords in ((0, hu[j], geom.u_index, uc), (1, hv[j], geom.v_index, vc)):
            for (a, b), k in np.ndenumerate(index):
                if k >= 0:
                    x, y = coords[k - (geom.n_u if comp else 0)]
                    rows.append([float(j + 1), float(comp), x, y, grid[a, b]])
    mtxio.write_csv(path, ["input", "component", "x", "y", "h"], rows)
    return True


def _provenance(cfg):
    return {"generator": cfg.system, "seed": cfg.seed}


def initial_state(sys: Index2System, cfg: RunConfig) -> np.ndarray:
    x0 = cfg.simulate.get("x0", "random-seeded")
    if x0 == "random-seeded":
        x = np.random.default_rng(cfg.seed).standard_normal(sys.n1)
    else:
        x = np.asarray(x0, dtype=float)
        if x.shape != (sys.n1,):
            raise ConfigError(f"x0 has {x.size} entries, expected {sys.n1}")
    return lqr_mod.consistent_initial_state(sys, x)


# -- commands ----------------------------------------------------------------

def cmd_generate(args, cfg, out):
    sys_ = build_system(cfg)
    mtxio.write_system_bundle(out, sys_, _provenance(cfg))
    return {"n1": sys_.n1, "n2": sys_.n2}


def _reduce(sys_, cfg, out):
    data = interpolation_data(cfg, sys_.m, sys_.p)
    rom = reduce_index2(sys_, data, cfg.mode, cfg.svd_tol)
    report = verify_interpolation(sys_, rom, data)
    mtxio.write_rom_bundle(out, rom, {"mode": cfg.mode, "points": len(data), "seed": cfg.seed})
    mtxio.write_json(out / "interpolation_report.json", report.to_dict())
    return rom, report


def cmd_reduce(args, cfg, out):
    rom, report = _reduce(_load(args.bundle, Index2System), cfg, out)
    return {"r": rom.r, "max_right": report.max_right}


def cmd_sigma(args, cfg, out):
    sw = cfg.sweep
    written = []
    for path, name in ((args.bundle, "sigma_full.csv"), (args.rom, "sigma_reduced.csv")):
        if path is None:
            continue
        resp = sigma_sweep(_load(path), sw["omega_min"], sw["omega_max"], sw["count"],
                           sw.get("spacing", "log"))
        write_sweep(out / name, resp)
        written.append(name)
    if not written:
        raise ConfigError("sigma needs --bundle and/or --rom")
    return {"written": written}


def cmd_poles(args, cfg, out):
    path = args.bundle or args.rom
    report = finite_poles(_load(path))
    mtxio.write_json(out / "poles.json", report.to_dict())
    return {"unstable_count": report.unstable_count}


def _lqr(rom, cfg, out):
    result = lqr_mod.solve_lqr(lqr_mod.LqrProblem(rom, cfg.R))
    out.mkdir(parents=True, exist_ok=True)
    mtxio.write_matrix(out / "P.mtx", result.P)
    mtxio.write_matrix(out / "K_reduced.mtx", result.K_reduced)
    mtxio.write_matrix(out / "K_full.mtx", result.K_full)
    mtxio.write_json(out / "lqr.json", {"closed_loop_abscissa": result.closed_loop_abscissa,
                                        "residual_norm": result.residual_norm,
                                        "R": np.atleast_2d(np.asarray(cfg.R, float)).tolist()})
    return result


def cmd_lqr(args, cfg, out):
    result = _lqr(_load(args.rom or args.bundle, ReducedModel), cfg, out)
    return {"residual_norm": result.residual_norm}


def _simulate(sys_, K, cfg, out, name="trajectory.csv"):
    sim = cfg.simulate
    traj = lqr_mod.simulate_closed_loop(sys_, K, initial_state(sys_, cfg), sim["dt"], sim["T"])
    write_trajectory(out / name, traj)
    return traj


def cmd_simulate(args, cfg, out):
    sys_ = _load(args.bundle, Index2System)
    if args.gain:
        K = mtxio.read_matrix(args.gain)
    else:
        K = np.zeros((sys_.m, sys_.n1))
    traj = _simulate(sys_, K, cfg, out)
    return {"final_ratio": float(traj.state_norm[-1] / traj.state_norm[0])}


def cmd_verify(args, cfg, out):
    sys_ = _load(args.bundle, Index2System)
    rom = _load(args.rom, ReducedModel)
    report = verify_interpolation(sys_, rom, interpolation_data(cfg, sys_.m, sys_.p))
    mtxio.write_json(out / "interpolation_report.json", report.to_dict())
    worst = report.max_guaranteed
    if worst > cfg.verify_tol:
        raise VerificationFailed(f"largest interpolation residual {worst:.3e} exceeds "
                                 f"{cfg.verify_tol:.1e}")
    return {"max_residual": worst}


def cmd_run(args, cfg, out):
    """Generate, reduce, sweep, poles, LQR, simulate; all outputs under ``out``."""
    sys_ = build_system(cfg)
    mtxio.write_system_bundle(out / "system", sys_, _provenance(cfg))
    rom, report = _reduce(sys_, cfg, out / "rom")
    mtxio.write_json(out / "interpolation_report.json", report.to_dict())
    sw = cfg.sweep
    for obj, name in ((sys_, "sigma_full.csv"), (rom, "sigma_reduced.csv")):
        write_sweep(out / name, sigma_sweep(obj, sw["omega_min"], sw["omega_max"], sw["count"],
                                            sw.get("spacing", "log")))
    mtxio.write_json(out / "poles_full.json", finite_poles(sys_).to_dict())
    mtxio.write_json(out / "poles_reduced.json", finite_poles(rom).to_dict())
    result = _lqr(rom, cfg, out / "lqr")
    write_gain_field(out / "gain_field.csv", result.K_full, cfg)
    _simulate(sys_, result.K_full, cfg, out)
    _simulate(sys_, np.zeros_like(result.K_full), cfg, out, "trajectory_open.csv")
    return {"r": rom.r, "unstable_reduced": finite_poles(rom).unstable_count}


class VerificationFailed(DaeError):
    code = "interpolation-residual"


COMMANDS = {
    "generate": (cmd_generate, "build a test system and write a matrix bundle"),
    "reduce": (cmd_reduce, "reduce a system bundle and write the reduced bundle and report"),
    "sigma": (cmd_sigma, "frequency sweep of the full and/or reduced model"),
    "poles": (cmd_poles, "finite poles of a system or reduced bundle"),
    "lqr": (cmd_lqr, "LQR design on a reduced bundle"),
    "simulate": (cmd_simulate, "implicit Euler closed-loop simulation"),
    "verify": (cmd_verify, "check interpolation residuals of a reduced model"),
    "run": (cmd_run, "full pipeline from a config"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daeimor",
                                     description="Interpolatory reduction of index-2 DAEs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--bundle", help="system (or reduced) bundle directory")
        p.add_argument("--rom", help="reduced bundle directory")
        p.add_argument("--gain", help="gain matrix file (K_full.mtx)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--mode", choices=["petrov_galerkin", "galerkin"])
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("%s set but threadpoolctl is not installed; ignored", THREADS_ENV)
        return nullcontext()
    return threadpool_limits(int(value))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args)
        out = Path(args.out)
        echo_config(out, cfg)
        with _thread_limit():
            summary = func(args, cfg, out)
    except DaeError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        code = "io" if isinstance(exc, OSError) else "invalid-input"
        print(json.dumps({"error": code, "message": str(exc)}), file=sys.stderr)
        return 2
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
