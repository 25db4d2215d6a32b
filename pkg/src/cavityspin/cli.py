"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(norm drift, fit non-convergence), 3 validity hard-fail.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import replace

import numpy as np

from . import config as C
from . import elimination as el
from . import experiments as ex
from . import models as m
from .propagation import (PropagationError, TimeDependentHamiltonian, evolve, evolve_schedule)
from .results import (CLUSTER_COLUMNS, COMPARISON_COLUMNS, ResultBundle, Table, write_results)

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_VALIDITY = 0, 1, 2, 3
COMMANDS = ("validate", "params", "evolve", "compare", "cluster", "sweep", "feasibility")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cavityspin", description="Driven atoms in coupled cavities and their "
                                                "effective spin models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "validate": "check the adiabatic-elimination conditions",
        "params": "derive the effective spin parameters (optionally fit them)",
        "evolve": "run a single model and write its observables",
        "compare": "full vs effective model for two atoms in two cavities",
        "cluster": "entanglement and purity during cluster-state growth",
        "sweep": "derived parameters over a list of values of one key",
        "feasibility": "decoherence rates and device figures of merit",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name], description=helps[name])
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", metavar="PATH", help="YAML run configuration")
        src.add_argument("--preset", metavar="NAME", help="shipped preset: " + ", ".join(C.PRESETS))
        s.add_argument("--out", metavar="DIR", help="output directory (default from config)")
        s.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker processes for sweep")
        s.add_argument("--nmax", type=int, metavar="K", help="override the photon cutoff")
        if name in ("params", "compare"):
            s.add_argument("--fit", action="store_true", help="fit the effective parameters "
                                                            "to a full-model run")
    return p


def _load(args) -> C.RunConfig:
    cfg = C.load_preset(args.preset) if args.preset else C.load_config(args.config)
    if args.nmax is not None:
        if args.nmax < 1:
            raise C.ConfigError("--nmax must be at least 1")
        cfg = cfg.with_nmax(args.nmax)
    return cfg


def _meta(cfg: C.RunConfig, command: str, **extra) -> dict:
    return {"command": command, "config": C.config_to_dict(cfg), **extra}


def _mhz(sp_) -> dict | None:
    return None if sp_ is None else sp_.to_mhz()


def _print_params(label: str, sp_) -> None:
    vals = {k: v for k, v in sp_.to_mhz().items() if v is not None and not isinstance(v, list)}
    print(f"{label}: " + ", ".join(f"{k} = {v:.6g} MHz" for k, v in vals.items()))


# Subcommands ----------------------------------------------------------------

def cmd_validate(cfg, args) -> tuple:
    reps = {}
    for name, p in (("xy", cfg.xy_params()), ("zz", cfg.zz_params())):
        if p is not None:
            reps[name] = el.check_validity(p)
    if not reps:
        raise C.ConfigError("nothing to validate: no 'xy' or 'zz' section")
    for name, rep in reps.items():
        print(f"[{name}]")
        print(rep.format())
    code = EXIT_VALIDITY if any(r.hard_fail for r in reps.values()) else EXIT_OK
    bundle = ResultBundle(metadata=_meta(cfg, "validate"),
                          reports={"validity": {k: r.as_dict() for k, r in reps.items()}})
    return bundle, code, args.out is not None


def cmd_params(cfg, args) -> tuple:
    xy, zz = cfg.xy_params(), cfg.zz_params()
    for p in (xy, zz):
        if p is not None:
            el.require_valid(p)
    derived = el.derive_params(xy, zz)
    _print_params("derived", derived)
    rep = {"derived_MHz": _mhz(derived)}
    code = EXIT_OK
    if args.fit:
        res = ex.run_comparison(xy, zz, cfg.interleave_spec(), cfg.layout.n_max,
                                cfg.integrator_config(), fit=True, seed=cfg.seed)
        rep.update(_fit_report(res))
        if res.fit_error:
            print(f"fit failed: {res.fit_error}", file=sys.stderr)
            code = EXIT_NUMERICAL
        else:
            _print_params("fitted", res.fit_spin)
    return ResultBundle(metadata=_meta(cfg, "params"), reports={"params": rep}), code, True


def _fit_report(res) -> dict:
    out = {"fit_error": res.fit_error}
    if res.fit is not None:
        out.update(fit_wall_MHz=res.fit.values_mhz, fit_MHz=_mhz(res.fit_spin),
                   fit_residual=res.fit.residual, fit_window_ns=res.fit.window_ns,
                   fit_extra=res.fit.extra)
    return out


def cmd_evolve(cfg, args) -> tuple:
    xy, zz = cfg.xy_params(), cfg.zz_params()
    il = cfg.interleave_spec()
    icfg = cfg.integrator_config()
    n = cfg.layout.n_sites
    tables, meta = {}, {}
    if cfg.model in ("full", "both"):
        if xy is None and zz is None:
            raise C.ConfigError("a full-model run needs an 'xy' or 'zz' section")
        for p in (xy, zz):
            if p is not None:
                el.require_valid(p)
        scheme = ex._scheme(xy, zz, il)
        H = ex.full_hamiltonians(xy, zz, scheme, cfg.layout.n_max)
        if scheme == "interleaved":
            il, meta["segments_rounding"] = ex.snap_to_periods(
                il, H["xy"], H["zz"], m.full_layout(n, cfg.layout.n_max), icfg)
        obs = ex.full_observables(n, cfg.layout.n_max)
        traj = evolve_schedule(ex._full_schedule(H, scheme, il, il.total_time),
                               ex.comparison_initial_state(n, cfg.layout.n_max), obs, icfg)
        names = list(obs)
        tables["trajectory_full"] = Table.from_columns(
            ["t_us"] + names, [traj.times / 1e3] + [np.real(traj[k]) for k in names])
        meta["full"] = traj.metadata
    if cfg.model in ("effective", "both"):
        sp_ = cfg.spin_params()
        scheme = "spin"
        if sp_ is None:
            sp_ = ex.effective_wall_params(el.derive_params(xy, zz), ex._scheme(xy, zz, il), il)
            scheme = ex._scheme(xy, zz, il)
        H = m.build_spin_full(sp_, n, cfg.layout.boundary)
        obs = el.spin_observables(n)
        traj = evolve(TimeDependentHamiltonian.static(H), ex.spin_initial_state(n), il.total_time,
                      obs, replace(icfg, sample_alignment="exact"))
        names = list(obs)
        tables["trajectory_effective"] = Table.from_columns(
            ["t_us"] + names, [traj.times / 1e3] + [np.real(traj[k]) for k in names])
        meta["effective"] = {"scheme": scheme, "params_wall_MHz": sp_.to_mhz(), **traj.metadata}
    return ResultBundle(metadata=_meta(cfg, "evolve", **meta), tables=tables), EXIT_OK, True


def comparison_bundle(cfg, res) -> ResultBundle:
    w = res.window_mask
    table = Table.from_columns(COMPARISON_COLUMNS, [
        res.times[w] / 1e3, res.p_a1_full[w], res.p_down1_eff[w], res.n_photon[w],
        res.p_excited[w]])
    report = {
        "max_excited": res.max_excited, "max_photon": res.max_photon,
        "max_deviation": res.max_deviation, "window_ns": res.window_ns,
        "derived_MHz": _mhz(res.derived), "effective_wall_MHz": _mhz(res.effective),
        "validity": res.validity, "sandwich_warnings": res.sandwich_warnings,
        **_fit_report(res),
    }
    return ResultBundle(metadata=_meta(cfg, "compare", **res.metadata),
                        tables={"comparison": table}, reports={"comparison": report})


def cmd_compare(cfg, args) -> tuple:
    xy, zz = cfg.xy_params(), cfg.zz_params()
    res = ex.run_comparison(xy, zz, cfg.interleave_spec(), cfg.layout.n_max,
                            cfg.integrator_config(), fit=args.fit or cfg.fit, seed=cfg.seed)
    print(f"max excited occupation {res.max_excited:.4g}, max photon number "
          f"{res.max_photon:.4g}, max |p(a_1) - p(down_1)| {res.max_deviation:.4g}")
    code = EXIT_OK
    if res.fit is not None:
        _print_params("fitted", res.fit_spin)
    if res.fit_error:
        print(f"fit failed: {res.fit_error}", file=sys.stderr)
        code = EXIT_NUMERICAL
    return comparison_bundle(cfg, res), code, True


def _cluster_table(r) -> Table:
    return Table.from_columns(CLUSTER_COLUMNS, [r.times / 1e3, r.entropy, r.entropy_bits,
                                                r.purity])


def cmd_cluster(cfg, args) -> tuple:
    cl = cfg.cluster or C.ClusterSection()
    zz = cfg.zz_params()
    icfg = cfg.integrator_config()
    if zz is None:
        sp_ = cfg.spin_params()
        if sp_ is None:
            raise C.ConfigError("cluster needs a 'zz' or 'spin' section")
        source = sp_
    else:
        if cl.invert:
            if cl.jz_target is None:
                raise C.ConfigError("cluster.invert needs cluster.jz_target")
            zz = ex.invert_cluster_drive(zz, cl.jz_target)
        source = zz
    tables, reports, meta = {}, {}, {}
    runs = {}
    runs["effective"] = ex.run_cluster(el.derive_zz_params(zz) if zz is not None else source,
                                       cfg.layout.n_sites, cfg.layout.n_max, False, icfg,
                                       cl.t_factor, cfg.layout.boundary)
    if cl.use_full_model and cfg.model != "effective":
        if zz is None:
            raise C.ConfigError("a full-model cluster run needs a 'zz' section")
        runs["full"] = ex.run_cluster(zz, cfg.layout.n_sites, cfg.layout.n_max, True, icfg,
                                      cl.t_factor, cfg.layout.boundary)
    main_key = "full" if "full" in runs else "effective"
    for key, r in runs.items():
        name = "cluster" if key == main_key else f"cluster_{key}"
        tables[name] = _cluster_table(r)
        reports[name] = {"t_target_ns": r.t_target, "EvN_target_nats": r.entropy_target,
                         "EvN_target_over_ln2": r.entropy_target / math.log(2.0),
                         "purity_target": r.purity_target, "Jz_MHz": r.Jz * 1e3,
                         "peak_t_ns": r.peak[0], "peak_EvN_nats": r.peak[1]}
        meta[key] = r.metadata
        print(f"{key}: t_target = {r.t_target / 1e3:.4g} us, E_vN/ln2 = "
              f"{r.entropy_target / math.log(2.0):.6g}, P_s = {r.purity_target:.6g}")
    if zz is not None:
        meta["zz_params"] = {k: v for k, v in zz.__dict__.items()}
    return ResultBundle(metadata=_meta(cfg, "cluster", **meta), tables=tables,
                        reports=reports), EXIT_OK, True


def cmd_sweep(cfg, args) -> tuple:
    sw = cfg.sweep
    if sw is None:
        raise C.ConfigError("sweep needs a 'sweep' section")
    if args.threads < 1:
        raise C.ConfigError("--threads must be at least 1")
    rows = ex.run_sweep(cfg.xy_params(), sw.key, sw.values, sw.outputs, zz=cfg.zz_params(),
                        il=cfg.interleave_spec(), threads=args.threads)
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    table = Table(tuple(cols), [[r.get(k) for k in cols] for r in rows])
    print(f"{len(rows)} rows, {sum(1 for r in rows if r.get('error'))} with errors")
    return ResultBundle(metadata=_meta(cfg, "sweep"), tables={"sweep": table}), EXIT_OK, True


def cmd_feasibility(cfg, args) -> tuple:
    dev = cfg.device_preset()
    scheme = cfg.device.scheme if cfg.device else ("zz" if cfg.scheme == "zz" else "xy")
    p = cfg.xy_params() if scheme == "xy" else cfg.zz_params()
    rep = {}
    if dev is not None:
        rep["device"] = {"name": dev.name, "g_GHz": dev.g, "gamma_e_GHz": dev.gamma_e,
                         "gamma_c_GHz": dev.gamma_c, "cooperativity": dev.cooperativity,
                         "g_over_gamma_e": dev.g_over_gamma_e,
                         "classification": dev.classification()}
        print(f"{dev.name}: cooperativity {dev.cooperativity:.4g}, g/Gamma_E "
              f"{dev.g_over_gamma_e:.4g} -> {dev.classification()}")
    if p is not None:
        g = max(p.g_a, p.g_b)
        noise = dev.noise_for(g) if dev is not None else el.NoiseParams()
        f = el.estimate_feasibility(p, noise, scheme)
        rep["rates"] = f.as_dict()
        print(f"Gamma1 = {f.Gamma1:.4g} /ns, Gamma2 = {f.Gamma2:.4g} /ns, "
              f"gamma1 = {f.gamma1:.4g}, gamma2 = {f.gamma2:.4g}")
    if not rep:
        raise C.ConfigError("feasibility needs a 'device' section or drive parameters")
    return ResultBundle(metadata=_meta(cfg, "feasibility"), reports={"feasibility": rep}), \
        EXIT_OK, True


HANDLERS = {"validate": cmd_validate, "params": cmd_params, "evolve": cmd_evolve,
            "compare": cmd_compare, "cluster": cmd_cluster, "sweep": cmd_sweep,
            "feasibility": cmd_feasibility}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    t0 = time.perf_counter()
    try:
        cfg = _load(args)
        bundle, code, write = HANDLERS[args.command](cfg, args)
        if write:
            bundle.wall_time_s = time.perf_counter() - t0
            out = args.out or cfg.output.dir
            for path in write_results(bundle, out):
                print(f"wrote {path}")
        return code
    except (C.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (el.ValidityError, el.DerivationError, ex.SandwichError) as exc:
        print(f"validity: {exc}", file=sys.stderr)
        return EXIT_VALIDITY
    except (PropagationError, el.FitError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
