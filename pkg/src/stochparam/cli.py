"""Config-driven command-line front end.

Progress goes to standard error; results go to files (plus the queried value
for ``lyapunov``). Every run re-emits its fully resolved configuration next
to the outputs, and outputs contain no timestamps, so reruns with the same
config and seed are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import forcing as F
from . import io as sio
from . import mdn as _mdn
from . import pipelines
from .dynamics import L63Spec, L96Spec, l63_lyapunov_estimate, l63_rhs, l96_reduced_rhs
from .harness import (
    ClimateReference,
    ParamSpec,
    derive_rng,
    evaluate_climate,
    evaluate_weather,
    generate_climate_dataset,
    make_psi0,
    partition_weather,
    simulate_batch,
    simulate_parameterised,
    sweep_tp,
)

__all__ = ["main"]


class ConfigError(ValueError):
    pass


def _log(msg: str) -> None:
    print(f"[stochparam] {msg}", file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# configuration schema: {key: (type(s), default)}; None default means optional

_SCHEMA = {
    "seed": (int, 0),
    "outdir": (str, "runs"),
    "threads": (int, 1),
    "system": {
        "kind": (str, "l96"),
        "h": ((int, float), 1.0),
        "forcing": ((int, float), 20.0),
        "b": ((int, float), 10.0),
        "c": ((int, float), 10.0),
        "n_large": (int, 8),
        "n_small": (int, 32),
        "sigma": ((int, float), 10.0),
        "rho": ((int, float), 28.0),
        "beta": ((int, float), 8.0 / 3.0),
    },
    "dynamics": {
        "dt": ((int, float), 1e-3),
        "spinup_time": ((int, float), 10.0),
    },
    "data": {
        "n_pairs": (int, 1_000_000),
        "n_slices": (int, 200),
        "slice_len": (int, 5_000),
        "climate_path": ((str, type(None)), None),
    },
    "forcing": {
        "family": ((str, type(None)), None),  # ar2 | ar1-natural | ar1-plus | ar1 | var1
        "phi1": ((int, float), 0.45),
        "phi2": ((int, float), 0.5),
        "sigma_eps2": ((int, float), 1.425e-5),
        "phi": ((int, float), 0.999),
        "innovation_var": ((int, float, type(None)), None),
        "alpha": ((int, float), -0.45),
        "kappa": ((int, float), 1.81e-10),
        "dim": (int, 3),
        "multiplicative": (bool, False),
    },
    "parameterisation": {
        "kind": (str, "none"),
        "tp": (int, 1),
        "checkpoint": ((str, type(None)), None),
        "degree": (int, 3),
    },
    "training": {
        "hidden": (list, [64, 64]),
        "n_components": (int, 8),
        "epochs": (int, 12),
        "batch_size": (int, 1024),
        "learning_rate": ((int, float), 1e-3),
        "val_fraction": ((int, float), 0.1),
        "patience": (int, 5),
        "max_train": ((int, type(None)), 200_000),
    },
    "evaluation": {
        "run_steps": (int, 1_000_000),
        "n_steps": (int, 10_000),
        "lag_max": ((int, float), 10.0),
        "kde_stride": (int, 100),
        "acov_stride": (int, 10),
        "n_ens": (int, 50),
        "n_instances": (int, 200),
        "lead_stride": (int, 100),
        "n_leads": (int, 11),
        "lyapunov_time": ((int, float), pipelines.LYAPUNOV_TIME_L63),
    },
    "tp_grid": (list, list(pipelines.TP_GRID)),
}


def _resolve(schema: dict, user: dict, path: str = "") -> dict:
    if not isinstance(user, dict):
        raise ConfigError(f"config section {path or '<root>'} must be an object")
    out = {}
    for key, value in user.items():
        if key not in schema:
            raise ConfigError(f"unknown config key: {path}{key}")
        spec = schema[key]
        if isinstance(spec, dict):
            out[key] = _resolve(spec, value, f"{path}{key}.")
        else:
            types, _ = spec
            if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
                raise ConfigError(f"config key {path}{key} has wrong type")
            if not isinstance(value, types):
                raise ConfigError(f"config key {path}{key} has wrong type")
            out[key] = value
    for key, spec in schema.items():
        if key in out:
            continue
        if isinstance(spec, dict):
            out[key] = _resolve(spec, {}, f"{path}{key}.")
        else:
            out[key] = spec[1]
    return out


def load_config(path: str | None) -> dict:
    user = {}
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
    return _resolve(_SCHEMA, user)


def _emit_resolved(config: dict, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "resolved_config.json", "w", newline="\n") as fh:
        json.dump(config, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _outdir(config: dict, args) -> Path:
    if getattr(args, "outdir", None):
        return Path(args.outdir)
    env = os.environ.get("STOCHPARAM_OUTDIR")
    if env:
        return Path(env)
    return Path(config["outdir"])


def _threads(config: dict, args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("STOCHPARAM_THREADS")
    if env:
        return int(env)
    threads = config["threads"]
    return os.cpu_count() or 1 if threads <= 0 else threads


def _system_spec(config: dict):
    sys_cfg = config["system"]
    if sys_cfg["kind"] == "l96":
        return L96Spec(h=sys_cfg["h"], forcing=sys_cfg["forcing"], b=sys_cfg["b"],
                       c=sys_cfg["c"], n_large=sys_cfg["n_large"], n_small=sys_cfg["n_small"])
    if sys_cfg["kind"] == "l63":
        return L63Spec(sigma=sys_cfg["sigma"], rho=sys_cfg["rho"], beta=sys_cfg["beta"])
    raise ConfigError(f"unknown system kind {sys_cfg['kind']!r}")


def _psi0(config: dict):
    spec = _system_spec(config)
    dt = config["dynamics"]["dt"]
    if isinstance(spec, L96Spec):
        return make_psi0(lambda s: l96_reduced_rhs(s, spec), dt), spec
    return make_psi0(lambda s: l63_rhs(s, spec), dt), spec


def _forcing_process(config: dict):
    f = config["forcing"]
    family = f["family"]
    if family is None:
        raise ConfigError("forcing.family required for synthetic parameterisations")
    ar2 = F.Ar2Spec(phi1=f["phi1"], phi2=f["phi2"], sigma_eps2=f["sigma_eps2"])
    if family == "ar2":
        return ar2
    if family == "ar1-natural":
        return F.derive_ar1_natural(ar2)
    if family == "ar1-plus":
        return F.derive_ar1_plus(ar2)
    if family == "ar1":
        if f["innovation_var"] is None:
            raise ConfigError("forcing.innovation_var required for family 'ar1'")
        return F.Ar1Spec(phi=f["phi"], innovation_var=f["innovation_var"])
    if family == "var1":
        sigma = F.equicorrelation(f["dim"], f["alpha"], f["kappa"])
        return F.Var1Spec(phi=f["phi"], sigma=sigma)
    raise ConfigError(f"unknown forcing family {family!r}")


def _param_spec(config: dict) -> ParamSpec:
    p = config["parameterisation"]
    kind = p["kind"]
    tp = p["tp"]
    if kind == "none":
        return ParamSpec(kind="none", hold_steps=tp)
    if kind == "synthetic":
        return ParamSpec.synthetic(_forcing_process(config), hold_steps=tp,
                                   multiplicative=config["forcing"]["multiplicative"])
    if kind in ("mdn", "deterministic", "poly-ar1"):
        if p["checkpoint"] is None:
            raise ConfigError(f"parameterisation.checkpoint required for kind {kind!r}")
        model = sio.load_model(p["checkpoint"])
        return ParamSpec(kind=kind, model=model, hold_steps=tp)
    raise ConfigError(f"unknown parameterisation kind {kind!r}")


def _load_climate(config: dict, outdir: Path):
    path = config["data"]["climate_path"] or (outdir / "climate.bin")
    return sio.load_dataset(path)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_data(config: dict, args) -> None:
    outdir = _outdir(config, args)
    _emit_resolved(config, outdir)
    system = _system_spec(config)
    if not isinstance(system, L96Spec):
        raise ConfigError("gen-data diagnoses reduced-model error; system.kind must be 'l96'")
    _log(f"generating climate dataset ({config['data']['n_pairs']} pairs)")
    ds = generate_climate_dataset(system, n_steps=config["data"]["n_pairs"],
                                  dt=config["dynamics"]["dt"], seed=config["seed"],
                                  spinup_time=config["dynamics"]["spinup_time"])
    sio.save_dataset(ds, outdir / "climate.bin")
    weather_manifest = {
        "climate": "climate.bin",
        "n_slices": config["data"]["n_slices"],
        "slice_len": config["data"]["slice_len"],
    }
    with open(outdir / "weather.json", "w", newline="\n") as fh:
        json.dump(weather_manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _log(f"wrote {outdir / 'climate.bin'} and weather partition manifest")


_MODE_ALIASES = {
    "nonlocal": "nonlocal",
    "weak": "weakly-local",
    "strong": "strongly-local",
    "det": "deterministic",
    "poly": "poly-ar1",
}


def _cmd_fit(config: dict, args) -> None:
    outdir = _outdir(config, args)
    _emit_resolved(config, outdir)
    mode = _MODE_ALIASES[args.mode]
    ds = _load_climate(config, outdir)
    t = config["training"]
    if mode == "poly-ar1":
        _log("fitting polynomial baseline")
        model = _mdn.fit_poly_ar1(ds, degree=config["parameterisation"]["degree"])
    else:
        cfg = _mdn.TrainConfig(
            hidden=tuple(t["hidden"]), n_components=t["n_components"], epochs=t["epochs"],
            batch_size=t["batch_size"], learning_rate=t["learning_rate"],
            val_fraction=t["val_fraction"], patience=t["patience"],
            max_train=t["max_train"], seed=config["seed"],
        )
        _log(f"training {mode} model")
        if mode == "deterministic":
            model = _mdn.train_deterministic(ds, cfg)
        else:
            model = _mdn.train_mdn(ds, cfg, mode=mode)
    path = outdir / f"model-{args.mode}.bin"
    sio.save_model(model, path)
    _log(f"wrote {path}")


def _cmd_simulate(config: dict, args) -> None:
    outdir = _outdir(config, args)
    if args.tp is not None:
        config["parameterisation"]["tp"] = args.tp
    _emit_resolved(config, outdir)
    psi0, system = _psi0(config)
    spec = _param_spec(config)
    n_steps = config["evaluation"]["n_steps"]
    if isinstance(system, L96Spec):
        x0 = derive_rng(config["seed"], 100).standard_normal(system.n_large) + system.forcing / 2
        spin = int(round(config["dynamics"]["spinup_time"] / psi0.dt))
        for _ in range(spin):
            x0 = psi0(x0)
    else:
        x0 = pipelines._l63_initial_rows(1, psi0.dt)[0]
    _log(f"simulating {n_steps} steps (kind={spec.kind}, tp={spec.hold_steps})")
    traj = simulate_parameterised(psi0, x0, spec, n_steps, derive_rng(config["seed"], 101))
    path = outdir / "trajectory.bin"
    sio.save_trajectory(traj.states, traj.dt, path,
                        meta={"seed": config["seed"], "n_steps": n_steps,
                              "system": config["system"]["kind"]})
    _log(f"wrote {path}")


def _l63_reference(config: dict, psi0) -> ClimateReference:
    ev = config["evaluation"]
    truth = ParamSpec.synthetic(_forcing_process(config),
                                multiplicative=config["forcing"]["multiplicative"])
    x0 = pipelines._l63_initial_rows(1, psi0.dt)[0]
    spin = int(round(config["dynamics"]["spinup_time"] / psi0.dt))
    res = simulate_batch(psi0, x0[None], truth, ev["run_steps"],
                         derive_rng(config["seed"], 102), record="first")
    return ClimateReference.from_series(res.states[0][spin:], psi0.dt, ev["lag_max"],
                                        kde_stride=ev["kde_stride"],
                                        acov_stride=ev["acov_stride"])


def _cmd_score_climate(config: dict, args) -> None:
    outdir = _outdir(config, args)
    _emit_resolved(config, outdir)
    psi0, system = _psi0(config)
    ev = config["evaluation"]
    spec = _param_spec(config)
    if isinstance(system, L96Spec):
        ds = _load_climate(config, outdir)
        _log("building reference statistics from the climate dataset")
        reference = ClimateReference.from_series(ds.x[:, 0], psi0.dt, ev["lag_max"],
                                                 kde_stride=ev["kde_stride"],
                                                 acov_stride=ev["acov_stride"])
        x0 = ds.x[0]
    else:
        _log("simulating the reference (truth) run")
        reference = _l63_reference(config, psi0)
        x0 = pipelines._l63_initial_rows(2, psi0.dt)[1]
    _log(f"simulating candidate run ({ev['run_steps']} steps)")
    report = evaluate_climate(psi0, spec, x0, ev["run_steps"], derive_rng(config["seed"], 103),
                              reference, ev["lag_max"],
                              kde_stride=ev["kde_stride"], acov_stride=ev["acov_stride"],
                              meta={"seed": config["seed"]})
    path = outdir / "climate_report.json"
    sio.save_report(report, path)
    _log(f"wrote {path} (kl={report.kl:.4g} hellinger={report.hellinger:.4g} d_r={report.d_r:.4g})")


def _cmd_score_weather(config: dict, args) -> None:
    outdir = _outdir(config, args)
    _emit_resolved(config, outdir)
    psi0, system = _psi0(config)
    ev = config["evaluation"]
    spec = _param_spec(config)
    threads = _threads(config, args)
    if isinstance(system, L96Spec):
        ds = _load_climate(config, outdir)
        weather = partition_weather(ds, config["data"]["n_slices"], config["data"]["slice_len"])
        time_scale = 1.0
    else:
        truth = ParamSpec.synthetic(_forcing_process(config),
                                    multiplicative=config["forcing"]["multiplicative"])
        horizon = ev["lead_stride"] * (ev["n_leads"] - 1)
        separation = int(round(10.0 * ev["lyapunov_time"] / psi0.dt))
        _log("generating weather instances from a long truth run")
        weather = pipelines._l63_weather_set(truth, ev["n_instances"], horizon,
                                             separation, psi0.dt, config["seed"])
        time_scale = ev["lyapunov_time"]
    _log(f"running {ev['n_instances']} x {ev['n_ens']} forecast ensembles")
    scores = evaluate_weather(psi0, spec, weather, ev["n_ens"], ev["lead_stride"],
                              ev["n_leads"], derive_rng(config["seed"], 104),
                              time_scale=time_scale, n_instances=ev["n_instances"],
                              threads=threads, instances_per_batch=25)
    report_path = outdir / "weather_report.json"
    from .scores import ScoreReport

    sio.save_report(ScoreReport(energy_curve=scores.curve,
                                metadata={"seed": config["seed"],
                                          "stderr": scores.stderr.tolist(),
                                          "n_instances": int(scores.per_instance.shape[0]),
                                          "n_ens": ev["n_ens"],
                                          "spec": config["parameterisation"]}),
                    report_path)
    sio.export_curve_csv(scores, outdir / "energy_curve.csv")
    _log(f"wrote {report_path} and energy_curve.csv")


def _cmd_sweep_tp(config: dict, args) -> None:
    outdir = _outdir(config, args)
    _emit_resolved(config, outdir)
    psi0, system = _psi0(config)
    if not isinstance(system, L96Spec):
        raise ConfigError("sweep-tp operates on the two-scale system; system.kind must be 'l96'")
    ev = config["evaluation"]
    ds = _load_climate(config, outdir)
    reference = ClimateReference.from_series(ds.x[:, 0], psi0.dt, ev["lag_max"],
                                             kde_stride=ev["kde_stride"],
                                             acov_stride=ev["acov_stride"])
    weather = partition_weather(ds, config["data"]["n_slices"], config["data"]["slice_len"])
    base = _param_spec(config)
    threads = _threads(config, args)

    def spec_for(tp):
        return ParamSpec(kind=base.kind, hold_steps=int(tp), process=base.process,
                         model=base.model, multiplicative=base.multiplicative)

    def evaluate(spec, tp):
        _log(f"hold length {tp}: climate run")
        report = evaluate_climate(psi0, spec, ds.x[0], ev["run_steps"],
                                  derive_rng(config["seed"], 105, tp), reference,
                                  ev["lag_max"], kde_stride=ev["kde_stride"],
                                  acov_stride=ev["acov_stride"])
        _log(f"hold length {tp}: weather ensembles")
        ws = evaluate_weather(psi0, spec, weather, ev["n_ens"], ev["lead_stride"],
                              ev["n_leads"], derive_rng(config["seed"], 106, tp),
                              n_instances=ev["n_instances"], threads=threads,
                              instances_per_batch=25)
        report.energy_curve = ws.curve
        report.metadata["energy_stderr"] = ws.stderr.tolist()
        report.metadata["tp"] = int(tp)
        return report

    table = sweep_tp(spec_for, config["tp_grid"], evaluate)
    sio.save_sweep(table, outdir / "sweep.json")
    sio.export_sweep_csv(table, outdir / "sweep.csv")
    _log(f"wrote sweep.json and sweep.csv (argmin kl at tp={table.argmin('kl')}, "
         f"energy at tp={table.argmin('energy')})")


def _cmd_lyapunov(config: dict, args) -> None:
    if args.system != "l63":
        raise ConfigError("lyapunov estimation is wired for --system l63")
    est = l63_lyapunov_estimate(dt=args.dt, n_steps=args.n_steps, seed=args.seed or 0)
    print(f"lambda1={est.exponent:.6g} t_lambda={est.time:.6g}")


def _cmd_export_plots(config: dict, args) -> None:
    outdir = _outdir(config, args)
    outdir.mkdir(parents=True, exist_ok=True)
    path = Path(args.input)
    if path.suffix == ".json":
        with open(path) as fh:
            kind = json.load(fh).get("kind")
        if kind == "score-report":
            report = sio.load_report(path)
            if report.energy_curve is None:
                raise ConfigError(f"{path} has no energy curve to export")
            rows = report.energy_curve
            with open(outdir / f"{path.stem}_curve.csv", "w", newline="\n") as fh:
                fh.write("lead_time,score\n")
                for lead, score in rows:
                    fh.write(f"{lead:.17g},{score:.17g}\n")
            _log(f"wrote {path.stem}_curve.csv")
        elif kind == "sweep":
            table = sio.load_sweep(path)
            sio.export_sweep_csv(table, outdir / f"{path.stem}.csv")
            _log(f"wrote {path.stem}.csv")
        else:
            raise ConfigError(f"{path}: no plot export for kind {kind!r}")
    else:
        forecast = sio.load_forecast(path)
        sio.export_envelope_csv(forecast, outdir / f"{path.stem}_envelope.csv")
        _log(f"wrote {path.stem}_envelope.csv")


def _cmd_repro(config: dict, args) -> None:
    outdir = _outdir(config, args)
    _emit_resolved(config, outdir)
    seed = config["seed"]
    scale = args.scale
    threads = _threads(config, args)

    if args.paper_table == 1 or args.paper_table == 2:
        run = pipelines.run_table1 if args.paper_table == 1 else pipelines.run_table2
        out = run(scale=scale, seed=seed, progress=_log)
        for name, report in out["reports"].items():
            sio.save_report(report, outdir / f"table{args.paper_table}_{name}.json")
        summary = {
            "benchmark": f"table{args.paper_table}",
            "scale": scale,
            "seed": seed,
            "floor": out["floor"],
            "scores": {name: {"kl": rep.kl, "hellinger": rep.hellinger, "d_r": rep.d_r}
                       for name, rep in out["reports"].items()},
        }
        with open(outdir / f"table{args.paper_table}_summary.json", "w", newline="\n") as fh:
            json.dump(summary, fh, indent=1, sort_keys=True)
            fh.write("\n")
        _log(f"table {args.paper_table} reproduced into {outdir}")
        return

    figure = args.paper_figure
    if figure == 1:
        out = pipelines.run_figure1(scale=scale, seed=seed, progress=_log)
        from .scores import ScoreReport

        for name, ws in out["curves"].items():
            sio.export_curve_csv(ws, outdir / f"figure1_{name}_curve.csv")
            sio.save_report(ScoreReport(energy_curve=ws.curve,
                                        metadata={"forcing": name, **out["config"],
                                                  "stderr": ws.stderr.tolist()}),
                            outdir / f"figure1_{name}.json")
        for name, forecast in out["forecasts"].items():
            sio.save_forecast(forecast, outdir / f"figure1_{name}_forecast.bin",
                              meta={"forcing": name})
            sio.export_envelope_csv(forecast, outdir / f"figure1_{name}_envelope.csv")
    elif figure == 2:
        out = pipelines.run_figure2(scale=scale, seed=seed, progress=_log)
        for fam, table in out["tables"].items():
            tag = fam.replace("weakly-local", "weak").replace("strongly-local", "strong")
            sio.save_sweep(table, outdir / f"figure2_{tag}_sweep.json")
            sio.export_sweep_csv(table, outdir / f"figure2_{tag}_sweep.csv")
        for fam, model in out["models"].items():
            tag = fam.replace("weakly-local", "weak").replace("strongly-local", "strong")
            sio.save_model(model, outdir / f"model-{tag}.bin")
    elif figure == 3:
        out = pipelines.run_figure3(scale=scale, seed=seed, progress=_log)
        for tp, forecast in out["forecasts"].items():
            sio.save_forecast(forecast, outdir / f"figure3_tp{tp}_forecast.bin",
                              meta={"tp": tp})
            sio.export_envelope_csv(forecast, outdir / f"figure3_tp{tp}_envelope.csv")
    else:
        raise ConfigError("repro needs --paper-table {1,2} or --paper-figure {1,2,3}")
    _log(f"figure {figure} reproduced into {outdir}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochparam",
        description="Testbed for locality assumptions in stochastic parameterisations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        p.add_argument("--config", default=None, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--outdir", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="parallel worker count")
        p.add_argument("--dry-run", action="store_true",
                       help="validate config and print the resolved plan")

    p = sub.add_parser("gen-data", help="generate climate + weather datasets")
    add_common(p)
    p = sub.add_parser("fit", help="fit an error model on a climate dataset")
    add_common(p)
    p.add_argument("--mode", required=True, choices=sorted(_MODE_ALIASES))
    p = sub.add_parser("simulate", help="run one parameterised trajectory")
    add_common(p)
    p.add_argument("--tp", type=int, default=None, help="hold length override")
    p = sub.add_parser("score-climate", help="stationary-statistics scores")
    add_common(p)
    p = sub.add_parser("score-weather", help="ensemble energy-score curve")
    add_common(p)
    p = sub.add_parser("sweep-tp", help="hold-length sweep for one parameterisation")
    add_common(p)
    p = sub.add_parser("lyapunov", help="largest-Lyapunov-exponent estimate")
    p.add_argument("--system", required=True)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--n-steps", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=None)
    p = sub.add_parser("export-plots", help="CSV exports from stored artifacts")
    p.add_argument("--input", required=True)
    p.add_argument("--outdir", default=None)
    p = sub.add_parser("repro", help="reproduce a benchmark table or figure")
    add_common(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--paper-table", type=int, choices=(1, 2))
    group.add_argument("--paper-figure", type=int, choices=(1, 2, 3))
    p.add_argument("--scale", choices=("desk", "full"), default="desk")
    return parser


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "score-climate": _cmd_score_climate,
    "score-weather": _cmd_score_weather,
    "sweep-tp": _cmd_sweep_tp,
    "lyapunov": _cmd_lyapunov,
    "export-plots": _cmd_export_plots,
    "repro": _cmd_repro,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(getattr(args, "config", None))
        if getattr(args, "seed", None) is not None:
            config["seed"] = args.seed
        if getattr(args, "dry_run", False):
            plan = {"command": args.command, "resolved_config": config}
            print(json.dumps(plan, indent=1, sort_keys=True))
            return 0
        _COMMANDS[args.command](config, args)
        return 0
    except BrokenPipeError:
        raise
    except Exception as exc:  # single-line machine-parsable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
