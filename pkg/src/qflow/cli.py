"""Command-line driver: flow solves, error scans, fits, dissipation sweeps,
and state-preparation demos, each emitting CSV/JSON artifacts plus a run
manifest that lists every file written.

Exit codes: 0 success, 2 post-selection or stability failure, 3 bad
configuration or inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, backend_name, set_num_threads
from .analysis import (bidiagonal_surrogate, default_t0_range,
                       fit_error_power_law, fit_t0_kappa, predict_t0,
                       tq_scan)
from .cfd import (ConfigError, FlowConfig, analytic_profile, be_march,
                  check_fe_stability, error_metrics, fe_march,
                  initial_condition)
from .qlsa import (ConvergenceError, PostSelectionError, QPEConfig,
                   hermitian_dilation, iterative_be_driver, one_shot_driver,
                   suggest_t0)
from .qpp import dissipation_sweep, sweep_to_csv
from .qsp import (cnot_report, dense_embedding, load_sparse_csv,
                  qsp1_synthesize, qsp2_synthesize)


class StabilityError(RuntimeError):
    """Explicit-scheme stability violation surfaced as exit code 2."""


_CONFIG_TYPES = {
    "flow": str, "n_grid": int, "re": float, "dt": float, "dpdx": float,
    "u_in": float, "u_wall": float, "total_time": float, "m_steps": int,
    "p_pad": int,
    # solver defaults that may also come from the command line
    "scheme": str, "method": str, "q_pe": int, "t0": float,
    "surrogate_kappa": float,
}

_FLOW_KEYS = ("flow", "n_grid", "re", "dt", "dpdx", "u_in", "u_wall",
              "total_time", "m_steps", "p_pad")


def parse_config(path) -> dict:
    """key = value lines; blank lines and # comments ignored."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _CONFIG_TYPES[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: "
                              f"{exc}") from exc
    return out


def flow_config(settings: dict) -> FlowConfig:
    return FlowConfig(**{k: v for k, v in settings.items()
                         if k in _FLOW_KEYS})


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2,
                               default=float) + "\n")


def _write_manifest(out_dir: Path, command: str, args, params: dict,
                    outputs: list) -> Path:
    manifest = {
        "command": command,
        "config_path": str(args.config) if getattr(args, "config", None)
        else None,
        "seed": args.seed,
        "output_directory": str(out_dir),
        "parameters": params,
        "outputs": sorted(str(p.name) for p in outputs),
        "versions": {"qflow": __version__, "backend": backend_name},
    }
    path = out_dir / "manifest.json"
    _write_json(path, manifest)
    return path


def _resolve(args, settings: dict, key: str, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return settings.get(key, default)


def _profile_csv(path: Path, rows) -> None:
    lines = ["step,y,u"]
    for step, y, u in rows:
        lines.append(f"{step},{y!r},{u!r}")
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    settings = parse_config(args.config)
    cfg = flow_config(settings)
    scheme = _resolve(args, settings, "scheme", "be1")
    method = _resolve(args, settings, "method", "hhl")
    if scheme not in ("be1", "be2", "fe"):
        raise ConfigError(f"unknown scheme {scheme!r}")
    if method not in ("classical", "hhl"):
        raise ConfigError(f"unknown method {method!r}")
    if scheme == "fe":
        try:
            check_fe_stability(cfg)
        except ConfigError as exc:
            raise StabilityError(str(exc)) from exc

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    y = cfg.y_interior
    u0 = initial_condition(cfg)

    if method == "classical":
        steps = cfg.m
        march = be_march if scheme in ("be1", "be2") else fe_march
        u = u0.copy()
        rows = [(0, float(yy), float(uu)) for yy, uu in zip(y, u)]
        for step in range(1, steps + 1):
            u = march(cfg, u, 1)
            rows.extend((step, float(yy), float(uu))
                        for yy, uu in zip(y, u))
        final = u
        u_classical = u
        extra = {"steps": steps}
    else:
        q_pe = int(_resolve(args, settings, "q_pe", 8))
        t0 = _resolve(args, settings, "t0", None)
        if scheme == "be1":
            from .cfd import build_be1_system
            hsys = hermitian_dilation(build_be1_system(cfg, u0))
            qcfg = QPEConfig(q_pe, float(t0) if t0 is not None
                             else 0.5 * suggest_t0(hsys))
            res = iterative_be_driver(cfg, qcfg, tol=args.tol)
            rows = [(0, float(yy), float(uu)) for yy, uu in zip(y, u0)]
            for step, prof in enumerate(res.profiles, 1):
                rows.extend((step, float(yy), float(uu))
                            for yy, uu in zip(y, prof))
            final = res.final
            u_classical = be_march(cfg, u0, res.steps)
            extra = {"steps": res.steps, "converged": res.converged,
                     "min_fidelity_vs_classical": float(min(res.fidelities))}
            qcfg_used = qcfg
        else:
            from .cfd import build_be2_system, build_fe_system
            system = (build_be2_system(cfg) if scheme == "be2"
                      else build_fe_system(cfg))
            hsys = hermitian_dilation(system)
            qcfg_used = QPEConfig(q_pe, float(t0) if t0 is not None
                                  else 0.5 * suggest_t0(hsys))
            res = one_shot_driver(cfg, scheme, qcfg_used)
            rows = [(step, float(yy), float(uu))
                    for step, block in enumerate(res.space_time)
                    for yy, uu in zip(y, block)]
            final = res.final_profile
            march = be_march if scheme == "be2" else fe_march
            u_classical = march(cfg, u0, cfg.m)
            extra = {"steps": cfg.m,
                     "success_probability": res.hhl.success_probability}
        extra.update({"q_pe": qcfg_used.q_pe, "t0": qcfg_used.t0})

    t_final = extra["steps"] * cfg.dt
    u_analytic = analytic_profile(cfg, t_final)
    metrics = {
        "scheme": scheme, "method": method,
        "vs_classical": error_metrics(final, u_classical),
        "vs_analytic": error_metrics(final, u_analytic),
    }
    metrics.update(extra)

    profile_path = out_dir / "profile.csv"
    _profile_csv(profile_path, rows)
    metrics_path = out_dir / "metrics.json"
    _write_json(metrics_path, metrics)
    params = dict(settings)
    params.update({"scheme": scheme, "method": method})
    _write_manifest(out_dir, "solve", args, params,
                    [profile_path, metrics_path])
    print(f"solve: scheme={scheme} method={method} "
          f"rms_vs_classical={metrics['vs_classical']['rms']:.3e}")
    return 0


def _parse_t0_range(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError("t0 range must be lo:hi:count")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1 or hi < lo:
        raise ConfigError("bad t0 range")
    return np.linspace(lo, hi, count)


def _parse_q_range(text: str) -> list:
    if ":" in text:
        lo, hi = (int(p) for p in text.split(":", 1))
        if hi < lo:
            raise ConfigError("bad q_pe range")
        return list(range(lo, hi + 1))
    return [int(p) for p in text.split(",")]


_SCAN_CELL_BUDGET = 600


def cmd_scan_tq(args) -> int:
    settings = parse_config(args.config) if args.config else {}
    if args.surrogate_kappa is not None or "surrogate_kappa" in settings:
        kappa = (args.surrogate_kappa
                 if args.surrogate_kappa is not None
                 else settings["surrogate_kappa"])
        system = bidiagonal_surrogate(kappa=float(kappa))
    else:
        from .cfd import build_be1_system
        cfg = flow_config(settings)
        system = build_be1_system(cfg, initial_condition(cfg))
    hsys = hermitian_dilation(system)

    t0_values = (_parse_t0_range(args.t0_range) if args.t0_range
                 else default_t0_range(hsys))
    q_values = _parse_q_range(args.q_pe_range) if args.q_pe_range else [6, 8]
    cells = len(t0_values) * len(q_values)
    if cells > _SCAN_CELL_BUDGET or max(q_values) > 16:
        raise ConfigError(f"scan budget exceeded: {cells} cells "
                          f"(max {_SCAN_CELL_BUDGET}), q_pe max 16")

    scan = tq_scan(hsys, t0_values, q_values, workers=args.threads)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "scan.csv"
    scan.to_csv(csv_path)
    span = float(t0_values[-1] - t0_values[0])
    summary = {
        "t0_star": scan.t0_star,
        "locus": scan.locus,
        "kappa": scan.kappa,
        "q_pe_values": list(scan.q_pe_values),
        "t0_min": float(t0_values[0]),
        "t0_max": float(t0_values[-1]),
        "locus_spread_fraction": (
            (max(scan.locus) - min(scan.locus)) / span if span > 0 else 0.0),
        "eps_min_per_q": [float(e) for e in scan.eps_min_series()],
    }
    json_path = out_dir / "scan.json"
    _write_json(json_path, summary)
    params = dict(settings)
    params.update({"t0_range": args.t0_range, "q_pe_range": args.q_pe_range})
    _write_manifest(out_dir, "scan-tq", args, params, [csv_path, json_path])
    print(f"scan-tq: {cells} cells, T0*={scan.t0_star:.4f} "
          f"kappa={scan.kappa:.4f}")
    return 0


def cmd_fits(args) -> int:
    if not args.scan:
        raise ConfigError("need at least one --scan input")
    per_scan = []
    points = []
    for path in args.scan:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"missing scan input {path}")
        summary = json.loads(path.read_text())
        qs = summary["q_pe_values"]
        eps_min = summary["eps_min_per_q"]
        entry = {"input": path.name, "kappa": summary["kappa"],
                 "t0_star": summary["t0_star"]}
        try:
            fit = fit_error_power_law(qs, eps_min)
            entry["power_law"] = {"exponent": fit.params[0],
                                  "coeff": fit.params[1],
                                  "r_squared": fit.r_squared}
        except ValueError as exc:
            entry["power_law"] = {"error": str(exc)}
        per_scan.append(entry)
        points.append((summary["kappa"], summary["t0_star"]))

    result = {"scans": per_scan, "t0_kappa": None}
    if len(points) >= 3:
        fit = fit_t0_kappa(points)
        result["t0_kappa"] = {"slope": fit.params[0],
                              "intercept": fit.params[1],
                              "r_squared": fit.r_squared,
                              "predicted_t0_at_kappa_18.88":
                                  predict_t0(18.88, fit)}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fits_path = out_dir / "fits.json"
    _write_json(fits_path, result)
    _write_manifest(out_dir, "fits", args,
                    {"inputs": [str(p) for p in args.scan]}, [fits_path])
    print(f"fits: {len(per_scan)} scan(s)"
          + (", t0(kappa) fitted" if result["t0_kappa"] else ""))
    return 0


def cmd_dissipation(args) -> int:
    settings = parse_config(args.config)
    cfg = flow_config(settings)
    re_values = [float(p) for p in args.re.split(",")] if args.re \
        else [cfg.re]
    n_points = cfg.n_interior
    if n_points & (n_points - 1):
        raise ConfigError("interior grid count must be a power of two for "
                          "the address register")
    rows = dissipation_sweep(re_values, n_points=n_points, r=args.r,
                             q_pe=args.q_pe, dpdx=cfg.dpdx)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "dissipation.csv"
    csv_path.write_text(sweep_to_csv(rows))
    params = dict(settings)
    params.update({"re_values": re_values, "r": args.r, "q_pe": args.q_pe})
    _write_manifest(out_dir, "dissipation", args, params, [csv_path])
    print(f"dissipation: {len(rows)} Reynolds value(s)")
    return 0


def cmd_qsp_demo(args) -> int:
    path = Path(args.vector)
    if not path.exists():
        raise ConfigError(f"missing vector file {path}")
    pairs = load_sparse_csv(path)
    if args.n_qubits is not None:
        n = args.n_qubits
    else:
        n = max(int(idx).bit_length() for idx, _ in pairs)
        n = max(n, 1)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    dense = dense_embedding(pairs, n)
    try:
        p1 = qsp1_synthesize(dense)
        p2 = qsp2_synthesize(pairs, n)
    except ValueError as exc:
        raise ConfigError(f"bad vector file: {exc}") from exc
    outputs = []
    if args.method in ("qsp1", "both"):
        p = out_dir / "qsp1.txt"
        p.write_text(p1.to_text())
        outputs.append(p)
    if args.method in ("qsp2", "both"):
        p = out_dir / "qsp2.txt"
        p.write_text(p2.to_text())
        outputs.append(p)
    report = {
        "n_qubits": n,
        "nonzeros": len(pairs),
        "cnot_qsp1": sum(1 for op in p1.ops if op.kind == "cnot"),
        "cnot_qsp2": sum(1 for op in p2.ops if op.kind == "cnot"),
        "reduction_percent": cnot_report(p1, p2),
        "ancilla_count": 1,
    }
    report_path = out_dir / "report.json"
    _write_json(report_path, report)
    outputs.append(report_path)
    _write_manifest(out_dir, "qsp-demo", args,
                    {"vector": str(path), "method": args.method,
                     "n_qubits": n}, outputs)
    print(f"qsp-demo: reduction {report['reduction_percent']:.1f}%")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qflow",
                     description="quantum flow-solver experiment driver")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="key = value settings file")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="qflow-out",
                       help="output directory")

    p = sub.add_parser("solve", help="march or one-shot solve a flow")
    common(p)
    p.add_argument("--scheme", choices=["be1", "be2", "fe"], default=None)
    p.add_argument("--method", choices=["classical", "hhl"], default=None)
    p.add_argument("--q-pe", dest="q_pe", type=int, default=None)
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-6,
                   help="settling tolerance for the iterative scheme")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("scan-tq", help="error scan over (t0, q_pe)")
    common(p, config_required=False)
    p.add_argument("--t0-range", dest="t0_range", default=None,
                   help="lo:hi:count")
    p.add_argument("--q-pe-range", dest="q_pe_range", default=None,
                   help="lo:hi or comma list")
    p.add_argument("--surrogate-kappa", dest="surrogate_kappa", type=float,
                   default=None,
                   help="scan the bidiagonal surrogate at this kappa")
    p.set_defaults(func=cmd_scan_tq)

    p = sub.add_parser("fits", help="scaling fits from scan artifacts")
    p.add_argument("--scan", action="append", default=[],
                   help="scan.json produced by scan-tq (repeatable)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="qflow-out")
    p.set_defaults(func=cmd_fits, config=None)

    p = sub.add_parser("dissipation", help="dissipation sweep over Re")
    common(p)
    p.add_argument("--re", default=None, help="comma list of Reynolds numbers")
    p.add_argument("--r", type=int, default=8, help="phase bits")
    p.add_argument("--q-pe", dest="q_pe", type=int, default=8)
    p.set_defaults(func=cmd_dissipation)

    p = sub.add_parser("qsp-demo", help="state-preparation circuit demo")
    p.add_argument("--vector", required=True, help="index,value CSV")
    p.add_argument("--method", choices=["qsp1", "qsp2", "both"],
                   default="both")
    p.add_argument("--n-qubits", dest="n_qubits", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="qflow-out")
    p.set_defaults(func=cmd_qsp_demo, config=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None):
            set_num_threads(args.threads)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (PostSelectionError, ConvergenceError, StabilityError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
