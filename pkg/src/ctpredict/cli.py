"""Command-line front end.

Exit codes: 0 ok, 1 usage or validation error, 2 deterministic input,
3 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigurationError, CtpredictError, RegularityError, UsageError
from .io import read_density_csv, write_csv, write_json
from .oracle import compare, finite_section_problem, solve_projection, whole_past_problem
from .predictor import predict_finite_section, predict_whole_past
from .simulate import PredictorSpec, monte_carlo_mse, simulate_ma, simulate_spectral
from .specmodel import SpectralModel, make_family, szego_integral
from .szego import factorize, verify_factor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DETERMINISTIC = 2
EXIT_VERIFY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_model(cfg: RunConfig) -> SpectralModel:
    if cfg.density_csv:
        if not os.path.exists(cfg.density_csv):
            raise ConfigurationError(f"density.csv: file not found: {cfg.density_csv}", key="density.csv")
        mu, g = read_density_csv(cfg.density_csv)
        return SpectralModel.sampled(mu, g)
    try:
        family = make_family(cfg.family, **cfg.params)
    except ConfigurationError as exc:
        key = "family" if "family" in str(exc) else "params"
        raise ConfigurationError(f"{key}: {exc}", key=key) from None
    return SpectralModel.closed_form(family, M=cfg.M, dmu=cfg.dmu)


def _regularity(cfg):
    return {"threshold": cfg.szego_threshold, "max_subfloor_fraction": cfg.szego_max_subfloor_fraction}


def _factor(cfg, model):
    return factorize(
        model, cfg.h, cfg.L, floor=cfg.floor, tol_support=cfg.tol_support, regularity=_regularity(cfg)
    )


def _out(cfg, args, name):
    return os.path.join(args.out, name)


def _tag(x: float) -> str:
    return ("%.10g" % x).replace("-", "m")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_check(cfg, args) -> int:
    model = build_model(cfg)
    rep = szego_integral(model, floor=cfg.floor, **_regularity(cfg))
    print(f"classification: {rep.classification}")
    print(f"szego_value: {rep.szego_value:.17g}")
    print(f"floored_value: {rep.floored_value:.17g}")
    print(f"subfloor_fraction: {rep.subfloor_fraction:.17g}")
    if args.out:
        write_json(_out(cfg, args, "regularity.json"), rep.to_dict(), cfg.sha256)
    return EXIT_OK if rep.regular else EXIT_DETERMINISTIC


def cmd_factorize(cfg, args) -> int:
    model = build_model(cfg)
    f = _factor(cfg, model)
    diag = verify_factor(
        f,
        model,
        tol_factor=cfg.tol_factor,
        tol_support=cfg.tol_support,
        tol_plancherel=cfg.tol_plancherel,
        tol_log=cfg.tol_log,
    )
    write_csv(_out(cfg, args, "factor_freq.csv"), ("mu", "re_c", "im_c"), f.freq_csv_rows(), cfg.sha256)
    write_csv(_out(cfg, args, "factor_time.csv"), ("s", "re_cstar", "im_cstar"), f.time_csv_rows(), cfg.sha256)
    report = diag.to_dict()
    report["factorization"] = f.diagnostics
    report["log_integral"] = f.log_integral
    write_json(_out(cfg, args, "factor_diagnostics.json"), report, cfg.sha256)
    for c in diag.checks:
        print(f"{c.name}: {c.value:.6g} (tol {c.tolerance:g}) {'pass' if c.passed else 'FAIL'}")
    return EXIT_OK if diag.passed else EXIT_VERIFY


def cmd_predict(cfg, args) -> int:
    if not cfg.taus:
        raise ConfigurationError("predict.tau: at least one lag is required", key="predict.tau")
    model = build_model(cfg)
    f = _factor(cfg, model)
    r = model.covariance()
    rows = []
    for tau in cfg.taus:
        windows = [None] + list(cfg.Ts)
        for T in windows:
            if T is None:
                rep = predict_whole_past(f, tau, psi=cfg.psi)
                name = f"whole_past_tau{_tag(tau)}"
            else:
                rep = predict_finite_section(f, tau, T, psi=cfg.psi)
                name = f"finite_tau{_tag(tau)}_T{_tag(T)}"
            kpath = _out(cfg, args, name + "_kernel.csv")
            write_csv(kpath, ("s", "re_cstar", "im_cstar"), np.column_stack([rep.kernel_s, rep.kernel.real, rep.kernel.imag]), cfg.sha256)
            body = rep.to_dict()
            body["kernel_csv_path"] = os.path.basename(kpath)
            if rep.psi is not None:
                ppath = _out(cfg, args, name + "_psi.csv")
                write_csv(ppath, ("mu", "re_psi", "im_psi", "valid"), rep.psi.csv_rows(), cfg.sha256)
                body["psi_csv_path"] = os.path.basename(ppath)
            sig_o = gap = verdict = None
            if cfg.oracle:
                if T is None:
                    prob = whole_past_problem(r, tau, cfg.oracle_h, cfg.oracle_window)
                else:
                    prob = finite_section_problem(r, tau, T, cfg.oracle_h)
                sol = solve_projection(prob)
                cmp = compare(rep, sol, cfg.tol_compare)
                sig_o, gap, verdict = cmp.sigma2_oracle, cmp.gap, cmp.verdict
                body["oracle"] = {**sol.to_dict(), **cmp.to_dict()}
                write_csv(_out(cfg, args, name + "_oracle.csv"), ("u", "re_w", "im_w"), sol.csv_rows(), cfg.sha256)
            write_json(_out(cfg, args, name + ".json"), body, cfg.sha256)
            rows.append((tau, T, rep.sigma2, sig_o, gap, verdict))
            print(
                f"tau={tau:g} T={'-' if T is None else f'{T:g}'} sigma2={rep.sigma2:.10g}"
                + ("" if sig_o is None else f" oracle={sig_o:.10g} gap={gap:.3g} {verdict}")
            )
    write_csv(
        _out(cfg, args, "summary.csv"),
        ("tau", "T", "sigma2_formula", "sigma2_oracle", "gap", "verdict"),
        rows,
        cfg.sha256,
    )
    return EXIT_OK


def _need_seed(cfg):
    if cfg.seed is None:
        raise ConfigurationError("seed: a seed is required for simulation (config key 'seed' or --seed)", key="seed")
    return cfg.seed


def cmd_simulate(cfg, args) -> int:
    seed = _need_seed(cfg)
    model = build_model(cfg)
    if cfg.method == "spectral":
        path = simulate_spectral(model, cfg.n_points, cfg.h, seed, real=cfg.real)
    else:
        f = _factor(cfg, model)
        path = simulate_ma(f, cfg.n_points, cfg.h, seed, real=cfg.real, keep_noise=False)
    write_csv(_out(cfg, args, "path.csv"), ("t", "re", "im"), path.csv_rows(), cfg.sha256)
    write_json(
        _out(cfg, args, "path.json"),
        {"seed": seed, "method": path.method, "h": path.h, "n_points": path.values.size, "real": path.real},
        cfg.sha256,
    )
    print(f"wrote {path.values.size} samples ({path.method})")
    return EXIT_OK


def cmd_verify(cfg, args) -> int:
    seed = _need_seed(cfg)
    if not cfg.taus:
        raise ConfigurationError("predict.tau: at least one lag is required", key="predict.tau")
    model = build_model(cfg)
    f = _factor(cfg, model)
    rows = []
    reports = []
    failing = []
    for tau in cfg.taus:
        for T in [None] + list(cfg.Ts):
            spec = PredictorSpec(tau, T)
            mc = monte_carlo_mse(
                f, spec, cfg.N, seed, real=cfg.real, theory=cfg.theory_override, margin_factor=cfg.margin_factor
            )
            ok = abs(mc.z) <= cfg.tol_z
            row = (tau, T, mc.n, mc.mse, mc.stderr, mc.theory, mc.z, "pass" if ok else "fail")
            rows.append(row)
            reports.append({**mc.to_dict(), "passed": ok})
            line = f"tau={tau:g} T={'-' if T is None else f'{T:g}'} n={mc.n} mse={mc.mse:.6g} stderr={mc.stderr:.3g} theory={mc.theory:.6g} z={mc.z:+.3f}"
            print(line + ("" if ok else "  FAIL"))
            if not ok:
                failing.append(line)
    write_csv(
        _out(cfg, args, "mc_report.csv"),
        ("tau", "T", "n", "mse", "stderr", "theory", "z", "verdict"),
        rows,
        cfg.sha256,
    )
    write_json(_out(cfg, args, "mc_report.json"), {"rows": reports}, cfg.sha256)
    if failing:
        print("verification failed:", file=sys.stderr)
        for line in failing:
            print("  " + line, file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "factorize": cmd_factorize,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", metavar="U64", type=int, help="random seed (overrides the config)")
    p = _Parser(prog="ctpredict", description="Continuous-time linear prediction from a spectral density.")
    p.add_argument("--version", action="version", version=f"ctpredict {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    help_ = {
        "check": "Szegő regularity test",
        "factorize": "outer factor and kernel",
        "predict": "predictors, error variances and oracle comparison",
        "simulate": "sample a Gaussian path",
        "verify": "Monte Carlo check of the error formulas",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=help_[name])
    return p


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise UsageError("--seed must be an unsigned 64-bit integer")
            cfg = cfg.with_overrides(seed=args.seed)
        if args.out is None:
            args.out = None if args.command == "check" else "ctpredict-out"
        return COMMANDS[args.command](cfg, args)
    except RegularityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DETERMINISTIC
    except CtpredictError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (EXIT_USAGE, EXIT_DETERMINISTIC) else EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
