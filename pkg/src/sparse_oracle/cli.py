"""Command-line front end: ``sparse-oracle threshold | simulate | verify``.

Exit codes: 0 ok, 2 usage, 3 configuration, 4 numeric domain, 5 failed verification.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import math
import sys

from . import __version__
from .errors import DomainError, NoSolutionError
from .experiment import (METHODS, ScenarioConfig, part1_configs, part2_configs, run_config)
from .model import AsymptoticParams, NormalPrior, TwoGroupsModel, TwoPointPrior, prior_from_text
from .numerics import normal_isf
from .oracle import oracle_thresholds_asymptotic, oracle_thresholds_exact
from .rules import bfdr_threshold, bfdr_threshold_asymptotic, gw_threshold
from .verify import SUITES, run_suite

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DOMAIN, EXIT_VERIFY = 0, 2, 3, 4, 5

CSV_HEADER = ("scenario_id,method,m,n,p,beta_exponent,sigma_mode,alpha,replicates,seed,"
              "MP,FDR,Power,MP_se,FDR_se,Power_se")
MISSING = "NA"
SWEEPS = ("part1", "part2", "single")

# keys accepted in a simulate config file, with their parsers
_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_methods(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _parse_bool(text):
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {text!r}") from None


CONFIG_KEYS = {
    "m": int,
    "p": float,
    "tau2": float,
    "sigma_mode": str,
    "methods": _parse_methods,
    "alpha": float,
    "replicates": int,
    "seed": int,
    "k_max_fraction": float,
    "sigma": float,
    "binomial_over_all_columns": _parse_bool,
    "sweep": str,
}
DEFAULTS = {"m": 256, "p": 0.05, "sweep": "single"}


class ConfigError(Exception):
    pass


def read_config(text):
    """Parse a flat ``key=value`` run config; ``#`` starts a comment line."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return out


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return MISSING
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def csv_rows(rows):
    for r in rows:
        c, s = r.config, r.summary
        # beta_exponent is left empty outside part 2; undefined averages print as NA
        fields = (r.scenario_id, r.method, c.m_total, c.m_total, float(c.p),
                  "" if c.beta_exponent is None else float(c.beta_exponent),
                  c.sigma_mode, float(c.alpha), c.replicates, c.seed,
                  s.MP, s.FDR, s.Power, s.MP_se, s.FDR_se, s.Power_se)
        yield ",".join(_fmt(v) for v in fields)


def manifest_lines(sweep, base, n_scenarios):
    yield f"# sparse_oracle {__version__}"
    yield f"# sweep={sweep} scenarios={n_scenarios} seed={base.seed} config_hash={base.digest()}"
    fields = dataclasses.asdict(base)
    for key in ("m_total", "p", "stream", "beta_exponent"):
        fields.pop(key)
    yield "# base " + " ".join(f"{k}={_fmt(v) if not isinstance(v, tuple) else ','.join(v)}"
                               for k, v in sorted(fields.items()))


def simulate_csv(sweep, base, workers=None):
    """Full CSV text (manifest, header, rows) for a sweep."""
    if sweep == "part1":
        scenarios = part1_configs(base)
    elif sweep == "part2":
        scenarios = part2_configs(base)
    elif sweep == "single":
        scenarios = [(f"single-m{base.m_total}-p{base.p:g}-{base.sigma_mode}", base)]
    else:
        raise ConfigError(f"unknown sweep {sweep!r}; expected one of {SWEEPS}")
    buf = io.StringIO()
    for line in manifest_lines(sweep, base, len(scenarios)):
        buf.write(line + "\n")
    buf.write(CSV_HEADER + "\n")
    for sid, cfg in scenarios:
        for line in csv_rows(run_config(cfg, sid, workers)):
            buf.write(line + "\n")
    return buf.getvalue()


def _build_prior(args):
    if args.prior_file:
        with open(args.prior_file) as fh:
            return prior_from_text(fh.read())
    if args.prior == "normal":
        return NormalPrior(args.tau2)
    return TwoPointPrior(args.mu_minus, args.mu_plus, args.w)


def cmd_threshold(args, out):
    model = TwoGroupsModel(args.p, args.sigma, args.n, _build_prior(args), args.delta0, args.deltaA)
    se = model.se
    out.write(f"rule={args.rule} p={_fmt(args.p)} n={args.n} sigma={_fmt(args.sigma)}\n")

    def show(label, c):
        out.write(f"{label}: z={_fmt(c)} xbar={_fmt(c * se)}\n")

    if args.rule == "bonferroni":
        if args.m is None or args.m < 1:
            raise ValueError("bonferroni needs --m >= 1")
        show("exact", normal_isf(args.alpha / (2 * args.m)))
        return EXIT_OK
    if args.rule == "gw":
        show("exact", gw_threshold(model, args.alpha))
        return EXIT_OK
    params = AsymptoticParams.for_model(model, args.C)
    if args.rule == "bfdr":
        show("exact", bfdr_threshold(model, args.alpha))
        try:
            show("asymptotic", bfdr_threshold_asymptotic(model, params, args.alpha, args.alpha_inf))
        except DomainError as exc:
            out.write(f"asymptotic: undefined ({exc})\n")
        return EXIT_OK
    thr = oracle_thresholds_exact(model)
    za, zb = thr.c_scaled
    out.write(f"exact: a={_fmt(thr.a)} b={_fmt(thr.b)} z_a={_fmt(-za)} z_b={_fmt(zb)}\n")
    try:
        asym = oracle_thresholds_asymptotic(model, params)
        za, zb = asym.c_scaled
        out.write(f"asymptotic: a={_fmt(asym.a)} b={_fmt(asym.b)} z_a={_fmt(-za)} z_b={_fmt(zb)}\n")
    except DomainError as exc:
        out.write(f"asymptotic: undefined ({exc})\n")
    return EXIT_OK


def _scenario_from(args):
    values = dict(DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            values.update(read_config(fh.read()))
    overrides = {"seed": args.seed, "replicates": args.replicates, "m": args.m, "p": args.p,
                 "alpha": args.alpha, "sigma_mode": args.sigma_mode, "sweep": args.sweep}
    if args.methods is not None:
        overrides["methods"] = _parse_methods(args.methods)
    values.update({k: v for k, v in overrides.items() if v is not None})
    sweep = values.pop("sweep")
    if sweep not in SWEEPS:
        raise ConfigError(f"unknown sweep {sweep!r}; expected one of {SWEEPS}")
    m = values.pop("m")
    if m < 4 or m & (m - 1):
        raise ConfigError(f"m must be a power of two >= 4, got {m}")
    try:
        return sweep, ScenarioConfig(m_total=m, **values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_simulate(args, out):
    sweep, base = _scenario_from(args)
    text = simulate_csv(sweep, base)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def cmd_verify(args, out):
    kwargs = {}
    if args.instances is not None:
        if args.suite == "asymptotics":
            raise ConfigError("--instances does not apply to the asymptotics suite")
        kwargs["instances"] = args.instances
    checks = run_suite(args.suite, **kwargs)
    for c in checks:
        out.write(c.line() + "\n")
    failed = sum(not c.passed for c in checks)
    out.write(f"{args.suite}: {len(checks) - failed}/{len(checks)} checks passed\n")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="sparse-oracle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    th = sub.add_parser("threshold", help="exact and asymptotic cutoffs of a fixed-threshold rule")
    th.add_argument("--rule", choices=("oracle", "bfdr", "gw", "bonferroni"), required=True)
    th.add_argument("--p", type=float, default=0.1)
    th.add_argument("--n", type=int, default=100)
    th.add_argument("--sigma", type=float, default=1.0)
    th.add_argument("--alpha", type=float, default=0.05)
    th.add_argument("--m", type=int, help="number of tests (bonferroni)")
    th.add_argument("--prior", choices=("normal", "two_point"), default="normal")
    th.add_argument("--prior-file", help="key=value prior block (overrides --prior)")
    th.add_argument("--tau2", type=float, default=0.9)
    th.add_argument("--mu-minus", type=float, default=-1.0)
    th.add_argument("--mu-plus", type=float, default=1.0)
    th.add_argument("--w", type=float, default=0.5)
    th.add_argument("--delta0", type=float, default=1.0)
    th.add_argument("--deltaA", type=float, default=1.0)
    th.add_argument("--C", type=float, default=0.0, help="limit of 2 log(delta f) / n")
    th.add_argument("--alpha-inf", type=float, default=0.0)
    th.set_defaults(func=cmd_threshold)

    sim = sub.add_parser("simulate", help="Monte-Carlo study, CSV output")
    sim.add_argument("--config")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--replicates", type=int)
    sim.add_argument("--m", type=int, help="m_total (regressors plus intercept)")
    sim.add_argument("--p", type=float)
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--sigma-mode", choices=("known", "unknown"))
    sim.add_argument("--methods", help=f"comma list from {','.join(METHODS)}")
    sim.add_argument("--sweep", choices=SWEEPS)
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    ver = sub.add_parser("verify", help="run an invariant suite")
    ver.add_argument("suite", choices=SUITES)
    ver.add_argument("--instances", type=int)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except NoSolutionError as exc:
        print(f"error: no-solution: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except DomainError as exc:
        print(f"error: numeric domain: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
