"""Command-line entry point: simulate, fit, diagnose, compare, density.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import gibbs, io, mfvb, simulate
from .model import ValidationError
from .stats_core import PdError, make_rng, spawn_seeds

log = logging.getLogger("surme")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3
METHODS = ("gibbs-surme", "gibbs-sur", "mfvb", "fgls")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    method: str
    data: str
    out: str
    seed: int = 0
    priors: str | None = None
    draws: int = 51_000
    burnin: int = 1_000
    thin: int = 100
    tol: float = 1e-7
    max_cycles: int = 5_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}")
        if self.method.startswith("gibbs") and not self.draws > self.burnin >= 0:
            raise UsageError("need --draws > --burnin >= 0")
        if self.method.startswith("gibbs") and self.thin < 1:
            raise UsageError("--thin must be >= 1")
        if self.method == "mfvb" and not (self.tol > 0 and self.max_cycles >= 1):
            raise UsageError("need --tol > 0 and --max-cycles >= 1")

    def mcmc(self) -> gibbs.McmcConfig:
        return gibbs.McmcConfig(draws=self.draws, burnin=self.burnin, thin=self.thin, seed=self.seed)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    if args.case == "custom":
        if args.sigma_z2 is None or args.rz is None:
            raise UsageError("--case custom needs --sigma-z2 and --rz")
        cfg = simulate.DgpConfig(N=args.n, sigma_z2=args.sigma_z2, R_z=args.rz, seed=args.seed)
    else:
        over = {"N": args.n, "seed": args.seed}
        if args.sigma_z2 is not None:
            over["sigma_z2"] = args.sigma_z2
        if args.rz is not None:
            over["R_z"] = args.rz
        cfg = simulate.case_config(args.case, **over)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # same per-replication streams as replicate_study
    for r, seq in enumerate(spawn_seeds(args.seed, args.reps)):
        data = simulate.generate_dataset(cfg, make_rng(seq.spawn(1)[0]))
        rep_dir = out / f"rep{r + 1:03d}"
        io.save_dataset(data, rep_dir)
        io.save_json({"case": args.case, "config": asdict(cfg), "params": data.truth["params"]},
                     rep_dir / "truth.json")
        zeros = np.zeros_like(data.truth["Z"])
        io.write_z_table(data.truth["Z"], zeros, rep_dir / "z_true.csv")
    if args.estimator:
        summary = simulate.replicate_study(cfg, args.estimator, args.reps, seed=args.seed,
                                           mcmc=_mcmc_overrides(args), workers=args.workers)
        io.save_json(summary.to_dict(with_reports=True), out / f"study_{args.estimator}.json")
        _print_study(summary)
    print(f"wrote {args.reps} dataset(s) to {out}")
    return EXIT_OK


def _mcmc_overrides(args) -> dict:
    return {"draws": args.draws, "burnin": args.burnin, "thin": args.thin}


def _print_study(summary) -> None:
    print(f"{summary.estimator}: {summary.reps} reps, {summary.failures} failed")
    for name, mean in summary.mean.items():
        re = summary.rel_error.get(name)
        re_txt = f"{re:+.3f}" if re is not None else ""
        print(f"  {name:>10s} {mean:10.4f} {re_txt}")


def cmd_fit(args) -> int:
    cfg = RunConfig(method=args.method, data=args.data, out=args.out, seed=args.seed,
                    priors=args.priors, draws=args.draws, burnin=args.burnin, thin=args.thin,
                    tol=args.tol, max_cycles=args.max_cycles)
    manifest = io.read_manifest(cfg.data)
    data = io.load_dataset(manifest)
    priors = io.load_priors(cfg.priors, data, manifest.exposure)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_json(asdict(cfg), out / "config.json")

    if cfg.method == "fgls":
        report = simulate.fit_sur_fgls(data)
        report.seed = cfg.seed
    elif cfg.method == "mfvb":
        st, report = mfvb.cavi_fit(data, priors, tol=cfg.tol, max_cycles=cfg.max_cycles)
        report.seed = cfg.seed
        var = np.broadcast_to(np.diag(st.Sigma_Z), st.mu_Z.shape)
        io.write_z_table(st.mu_Z, var, out / "z_summary.csv")
    else:
        fit = gibbs.gibbs_surme if cfg.method == "gibbs-surme" else gibbs.gibbs_sur
        chain, report = fit(data, priors, cfg.mcmc())
        io.write_chain(chain.scalar_draws(), out / "chain.csv")
        if chain.z_mean is not None:
            io.write_z_table(chain.z_mean, chain.z_var, out / "z_summary.csv")
    io.save_report(report, out / "report.json")
    print(f"{cfg.method}: report written to {out / 'report.json'}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    chain = io.read_chain(args.chain)
    out = {}
    for name, x in chain.items():
        d = diag.chain_diag(x, thin=args.thin).to_dict()
        if x.size:
            d["hpdi"] = list(diag.hpdi(x, args.prob))
            d["mean"] = float(x.mean())
        out[name] = d
    io.save_json(out, args.out)
    for name, d in out.items():
        rho1 = d["rho"][0] if d["rho"] else float("nan")
        print(f"{name:>10s} rho1={rho1:7.3f} IF={d['inefficiency']:7.3f} CD={d['geweke_cd']:7.3f}")
    return EXIT_OK


def _load_fit(path: str):
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    if not p.exists():
        raise ValidationError([f"fit report {p} does not exist"])
    return io.load_report(p)


def cmd_compare(args) -> int:
    reports = [(f, _load_fit(f)) for f in args.fit]
    lines = ["method,dic,p_d,mean_deviance,deviance_at_mean,source"]
    for src, rep in reports:
        s = rep.scores
        if not s:
            raise ValidationError([f"{src}: report has no model scores (use a Gibbs fit)"])
        lines.append(f"{rep.method},{s['dic']:.4f},{s['p_d']:.4f},{s['mean_deviance']:.4f},"
                     f"{s['deviance_at_mean']:.4f},{src}")
    text = "\n".join(lines) + "\n"
    Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_density(args) -> int:
    chain = io.read_chain(args.chain)
    if args.param not in chain:
        raise ValidationError([f"parameter {args.param!r} not in chain; have {sorted(chain)}"])
    grid, dens = diag.kde_density(chain[args.param], args.grid)
    np.savetxt(args.out, np.column_stack([grid, dens]), delimiter=",", fmt=io.FMT,
               header="x,density", comments="")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="surme", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate Monte Carlo datasets")
    s.add_argument("--case", choices=[*simulate.CASES, "custom"], default="I-1")
    s.add_argument("--sigma-z2", type=float)
    s.add_argument("--rz", type=float)
    s.add_argument("--n", type=int, default=300)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--estimator", choices=METHODS, help="also run a replication study")
    s.add_argument("--workers", type=int, help="parallel replications (default SURME_THREADS or CPUs)")
    s.add_argument("--draws", type=int, default=51_000)
    s.add_argument("--burnin", type=int, default=1_000)
    s.add_argument("--thin", type=int, default=100)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit one dataset")
    f.add_argument("--method", choices=METHODS, required=True)
    f.add_argument("--data", required=True, help="dataset manifest (JSON)")
    f.add_argument("--priors", help="prior file (JSON); defaults when omitted")
    f.add_argument("--draws", type=int, default=51_000)
    f.add_argument("--burnin", type=int, default=1_000)
    f.add_argument("--thin", type=int, default=100)
    f.add_argument("--tol", type=float, default=1e-7)
    f.add_argument("--max-cycles", type=int, default=5_000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("diagnose", help="chain diagnostics")
    d.add_argument("--chain", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--thin", type=int, default=1, help="thinning already applied (recorded only)")
    d.add_argument("--prob", type=float, default=0.95)
    d.set_defaults(func=cmd_diagnose)

    c = sub.add_parser("compare", help="DIC table over fits")
    c.add_argument("--fit", action="append", required=True, help="report file or fit directory")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("density", help="kernel density of one parameter")
    k.add_argument("--chain", required=True)
    k.add_argument("--param", required=True)
    k.add_argument("--grid", type=int, default=512)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_density)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (PdError, np.linalg.LinAlgError, gibbs.SamplerError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
