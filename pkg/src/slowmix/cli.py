"""Command-line front end.

Every subcommand prints one JSON document (or writes it with ``--out``).
Reports carry the library version, a hash of the resolved configuration
and the fixture provenance, and are byte-identical for equal configs.

Seed precedence: config file < ``SLOWMIX_SEED`` < ``--seed``.
Exit codes: 0 ok, 2 configuration, 3 numeric, 4 certificate unavailable.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .aggregation import aggregate_channel, die_out_sandwich
from .channel import ChannelModel, channel_from_process, output_process, verify_membership
from .coupling import CoupledPair, coupled_run
from .ctw import redundancy_certificate
from .decay import DecayProfile, coalescence_horizon
from .errors import CertificateUnavailable, ConfigError, NumericError, SlowmixError
from .estimator import default_depth, estimate, good_set_from
from .fixtures import default_decay, fixture_names, fixture_provenance, load_fixture, tightest_decay
from .inforate import aggregated_rate_bound, information_rate
from .io import dump_json, load_channel, load_decay, load_model
from .simulator import count, read_trace_csv, simulate, write_counts_csv, write_trace_csv
from .tree_model import format_context, parse_context, stationary_distribution

SEED_ENV = "SLOWMIX_SEED"
EXIT_CODES = ((ConfigError, 2), (NumericError, 3), (CertificateUnavailable, 4))


@dataclass
class ExperimentConfig:
    fixture: str | None = None
    params: dict = field(default_factory=dict)
    channel: str | None = None       # channel JSON path
    model: str | None = None         # output-process JSON path, uniform input
    n: int = 100_000
    seed: int = 0
    depth: int | None = None         # k_n override
    alpha: float | None = None       # alpha_n override, k_n = floor(alpha log2 n)
    decay: dict | None = None
    past: str | None = None
    failure: float = 0.05
    couple_runs: int = 0
    couple_horizon: int = 200
    out: str | None = None

    def validate(self) -> None:
        sources = [s for s in (self.fixture, self.channel, self.model) if s is not None]
        if len(sources) != 1:
            raise ConfigError("give exactly one of --fixture, --channel, --model")
        if self.fixture is not None and self.fixture not in fixture_names():
            raise ConfigError(f"unknown fixture {self.fixture!r}; known: {', '.join(fixture_names())}")
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"n must be an integer >= 1, got {self.n!r}")
        if self.depth is not None and self.alpha is not None:
            raise ConfigError("give at most one of --depth and --alpha")
        if self.depth is not None and self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if self.alpha is not None and self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if not 0 < self.failure < 1:
            raise ConfigError("failure probability must lie in (0, 1)")
        if self.couple_runs < 0 or self.couple_horizon < 1:
            raise ConfigError("couple-runs must be >= 0 and couple-horizon >= 1")

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc.pop("out")
        return doc

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()

    def source(self) -> ChannelModel:
        if self.fixture is not None:
            return load_fixture(self.fixture, **self.params)
        if self.channel is not None:
            return load_channel(self.channel)
        return channel_from_process(load_model(self.model))

    def provenance(self) -> str:
        if self.fixture is not None:
            return fixture_provenance(self.fixture)
        return f"user file {self.channel or self.model}"

    def decay_profile(self, ch: ChannelModel) -> DecayProfile:
        if self.decay is not None:
            return DecayProfile.from_dict(self.decay)
        if self.fixture is not None:
            return default_decay(self.fixture, ch)
        return tightest_decay(ch)

    def k(self, alphabet: int) -> int:
        if self.depth is not None:
            return self.depth
        if self.alpha is not None:
            return max(1, math.floor(self.alpha * math.log2(self.n))) if self.n > 1 else 1
        return default_depth(self.n, alphabet)

    def past_for(self, ch: ChannelModel, k: int) -> tuple:
        if self.past is not None:
            return parse_context(self.past)
        return (ch.alphabet - 1,) * max(ch.depth, k)


# -- argument parsing -------------------------------------------------------

def _parse_param(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _source_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model source")
    g.add_argument("--config", help="experiment config JSON (flags override it)")
    g.add_argument("--fixture", help=f"built-in model: {', '.join(fixture_names())}")
    g.add_argument("--param", action="append", type=_parse_param, default=None, metavar="KEY=VALUE",
                   help="fixture parameter, e.g. --param eps=0.2")
    g.add_argument("--channel", help="channel JSON file")
    g.add_argument("--model", help="output-process JSON file (uniform input)")
    g.add_argument("--decay", help="decay JSON file (default: tightest profile of the model)")
    g.add_argument("--out", help="write the report here instead of stdout")
    return p


def _sample_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("sampling")
    g.add_argument("--n", type=int, help="sample length (default 100000)")
    g.add_argument("--seed", type=int, help=f"RNG seed (overrides {SEED_ENV} and config)")
    g.add_argument("--past", help="initial history, oldest symbol first (default all A-1)")
    g.add_argument("--depth", type=int, help="context depth k_n")
    g.add_argument("--alpha", type=float, help="set k_n = floor(alpha log2 n)")
    g.add_argument("--trace", help="read the trace from CSV (columns j,x,y) instead of simulating")
    return p


def build_parser() -> argparse.ArgumentParser:
    src, smp = _source_parser(), _sample_parser()
    parser = argparse.ArgumentParser(prog="slowmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"slowmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    model = sub.add_parser("model", help="model utilities")
    msub = model.add_subparsers(dest="action", required=True)
    validate = msub.add_parser("validate", parents=[src], help="check a tree and its decay membership")
    validate.add_argument("--max-depth", type=int, default=None,
                          help="deepest |u|+1 checked for membership (default tree depth + 1)")

    sub.add_parser("stationary", parents=[src], help="stationary law of the output process")
    agg = sub.add_parser("aggregate", parents=[src], help="aggregated parameters at depth k")
    agg.add_argument("--depth", type=int, required=True)
    rate = sub.add_parser("rate", parents=[src], help="information rate")
    rate.add_argument("--depth", type=int, default=None, help="also report the aggregated rate")

    sub.add_parser("simulate", parents=[src, smp], help="draw a trace (CSV with --out)")
    est = sub.add_parser("estimate", parents=[src, smp], help="naive estimates and certificates")
    est.add_argument("--failure", type=float, help="failure probability for the stationary radius")
    ctw = sub.add_parser("ctw", parents=[src, smp], help="CTW redundancy certificate")
    ctw.add_argument("--ctw-depth", type=int, default=2, help="CTW tree depth K")

    cpl = sub.add_parser("couple", parents=[src, smp], help="coupled restriction chains")
    cpl.add_argument("--runs", type=int, help="number of coupled runs")
    cpl.add_argument("--horizon", type=int, help="Z-steps per run")
    cpl.add_argument("--good", help="comma-separated good contexts (default all of A^k)")
    cpl.add_argument("--ell", type=int, help="coalescence depth (default ell_n)")

    run = sub.add_parser("run", parents=[src, smp], help="simulate, count, estimate and optionally couple")
    run.add_argument("--failure", type=float)
    run.add_argument("--couple-runs", type=int)
    run.add_argument("--couple-horizon", type=int)
    return parser


def resolve_config(args: argparse.Namespace, environ=None) -> ExperimentConfig:
    """Merge config file, environment and flags (later wins)."""
    environ = os.environ if environ is None else environ
    doc = {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"{args.config}: no such file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = ExperimentConfig(**doc)
    if environ.get(SEED_ENV) not in (None, ""):
        try:
            cfg.seed = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    flags = {
        "fixture": "fixture", "channel": "channel", "model": "model", "n": "n", "seed": "seed",
        "depth": "depth", "alpha": "alpha", "past": "past", "failure": "failure",
        "couple_runs": "couple_runs", "couple_horizon": "couple_horizon", "out": "out",
        "runs": "couple_runs", "horizon": "couple_horizon",
    }
    for flag, name in flags.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "param", None):
        cfg.params = {**cfg.params, **dict(args.param)}
    if getattr(args, "decay", None):
        cfg.decay = load_decay(args.decay).to_dict()
    if cfg.fixture is not None and (cfg.channel is not None or cfg.model is not None) \
            and getattr(args, "fixture", None) is None:
        cfg.fixture = None
    cfg.validate()
    return cfg


# -- commands ---------------------------------------------------------------

def _envelope(command: str, cfg: ExperimentConfig, result: dict) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "provenance": cfg.provenance(),
        "result": result,
    }


def _trace(cfg: ExperimentConfig, args, ch: ChannelModel, k: int):
    past = cfg.past_for(ch, k)
    if getattr(args, "trace", None):
        return read_trace_csv(args.trace, past, ch.alphabet)
    return simulate(ch, cfg.n, past, cfg.seed)


def _names(ch: ChannelModel) -> list:
    return [format_context(s) for s in ch.tree.leaves]


def cmd_validate(cfg, args, ch):
    d = cfg.decay_profile(ch)
    max_depth = args.max_depth if args.max_depth is not None else ch.depth + 1
    rep = verify_membership(ch, d, max_depth)
    return {
        "alphabet": ch.alphabet, "leaves": _names(ch), "depth": ch.depth,
        "decay": d.to_dict(), "member": rep.member, "worst_excess": rep.worst_excess,
        "worst_gap": rep.worst_ratio_gap, "witness": rep.argmax, "max_depth": max_depth,
    }


def cmd_stationary(cfg, args, ch):
    st = stationary_distribution(output_process(ch))
    return {"mu": dict(zip(_names(ch), st.mu.tolist())), "method": st.method}


def cmd_aggregate(cfg, args, ch):
    k = args.depth
    agg = aggregate_channel(ch, k)
    A = ch.alphabet
    names = [format_context(s) for s in agg.channel.tree.leaves]
    q = np.einsum("a,wab->wb", ch.input, agg.channel.theta)
    mu = np.bincount(np.arange(len(agg.mu_fine)) % A ** k, weights=agg.mu_fine, minlength=A ** k)
    out = {
        "k": k,
        "theta": {w: agg.channel.theta[i].tolist() for i, w in enumerate(names)},
        "q": {w: q[i].tolist() for i, w in enumerate(names)},
        "mu": {w: float(mu[i]) for i, w in enumerate(names)},
    }
    try:
        sw = die_out_sandwich(ch, cfg.decay_profile(ch), k)
        out["sandwich"] = {"holds": sw.holds, "delta_k": sw.delta_k,
                           "worst_lower_slack": sw.worst_lower_slack,
                           "worst_upper_slack": sw.worst_upper_slack}
    except CertificateUnavailable as exc:
        out["sandwich"] = {"holds": None, "note": str(exc)}
    return out


def cmd_rate(cfg, args, ch):
    out = information_rate(ch).to_dict()
    if args.depth is not None:
        r_agg, r_full, gap = aggregated_rate_bound(ch, args.depth)
        out["aggregated"] = {"k": args.depth, "rate": r_agg, "gap": gap}
    return out


def cmd_simulate(cfg, args, ch):
    k = cfg.k(ch.alphabet)
    tr = _trace(cfg, args, ch, k)
    if cfg.out:
        write_trace_csv(tr, cfg.out)
        return None
    return {"n": tr.n, "past": format_context(tr.past),
            "x": "".join(map(str, tr.x.tolist())), "y": "".join(map(str, tr.y.tolist()))}


def _estimation(cfg, args, ch):
    k = cfg.k(ch.alphabet)
    tr = _trace(cfg, args, ch, k)
    counts = count(tr, k)
    d = cfg.decay_profile(ch)
    rep = estimate(counts, d, ch.input, cfg.failure)
    out = rep.to_dict()
    q_hat = rep.estimates.output_law(ch.input)
    out["q_hat"] = {counts.context_name(w): (None if np.isnan(q_hat[w]).any() else q_hat[w].tolist())
                    for w in range(ch.alphabet ** k)}
    out["decay"] = d.to_dict()
    return rep, counts, out


def cmd_estimate(cfg, args, ch):
    return _estimation(cfg, args, ch)[2]


def cmd_ctw(cfg, args, ch):
    K = args.ctw_depth
    tr = _trace(cfg, args, ch, K)
    cert = redundancy_certificate(tr, K)
    return {"K": K, "n": tr.n, "log2_pc": cert.log_pc, "log2_ml": cert.log_ml,
            "allowance": cert.allowance, "slack": cert.slack, "holds": cert.holds}


def _start_history(w: tuple, need: int) -> tuple:
    return (w[0],) * max(0, need - len(w)) + w


def _coupling(cfg, ch, good, ell: int):
    """Run ``couple_runs`` pairs from the first and last good states."""
    states = good.names
    need = max(ch.depth, good.k)
    s1 = _start_history(parse_context(states[0]), need)
    s2 = _start_history(parse_context(states[-1]), need)
    rows = []
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.couple_runs)
    for r, ss in enumerate(seeds):
        seed = int(ss.generate_state(1)[0])
        rec = coupled_run(CoupledPair(ch, good, s1, s2, ell, seed), cfg.couple_horizon)
        rows.append({"run": r, **rec.to_dict()})
    taus = [row["tau"] for row in rows if row["tau"] is not None]
    summary = {
        "runs": cfg.couple_runs, "horizon": cfg.couple_horizon, "ell": ell,
        "start1": states[0], "start2": states[-1],
        "coalesced": len(taus),
        "mean_tau": float(np.mean(taus)) if taus else None,
        "total_divergences": int(sum(row["divergences"] for row in rows)),
    }
    return summary, rows


def _write_rows(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["run"])
        w.writeheader()
        w.writerows(rows)


def cmd_couple(cfg, args, ch):
    k = cfg.k(ch.alphabet)
    states = args.good.split(",") if args.good else range(ch.alphabet ** k)
    good = good_set_from(states, k, ch.alphabet)
    ell = args.ell if args.ell is not None else coalescence_horizon(cfg.decay_profile(ch), cfg.n)
    if cfg.couple_runs < 1:
        cfg.couple_runs = 1
    summary, rows = _coupling(cfg, ch, good, ell)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(rows, out / "coalescence.csv")
    return {"k": k, "good": good.names, **summary}


def cmd_run(cfg, args, ch):
    rep, counts, out = _estimation(cfg, args, ch)
    rows = None
    if cfg.couple_runs > 0:
        if not len(rep.good):
            out["coupling"] = {"skipped": "no good states"}
        elif not rep.aperiodic:
            out["coupling"] = {"skipped": f"restriction has period {rep.period}"}
        else:
            out["coupling"], rows = _coupling(cfg, ch, rep.good, rep.ell)
    if cfg.out:
        target = Path(cfg.out)
        target.mkdir(parents=True, exist_ok=True)
        write_counts_csv(counts, target / "counts.csv")
        if rows is not None:
            _write_rows(rows, target / "coalescence.csv")
    return out


COMMANDS = {
    "validate": cmd_validate, "stationary": cmd_stationary, "aggregate": cmd_aggregate,
    "rate": cmd_rate, "simulate": cmd_simulate, "estimate": cmd_estimate, "ctw": cmd_ctw,
    "couple": cmd_couple, "run": cmd_run,
}
DIRECTORY_OUTPUT = {"couple", "run"}


def _exit_code(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


def main(argv=None, environ=None) -> int:
    args = build_parser().parse_args(argv)
    name = args.action if args.command == "model" else args.command
    try:
        cfg = resolve_config(args, environ)
        ch = cfg.source()
        result = COMMANDS[name](cfg, args, ch)
    except SlowmixError as exc:
        code = _exit_code(exc)
        sys.stderr.write(dump_json({"error": {"type": type(exc).__name__, "message": str(exc),
                                              "exit_code": code}}))
        return code
    if result is None:
        return 0
    text = dump_json(_envelope(name, cfg, result))
    if cfg.out and name in DIRECTORY_OUTPUT:
        (Path(cfg.out) / "report.json").write_text(text)
    elif cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
