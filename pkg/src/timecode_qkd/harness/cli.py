"""Command line interface.

Subcommands: simulate, analyze-qber, estimate-gamma, security-diagram,
attack-eval, range-projection. Run ``timecode-qkd <cmd> --help`` for flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import security
from ..adversary import AmbiguousAction, AttackStrategy, evaluate_strategy_exact, evaluate_strategy_mc
from ..estimation import (
    EstimationError,
    estimate_gamma,
    gamma_lower_bound,
    read_samples_csv,
    relative_contrast_loss,
    write_samples_csv,
)
from ..protocol import ProtocolConfig, qber_scan
from . import io
from .config import ConfigError, ExperimentConfig
from .runner import analyze, contrast_samples, simulate

log = logging.getLogger("timecode_qkd")


class CliError(Exception):
    pass


def _floats(text: str) -> list[float]:
    """Parse ``a,b,c`` or ``lo:hi:step``."""
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(np.floor((hi - lo) / step + 1e-9)) + 1
            return [round(lo + step * i, 9) for i in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a,b,c or lo:hi:step, got {text!r}") from None


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    chrono, truth = simulate(cfg, threads=args.threads)
    report = analyze(cfg, chrono, truth)
    io.write_chronogram(out / "chronogram.csv", chrono)
    io.write_truth(out / "truth.csv", truth)
    write_samples_csv(out / "samples.csv", contrast_samples(chrono, truth.sequence_ids))
    (out / "config.cfg").write_text(cfg.to_text())
    io.dump_json(out / "report.json", report.as_dict())
    print(f"wrote {len(chrono)} events for {cfg.n_sequences} sequences to {out}")
    print(f"qber={report.qber:.6f}" if report.qber is not None else "qber=undefined")
    return 0


def cmd_analyze_qber(args) -> int:
    cfg = _load_config(args)
    chrono = io.read_chronogram(args.chronogram)
    truth = io.read_truth(args.truth)
    if args.delay is not None:
        grid = [args.delay]
    else:
        grid = cfg.delay_grid() if args.delays is None else args.delays
    scan = qber_scan(chrono, truth, grid, cfg.protocol)
    payload = {
        "best_delay": scan.best_delay,
        "qber": scan.qber,
        "qber_stderr": scan.report.qber_stderr,
        "sift": scan.report.as_dict(),
        "flagged": scan.flagged,
    }
    if args.report:
        io.dump_json(args.report, payload)
    if scan.flagged:
        print("qber=undefined (no unambiguous detections at any delay)")
        return 0
    print(f"qber={scan.qber:.6f} best_delay={scan.best_delay:g} sifted={scan.report.n_sifted}")
    return 0


def cmd_estimate_gamma(args) -> int:
    if args.samples:
        try:
            samples = read_samples_csv(args.samples)
        except ValueError as exc:
            raise io.FormatError(str(exc)) from None
    elif args.chronogram:
        chrono = io.read_chronogram(args.chronogram)
        samples = contrast_samples(chrono, np.unique(chrono.sequence_id))
    else:
        raise CliError("estimate-gamma needs --samples or --chronogram")
    est = estimate_gamma(samples)
    bound = gamma_lower_bound(est, args.k)
    payload = {"gamma_estimate": est.as_dict(), "k": args.k, "gamma_lower": bound}
    if args.gamma_th is not None:
        payload["gamma_th"] = args.gamma_th
        payload["dc"] = relative_contrast_loss(bound, args.gamma_th)
        payload["dc_gamma0"] = relative_contrast_loss(est.gamma0, args.gamma_th)
    if args.report:
        io.dump_json(args.report, payload)
    print(json.dumps(io._clean(payload), indent=2, sort_keys=True))
    return 0


def cmd_security_diagram(args) -> int:
    grid = security.default_grid(step=args.p_step)
    q = security.q_grid(args.q_step)
    rows = []
    summary = []
    for dc in args.dc:
        curve = security.security_curve(dc, grid, q)
        curve.check()
        rows += curve.rows()
        cross = security.max_secure_qber(dc, grid, curve, args.q_step)
        summary.append(
            {
                "dc": dc,
                "q_star": cross.q_star,
                "status": cross.status,
                "advantage_at_q": security.advantage(args.at_q, dc, grid),
            }
        )
    if args.out:
        io.write_curves(args.out, rows)
    else:
        sys.stdout.write(io.format_curves(rows))
    for s in summary:
        q_star = "none" if s["q_star"] is None else f"{s['q_star']:.4f}"
        print(
            f"dc={s['dc']:g} q_star={q_star} ({s['status']}) advantage@{args.at_q:g}={s['advantage_at_q']:.4f}",
            file=sys.stderr if not args.out else sys.stdout,
        )
    return 0


def cmd_attack_eval(args) -> int:
    cfg = ProtocolConfig()
    actions = [AmbiguousAction(a) for a in args.actions]
    rng = np.random.default_rng(args.seed)
    lines = ["p,action,qber_induced,gamma_avg,info_eve,sift_rate,arrival_rate" + (",mc_qber,mc_gamma_avg,mc_info_eve" if args.mc_trials else "")]
    for action in actions:
        for p in args.p:
            s = AttackStrategy(p, action)
            o = evaluate_strategy_exact(s, cfg)
            line = f"{p:g},{action.value},{o.qber_induced:.6f},{o.gamma_avg:.6f},{o.info_eve:.6f},{o.sift_rate:.6f},{o.arrival_rate:.6f}"
            if args.mc_trials:
                m = evaluate_strategy_mc(s, cfg, args.mc_trials, rng)
                line += f",{m.qber_induced:.6f},{m.gamma_avg:.6f},{m.info_eve:.6f}"
            lines.append(line)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_range_projection(args) -> int:
    budget = security.LinkBudget(args.loss, args.eta, args.dark_rate, args.mu, args.slot_width)
    grid = security.default_grid()
    cross = security.max_secure_qber(args.dc, grid)
    points = security.range_projection(budget, args.distances, cross)
    lines = ["distance_km,qber,secure"] + [f"{p.distance:g},{p.qber:.6f},{int(p.secure)}" for p in points]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if cross.q_star is not None:
        rng_km = security.secure_range_km(budget, cross.q_star)
        print(f"max_secure_qber={cross.q_star:.4f} secure_range_km={rng_km:.2f}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="timecode-qkd", description="Time-coding QKD simulator and analysis tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", help="simulate a run; write chronogram, truth, samples and report")
    s.add_argument("--config", help="flat key = value config file")
    s.add_argument("--seed", type=_seed, help="overrides the config seed")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze-qber", help="QBER of a chronogram against Alice's truth file")
    s.add_argument("--chronogram", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--config", help="config supplying protocol geometry and delay_scan")
    s.add_argument("--delay", type=float, help="evaluate a single propagation delay (ns)")
    s.add_argument("--delays", type=_floats, help="delay grid, a,b,c or lo:hi:step (ns)")
    s.add_argument("--report", help="write the sift report as JSON")
    s.set_defaults(func=cmd_analyze_qber)

    s = sub.add_parser("estimate-gamma", help="autocorrelation estimate from contrast samples")
    s.add_argument("--samples", help="CSV sequence_id,n_plus,n_minus")
    s.add_argument("--chronogram", help="derive samples from MZ events instead")
    s.add_argument("--k", type=float, default=3.0, help="sigma multiplier of the lower bound")
    s.add_argument("--gamma-th", type=float, help="theoretical autocorrelation for dC")
    s.add_argument("--report", help="write the estimate as JSON")
    s.set_defaults(func=cmd_estimate_gamma)

    s = sub.add_parser("security-diagram", help="I_AB and I_AE curves versus QBER")
    s.add_argument("--dc", type=_floats, default=[0.0, 0.061, 0.084], help="relative contrast losses")
    s.add_argument("--q-step", type=float, default=0.001)
    s.add_argument("--p-step", type=float, default=0.01, help="intercept-fraction grid step")
    s.add_argument("--at-q", type=float, default=0.033, help="QBER at which to report the advantage")
    s.add_argument("--out", help="CSV output path (default stdout)")
    s.set_defaults(func=cmd_security_diagram)

    s = sub.add_parser("attack-eval", help="tabulate intercept-resend outcomes")
    s.add_argument("--p", type=_floats, default=[0.0, 0.25, 0.5, 0.75, 1.0])
    s.add_argument("--actions", nargs="+", default=[a.value for a in AmbiguousAction], choices=[a.value for a in AmbiguousAction])
    s.add_argument("--mc-trials", type=int, default=0, help="add Monte Carlo columns with this many trials")
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_attack_eval)

    s = sub.add_parser("range-projection", help="expected QBER and security versus fiber length")
    s.add_argument("--distances", type=_floats, default=_floats("0:60:1"))
    s.add_argument("--eta", type=float, default=0.10)
    s.add_argument("--dark-rate", type=float, default=1e5)
    s.add_argument("--loss", type=float, default=0.2, help="dB/km")
    s.add_argument("--mu", type=float, default=0.1)
    s.add_argument("--slot-width", type=float, default=10.0)
    s.add_argument("--dc", type=float, default=0.084, help="operational relative contrast loss")
    s.add_argument("--out")
    s.set_defaults(func=cmd_range_projection)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"timecode-qkd: config error: {exc}", file=sys.stderr)
        return 3
    except io.FormatError as exc:
        print(f"timecode-qkd: malformed input: {exc}", file=sys.stderr)
        return 4
    except EstimationError as exc:
        print(f"timecode-qkd: estimation failed: {exc}", file=sys.stderr)
        return 5
    except (CliError, ValueError, OSError) as exc:
        print(f"timecode-qkd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
