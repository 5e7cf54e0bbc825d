"""``qframes`` command line: run, calibrate, stabilize-demo.

Exit status: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import collections
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import bob as bob_mod
from ..channel import ChannelParams, ChannelState, advance
from ..polmath import random_unitary
from ..session import SessionAborted, run_session
from . import config as config_mod
from .calibrate import CalibrationError, calibrate
from .config import ConfigError, ExperimentConfig
from .report import Pooled, canonical_json, render_table, report_bundle

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
DEMO_STREAM = 4  # seed tag for stabilize-demo channels
ORACLE_TOL = 1e-12


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


def _jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def repetition_seeds(root: int, repetitions: int) -> list[int]:
    """Repetition ``i`` runs with session seed ``root + i``; component streams are
    then split from that seed by ``SeedSequence`` so they never overlap."""
    return [root + i for i in range(repetitions)]


def cmd_run(cfg: ExperimentConfig) -> int:
    seeds = repetition_seeds(cfg.session.seed, cfg.repetitions)
    sessions = [config_mod.with_session(cfg, seed=s).session for s in seeds]
    workers = min(len(sessions), 8)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run_session, sessions))

    pooled = Pooled()
    records = []
    for i, (seed, res) in enumerate(zip(seeds, results)):
        pooled.add(res)
        records.append({"run": i, "seed": seed, **res.to_dict()})

    config_dict = config_mod.to_dict(cfg)
    bundle = report_bundle(pooled, config_dict, cfg.session.alice, results, cfg.session.seed, _now())
    table = render_table(pooled, cfg.session.alice)
    _write(Path(cfg.output_dir), {
        "results.jsonl": _jsonl(records),
        "report.txt": table,
        "report.json": json.dumps(bundle, indent=2, sort_keys=True) + "\n",
    })
    print(table if cfg.report_format == "table" else json.dumps(bundle, indent=2, sort_keys=True))
    return EXIT_OK


def _render_calibration(rep: dict) -> str:
    lines = [
        "calibration against the oracle",
        f"p_dark = {rep['p_dark']:.6e}  (vacuum click fraction {100 * rep['vacuum_click_fraction']:.4f} %)",
        "per-state preparation error: " + "  ".join(f"{k}={100 * v:.3f}%" for k, v in rep["per_state_e_prep"].items()),
        "",
        f"{'state':<6}{'intensity':<10}{'mu':>6}{'predicted %':>13}{'target %':>10}",
    ]
    for c in rep["cells"]:
        tgt = "-" if c["target_qber"] is None else f"{100 * c['target_qber']:.2f}"
        lines.append(f"{c['state']:<6}{c['intensity']:<10}{c['mu']:>6g}{100 * c['predicted_qber']:>13.2f}{tgt:>10}")
    b = rep["signal_budget"]
    lines += [
        "",
        "signal-intensity error budget (state average): "
        + "  ".join(f"{k}={100 * v:.2f}%" for k, v in b.items()),
    ]
    return "\n".join(lines) + "\n"


def cmd_calibrate(cfg: ExperimentConfig) -> int:
    if not cfg.calibration_targets:
        raise ConfigError("no [calibration] targets in config", source="<config>")
    fitted, rep = calibrate(cfg.session, cfg.calibration_targets)
    out_cfg = config_mod.ExperimentConfig(
        session=fitted,
        repetitions=cfg.repetitions,
        output_dir=cfg.output_dir,
        report_format=cfg.report_format,
        calibration_targets=cfg.calibration_targets,
    )
    text = _render_calibration(rep)
    _write(Path(cfg.output_dir), {
        "calibrated.toml": config_mod.dumps(out_cfg),
        "results.jsonl": _jsonl([rep]),
        "report.txt": text,
    })
    print(text)
    return EXIT_OK


def stabilization_trials(bob: bob_mod.BobParams, channel: ChannelParams, seed: int, trials: int, mode: str, hold_slots: int) -> list[dict]:
    rng = np.random.default_rng([seed, DEMO_STREAM])
    out = []
    for t in range(trials):
        u = random_unitary(rng)
        rec = {"trial": t, "mode": mode}
        try:
            stab = bob_mod.stabilize(u, bob, mode=mode)
        except bob_mod.LockFailed as exc:
            rec.update(converged=False, iterations=exc.iterations, residual=exc.best_fraction, held=False, residual_after_hold=None)
            out.append(rec)
            continue
        residual = max(bob_mod.wrong_port_fraction(stab, u))
        chan = ChannelState(u=u, rng=np.random.default_rng([seed, DEMO_STREAM, t]))
        advance(chan, hold_slots, channel)
        after = max(bob_mod.wrong_port_fraction(stab, chan.u))
        target = bob.residual_error if mode == "feedback" else ORACLE_TOL
        rec.update(
            converged=residual <= target,
            iterations=stab.iterations_used,
            residual=residual,
            held=after <= bob.residual_error,
            residual_after_hold=after,
        )
        out.append(rec)
    return out


def _render_stabilization(records: list[dict], bob: bob_mod.BobParams, hold_slots: int) -> str:
    n = len(records)
    conv = sum(r["converged"] for r in records)
    held = sum(r["held"] for r in records)
    res = np.array([r["residual"] for r in records])
    hist = collections.Counter(r["iterations"] for r in records)
    worst_iters = max(hist) if hist else 0
    lines = [
        f"stabilization over {n} Haar-random channels ({records[0]['mode'] if records else '-'} mode)",
        f"converged: {conv}/{n} ({100 * conv / max(n, 1):.1f} %)   target wrong-port fraction {bob.residual_error:g}",
        f"held for {hold_slots} slots: {held}/{n}",
        "residual wrong-port fraction: "
        + "  ".join(f"p{q}={np.quantile(res, q / 100):.3e}" for q in (50, 90, 99, 100)),
        f"worst case {worst_iters} iterations = {worst_iters * bob.probe_time_us / 1000:.3f} ms at {bob.probe_time_us:g} us per iteration",
        "iterations histogram:",
    ]
    lines += [f"  {k:>4d}: {v}" for k, v in sorted(hist.items())]
    return "\n".join(lines) + "\n"


def cmd_stabilize_demo(cfg: ExperimentConfig, trials: int, mode: str, hold_slots: int) -> int:
    s = cfg.session
    records = stabilization_trials(s.bob, s.channel, s.seed, trials, mode, hold_slots)
    text = _render_stabilization(records, s.bob, hold_slots)
    _write(Path(cfg.output_dir), {"results.jsonl": _jsonl(records), "report.txt": text})
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML experiment file")
    common.add_argument("--seed", type=int, help="root seed (overrides session.seed)")
    common.add_argument("--out", help="output directory (overrides experiment.output_dir)")
    common.add_argument("overrides", nargs="*", metavar="key.path=value", help="dotted config overrides")

    p = argparse.ArgumentParser(prog="qframes", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run sessions and write the QBER report")
    sub.add_parser("calibrate", parents=[common], help="fit p_dark and per-state preparation error")
    demo = sub.add_parser("stabilize-demo", parents=[common], help="stabilizer convergence over random channels")
    demo.add_argument("--trials", type=int, default=1000)
    demo.add_argument("--mode", choices=("feedback", "oracle"), default="feedback")
    demo.add_argument("--hold-slots", type=int, default=10**6)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load_config(args.config, args.overrides, seed=args.seed, out=args.out)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "calibrate":
            return cmd_calibrate(cfg)
        return cmd_stabilize_demo(cfg, args.trials, args.mode, args.hold_slots)
    except ConfigError as exc:
        print(f"config error: {exc.diagnostic()}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        bound = "" if exc.bound is None else f" (achievable bound {exc.bound:.4%})"
        print(f"calibration error: {exc}{bound}", file=sys.stderr)
        return EXIT_CONFIG
    except (SessionAborted, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


__all__ = ["main", "build_parser", "canonical_json"]
