"""Batch driver: ``simulate image|attack-curve|chsh``.

Each subcommand takes an optional JSON config; ``--seed``, ``--frames``,
``--workers`` and ``--out`` override it. Outputs depend only on the config
and seed, never on the worker count or output location.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import analysis
from .entangle_ranging import HonestPath, InterceptResendPath, run_chsh
from .polar_core import PROTOCOL_STATES, STATE_NAMES, bob_error_rate, jammer_error_rate
from .protocol_sim import (
    DetectorConfig,
    Honest,
    InterceptResend,
    PhotonNumberSplitting,
    SourceConfig,
    run_simulation,
)
from .scene import resolve_mask

log = logging.getLogger(__name__)

OUT_ENV = "QSI_OUT_DIR"
DEFAULT_SEED = 7

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_COMPROMISED = 2
EXIT_INCONCLUSIVE = 3

VERDICT_EXIT = {
    analysis.Verdict.SECURE: EXIT_OK,
    analysis.Verdict.COMPROMISED: EXIT_COMPROMISED,
    analysis.Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}

IMAGE_DEFAULTS = {
    "seed": DEFAULT_SEED,
    "frames": 10_000,
    "mask": "aircraft",
    "source": {"mean_photons_per_pulse": 1.0},
    "detector": {"pbs_extinction": 0.0084, "detection_efficiency": 1.0},
    "channel": {"type": "honest"},
    "confidence": 0.99,
}

ATTACK_CURVE_DEFAULTS = {
    "seed": DEFAULT_SEED,
    "frames": 100_000,
    "mask": "aircraft",
    "spoof_mask": "bird",
    "thetas": [0, 5, 10, 15, 20, 22.5, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80, 85],
}

CHSH_DEFAULTS = {
    "seed": DEFAULT_SEED,
    "frames": 100_000,
    "channel": {"type": "honest"},
    "range_m": 150.0,
}


class ConfigError(Exception):
    pass


def _state(name: str):
    try:
        return PROTOCOL_STATES[STATE_NAMES.index(name)]
    except ValueError:
        raise ConfigError(f"resend state must be one of {STATE_NAMES}, got {name!r}") from None


def build_channel(spec: dict, mask):
    kind = spec.get("type", "honest")
    if kind == "honest":
        return Honest(mask)
    if kind == "intercept-resend":
        resend = spec.get("resend", "eavesdrop-basis")
        return InterceptResend(
            eavesdrop_theta=float(spec.get("theta", 0.0)),
            spoof_mask=resolve_mask(spec.get("spoof_mask", "bird")),
            resend_state=None if resend == "eavesdrop-basis" else _state(resend),
        )
    if kind == "pns":
        return PhotonNumberSplitting(
            mask=mask,
            spoof_mask=resolve_mask(spec.get("spoof_mask", "bird")),
            fallback_theta=float(spec.get("fallback_theta", 22.5)),
        )
    raise ConfigError(f"unknown channel type {kind!r}")


def _load_config(args, defaults: dict) -> dict:
    cfg = json.loads(json.dumps(defaults))
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            user = json.load(f)
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg.update(user)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.frames is not None:
        cfg["frames"] = args.frames
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV, "qsi-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def cmd_image(args) -> int:
    cfg = _load_config(args, IMAGE_DEFAULTS)
    mask = resolve_mask(cfg["mask"])
    run = run_simulation(
        mask,
        SourceConfig(**cfg["source"]),
        DetectorConfig(**cfg["detector"]),
        build_channel(cfg["channel"], mask),
        seed=int(cfg["seed"]),
        frame_budget=int(cfg["frames"]),
        workers=args.workers,
    )
    run.config = cfg
    out = _out_dir(args)
    report = analysis.tally_errors(run, confidence=float(cfg["confidence"]))
    verdict = analysis.security_verdict(report)
    analysis.write_images(run, out)
    analysis.write_report(report, verdict, run, out / "report.json", out / "events.csv")
    print(f"frames={run.frames} error={report.average_error:.4%} "
          f"[{report.ci_low:.4%}, {report.ci_high:.4%}] "
          f"MI={verdict.mutual_information_bits:.4f} verdict={verdict.verdict.value}")
    return VERDICT_EXIT[verdict.verdict]


def cmd_attack_curve(args) -> int:
    cfg = _load_config(args, ATTACK_CURVE_DEFAULTS)
    mask = resolve_mask(cfg["mask"])
    spoof = resolve_mask(cfg["spoof_mask"])
    out = _out_dir(args)
    rows = []
    for theta in cfg["thetas"]:
        run = run_simulation(
            mask,
            SourceConfig(),
            DetectorConfig(pbs_extinction=0.0),
            InterceptResend(float(theta), spoof),
            seed=int(cfg["seed"]),
            frame_budget=int(cfg["frames"]),
            workers=args.workers,
        )
        e_j, _ = analysis.jammer_misidentification(run)
        e_b = analysis.tally_errors(run).average_error
        rows.append([float(theta), jammer_error_rate(theta), e_j, bob_error_rate(theta), e_b])
        print(f"theta={theta:>5}  e_J={rows[-1][1]:.6f}/{e_j:.6f}  e_B={rows[-1][3]:.6f}/{e_b:.6f}")
    with open(out / "attack_curve.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["theta", "e_J_analytic", "e_J_mc", "e_B_analytic", "e_B_mc"])
        w.writerows([[repr(v) for v in row] for row in rows])
    return EXIT_OK


def cmd_chsh(args) -> int:
    cfg = _load_config(args, CHSH_DEFAULTS)
    pairs = int(cfg["frames"])
    if pairs < 1:
        raise ConfigError("need at least one pair per setting")
    ch = cfg["channel"]
    range_m = float(cfg["range_m"])
    if ch.get("type", "honest") == "honest":
        channel = HonestPath(range_m)
    elif ch["type"] == "intercept-resend":
        channel = InterceptResendPath(float(ch.get("theta", 0.0)), float(ch.get("range_m", range_m)))
    else:
        raise ConfigError(f"unknown channel type {ch['type']!r}")
    record, rng = run_chsh(pairs, channel, seed=int(cfg["seed"]))
    out = _out_dir(args)
    _write_json(out / "chsh.json", {
        "E": {f"{a},{b}": e for (a, b), e in record.E.items()},
        "tallies": {f"{a},{b}": t for (a, b), t in record.tallies.items()},
        "S": record.S,
        "sigma": record.sigma,
        "secure": record.secure,
        "range": {"round_trip_time": rng.round_trip_time, "distance": rng.distance},
        "config": cfg,
        "seed": cfg["seed"],
    })
    print(f"S={record.S:.4f} +/- {record.sigma:.4f} secure={record.secure} "
          f"range={rng.distance:.6f} m")
    return EXIT_OK if record.secure else EXIT_COMPROMISED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="Quantum-secured imaging simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)
    for name, func, help_ in (
        ("image", cmd_image, "imaging run with error report and PGM images"),
        ("attack-curve", cmd_attack_curve, "sweep the intercept-resend basis angle"),
        ("chsh", cmd_chsh, "entangled-pair CHSH test and range estimate"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int)
        s.add_argument("--frames", type=int,
                       help="detected frames (image), samples per angle (attack-curve) "
                            "or pairs per setting (chsh)")
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./qsi-out)")
        s.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
