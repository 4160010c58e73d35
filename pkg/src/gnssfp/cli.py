"""Command-line pipeline: simulate -> track -> extract -> train -> eval/detect.

Every stage reads and writes the documented file formats (raw IQ +
sidecar, epoch/feature/decision CSVs, JSON profiles and manifests), so any
step can be inspected or replaced. Runs are deterministic for a given
scenario file and seed; each output directory gets a reproducibility
record with the config hash. Exit codes: 0 success, 1 usage/config error,
2 data error, 3 detection alarm raised by `detect`.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, capture_io, signal_sim, spoof_detector
from .capture_io import (CaptureMeta, DatasetManifest, FormatError,
                         load_model, load_window_config)
from .fingerprint_features import FeatureWindowConfig, extract_features
from .receiver_core import TrackingConfig, acquire, track_channel
from .signal_sim import (AttackConfig, HardwareSignature, SatelliteScenario,
                         apply_multipath, spoof_overlay, synthesize_genuine)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ALARM = 3


class ScenarioError(ValueError):
    """Scenario config violates the documented schema; message carries the field path."""


def _get(doc: dict, key: str, path: str, required: bool = False, default=None):
    if key not in doc:
        if required:
            raise ScenarioError(f"{path}.{key}: missing required field")
        return default
    return doc[key]


def _signature_from(doc: dict, path: str) -> HardwareSignature:
    try:
        return HardwareSignature(
            gain_asymmetry=float(_get(doc, "gain_asymmetry", path, default=1.0)),
            filter_taps=tuple(_get(doc, "filter_taps", path, default=(1.0,))),
            phase_noise_std=float(_get(doc, "phase_noise_std", path, default=0.0)))
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def load_scenario(path: str) -> dict:
    """Parse and validate a scenario config file into ready-to-run objects."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)

    sats = []
    for i, sat in enumerate(_get(doc, "satellites", "scenario", required=True)):
        spath = f"satellites[{i}]"
        try:
            sats.append(SatelliteScenario(
                prn=int(_get(sat, "prn", spath, required=True)),
                doppler=float(_get(sat, "doppler", spath, default=0.0)),
                code_phase0=float(_get(sat, "code_phase0", spath, default=0.0)),
                carrier_phase0=float(_get(sat, "carrier_phase0", spath, default=0.0)),
                cn0=float(_get(sat, "cn0", spath, default=45.0)),
                nav_seed=int(_get(sat, "nav_seed", spath, default=0)),
                signature=_signature_from(sat.get("signature", {}), f"{spath}.signature")))
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(f"{spath}: {exc}") from exc
    prns = [s.prn for s in sats]
    if len(set(prns)) != len(prns):
        raise ScenarioError(f"satellites: duplicate PRNs {sorted(prns)}")

    attack = None
    if doc.get("attack"):
        a = doc["attack"]
        try:
            attack = AttackConfig(
                mode=_get(a, "mode", "attack", required=True),
                power=_get(a, "power", "attack", default="matched"),
                adjusted_db=float(_get(a, "adjusted_db", "attack", default=0.0)),
                takeover_time=float(_get(a, "takeover_time", "attack", default=0.0)),
                seamless=bool(_get(a, "seamless", "attack", default=False)),
                spoofer_signature=_signature_from(a.get("spoofer_signature", {}),
                                                  "attack.spoofer_signature"),
                attack_seed=int(_get(a, "attack_seed", "attack", default=0)))
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(f"attack: {exc}") from exc

    pipeline = doc.get("pipeline", {})
    window = FeatureWindowConfig(
        window_len=int(pipeline.get("window_len", 40)),
        min_pos=int(pipeline.get("min_pos", 3)),
        min_neg=int(pipeline.get("min_neg", 3)))

    return {
        "sample_rate": float(doc.get("sample_rate", signal_sim.DEFAULT_SAMPLE_RATE)),
        "duration": float(_get(doc, "duration", "scenario", required=True)),
        "noise_seed": int(doc.get("noise_seed", 0)),
        "noise_power": float(doc.get("noise_power", 1.0)),
        "add_noise": bool(doc.get("add_noise", True)),
        "satellites": sats,
        "attack": attack,
        "attack_targets": doc.get("attack", {}).get("targets"),
        "multipath": [(float(d), complex(g_re, g_im))
                      for d, g_re, g_im in doc.get("multipath", [])],
        "window": window,
        "meta": doc.get("meta", {}),
    }


def _write_run_record(out_dir: str, subcommand: str, config_bytes: bytes | None,
                      extra: dict | None = None) -> None:
    record = {
        "subcommand": subcommand,
        "package_version": __version__,
        "config_sha256": hashlib.sha256(config_bytes).hexdigest() if config_bytes else None,
    }
    record.update(extra or {})
    with open(os.path.join(out_dir, f"run_record_{subcommand}.json"), "w",
              encoding="utf-8") as f:
        json.dump(record, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_simulate(args) -> int:
    with open(args.scenario, "rb") as f:
        config_bytes = f.read()
    cfg = load_scenario(args.scenario)
    os.makedirs(args.out, exist_ok=True)

    stream = synthesize_genuine(cfg["satellites"], cfg["sample_rate"], cfg["duration"],
                                cfg["noise_seed"], cfg["noise_power"],
                                add_noise=cfg["add_noise"])
    if cfg["multipath"]:
        stream = apply_multipath(stream, cfg["multipath"])
    if cfg["attack"] is not None:
        targets = cfg["satellites"]
        if cfg["attack_targets"]:
            wanted = set(cfg["attack_targets"])
            targets = [s for s in cfg["satellites"] if s.prn in wanted]
        stream = spoof_overlay(stream, cfg["attack"], targets,
                               cfg["noise_seed"], cfg["noise_power"])

    capture_path = os.path.join(args.out, "capture.iq")
    meta = CaptureMeta(sample_rate=cfg["sample_rate"], sample_format=args.format,
                       t0=0.0, notes=f"synthesized from {os.path.basename(args.scenario)}")
    capture_io.write_iq(stream, capture_path, meta)
    capture_io.save_labels(stream, os.path.join(args.out, "labels.npy"))

    m = cfg["meta"]
    attack = cfg["attack"]
    manifest = DatasetManifest(
        id=args.id or os.path.splitext(os.path.basename(args.scenario))[0],
        role="spoofed" if attack is not None else "genuine",
        capture_path="capture.iq",
        scenario_path=os.path.basename(args.scenario),
        spoofing_type=m.get("spoofing_type", "both") if attack else "",
        threat_model=attack.mode if attack else "",
        power_status=(f"{attack.power}-powered" if attack and attack.power != "adjusted"
                      else "adjusted-power" if attack else ""),
        multipath="yes" if cfg["multipath"] else "no",
        duration_s=cfg["duration"],
        location=m.get("location", "synthetic"))
    capture_io.save_manifest(manifest, os.path.join(args.out, "manifest.json"))
    _write_run_record(args.out, "simulate", config_bytes,
                      {"noise_seed": cfg["noise_seed"]})
    print(f"wrote {capture_path} ({len(stream.samples)} samples at "
          f"{cfg['sample_rate']:.0f} Hz), manifest, labels")
    return EXIT_OK


def _track_one(stream, prn, trk_cfg, acq_args):
    result = acquire(stream, prn, **acq_args)
    if not result.acquired:
        return prn, None, result
    return prn, track_channel(stream, result, trk_cfg), result


def cmd_track(args) -> int:
    stream = capture_io.read_iq(args.capture)
    trk_cfg = TrackingConfig()
    acq_args = {"doppler_range": args.doppler_range, "doppler_bin": args.doppler_bin}
    os.makedirs(args.out, exist_ok=True)

    prns = sorted(set(args.prn))
    with ThreadPoolExecutor(max_workers=min(args.jobs, len(prns))) as pool:
        results = list(pool.map(lambda p: _track_one(stream, p, trk_cfg, acq_args), prns))

    any_tracked = False
    for prn, track, acq_result in results:
        if track is None:
            print(f"PRN {prn:2d}: not acquired (peak metric "
                  f"{acq_result.peak_metric:.2f})", file=sys.stderr)
            continue
        path = os.path.join(args.out, f"epochs_prn{prn:02d}.csv")
        capture_io.write_epochs_csv(track.epochs, path)
        print(f"PRN {prn:2d}: {len(track.epochs)} epochs, {track.status}, "
              f"doppler {acq_result.doppler:+.1f} Hz -> {path}")
        any_tracked = True
    _write_run_record(args.out, "track", None, {"capture": args.capture, "prns": prns})
    return EXIT_OK if any_tracked else EXIT_DATA


_EPOCH_FILE_RE = re.compile(r"prn(\d+)")


def cmd_extract(args) -> int:
    window = FeatureWindowConfig(window_len=args.window_len, min_pos=args.min_pos,
                                 min_neg=args.min_neg)
    trk_cfg = TrackingConfig()
    all_features = []
    for path in args.epochs:
        match = _EPOCH_FILE_RE.search(os.path.basename(path))
        prn = int(match.group(1)) if match else 0
        epochs = capture_io.read_epochs_csv(path)
        feats = extract_features(epochs, window, trk_cfg, prn=prn)
        print(f"{path}: {len(epochs)} epochs -> {len(feats)} sample points")
        all_features.extend(feats)
    capture_io.write_features_csv(all_features, args.out)
    print(f"wrote {len(all_features)} sample points -> {args.out}")
    return EXIT_OK


def _feature_matrix(paths) -> np.ndarray:
    rows = []
    for path in paths:
        rows.extend(fv.as_array() for fv in capture_io.read_features_csv(path))
    if not rows:
        return np.empty((0, 6))
    return np.vstack(rows)


def cmd_train(args) -> int:
    genuine = _feature_matrix(args.genuine)
    spoofed = _feature_matrix(args.spoofed) if args.spoofed else None
    profile = spoof_detector.train(genuine, spoofed, holdout_fraction=args.holdout,
                                   seed=args.seed, n_avg=args.n_avg,
                                   trained_on=tuple(args.genuine + (args.spoofed or [])))
    window = FeatureWindowConfig(window_len=args.window_len, min_pos=args.min_pos,
                                 min_neg=args.min_neg)
    capture_io.save_model(profile, args.out, window=window,
                          provenance={"genuine": args.genuine,
                                      "spoofed": args.spoofed or []})
    print(f"trained on {genuine.shape[0]} genuine"
          + (f" / {spoofed.shape[0]} spoofed" if spoofed is not None else "")
          + f"; EER {profile.train_eer:.4f}, log threshold {profile.log_threshold:.3f}"
          + f" -> {args.out}")
    return EXIT_OK


def _print_report_table(names, reports) -> None:
    print(f"{'dataset':<24} {'n':>6} {'FPR':>8} {'FNR':>8} {'EER':>8} {'threshold':>12}")
    for name, r in zip(names, reports):
        print(f"{name:<24} {r.n_avg:>6d} {r.fpr:>8.4f} {r.fnr:>8.4f} "
              f"{r.eer:>8.4f} {r.threshold:>12.3f}")


def cmd_eval(args) -> int:
    profile = load_model(args.profile)
    genuine = spoof_detector.score_features(_feature_matrix(args.genuine), profile.model)
    spoofed = spoof_detector.score_features(_feature_matrix(args.spoofed), profile.model)
    reports, names = [], []
    for n in args.n:
        reports.append(spoof_detector.evaluate(genuine, spoofed, profile, n_avg=n))
        names.append("eval")
    _print_report_table(names, reports)
    if args.out:
        capture_io.write_reports_csv(reports, args.out, names)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_xval(args) -> int:
    datasets, names = [], []
    for pair in args.dataset:
        try:
            g_path, s_path = pair.split(":")
        except ValueError:
            raise ScenarioError(f"--dataset expects GENUINE.csv:SPOOFED.csv, got {pair!r}")
        datasets.append((_feature_matrix([g_path]), _feature_matrix([s_path])))
        names.append(os.path.splitext(os.path.basename(g_path))[0])
    reports = spoof_detector.kfold_xval(datasets, holdout_fraction=args.holdout,
                                        seed=args.seed, n_avg=args.n_avg)
    _print_report_table(names, reports)
    if args.out:
        capture_io.write_reports_csv(reports, args.out, names)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    profile = load_model(args.profile)
    window = load_window_config(args.profile)
    trk_cfg = TrackingConfig()
    os.makedirs(args.out, exist_ok=True)

    if args.epochs:
        channels = []
        for path in args.epochs:
            match = _EPOCH_FILE_RE.search(os.path.basename(path))
            prn = int(match.group(1)) if match else 0
            channels.append((prn, capture_io.read_epochs_csv(path), None))
        label_ivs = []
    else:
        if not args.capture or not args.prn:
            raise ScenarioError("detect needs --capture with --prn, or --epochs")
        stream = capture_io.read_iq(args.capture)
        if args.labels:
            stream.labels = capture_io.load_labels(args.labels)
        prns = sorted(set(args.prn))
        acq_args = {"doppler_range": args.doppler_range, "doppler_bin": args.doppler_bin}
        with ThreadPoolExecutor(max_workers=min(args.jobs, len(prns))) as pool:
            tracked = list(pool.map(lambda p: _track_one(stream, p, trk_cfg, acq_args),
                                    prns))
        channels = [(prn, track.epochs if track else None, acq_result)
                    for prn, track, acq_result in tracked]
        label_ivs = signal_sim.label_intervals(stream)

    decisions_by_prn = {}
    all_decisions = []
    for prn, epochs, _ in channels:
        if epochs is None:
            print(f"PRN {prn:2d}: not acquired", file=sys.stderr)
            continue
        decisions = spoof_detector.detect_stream(epochs, profile, window,
                                                 trk_cfg, prn=prn)
        if label_ivs:
            decisions = spoof_detector.annotate_decisions(decisions, label_ivs)
        decisions_by_prn[prn] = decisions
        all_decisions.extend(decisions)

    all_decisions.sort(key=lambda d: (d.t_start, d.prn))
    capture_io.write_decisions_csv(all_decisions, os.path.join(args.out, "decisions.csv"))
    n_mal = sum(d.decision == spoof_detector.DECISION_MALICIOUS for d in all_decisions)
    print(f"{len(all_decisions)} decisions, {n_mal} malicious "
          f"-> {os.path.join(args.out, 'decisions.csv')}")

    if not args.epochs and args.labels and len(decisions_by_prn) >= 4:
        sets = spoof_detector.prn_sets(list(decisions_by_prn))
        timing = spoof_detector.spoof_timing(decisions_by_prn, label_ivs, sets)
        report = {
            "prn_sets": [list(s) for s in timing.prn_sets],
            "max_continuous_spoof_s": list(timing.max_continuous_spoof_s),
            "total_spoof_s": list(timing.total_spoof_s),
            "undetected_30s_locks": list(timing.undetected_30s_locks),
            "overall_continuous_spoof_s": timing.overall_continuous_spoof_s,
        }
        with open(os.path.join(args.out, "timing_report.json"), "w",
                  encoding="utf-8") as f:
            json.dump(report, f, indent=2)
            f.write("\n")
        print(f"spoof timing over {len(sets)} PRN-sets: overall "
              f"{timing.overall_continuous_spoof_s:.1f} s undetected")
    return EXIT_ALARM if n_mal else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnssfp",
        description="GPS spoofing detection by fingerprinting EPL correlator outputs")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    default_out = os.environ.get("GNSSFP_OUT_DIR", ".")

    p = sub.add_parser("simulate", help="synthesize a capture from a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", default=default_out)
    p.add_argument("--id", default=None, help="dataset id for the manifest")
    p.add_argument("--format", default="float32", choices=["int8", "int16", "float32"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="acquire and track PRNs in a capture")
    p.add_argument("--capture", required=True)
    p.add_argument("--prn", type=int, action="append", required=True)
    p.add_argument("--out", default=default_out)
    p.add_argument("--doppler-range", type=float, default=5000.0)
    p.add_argument("--doppler-bin", type=float, default=250.0)
    p.add_argument("--jobs", type=int, default=4)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("extract", help="extract fingerprint features from epoch CSVs")
    p.add_argument("--epochs", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output feature CSV")
    p.add_argument("--window-len", type=int, default=40)
    p.add_argument("--min-pos", type=int, default=3)
    p.add_argument("--min-neg", type=int, default=3)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="fit the genuine model and EER threshold")
    p.add_argument("--genuine", nargs="+", required=True)
    p.add_argument("--spoofed", nargs="*", default=None)
    p.add_argument("--out", required=True, help="output profile JSON")
    p.add_argument("--holdout", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-avg", type=int, default=1)
    p.add_argument("--window-len", type=int, default=40)
    p.add_argument("--min-pos", type=int, default=3)
    p.add_argument("--min-neg", type=int, default=3)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="apply a profile to labeled feature sets")
    p.add_argument("--profile", required=True)
    p.add_argument("--genuine", nargs="+", required=True)
    p.add_argument("--spoofed", nargs="+", required=True)
    p.add_argument("--n", type=int, nargs="+", default=[1])
    p.add_argument("--out", default=None, help="optional report CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("xval", help="leave-one-dataset-out cross-validation")
    p.add_argument("--dataset", action="append", required=True,
                   metavar="GENUINE.csv:SPOOFED.csv")
    p.add_argument("--holdout", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-avg", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_xval)

    p = sub.add_parser("detect", help="run streaming detection over a capture")
    p.add_argument("--capture", default=None)
    p.add_argument("--profile", required=True)
    p.add_argument("--prn", type=int, action="append", default=None)
    p.add_argument("--epochs", nargs="*", default=None,
                   help="detect from already-tracked epoch CSVs instead of a capture")
    p.add_argument("--labels", default=None, help="ground-truth labels .npy")
    p.add_argument("--out", default=default_out)
    p.add_argument("--doppler-range", type=float, default=5000.0)
    p.add_argument("--doppler-bin", type=float, default=250.0)
    p.add_argument("--jobs", type=int, default=4)
    p.set_defaults(func=cmd_detect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
