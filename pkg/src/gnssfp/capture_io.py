"""Capture and artifact IO: raw IQ files, sidecars, manifests, models, CSVs.

Raw IQ payloads are headerless interleaved I,Q in int8/int16/float32
(little-endian by default), byte-compatible with repository captures such
as TexBat; all metadata lives in a JSON sidecar next to the payload.
Integer samples are scaled by 2^(bits-1); writing a value outside the
representable range is an error, never silent saturation — clipping would
corrupt the fingerprint features downstream.

Numeric fields in manifests and model files are serialized through JSON's
repr-based float encoding, which round-trips binary64 exactly.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .fingerprint_features import FeatureVector, FeatureWindowConfig
from .mvn_model import MvnModel
from .receiver_core import CorrelatorEpoch
from .signal_sim import IqStream
from .spoof_detector import Decision, DetectorProfile

MODEL_FORMAT = "gnssfp-profile"
MODEL_VERSION = 1
MANIFEST_FORMAT = "gnssfp-manifest"
MANIFEST_VERSION = 1

_SAMPLE_DTYPES = {"int8": np.int8, "int16": np.int16, "float32": np.float32}


class FormatError(ValueError):
    """Payload bytes inconsistent with the declared capture format."""


class UnsupportedVersionError(ValueError):
    """Serialized artifact written by an incompatible format version."""


@dataclass(frozen=True)
class CaptureMeta:
    sample_rate: float
    sample_format: str = "int16"  # int8 | int16 | float32, interleaved I,Q
    byte_order: str = "little"  # "little" | "big"
    iq_swap: bool = False  # some captures interleave Q,I
    t0: float = 0.0
    notes: str = ""

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.sample_format not in _SAMPLE_DTYPES:
            raise ValueError(f"unknown sample_format {self.sample_format!r}")
        if self.byte_order not in ("little", "big"):
            raise ValueError(f"byte_order must be 'little' or 'big', got {self.byte_order!r}")

    @property
    def dtype(self) -> np.dtype:
        dt = np.dtype(_SAMPLE_DTYPES[self.sample_format])
        return dt.newbyteorder("<" if self.byte_order == "little" else ">")


def sidecar_path(path) -> str:
    return str(path) + ".meta.json"


def write_iq(stream: IqStream, path, meta: CaptureMeta) -> None:
    """Write interleaved I,Q in the declared format plus a JSON sidecar.

    Exact inverse of read_iq for values representable in the format.
    Integer formats reject any sample whose scaled value falls outside
    [-2^(bits-1), 2^(bits-1) - 1], naming the first offending index.
    """
    samples = np.asarray(stream.samples)
    inter = np.empty(2 * len(samples), dtype=np.float64)
    if meta.iq_swap:
        inter[0::2], inter[1::2] = samples.imag, samples.real
    else:
        inter[0::2], inter[1::2] = samples.real, samples.imag
    if not np.all(np.isfinite(inter)):
        raise ValueError("samples must be finite")

    if meta.sample_format == "float32":
        payload = inter.astype(meta.dtype)
    else:
        bits = 8 * np.dtype(_SAMPLE_DTYPES[meta.sample_format]).itemsize
        full = float(1 << (bits - 1))
        scaled = np.rint(inter * full)
        bad = np.flatnonzero((scaled < -full) | (scaled > full - 1))
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"sample {i // 2} ({'IQ'[i % 2]} component, value {inter[i]!r}) "
                f"is not representable in {meta.sample_format}: values must lie "
                f"in [-1, 1 - 2^-{bits - 1}]")
        payload = scaled.astype(meta.dtype)

    payload.tofile(str(path))
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump({"format": "gnssfp-capture", "version": 1, **asdict(meta)},
                  f, indent=2, sort_keys=True)
        f.write("\n")


def read_meta(path) -> CaptureMeta:
    with open(sidecar_path(path), encoding="utf-8") as f:
        raw = json.load(f)
    raw.pop("format", None)
    version = raw.pop("version", 1)
    if version != 1:
        raise UnsupportedVersionError(f"capture sidecar version {version} not supported")
    return CaptureMeta(**raw)


def read_iq(path, meta: CaptureMeta | None = None, decimate: int = 1,
            offset_samples: int = 0, count: int | None = None,
            labels: np.ndarray | None = None) -> IqStream:
    """Decode interleaved I,Q into an IqStream.

    Integer formats are scaled to [-1, 1) by 2^(bits-1). `offset_samples`
    and `count` window the read so multi-GB captures never load whole;
    `decimate` keeps every decimate-th sample by plain dropping (no
    anti-alias filter: out-of-band energy folds in; prefer captures near
    the target rate).
    """
    if meta is None:
        meta = read_meta(path)
    if decimate < 1 or int(decimate) != decimate:
        raise ValueError(f"decimate must be a positive integer, got {decimate}")
    width = np.dtype(_SAMPLE_DTYPES[meta.sample_format]).itemsize
    block = 2 * width
    size = os.path.getsize(str(path))
    if size % block:
        raise FormatError(f"{path}: {size} bytes is not a whole number of "
                          f"{meta.sample_format} I,Q pairs; trailing data at byte "
                          f"offset {size - size % block}")
    total = size // block
    if offset_samples > total:
        raise ValueError(f"offset {offset_samples} beyond capture of {total} samples")
    n_read = total - offset_samples if count is None else min(count, total - offset_samples)

    raw = np.fromfile(str(path), dtype=meta.dtype, count=2 * n_read,
                      offset=offset_samples * block)
    i_part = raw[0::2].astype(np.float64)
    q_part = raw[1::2].astype(np.float64)
    if meta.iq_swap:
        i_part, q_part = q_part, i_part
    if meta.sample_format != "float32":
        full = float(1 << (8 * width - 1))
        i_part /= full
        q_part /= full
    samples = (i_part + 1j * q_part)[::decimate].astype(np.complex64)
    if labels is not None:
        labels = np.asarray(labels, dtype=np.uint8)[offset_samples:offset_samples + n_read:decimate]
    return IqStream(samples, meta.sample_rate / decimate,
                    t0=meta.t0 + offset_samples / meta.sample_rate, labels=labels)


def save_labels(stream: IqStream, path) -> None:
    np.save(str(path), stream.labels)


def load_labels(path) -> np.ndarray:
    return np.load(str(path))


# --------------------------------------------------------------------------
# Dataset manifests (one per capture, mirroring the genuine/spoofed tables)

@dataclass(frozen=True)
class DatasetManifest:
    id: str
    role: str  # "genuine" | "spoofed"
    capture_path: str = ""
    scenario_path: str = ""
    spoofing_type: str = ""  # e.g. "time", "position", "both"
    threat_model: str = ""  # "spoofing" | "replay"
    power_status: str = ""  # "over-powered", "matched-powered", ...
    multipath: str = ""  # "yes" | "no"
    duration_s: float = 0.0
    location: str = ""

    def __post_init__(self):
        if self.role not in ("genuine", "spoofed"):
            raise ValueError(f"role must be 'genuine' or 'spoofed', got {self.role!r}")


_ATTACK_FIELDS = ("spoofing type", "threat model", "power status")
_ATTACK_KEYS = ("spoofing_type", "threat_model", "power_status")


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {"format": MANIFEST_FORMAT, "version": MANIFEST_VERSION, **asdict(manifest)}
    with open(str(path), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_manifest(path) -> DatasetManifest:
    with open(str(path), encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{path}: not a {MANIFEST_FORMAT} document")
    if doc.get("version") != MANIFEST_VERSION:
        raise UnsupportedVersionError(
            f"{path}: manifest version {doc.get('version')} not supported")
    doc.pop("format"), doc.pop("version")
    try:
        manifest = DatasetManifest(**doc)
    except TypeError as exc:
        raise ValueError(f"{path}: malformed manifest: {exc}") from exc
    if manifest.role == "spoofed":
        for key, name in zip(_ATTACK_KEYS, _ATTACK_FIELDS):
            if not getattr(manifest, key):
                raise ValueError(f"{path}: spoofed manifest missing required "
                                 f"field '{name}'")
    return manifest


# --------------------------------------------------------------------------
# Detector profile files

def save_model(profile: DetectorProfile, path,
               window: FeatureWindowConfig | None = None,
               provenance: dict | None = None) -> None:
    """Serialize a trained profile; numeric fields round-trip bit-exactly."""
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "k": profile.model.k,
        "mu": profile.model.mu.tolist(),
        "sigma": profile.model.sigma.flatten().tolist(),  # row-major
        "log_threshold": profile.log_threshold,
        "n_avg": profile.n_avg,
        "trained_on": list(profile.trained_on),
        "train_eer": profile.train_eer,
        "threshold_method": profile.threshold_method,
        "window": asdict(window) if window is not None else asdict(FeatureWindowConfig()),
        "provenance": provenance or {},
    }
    with open(str(path), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _model_from_doc(doc: dict) -> MvnModel:
    k = int(doc["k"])
    mu = np.asarray(doc["mu"], dtype=np.float64)
    sigma = np.asarray(doc["sigma"], dtype=np.float64).reshape(k, k)
    chol = np.linalg.cholesky(sigma)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return MvnModel(mu=mu, sigma=sigma, k=k, sigma_inv=np.linalg.inv(sigma),
                    log_norm_const=float(-0.5 * (k * np.log(2 * np.pi) + logdet)))


def load_model(path) -> DetectorProfile:
    with open(str(path), encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise UnsupportedVersionError(
            f"{path}: profile version {doc.get('version')} not supported "
            f"(expected {MODEL_VERSION})")
    return DetectorProfile(model=_model_from_doc(doc),
                           log_threshold=float(doc["log_threshold"]),
                           n_avg=int(doc["n_avg"]),
                           trained_on=tuple(doc.get("trained_on", ())),
                           train_eer=float(doc.get("train_eer", "nan")),
                           threshold_method=doc.get("threshold_method", "eer"))


def load_window_config(path) -> FeatureWindowConfig:
    with open(str(path), encoding="utf-8") as f:
        doc = json.load(f)
    return FeatureWindowConfig(**doc.get("window", {}))


# --------------------------------------------------------------------------
# CSV interchange (epochs -> features -> decisions -> reports)

def _fmt(value) -> str:
    return repr(float(value))


EPOCH_CSV_HEADER = ["t", "e_re", "e_im", "p_re", "p_im", "l_re", "l_im",
                    "cn0_est", "clt_est", "code_phase", "doppler"]


def write_epochs_csv(epochs, path) -> None:
    with open(str(path), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(EPOCH_CSV_HEADER)
        for ep in epochs:
            w.writerow([_fmt(ep.t), _fmt(ep.e.real), _fmt(ep.e.imag),
                        _fmt(ep.p.real), _fmt(ep.p.imag), _fmt(ep.l.real),
                        _fmt(ep.l.imag), _fmt(ep.cn0_est), _fmt(ep.clt_est),
                        _fmt(ep.code_phase), _fmt(ep.doppler)])


def read_epochs_csv(path) -> list:
    out = []
    with open(str(path), newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != EPOCH_CSV_HEADER:
            raise ValueError(f"{path}: unexpected epoch CSV header {reader.fieldnames}")
        for row in reader:
            out.append(CorrelatorEpoch(
                t=float(row["t"]),
                e=complex(float(row["e_re"]), float(row["e_im"])),
                p=complex(float(row["p_re"]), float(row["p_im"])),
                l=complex(float(row["l_re"]), float(row["l_im"])),
                cn0_est=float(row["cn0_est"]), clt_est=float(row["clt_est"]),
                code_phase=float(row["code_phase"]), doppler=float(row["doppler"])))
    return out


FEATURE_CSV_HEADER = ["t", "prn", "e_high", "e_low", "p_high", "p_low",
                      "l_high", "l_low"]


def write_features_csv(features, path) -> None:
    with open(str(path), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(FEATURE_CSV_HEADER)
        for fv in features:
            w.writerow([_fmt(fv.t), fv.prn, _fmt(fv.e_high), _fmt(fv.e_low),
                        _fmt(fv.p_high), _fmt(fv.p_low), _fmt(fv.l_high),
                        _fmt(fv.l_low)])


def read_features_csv(path) -> list:
    out = []
    with open(str(path), newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != FEATURE_CSV_HEADER:
            raise ValueError(f"{path}: unexpected feature CSV header {reader.fieldnames}")
        for row in reader:
            out.append(FeatureVector(
                t=float(row["t"]), prn=int(row["prn"]),
                e_high=float(row["e_high"]), e_low=float(row["e_low"]),
                p_high=float(row["p_high"]), p_low=float(row["p_low"]),
                l_high=float(row["l_high"]), l_low=float(row["l_low"])))
    return out


DECISION_CSV_HEADER = ["t_start", "t_end", "prn", "score_log", "decision", "label"]


def write_decisions_csv(decisions, path) -> None:
    with open(str(path), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(DECISION_CSV_HEADER)
        for d in decisions:
            w.writerow([_fmt(d.t_start), _fmt(d.t_end), d.prn, _fmt(d.log_score),
                        d.decision, d.label])


def read_decisions_csv(path) -> list:
    out = []
    with open(str(path), newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != DECISION_CSV_HEADER:
            raise ValueError(f"{path}: unexpected decision CSV header {reader.fieldnames}")
        for row in reader:
            out.append(Decision(t_start=float(row["t_start"]), t_end=float(row["t_end"]),
                                prn=int(row["prn"]), log_score=float(row["score_log"]),
                                decision=row["decision"], label=row["label"]))
    return out


REPORT_CSV_HEADER = ["dataset", "n_avg", "fpr", "fnr", "eer", "threshold_log",
                     "tp", "fp", "tn", "fn"]


def write_reports_csv(reports, path, names=None) -> None:
    if names is None:
        names = [str(i) for i in range(len(reports))]
    with open(str(path), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(REPORT_CSV_HEADER)
        for name, r in zip(names, reports):
            tp, fp, tn, fn = r.counts
            w.writerow([name, r.n_avg, _fmt(r.fpr), _fmt(r.fnr), _fmt(r.eer),
                        _fmt(r.threshold), tp, fp, tn, fn])
