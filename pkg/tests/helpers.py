"""Shared oracles and pipeline helpers for the test suite.

Everything here is deliberately independent of the production paths it
checks: correlations are computed by explicit roll-and-dot sums, C/N0 by
ground-truth despreading, timing by elementary segment scans.
"""

import numpy as np

from gnssfp import fingerprint_features as ff
from gnssfp import receiver_core as rc
from gnssfp import signal_sim as ss
from gnssfp.prn_codes import CHIP_RATE
from gnssfp.spoof_detector import DECISION_AUTHENTIC


def truth_init(prn, code_phase, doppler):
    """Tracking initialization from synthesis ground truth."""
    return rc.AcquisitionResult(prn=prn, code_phase=code_phase, doppler=doppler,
                                peak_metric=float("inf"), acquired=True)


def oracle_circcorr(a, b):
    """Exhaustive circular correlation: one dot product per lag."""
    return np.array([np.dot(a, np.roll(b, -k)) for k in range(len(a))])


def despread_cn0_oracle(iq, scenario, n_epochs=400):
    """Independent C/N0 measurement via ground-truth despreading.

    Solves the two-moment system exactly so the estimate is unbiased at any
    SNR: with per-epoch prompts z_k over n samples,
        mean|z|^2 / n^2 = A^2 + sigma^2 / n      (post-correlation power)
        mean|x|^2       = A^2 + sigma^2          (raw power)
    giving the carrier power A^2 and noise density sigma^2 / fs directly.
    No receiver-chain code involved.
    """
    from gnssfp.prn_codes import generate_ca_code
    fs = iq.sample_rate
    n = int(round(fs * 1e-3))
    code = generate_ca_code(scenario.prn)
    n_epochs = min(n_epochs, len(iq.samples) // n)
    x = iq.samples[:n_epochs * n].astype(np.complex128)
    z_sq = np.empty(n_epochs)
    for k in range(n_epochs):
        i = np.arange(k * n, (k + 1) * n)
        rep = code.chips[np.mod(scenario.code_phase0 + CHIP_RATE / fs * i,
                                1023.0).astype(np.int64)]
        theta = 2 * np.pi * scenario.doppler * i / fs + scenario.carrier_phase0
        z = np.sum(x[k * n:(k + 1) * n] * rep * np.exp(-1j * theta))
        z_sq[k] = np.abs(z) ** 2 / n ** 2
    post = np.mean(z_sq)
    raw = np.mean(np.abs(x) ** 2)
    carrier_power = max((post - raw / n) / (1.0 - 1.0 / n), 1e-30)
    noise_density = max(raw - carrier_power, 1e-30) / fs
    return 10 * np.log10(carrier_power / noise_density)


def eer_count_oracle(genuine, spoofed):
    """Exhaustive threshold sweep in integer count space.

    Returns the minimal |#FP * n_genuine - #FN * n_spoofed| over every
    candidate threshold in the score union (exact, no float division).
    """
    g = np.sort(np.asarray(genuine, dtype=float))
    s = np.sort(np.asarray(spoofed, dtype=float))
    ng, ns = len(g), len(s)
    best = None
    for t in np.unique(np.concatenate([g, s])):
        fn = int(np.searchsorted(g, t, side="left"))
        fp = ns - int(np.searchsorted(s, t, side="left"))
        gap = abs(fp * ng - fn * ns)
        if best is None or gap < best:
            best = gap
    return best


def count_gap_at(t, genuine, spoofed):
    g = np.asarray(genuine, dtype=float)
    s = np.asarray(spoofed, dtype=float)
    return abs(int(np.sum(s >= t)) * len(g) - int(np.sum(g < t)) * len(s))


def timing_scan_oracle(decisions_by_prn, label_intervals, sets):
    """Brute-force spoof-timing: midpoint-test every elementary segment."""
    points = set()
    for t0, t1, _ in label_intervals:
        points.update((t0, t1))
    for decisions in decisions_by_prn.values():
        for d in decisions:
            points.update((d.t_start, d.t_end))
    points = sorted(points)
    out = []
    for prns in sets:
        segs = []
        for a, b in zip(points, points[1:]):
            mid = (a + b) / 2
            spoofed = any(t0 <= mid < t1 and name != "genuine"
                          for t0, t1, name in label_intervals)
            undetected = all(
                any(d.t_start <= mid < d.t_end and d.decision == DECISION_AUTHENTIC
                    for d in decisions_by_prn.get(p, []))
                for p in prns)
            if spoofed and undetected:
                if segs and segs[-1][1] == a:
                    segs[-1] = (segs[-1][0], b)
                else:
                    segs.append((a, b))
        lengths = [b - a for a, b in segs]
        out.append((max(lengths) if lengths else 0.0, sum(lengths),
                    sum(int((x + 1e-9) // 30.0) for x in lengths)))
    return out


def scenario_features(cfg):
    """Run a loaded scenario through synthesis -> acquire -> track -> extract.

    Returns the pooled (n, 6) feature matrix over all satellites.
    """
    stream = ss.synthesize_genuine(cfg["satellites"], cfg["sample_rate"],
                                   cfg["duration"], cfg["noise_seed"],
                                   cfg["noise_power"], add_noise=cfg["add_noise"])
    if cfg["attack"] is not None:
        stream = ss.spoof_overlay(stream, cfg["attack"], cfg["satellites"],
                                  cfg["noise_seed"], cfg["noise_power"])
    rows = []
    for scen in cfg["satellites"]:
        acq = rc.acquire(stream, scen.prn)
        assert acq.acquired, f"PRN {scen.prn} not acquired (metric {acq.peak_metric:.2f})"
        track = rc.track_channel(stream, acq)
        feats = ff.extract_features(track.epochs, cfg["window"], prn=scen.prn)
        rows.extend(fv.as_array() for fv in feats)
    return np.vstack(rows)
