"""Software GPS channel: acquisition, EPL correlator tracking, lock detectors.

One channel is a sequential state machine over fixed integration epochs.
Per epoch the incoming block is carrier-wiped and correlated against three
code replicas (early/prompt/late at -d/2, 0, +d/2 chips); the complex
correlator output follows the conjugate-multiply form

    M = (I + jQ)(I_rep - jQ_rep)
      = (I I_rep + Q Q_rep) + j (Q I_rep - Q_rep I)

so a matched, phase-locked epoch concentrates its energy in the real part
and leaves the imaginary part near zero. Code tracking uses a normalized
non-coherent early-minus-late discriminator, carrier tracking a Costas
atan discriminator, both through first-order (PI) loop filters.

Two lock tests gate every epoch: the C/N0 test (estimate >= gamma_code,
default 32 dB-Hz) and the carrier lock test on the estimate of
cos(2*dphi) (>= gamma_carrier, default 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prn_codes import CHIP_RATE, CODE_LENGTH, generate_ca_code, sample_code
from .signal_sim import IqStream

STATUS_COMPLETED = "completed"
STATUS_LOSS_OF_LOCK = "loss_of_lock"

LOCK_PASS = "pass"
LOCK_FAIL_CODE = "fail_code"
LOCK_FAIL_CARRIER = "fail_carrier"
LOCK_FAIL_BOTH = "fail_both"

_LOSS_OF_LOCK_EPOCHS = 50  # consecutive code-test failures before giving up
_LOCK_WINDOW = 20  # epochs feeding the C/N0 and carrier-lock estimators


@dataclass(frozen=True)
class TrackingConfig:
    integration_time: float = 1e-3  # s
    el_spacing: float = 0.5  # chips between early and late replicas
    dll_bandwidth: float = 2.0  # Hz
    pll_bandwidth: float = 25.0  # Hz
    gamma_code: float = 32.0  # dB-Hz, C/N0 lock threshold
    gamma_carrier: float = 0.5  # threshold on the cos(2*dphi) estimate

    def __post_init__(self):
        if not 0 < self.el_spacing <= 1:
            raise ValueError(f"el_spacing must be in (0, 1], got {self.el_spacing}")
        if self.dll_bandwidth <= 0 or self.pll_bandwidth <= 0:
            raise ValueError("loop bandwidths must be positive")


@dataclass(frozen=True)
class AcquisitionResult:
    prn: int
    code_phase: float  # chips
    doppler: float  # Hz
    peak_metric: float  # peak-to-second-peak ratio
    acquired: bool


@dataclass(frozen=True)
class CorrelatorEpoch:
    """One integration interval: the complex E/P/L outputs plus lock metrics."""

    t: float  # epoch start, seconds
    e: complex
    p: complex
    l: complex
    cn0_est: float  # dB-Hz; 0.0 during estimator warm-up
    clt_est: float  # cos(2*dphi) estimate in [-1, 1]; 0.0 during warm-up
    code_phase: float  # chips, replica phase used this epoch
    doppler: float  # Hz, carrier frequency used this epoch


@dataclass
class TrackResult:
    prn: int
    status: str
    epochs: list


def acquire(iq: IqStream, prn: int, doppler_range: float = 5000.0,
            doppler_bin: float = 250.0, threshold: float = 2.0,
            num_periods: int = 8, refine_doppler: bool = True) -> AcquisitionResult:
    """Parallel code-phase search over a grid of Doppler bins.

    Correlates one code period per bin via FFT and sums num_periods
    non-coherently (one nav-bit edge cannot wipe out both periods). The
    detection metric is the peak over the largest value outside +/-1 chip
    of the peak; acquired when it reaches `threshold`. When acquired, the
    Doppler of the arg-max cell is refined from the phase ramp of
    consecutive-period correlations (squared to shed bit flips).
    """
    fs = iq.sample_rate
    period = int(round(fs * CODE_LENGTH / CHIP_RATE))
    if len(iq.samples) < 2 * period:
        raise ValueError(f"need at least two code periods ({2 * period} samples), "
                         f"got {len(iq.samples)}")
    num_periods = min(num_periods, len(iq.samples) // period)

    code = generate_ca_code(prn)
    replica = sample_code(code, fs, CHIP_RATE, 0.0, period).astype(np.float64)
    replica_fft_conj = np.conj(np.fft.fft(replica))

    dopplers = np.arange(-doppler_range, doppler_range + doppler_bin / 2, doppler_bin)
    t = np.arange(period) / fs
    n_corr = num_periods * period
    x_re = iq.samples[:n_corr].real.astype(np.float64)
    x_im = iq.samples[:n_corr].imag.astype(np.float64)

    best = (-1.0, 0, 0.0)  # (power, sample lag, doppler)
    guard = int(np.ceil(fs / CHIP_RATE))  # +/- 1 chip around the peak
    best_map = None
    seg = np.empty(period, dtype=np.complex128)
    for f in dopplers:
        theta = 2.0 * np.pi * f * t
        c, s = np.cos(theta), np.sin(theta)
        acc = np.zeros(period)
        for p in range(num_periods):
            sl = slice(p * period, (p + 1) * period)
            seg.real = x_re[sl] * c + x_im[sl] * s
            seg.imag = x_im[sl] * c - x_re[sl] * s
            corr = np.fft.ifft(np.fft.fft(seg) * replica_fft_conj)
            acc += corr.real ** 2 + corr.imag ** 2
        k = int(np.argmax(acc))
        if acc[k] > best[0]:
            best = (acc[k], k, float(f))
            best_map = acc

    peak_power, k_peak, doppler_hat = best
    mask = np.ones(period, dtype=bool)
    for off in range(-guard, guard + 1):
        mask[(k_peak + off) % period] = False
    second = best_map[mask].max()
    metric = float(np.sqrt(peak_power / second)) if second > 0 else np.inf

    code_phase = ((period - k_peak) % period) * CHIP_RATE / fs
    acquired = metric >= threshold

    if acquired and refine_doppler:
        doppler_hat += _refine_doppler(iq, replica, k_peak, doppler_hat, period)

    return AcquisitionResult(prn=prn, code_phase=float(code_phase % CODE_LENGTH),
                             doppler=doppler_hat, peak_metric=metric,
                             acquired=acquired)


def _refine_doppler(iq: IqStream, replica: np.ndarray, lag: int,
                    doppler: float, period: int, n_periods: int = 16) -> float:
    """Residual Doppler from the phase ramp of per-period prompt sums."""
    fs = iq.sample_rate
    n_periods = min(n_periods, len(iq.samples) // period - 1)
    if n_periods < 4:
        return 0.0
    aligned = np.roll(replica, lag)
    z = np.empty(n_periods, dtype=np.complex128)
    for p in range(n_periods):
        blk = iq.samples[p * period:(p + 1) * period]
        re = blk.real.astype(np.float64) * aligned
        im = blk.imag.astype(np.float64) * aligned
        theta = 2.0 * np.pi * doppler * (np.arange(period) + p * period) / fs
        c, s = np.cos(theta), np.sin(theta)
        z[p] = complex(np.sum(re * c + im * s), np.sum(im * c - re * s))
    # squaring removes BPSK sign flips; spectrum peak sits at 2*df
    nfft = 4096
    spec = np.abs(np.fft.fft(z * z, nfft))
    freqs = np.fft.fftfreq(nfft, d=period / fs)
    return float(freqs[int(np.argmax(spec))] / 2.0)


def _loop_coefficients(bandwidth: float, damping: float, gain: float):
    """Classic PI loop-filter time constants for a second-order loop."""
    wn = 8.0 * damping * bandwidth / (4.0 * damping ** 2 + 1.0)
    tau1 = gain / (wn * wn)
    tau2 = 2.0 * damping / wn
    return tau1, tau2


def track_channel(iq: IqStream, init: AcquisitionResult,
                  cfg: TrackingConfig = TrackingConfig()) -> TrackResult:
    """Run the DLL/PLL channel over the whole stream, one epoch per record.

    Emits one CorrelatorEpoch per integration_time with timestamps advancing
    exactly by the integration time. Terminates early with a loss-of-lock
    status when the C/N0 test fails 50 epochs in a row (after warm-up).
    """
    if not init.acquired:
        raise ValueError(f"cannot track PRN {init.prn}: acquisition failed")
    fs = iq.sample_rate
    n_epoch = int(round(fs * cfg.integration_time))
    n_epochs_total = len(iq.samples) // n_epoch

    chips = generate_ca_code(init.prn).chips.astype(np.float64)
    half = cfg.el_spacing / 2.0

    tau1_d, tau2_d = _loop_coefficients(cfg.dll_bandwidth, 0.707, 1.0)
    tau1_c, tau2_c = _loop_coefficients(cfg.pll_bandwidth, 0.707, 0.25)
    T = cfg.integration_time

    code_phase = init.code_phase
    code_freq = CHIP_RATE
    carr_freq = init.doppler
    carr_phase = 0.0
    code_nco = code_err_old = 0.0
    carr_nco = carr_err_old = 0.0

    i_arr = np.arange(n_epoch, dtype=np.float64)

    # Sliding lock-detector window, maintained incrementally.
    win_abs_i = np.zeros(_LOCK_WINDOW)
    win_sq_i = np.zeros(_LOCK_WINDOW)
    win_sq_q = np.zeros(_LOCK_WINDOW)
    win_sign_q = np.zeros(_LOCK_WINDOW)

    epochs = []
    status = STATUS_COMPLETED
    code_fail_run = 0

    for k in range(n_epochs_total):
        blk = iq.samples[k * n_epoch:(k + 1) * n_epoch]
        re = blk.real.astype(np.float64)
        im = blk.imag.astype(np.float64)

        base = code_phase + (code_freq / fs) * i_arr
        idx_p = np.mod(base, float(CODE_LENGTH)).astype(np.int64)
        idx_e = np.mod(base + half, float(CODE_LENGTH)).astype(np.int64)
        idx_l = np.mod(base - half, float(CODE_LENGTH)).astype(np.int64)

        # carrier wipe x = blk * exp(-j theta), kept in split real arithmetic
        theta = (2.0 * np.pi * carr_freq / fs) * i_arr + carr_phase
        c, s = np.cos(theta), np.sin(theta)
        xr = re * c
        xr += im * s
        xi = im * c
        xi -= re * s

        ce, cp, cl = chips[idx_e], chips[idx_p], chips[idx_l]
        e = complex(xr @ ce, xi @ ce)
        p = complex(xr @ cp, xi @ cp)
        l = complex(xr @ cl, xi @ cl)

        t_k = iq.t0 + k * T
        epoch_code_phase = code_phase
        epoch_doppler = carr_freq

        carr_phase = float(np.mod(carr_phase + 2.0 * np.pi * carr_freq / fs * n_epoch,
                                  2.0 * np.pi))
        code_phase = float(np.mod(code_phase + code_freq / fs * n_epoch, CODE_LENGTH))

        ip, qp = p.real, p.imag
        carr_err = np.arctan(qp / ip) / (2.0 * np.pi) if ip != 0.0 else 0.25
        carr_nco += (tau2_c / tau1_c) * (carr_err - carr_err_old) + carr_err * (T / tau1_c)
        carr_err_old = carr_err
        carr_freq = init.doppler + carr_nco

        abs_e, abs_l = abs(e), abs(l)
        denom = abs_e + abs_l
        code_err = (abs_e - abs_l) / denom if denom > 0 else 0.0
        code_nco += (tau2_d / tau1_d) * (code_err - code_err_old) + code_err * (T / tau1_d)
        code_err_old = code_err
        code_freq = CHIP_RATE + code_nco

        slot = k % _LOCK_WINDOW
        win_abs_i[slot] = abs(ip)
        win_sq_i[slot] = ip * ip
        win_sq_q[slot] = qp * qp
        win_sign_q[slot] = qp if ip >= 0 else -qp

        if k >= _LOCK_WINDOW - 1:
            cn0 = _nwpr_cn0(win_abs_i.sum(), win_sign_q.sum(),
                            win_sq_i.sum() + win_sq_q.sum(), _LOCK_WINDOW, T)
            pow_sum = win_sq_i.sum() + win_sq_q.sum()
            clt = ((win_sq_i.sum() - win_sq_q.sum()) / pow_sum) if pow_sum > 0 else 0.0
        else:
            cn0 = 0.0
            clt = 0.0

        epochs.append(CorrelatorEpoch(t=t_k, e=complex(e), p=complex(p), l=complex(l),
                                      cn0_est=float(cn0), clt_est=float(clt),
                                      code_phase=epoch_code_phase,
                                      doppler=epoch_doppler))

        if k >= _LOCK_WINDOW - 1:
            code_fail_run = code_fail_run + 1 if cn0 < cfg.gamma_code else 0
            if code_fail_run >= _LOSS_OF_LOCK_EPOCHS:
                status = STATUS_LOSS_OF_LOCK
                break

    return TrackResult(prn=init.prn, status=status, epochs=epochs)


def _nwpr_cn0(sum_abs_i: float, sum_sign_q: float, wide_power: float,
              m: int, integration_time: float) -> float:
    """Narrowband/wideband power-ratio C/N0, in dB-Hz.

    The narrowband (coherent) sum uses per-epoch hard-decision data
    wipe-off (|I|, sign(I)*Q) so nav-bit transitions inside the window do
    not need bit synchronization. The ratio saturates when noise vanishes;
    the denominator clamp bounds the reported ceiling.
    """
    if wide_power <= 0.0:
        return 0.0
    narrow = sum_abs_i * sum_abs_i + sum_sign_q * sum_sign_q
    np_ratio = narrow / wide_power
    snr = max(np_ratio - 1.0, 1e-12) / max(m - np_ratio, 1e-9)
    return 10.0 * np.log10(snr / integration_time)


def estimate_cn0(prompt_history, integration_time: float = 1e-3):
    """NWPR C/N0 estimate (dB-Hz) over a window of prompt correlator outputs.

    Returns None when fewer than 20 epochs of history are available or the
    window carries no power.
    """
    prompts = np.asarray(prompt_history, dtype=np.complex128)
    if prompts.size < _LOCK_WINDOW:
        return None
    ip, qp = prompts.real, prompts.imag
    wide = float(np.sum(ip * ip + qp * qp))
    if wide <= 0.0:
        return None
    sum_abs_i = float(np.sum(np.abs(ip)))
    sum_sign_q = float(np.sum(np.where(ip >= 0, qp, -qp)))
    return _nwpr_cn0(sum_abs_i, sum_sign_q, wide, prompts.size, integration_time)


def carrier_lock_metric(prompt_history):
    """Estimate of cos(2*dphi) over a window: (sum I^2 - sum Q^2) / (sum I^2 + sum Q^2).

    Returns None for fewer than 20 epochs or an all-zero window.
    """
    prompts = np.asarray(prompt_history, dtype=np.complex128)
    if prompts.size < _LOCK_WINDOW:
        return None
    si = float(np.sum(prompts.real ** 2))
    sq = float(np.sum(prompts.imag ** 2))
    if si + sq <= 0.0:
        return None
    return (si - sq) / (si + sq)


def lock_tests(epoch: CorrelatorEpoch, cfg: TrackingConfig = TrackingConfig()) -> str:
    """Apply the code (C/N0) and carrier (cos 2*dphi) lock tests to one epoch."""
    code_ok = epoch.cn0_est >= cfg.gamma_code
    carrier_ok = epoch.clt_est >= cfg.gamma_carrier
    if code_ok and carrier_ok:
        return LOCK_PASS
    if not code_ok and not carrier_ok:
        return LOCK_FAIL_BOTH
    return LOCK_FAIL_CODE if not code_ok else LOCK_FAIL_CARRIER
