"""Single-lead ECG signal pipeline.

Raw 250 Hz traces go through band-pass filtering, QRS detection, beat
segmentation around each R peak, and midrange normalization into the
fixed [-0.5, 0.5] window the network consumes.  A synthetic generator
produces labeled traces (with ground-truth R positions) for all six beat
classes so experiments never need recorded patient data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import butter, filtfilt, find_peaks

from .errors import ConfigError, DataError, ParseError

SAMPLE_RATE = 250

# beat window around the R peak: 0.4 s before, 0.6 s after (one full cycle
# at normal resting rates)
SEGMENT_PRE = 100
SEGMENT_POST = 150
SEGMENT_LENGTH = SEGMENT_PRE + SEGMENT_POST

REFRACTORY_S = 0.2  # minimum spacing between accepted R peaks

BEAT_TYPES = ("N", "V", "S", "A", "E", "Q")


@dataclass
class RawTrace:
    """A single-lead recording in millivolts at 250 Hz."""

    samples: np.ndarray
    patient_id: str = ""
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError(f"trace samples must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate != SAMPLE_RATE:
            raise DataError(f"sample_rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class BeatSegment:
    """One fixed-length beat window; ``r_index`` locates the R peak in the source trace."""

    values: np.ndarray
    r_index: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (SEGMENT_LENGTH,):
            raise DataError(
                f"segment must hold exactly {SEGMENT_LENGTH} samples, got {self.values.shape}")


def bandpass_filter(trace: RawTrace, low_hz: float, high_hz: float) -> RawTrace:
    """Zero-phase 4th-order Butterworth band-pass.

    Applied forward-backward (filtfilt), so the passband magnitude is the
    squared single-pass response and the phase is exactly zero.
    """
    nyquist = trace.sample_rate / 2.0
    if not 0.0 < low_hz < high_hz < nyquist:
        raise ConfigError(
            f"band must satisfy 0 < low < high < {nyquist}, got ({low_hz}, {high_hz})")
    b, a = butter(2, [low_hz / nyquist, high_hz / nyquist], btype="bandpass")
    filtered = filtfilt(b, a, trace.samples)
    return RawTrace(filtered, patient_id=trace.patient_id, sample_rate=trace.sample_rate)


def detect_qrs(trace: RawTrace) -> np.ndarray:
    """R-peak sample indices, strictly increasing, spaced >= 0.2 s apart.

    Classic energy pipeline: band-pass 5-15 Hz, derivative, squaring,
    moving-window integration, then an adaptive signal/noise threshold
    over candidate maxima.  Accepted fiducials are refined to the nearby
    maximum of the band-passed signal.  A flat trace yields no peaks.
    """
    fs = trace.sample_rate
    if len(trace) < int(0.5 * fs) or np.ptp(trace.samples) == 0.0:
        return np.array([], dtype=int)

    filtered = bandpass_filter(trace, 5.0, 15.0).samples
    energy = np.gradient(filtered) ** 2
    window = int(0.15 * fs)
    integrated = np.convolve(energy, np.ones(window) / window, mode="same")

    refractory = int(REFRACTORY_S * fs)
    peak = integrated.max()
    if peak <= 0.0:
        return np.array([], dtype=int)
    candidates, _ = find_peaks(integrated, distance=refractory, height=0.05 * peak)
    if candidates.size == 0:
        return np.array([], dtype=int)

    # running signal/noise levels; threshold sits a quarter of the way up
    signal_level = float(integrated[candidates[0]])
    noise_level = 0.0
    threshold = 0.0
    accepted = []
    for idx in candidates:
        value = float(integrated[idx])
        if value > threshold:
            accepted.append(idx)
            signal_level = 0.125 * value + 0.875 * signal_level
        else:
            noise_level = 0.125 * value + 0.875 * noise_level
        threshold = noise_level + 0.25 * (signal_level - noise_level)

    # refine each fiducial to the local maximum of the band-passed signal
    half = int(0.10 * fs)
    refined = []
    for idx in accepted:
        lo = max(0, idx - half)
        hi = min(len(filtered), idx + half + 1)
        refined.append(lo + int(np.argmax(filtered[lo:hi])))

    peaks = []
    for idx in sorted(set(refined)):
        if not peaks or idx - peaks[-1] >= refractory:
            peaks.append(idx)
    return np.asarray(peaks, dtype=int)


def segment_beats(trace: RawTrace, peaks) -> list[BeatSegment]:
    """One segment per R peak whose full window fits inside the trace."""
    n = len(trace)
    segments = []
    for r in np.asarray(peaks, dtype=int):
        lo, hi = r - SEGMENT_PRE, r + SEGMENT_POST
        if lo < 0 or hi > n:
            continue
        segments.append(BeatSegment(trace.samples[lo:hi].copy(), r_index=int(r)))
    return segments


def normalize_values(values: np.ndarray) -> np.ndarray:
    """Midrange-center and span-scale an array onto exactly [-0.5, 0.5].

    Computed as (x - min)/(max - min) - 0.5, which is algebraically the
    midrange form but attains the -0.5 and +0.5 endpoints exactly in
    floating point.  A constant array maps to all zeros.
    """
    values = np.asarray(values, dtype=np.float64)
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.zeros_like(values)
    scaled = (values - lo) / (hi - lo) - 0.5
    np.clip(scaled, -0.5, 0.5, out=scaled)
    return scaled


def normalize_beat(segment: BeatSegment) -> BeatSegment:
    """Apply :func:`normalize_values` to one segment."""
    return BeatSegment(normalize_values(segment.values), r_index=segment.r_index)


# ---------------------------------------------------------------------------
# synthetic generator
# ---------------------------------------------------------------------------


@dataclass
class SynthConfig:
    """Wave and noise parameters for the synthetic single-lead generator.

    Defaults sit inside the normal ranges: QRS 0.06-0.11 s, RR 0.60-1.00 s,
    R amplitude > 0.5 mV, P amplitude < 0.25 mV, PR 0.12-0.20 s.
    """

    heart_rate_bpm: tuple = (62.0, 96.0)
    p_amplitude_mv: float = 0.15
    p_duration_s: float = 0.09
    pr_interval_s: float = 0.16
    r_amplitude_mv: float = 1.1
    q_depth_mv: float = 0.16
    s_depth_mv: float = 0.28
    qrs_duration_s: float = 0.08
    t_amplitude_mv: float = 0.55
    t_duration_s: float = 0.16
    t_offset_s: float = 0.30
    amplitude_jitter: float = 0.08
    timing_jitter_s: float = 0.004
    baseline_wander_mv: float = 0.0
    baseline_wander_hz: float = 0.33
    mains_amplitude_mv: float = 0.0
    mains_hz: float = 50.0
    artifact_rate_hz: float = 0.0
    artifact_amplitude_mv: float = 2.0
    noise_rms_mv: float = 0.0
    # per-class morphology knobs
    v_qrs_duration_s: float = 0.15
    s_rr_range: tuple = (0.42, 0.55)
    a_rr_range: tuple = (0.42, 0.95)
    a_ripple_mv: float = 0.06
    e_mains_amplitude_mv: float = 1.0
    q_artifact_rate_hz: float = 1.2
    seed: int = 0

    def with_seed(self, seed: int) -> "SynthConfig":
        return replace(self, seed=seed)


def _add_gaussian(samples: np.ndarray, center_s: float, sigma_s: float,
                  amplitude: float, fs: int) -> None:
    """Add one Gaussian bump in place, touching only a local +-4 sigma slice."""
    center = center_s * fs
    sigma = sigma_s * fs
    lo = max(0, int(center - 4 * sigma))
    hi = min(len(samples), int(center + 4 * sigma) + 1)
    if hi <= lo:
        return
    idx = np.arange(lo, hi)
    samples[lo:hi] += amplitude * np.exp(-0.5 * ((idx - center) / sigma) ** 2)


def synth_ecg(config: SynthConfig, n_beats: int, beat_type: str = "N",
              rng: np.random.Generator | None = None):
    """Synthesize one trace of ``n_beats`` beats of a single type.

    Returns ``(trace, r_peaks, labels)`` where ``r_peaks`` are the
    ground-truth R sample indices and ``labels`` repeats ``beat_type``.

    Morphologies: N is the neutral template; V widens the QRS past 0.11 s
    and drops the P wave; S shortens every preceding RR; A draws irregular
    RR intervals and replaces P with a fibrillatory ripple; E overlays a
    dominant mains-frequency tone; Q overlays large low-frequency motion
    bursts.
    """
    if n_beats < 1:
        raise ConfigError(f"n_beats must be >= 1, got {n_beats}")
    if beat_type not in BEAT_TYPES:
        raise ConfigError(f"unknown beat type {beat_type!r}; expected one of {BEAT_TYPES}")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    fs = SAMPLE_RATE
    cfg = config

    p_amp = cfg.p_amplitude_mv
    qrs_dur = cfg.qrs_duration_s
    ripple = False
    mains_amp = cfg.mains_amplitude_mv
    artifact_rate = cfg.artifact_rate_hz
    rr_lo, rr_hi = 60.0 / cfg.heart_rate_bpm[1], 60.0 / cfg.heart_rate_bpm[0]

    if beat_type == "V":
        p_amp = 0.0
        qrs_dur = cfg.v_qrs_duration_s
    elif beat_type == "S":
        rr_lo, rr_hi = cfg.s_rr_range
    elif beat_type == "A":
        p_amp = 0.0
        ripple = True
        rr_lo, rr_hi = cfg.a_rr_range
    elif beat_type == "E":
        mains_amp = max(mains_amp, cfg.e_mains_amplitude_mv)
    elif beat_type == "Q":
        artifact_rate = max(artifact_rate, cfg.q_artifact_rate_hz)

    # R times: lead-in, then per-beat RR draws
    rr = rng.uniform(rr_lo, rr_hi, size=n_beats)
    r_times = 0.6 + np.concatenate(([0.0], np.cumsum(rr[:-1])))
    r_times += rng.uniform(-cfg.timing_jitter_s, cfg.timing_jitter_s, size=n_beats)
    duration = r_times[-1] + 0.8
    n = int(math.ceil(duration * fs))
    samples = np.zeros(n)

    for t_r in r_times:
        wobble = 1.0 + cfg.amplitude_jitter * rng.uniform(-1.0, 1.0)
        d = qrs_dur * (1.0 + 0.05 * rng.uniform(-1.0, 1.0))
        if beat_type == "V":
            d = max(d, 0.13)  # stays clear of the 0.11 s normal limit
        if p_amp > 0.0:
            _add_gaussian(samples, t_r - cfg.pr_interval_s - 0.01,
                          cfg.p_duration_s / 5.0, p_amp * wobble, fs)
        _add_gaussian(samples, t_r - 0.40 * d, d / 11.0, -cfg.q_depth_mv * wobble, fs)
        _add_gaussian(samples, t_r, d / 5.0, cfg.r_amplitude_mv * wobble, fs)
        _add_gaussian(samples, t_r + 0.40 * d, d / 11.0, -cfg.s_depth_mv * wobble, fs)
        _add_gaussian(samples, t_r + cfg.t_offset_s,
                      cfg.t_duration_s / 5.0, cfg.t_amplitude_mv * wobble, fs)

    t = np.arange(n) / fs
    if cfg.baseline_wander_mv > 0.0:
        phase = rng.uniform(0.0, 2.0 * math.pi)
        samples += cfg.baseline_wander_mv * np.sin(
            2.0 * math.pi * cfg.baseline_wander_hz * t + phase)
    if ripple:
        freq = rng.uniform(6.0, 8.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        samples += 0.06 * np.sin(2.0 * math.pi * freq * t + phase)
    if mains_amp > 0.0:
        phase = rng.uniform(0.0, 2.0 * math.pi)
        samples += mains_amp * np.sin(2.0 * math.pi * cfg.mains_hz * t + phase)
    if artifact_rate > 0.0:
        n_bursts = rng.poisson(artifact_rate * duration)
        for _ in range(n_bursts):
            _add_gaussian(samples, rng.uniform(0.0, duration),
                          rng.uniform(0.10, 0.35),
                          rng.uniform(1.0, 1.5) * cfg.artifact_amplitude_mv *
                          rng.choice([-1.0, 1.0]), fs)
    if cfg.noise_rms_mv > 0.0:
        samples += rng.normal(0.0, cfg.noise_rms_mv, size=n)

    peaks = np.round(r_times * fs).astype(int)
    trace = RawTrace(samples, patient_id="synthetic")
    return trace, peaks, [beat_type] * n_beats


# ---------------------------------------------------------------------------
# trace file formats
# ---------------------------------------------------------------------------


def save_trace_csv(path, trace: RawTrace) -> None:
    """Header ``patient_id,sample_rate``, a metadata row, then one sample per line."""
    lines = ["patient_id,sample_rate", f"{trace.patient_id},{trace.sample_rate}"]
    lines.extend(repr(float(v)) for v in trace.samples)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_trace_csv(path) -> RawTrace:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "patient_id,sample_rate":
        raise ParseError(f"{path}: line 1: expected header 'patient_id,sample_rate'")
    if len(lines) < 2:
        raise ParseError(f"{path}: line 2: missing metadata row")
    meta = lines[1].split(",")
    if len(meta) != 2:
        raise ParseError(f"{path}: line 2: expected 'patient_id,sample_rate' values")
    patient_id = meta[0].strip()
    try:
        sample_rate = int(meta[1])
    except ValueError:
        raise ParseError(f"{path}: line 2: sample_rate {meta[1]!r} is not an integer")
    samples = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        try:
            samples.append(float(line))
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: {line!r} is not a number")
    return RawTrace(np.asarray(samples), patient_id=patient_id, sample_rate=sample_rate)


def save_trace_binary(path, trace: RawTrace) -> None:
    """8-byte little-endian sample count, then little-endian float64 samples."""
    with open(path, "wb") as fh:
        fh.write(np.uint64(len(trace)).astype("<u8").tobytes())
        fh.write(trace.samples.astype("<f8").tobytes())


def load_trace_binary(path, patient_id: str = "") -> RawTrace:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ParseError(f"{path}: shorter than the 8-byte count prefix")
    count = int(np.frombuffer(raw[:8], dtype="<u8")[0])
    body = raw[8:]
    if len(body) != 8 * count:
        raise ParseError(
            f"{path}: count prefix says {count} samples but body holds {len(body)} bytes")
    samples = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return RawTrace(samples, patient_id=patient_id)
