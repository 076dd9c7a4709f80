"""Trial preprocessing and a synthetic multi-subject benchmark generator.

The generator produces motor-imagery-like trials whose class information
lives in per-channel variance patterns, with a per-subject linear channel
mixing and per-session gain so that cross-subject evaluation faces a real
covariance shift for alignment to remove.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import butter, filtfilt, firwin, lfilter, upfirdn

from .trials import Trial, TrialSet

_FILTER_ORDER = 2
_TAPS_PER_PHASE = 64
_MAX_RATIO_DENOMINATOR = 64


def highpass(trial: Trial, cutoff_hz: float, fs: float) -> Trial:
    """Zero-phase second-order Butterworth high-pass, applied per channel.

    Forward-backward filtering with mirror padding, so output length equals
    input length and DC is rejected. Padding spans three filter time
    constants (clamped to the signal length); anything shorter leaves edge
    transients that visibly distort low-frequency passband content.
    """
    if not 0.0 < cutoff_hz < fs / 2.0:
        raise ValueError(f"cutoff must lie in (0, fs/2), got {cutoff_hz} at fs={fs}")
    b, a = butter(_FILTER_ORDER, cutoff_hz / (fs / 2.0), btype="highpass")
    padlen = min(int(3.0 * fs / (2.0 * np.pi * cutoff_hz)), trial.samples - 1)
    out = filtfilt(b, a, trial.data, axis=1, padtype="even", padlen=padlen)
    return trial.with_data(out)


def resample(trial: Trial, fs_in: float, fs_out: float) -> Trial:
    """Rational-rate resampling with a windowed-sinc anti-alias filter.

    The ratio fs_in/fs_out must reduce to a fraction whose denominator is at
    most 64. Equal rates bypass filtering entirely and return the trial
    unchanged. Output length is floor(T * fs_out / fs_in).
    """
    if fs_in <= 0 or fs_out <= 0:
        raise ValueError("sampling rates must be positive")
    if fs_out > fs_in:
        raise ValueError(f"only downsampling is supported ({fs_in} -> {fs_out})")
    if fs_out == fs_in:
        return trial

    ratio = Fraction(fs_in).limit_denominator(10**6) / Fraction(fs_out).limit_denominator(10**6)
    down, up = ratio.numerator, ratio.denominator
    if up > _MAX_RATIO_DENOMINATOR:
        raise ValueError(
            f"rate ratio {fs_in}/{fs_out} needs interpolation factor {up} > {_MAX_RATIO_DENOMINATOR}"
        )

    numtaps = _TAPS_PER_PHASE * up + 1  # odd length gives an integer group delay
    fs_up = fs_in * up
    fir = firwin(numtaps, 0.45 * fs_out, fs=fs_up, window="hamming") * up
    filtered = upfirdn(fir, trial.data, up=up, down=1, axis=1)
    delay = (numtaps - 1) // 2
    t_out = int(trial.samples * up // down)
    out = filtered[:, delay :: down][:, :t_out]
    return trial.with_data(np.ascontiguousarray(out))


def default_class_covariances(num_classes: int, channels: int) -> list[np.ndarray]:
    """Identity source covariances with a 4x variance bump on a per-class channel pair."""
    if channels < 2 * num_classes:
        raise ValueError(
            f"need at least {2 * num_classes} channels for {num_classes} variance-coded classes"
        )
    covs = []
    for c in range(num_classes):
        s = np.eye(channels)
        s[2 * c, 2 * c] = 4.0
        s[2 * c + 1, 2 * c + 1] = 4.0
        covs.append(s)
    return covs


@dataclass
class SynthConfig:
    """Parameters of the synthetic multi-subject benchmark generator."""

    num_subjects: int = 10
    sessions_per_subject: int = 2
    trials_per_session: int = 60
    num_classes: int = 2
    channels: int = 8
    samples: int = 256
    fs: float = 128.0
    class_source_covariances: list[np.ndarray] | None = None
    subject_mixing_scale: float = 0.3
    subject_gain_drift: float = 0.15
    noise_std: float = 0.5
    # AR(1) coefficient of the source columns; keeps the marginal covariance
    # but lowers the effective sample count per trial the way real EEG does,
    # so early-session statistic estimates are genuinely unstable
    temporal_corr: float = 0.95
    seed: int = 0

    def __post_init__(self):
        for name in ("num_subjects", "sessions_per_subject", "trials_per_session",
                     "num_classes", "channels", "samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.trials_per_session % self.num_classes != 0:
            raise ValueError("trials_per_session must be divisible by num_classes")
        if self.subject_mixing_scale < 0 or self.subject_gain_drift < 0 or self.noise_std < 0:
            raise ValueError("scale parameters must be non-negative")
        if not 0.0 <= self.temporal_corr < 1.0:
            raise ValueError("temporal_corr must lie in [0, 1)")
        if self.class_source_covariances is None:
            self.class_source_covariances = default_class_covariances(
                self.num_classes, self.channels
            )
        if len(self.class_source_covariances) != self.num_classes:
            raise ValueError("need one source covariance per class")
        for s in self.class_source_covariances:
            s = np.asarray(s)
            if s.shape != (self.channels, self.channels):
                raise ValueError("source covariance shape does not match channel count")
            if np.max(np.abs(s - s.T)) > 1e-12:
                raise ValueError("source covariances must be symmetric")


def _ar1_columns(rng, rho: float, channels: int, samples: int) -> np.ndarray:
    """Unit-marginal-variance AR(1) noise along the time axis, stationary from t=0."""
    white = rng.standard_normal((channels, samples))
    if rho == 0.0:
        return white
    state = rng.standard_normal((channels, 1))  # stationary value at t = -1
    driven = np.sqrt(1.0 - rho * rho) * white
    out, _ = lfilter([1.0], [1.0, -rho], driven, axis=1, zi=rho * state)
    return out


def generate(cfg: SynthConfig) -> TrialSet:
    """Draw the full synthetic dataset; bitwise reproducible for a given seed."""
    rng = np.random.default_rng(cfg.seed)
    chol = [np.linalg.cholesky(np.asarray(s, dtype=np.float64))
            for s in cfg.class_source_covariances]
    per_class = cfg.trials_per_session // cfg.num_classes
    base_labels = np.repeat(np.arange(cfg.num_classes), per_class)

    trials: list[Trial] = []
    eye = np.eye(cfg.channels)
    for subject in range(cfg.num_subjects):
        mixing = eye + cfg.subject_mixing_scale * rng.standard_normal(
            (cfg.channels, cfg.channels)
        )
        for session in range(cfg.sessions_per_subject):
            gain = rng.uniform(1.0 - cfg.subject_gain_drift, 1.0 + cfg.subject_gain_drift)
            labels = rng.permutation(base_labels)
            for index, label in enumerate(labels):
                source = chol[label] @ _ar1_columns(
                    rng, cfg.temporal_corr, cfg.channels, cfg.samples
                )
                data = gain * (mixing @ source)
                if cfg.noise_std > 0:
                    data = data + cfg.noise_std * rng.standard_normal(data.shape)
                trials.append(
                    Trial(
                        data,
                        subject_id=subject,
                        session_id=session,
                        index_in_session=index,
                        label=int(label),
                    )
                )
    return TrialSet(trials=trials, num_classes=cfg.num_classes, fs=cfg.fs, aligned=False)
