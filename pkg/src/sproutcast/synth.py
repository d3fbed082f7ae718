"""Synthetic multi-subject datasets with a planted sprouting signature.

Each subject gets a slow sinusoidal drift plus white noise; inside the
final onset horizon a band-limited burst pattern is mixed in whose per-day
amplitude ramps linearly from zero to the configured gain on the sprouting
day.  The daily burst schedule is fixed per subject, so with the noise
turned off the per-day band energy is a strictly increasing function of
time inside the horizon.  All randomness is derived from (seed, subject
index); generation order cannot change the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from sproutcast.ingest import Dataset, Recording

_VARIETIES = ("Sorentina", "SHC1010", "Agria")
_N_CARRIERS = 4
_BURSTS_PER_DAY = 3
_BURST_SECONDS = 7200.0
_START_DAY = date(2023, 10, 1)


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 64
    days_min: int = 40
    days_max: int = 80
    sample_rate_hz: float = 1.0
    signature_band_hz: tuple[float, float] = (0.01, 0.05)
    signature_onset_days_before: int = 20
    signature_gain: float = 4.0
    noise_std: float = 0.3
    drift_amplitude: float = 1.5
    storage_temp_c: int = 8
    seed: int = 7

    def __post_init__(self) -> None:
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be positive")
        if not 0 < self.days_min <= self.days_max:
            raise ValueError("need 0 < days_min <= days_max")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        low, high = self.signature_band_hz
        if not 0 < low < high < self.sample_rate_hz / 2:
            raise ValueError("signature band must satisfy 0 < low < high < rate/2")
        if self.signature_onset_days_before < 1:
            raise ValueError("signature_onset_days_before must be positive")
        if self.signature_gain < 0 or self.noise_std < 0 or self.drift_amplitude < 0:
            raise ValueError("gain, noise_std and drift_amplitude must be non-negative")
        spd = self.sample_rate_hz * 86400
        if abs(spd - round(spd)) > 1e-9 or round(spd) < 2:
            raise ValueError("sample_rate_hz must give a whole number (>= 2) of samples per day")

    @property
    def samples_per_day(self) -> int:
        return int(round(self.sample_rate_hz * 86400))


def _subject_rng(seed: int, index: int) -> np.random.Generator:
    entropy = seed % (2**63)
    return np.random.default_rng(np.random.SeedSequence(entropy=entropy, spawn_key=(index,)))


def _daily_burst_gate(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """One day's burst envelope (fixed per subject, repeated every day)."""
    spd = cfg.samples_per_day
    burst_len = max(2, int(round(_BURST_SECONDS * cfg.sample_rate_hz)))
    burst_len = min(burst_len, spd)
    gate = np.zeros(spd)
    window = np.hanning(burst_len)
    starts = rng.integers(0, spd - burst_len + 1, size=_BURSTS_PER_DAY)
    for start in starts:
        gate[start : start + burst_len] += window
    return gate


def generate_recording(cfg: SynthConfig, index: int) -> Recording:
    """Generate subject ``index`` of the configured dataset."""
    rng = _subject_rng(cfg.seed, index)
    sprout_day = int(rng.integers(cfg.days_min, cfg.days_max, endpoint=True))
    spd = cfg.samples_per_day
    n = sprout_day * spd
    t = np.arange(n) / cfg.sample_rate_hz

    period_s = rng.uniform(2.0, 5.0) * 86400.0
    phase = rng.uniform(0.0, 2.0 * np.pi)
    signal = cfg.drift_amplitude * np.sin(2.0 * np.pi * t / period_s + phase)
    if cfg.noise_std > 0:
        signal += rng.normal(0.0, cfg.noise_std, n)

    low, high = cfg.signature_band_hz
    freqs = np.exp(rng.uniform(np.log(low), np.log(high), _N_CARRIERS))
    phases = rng.uniform(0.0, 2.0 * np.pi, _N_CARRIERS)
    gate = _daily_burst_gate(cfg, rng)

    if cfg.signature_gain > 0:
        first_day = max(0, sprout_day - cfg.signature_onset_days_before)
        for day in range(first_day, sprout_day):
            ramp = (day - (sprout_day - cfg.signature_onset_days_before)) / cfg.signature_onset_days_before
            if ramp <= 0:
                continue
            sl = slice(day * spd, (day + 1) * spd)
            carrier = np.zeros(spd)
            for f, ph in zip(freqs, phases):
                carrier += np.sin(2.0 * np.pi * f * t[sl] + ph)
            burst = gate * carrier
            norm = np.linalg.norm(burst)
            if norm == 0.0:
                continue
            # unit day-RMS before scaling, so daily signature energy is exactly
            # (gain * ramp)^2 * samples_per_day: strictly increasing along the ramp
            signal[sl] += cfg.signature_gain * ramp * np.sqrt(spd) * burst / norm

    start = _START_DAY
    return Recording(
        subject_id=f"p{index:03d}",
        variety=_VARIETIES[index % len(_VARIETIES)],
        storage_temp_c=cfg.storage_temp_c,
        sample_rate_hz=cfg.sample_rate_hz,
        start_day=start,
        samples=signal,
        sprouting_day=start + timedelta(days=sprout_day),
    )


def iter_recordings(cfg: SynthConfig):
    """Yield recordings one at a time so large corpora never sit in memory."""
    for index in range(cfg.n_subjects):
        yield generate_recording(cfg, index)


def generate(cfg: SynthConfig) -> Dataset:
    """Materialize the whole synthetic dataset."""
    return Dataset(
        recordings=list(iter_recordings(cfg)),
        label=f"synthetic-seed{cfg.seed}",
    )


__all__ = ["SynthConfig", "generate_recording", "iter_recordings", "generate"]
