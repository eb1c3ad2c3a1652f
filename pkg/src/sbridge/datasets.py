"""Synthetic paired-data generation and WAV I/O.

Stands in for real speech corpora at desk scale: clean signals are harmonic
stacks, chirps or AR(2) resonances; degradations are additive noise at an
exact target SNR or convolution with an exponential-decay impulse response
of prescribed reverberation time.  Generation is a pure function of the
dataset spec, with per-example generators derived from (master_seed, index,
stream), so any example can be regenerated in isolation, in any order.

On disk a dataset is a directory of mono 16 kHz WAV files plus a
``manifest.jsonl`` with one record per example.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve, lfilter

from .seeding import derive_rng
from .transforms import TimeSignal
from .validation import as_float_array

TASKS = ("denoise", "dereverb")
CLEAN_KINDS = ("harmonic", "chirp", "ar2")
NOISE_KINDS = ("white", "pink")

#: RNG sub-streams per example
_STREAM_CLEAN, _STREAM_NOISE, _STREAM_PARAMS = 0, 1, 2

#: all generated pairs are jointly rescaled to this peak (clipping-free)
TARGET_PEAK = 0.5


class DataError(ValueError):
    """Malformed or unsupported data on disk."""


@dataclass
class PairedExample:
    """A (clean, degraded) pair with its generation provenance."""

    clean: TimeSignal
    degraded: TimeSignal
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.clean) != len(self.degraded):
            raise ValueError("clean and degraded signals must have equal length")
        if self.clean.sample_rate != self.degraded.sample_rate:
            raise ValueError("clean and degraded signals must share the sample rate")


@dataclass
class DatasetSpec:
    task: str = "denoise"
    n_examples: int = 8
    duration_s: float = 1.0
    snr_range_db: tuple = (-6.0, 14.0)
    t60_range_s: tuple = (0.4, 1.0)
    clean_kind: str = "harmonic"
    noise_kind: str = "white"
    master_seed: int = 0
    sample_rate: int = 16000
    #: escape hatch: directories of WAV files used instead of the synthetic
    #: generators, cycled by example index
    clean_dir: str | None = None
    noise_dir: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.clean_kind not in CLEAN_KINDS:
            raise ValueError(f"clean_kind must be one of {CLEAN_KINDS}, got {self.clean_kind!r}")
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"noise_kind must be one of {NOISE_KINDS}, got {self.noise_kind!r}")
        if self.duration_s < 1.0:
            raise ValueError(f"duration_s must be at least 1 s, got {self.duration_s}")
        if self.n_examples < 1:
            raise ValueError("n_examples must be positive")
        for name, rng_pair in (("snr_range_db", self.snr_range_db),
                               ("t60_range_s", self.t60_range_s)):
            lo, hi = rng_pair
            if not lo <= hi:
                raise ValueError(f"{name} is empty: {rng_pair}")
        self.snr_range_db = tuple(float(v) for v in self.snr_range_db)
        self.t60_range_s = tuple(float(v) for v in self.t60_range_s)

    def to_dict(self):
        return {"task": self.task, "n_examples": self.n_examples,
                "duration_s": self.duration_s, "snr_range_db": list(self.snr_range_db),
                "t60_range_s": list(self.t60_range_s), "clean_kind": self.clean_kind,
                "noise_kind": self.noise_kind, "master_seed": self.master_seed,
                "sample_rate": self.sample_rate, "clean_dir": self.clean_dir,
                "noise_dir": self.noise_dir}


def _peak_normalize(samples, peak):
    top = np.max(np.abs(samples))
    return samples * (peak / top) if top > 0 else samples


def _wav_pool(directory, expected_rate):
    files = sorted(Path(directory).glob("*.wav"))
    if not files:
        raise DataError(f"no WAV files found in {directory}")
    return files


def _signal_from_dir(directory, index, n, rng, sample_rate):
    """Cycle WAV files by index; pad or randomly crop to ``n`` samples."""
    files = _wav_pool(directory, sample_rate)
    samples = read_wav(files[index % len(files)], expected_rate=sample_rate).samples
    if len(samples) >= n:
        start = int(rng.integers(0, len(samples) - n + 1))
        return samples[start:start + n]
    return np.pad(samples, (0, n - len(samples)))


def gen_clean(spec, index):
    """Deterministic synthetic 'speech' for example ``index``, peak 0.5.

    With ``spec.clean_dir`` set, material comes from the user's WAV files
    instead of the synthetic generators.
    """
    rng = derive_rng(spec.master_seed, index, _STREAM_CLEAN)
    n = int(round(spec.duration_s * spec.sample_rate))
    if spec.clean_dir is not None:
        samples = _signal_from_dir(spec.clean_dir, index, n, rng, spec.sample_rate)
        return TimeSignal(_peak_normalize(samples, TARGET_PEAK), spec.sample_rate)
    t = np.arange(n) / spec.sample_rate
    if spec.clean_kind == "harmonic":
        f0 = rng.uniform(100.0, 300.0)
        drift_rate = rng.uniform(0.2, 1.0)
        drift_phase = rng.uniform(0.0, 2.0 * np.pi)
        inst_f0 = f0 * (1.0 + 0.03 * np.sin(2.0 * np.pi * drift_rate * t + drift_phase))
        phase0 = np.cumsum(inst_f0) / spec.sample_rate
        n_harm = min(8, int(0.45 * spec.sample_rate / (1.03 * f0)))
        x = np.zeros(n)
        for h in range(1, n_harm + 1):
            x += np.sin(2.0 * np.pi * h * phase0 + rng.uniform(0.0, 2.0 * np.pi)) / h
    elif spec.clean_kind == "chirp":
        f_lo = rng.uniform(100.0, 1000.0)
        f_hi = rng.uniform(1000.0, 3000.0)
        # linear sweep, phase by integrated instantaneous frequency
        inst = f_lo + (f_hi - f_lo) * t / spec.duration_s
        x = np.sin(2.0 * np.pi * np.cumsum(inst) / spec.sample_rate
                   + rng.uniform(0.0, 2.0 * np.pi))
    else:  # ar2: resonant second-order filter driven by white noise
        f_res = rng.uniform(200.0, 2000.0)
        radius = 0.995
        omega = 2.0 * np.pi * f_res / spec.sample_rate
        x = lfilter([1.0], [1.0, -2.0 * radius * np.cos(omega), radius ** 2],
                    rng.standard_normal(n))
    return TimeSignal(_peak_normalize(x, TARGET_PEAK), spec.sample_rate)


def gen_noise(spec, index):
    """Unit-RMS noise for example ``index`` (white, pink, or from WAV files)."""
    rng = derive_rng(spec.master_seed, index, _STREAM_NOISE)
    n = int(round(spec.duration_s * spec.sample_rate))
    if spec.noise_dir is not None:
        noise = _signal_from_dir(spec.noise_dir, index, n, rng, spec.sample_rate)
        rms = np.sqrt(np.mean(noise ** 2))
        if rms == 0.0:
            raise DataError(f"noise file for example {index} is silent")
        return TimeSignal(noise / rms, spec.sample_rate)
    noise = rng.standard_normal(n)
    if spec.noise_kind == "pink":
        spectrum = np.fft.rfft(noise)
        freqs = np.fft.rfftfreq(n, d=1.0 / spec.sample_rate)
        spectrum[1:] /= np.sqrt(freqs[1:])
        spectrum[0] = 0.0
        noise = np.fft.irfft(spectrum, n=n)
    return TimeSignal(noise / np.sqrt(np.mean(noise ** 2)), spec.sample_rate)


def mix_noise(clean, noise, snr_db):
    """Scale the noise to hit ``snr_db`` exactly and add it to the clean signal."""
    if len(clean) != len(noise):
        raise ValueError("clean and noise must have equal length")
    clean_energy = float(np.sum(clean.samples ** 2))
    noise_energy = float(np.sum(noise.samples ** 2))
    if clean_energy == 0.0 or noise_energy == 0.0:
        raise ValueError("mix_noise requires nonzero clean and noise energy")
    gain = np.sqrt(clean_energy / noise_energy) * 10.0 ** (-snr_db / 20.0)
    degraded = TimeSignal(clean.samples + gain * noise.samples, clean.sample_rate)
    return PairedExample(clean, degraded, {"task": "denoise", "snr_db": float(snr_db)})


#: diffuse tail level relative to the unit direct tap, and the gap before the
#: first reflection; both keep the t60 -> 0 limit close to an identity RIR
RIR_TAIL_LEVEL = 0.05
RIR_PREDELAY_S = 0.005


def gen_rir(t60_s, length_s, sample_rate, rng):
    """Exponentially decaying noise tail behind a unit direct-path tap.

    The amplitude envelope ``exp(-3 ln10 * t / t60)`` puts the energy decay
    at exactly -60 dB when ``t = t60``.  The diffuse tail sits at a fixed
    level below the direct tap and starts after a short pre-delay, so a tiny
    ``t60`` degenerates to a near-identity response.
    """
    if not t60_s > 0:
        raise ValueError(f"t60 must be positive, got {t60_s}")
    n = int(round(length_s * sample_rate))
    t = np.arange(n) / sample_rate
    envelope = np.exp(-3.0 * np.log(10.0) * t / t60_s)
    rir = RIR_TAIL_LEVEL * rng.standard_normal(n) * envelope
    rir[:min(n, int(round(RIR_PREDELAY_S * sample_rate)))] = 0.0
    rir[0] = 1.0
    return TimeSignal(rir, sample_rate)


def apply_reverb(clean, rir):
    """Convolve with the impulse response; the anechoic target is the clean signal."""
    degraded = fftconvolve(clean.samples, rir.samples)[:len(clean)]
    return PairedExample(clean, TimeSignal(degraded, clean.sample_rate),
                         {"task": "dereverb"})


def make_example(spec, index):
    """Build example ``index`` of the dataset, rescaled to peak 0.5.

    The joint rescale keeps the pair clipping-free without touching the SNR
    or the reverberation structure.
    """
    params_rng = derive_rng(spec.master_seed, index, _STREAM_PARAMS)
    clean = gen_clean(spec, index)
    if spec.task == "denoise":
        snr_db = params_rng.uniform(*spec.snr_range_db)
        pair = mix_noise(clean, gen_noise(spec, index), snr_db)
    else:
        t60 = params_rng.uniform(*spec.t60_range_s)
        rir = gen_rir(t60, min(1.2 * t60, spec.duration_s), spec.sample_rate,
                      derive_rng(spec.master_seed, index, _STREAM_NOISE))
        pair = apply_reverb(clean, rir)
        pair.meta["t60_s"] = float(t60)
    peak = max(np.max(np.abs(pair.clean.samples)), np.max(np.abs(pair.degraded.samples)))
    gain = TARGET_PEAK / peak
    meta = {**pair.meta, "seed": spec.master_seed, "index": index}
    return PairedExample(
        TimeSignal(pair.clean.samples * gain, spec.sample_rate),
        TimeSignal(pair.degraded.samples * gain, spec.sample_rate),
        meta,
    )


def iter_examples(spec):
    for index in range(spec.n_examples):
        yield make_example(spec, index)


# -- WAV files ---------------------------------------------------------------


def write_wav(path, signal, subtype="float32"):
    """Write a mono WAV; ``subtype`` is 'float32' or 'pcm16'."""
    samples = signal.samples if isinstance(signal, TimeSignal) else as_float_array(signal)
    rate = signal.sample_rate if isinstance(signal, TimeSignal) else 16000
    if subtype == "float32":
        wavfile.write(path, rate, samples.astype(np.float32))
    elif subtype == "pcm16":
        scaled = np.clip(np.round(samples * 32768.0), -32768, 32767)
        wavfile.write(path, rate, scaled.astype(np.int16))
    else:
        raise ValueError(f"unsupported subtype {subtype!r}; use 'float32' or 'pcm16'")


def read_wav(path, expected_rate=None):
    """Read a mono 16 kHz WAV (PCM16 or float32) into a TimeSignal."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DataError(f"cannot parse WAV file {path}: {exc}") from exc
    if data.ndim != 1:
        raise DataError(f"unsupported channel count: {data.shape[1]} (need mono) in {path}")
    if expected_rate is not None and rate != expected_rate:
        raise DataError(f"unsupported sample rate: {rate} (need {expected_rate}) in {path}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise DataError(f"unsupported sample format: {data.dtype} in {path}")
    return TimeSignal(samples, rate)


# -- datasets on disk ----------------------------------------------------------


def generate_dataset(spec, out_dir):
    """Write WAV pairs plus ``manifest.jsonl``; returns the manifest records."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for index, pair in enumerate(iter_examples(spec)):
        clean_path = out_dir / f"{index:04d}_clean.wav"
        degraded_path = out_dir / f"{index:04d}_degraded.wav"
        write_wav(clean_path, pair.clean)
        write_wav(degraded_path, pair.degraded)
        record = {"id": f"{index:04d}", "clean": clean_path.name,
                  "degraded": degraded_path.name, "task": pair.meta["task"],
                  "seed": spec.master_seed}
        for key in ("snr_db", "t60_s"):
            if key in pair.meta:
                record[key] = pair.meta[key]
        records.append(record)
    with open(out_dir / "manifest.jsonl", "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    with open(out_dir / "dataset_spec.json", "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return records


def load_dataset(data_dir, expected_rate=16000):
    """Read a dataset directory written by `generate_dataset`."""
    data_dir = Path(data_dir)
    manifest = data_dir / "manifest.jsonl"
    if not manifest.exists():
        raise DataError(f"no manifest.jsonl in {data_dir}")
    pairs = []
    with open(manifest) as fh:
        for line in fh:
            record = json.loads(line)
            clean = read_wav(data_dir / record["clean"], expected_rate)
            degraded = read_wav(data_dir / record["degraded"], expected_rate)
            meta = {k: v for k, v in record.items() if k not in ("clean", "degraded")}
            meta["task"] = record.get("task", "denoise")
            pairs.append(PairedExample(clean, degraded, meta))
    return pairs
