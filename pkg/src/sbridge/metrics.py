"""Waveform and spectral quality metrics with desk-scale reporting.

Ratios are capped at +100 dB so perfect reconstructions do not inject
infinities into aggregates.  Perceptual metrics (PESQ, ESTOI) and WER are
intentionally absent; report rows carry empty named slots so externally
computed values can be merged in.
"""

import csv
import json

import numpy as np

from .validation import check_same_shape

DB_CAP = 100.0

#: metric columns of a report row; external slots stay None unless supplied
REPORT_FIELDS = ("id", "si_sdr_in", "si_sdr_out", "snr_in", "snr_out",
                 "spectral_log_mse", "pesq", "estoi", "wer")


def _capped_db(num, den):
    if den <= num * 10.0 ** (-DB_CAP / 10.0):
        return DB_CAP
    return float(min(10.0 * np.log10(num / den), DB_CAP))


def si_sdr(reference, estimate):
    """Scale-invariant signal-to-distortion ratio in dB.

    The estimate is projected onto the reference, so any nonzero rescaling of
    the estimate leaves the value unchanged.
    """
    check_same_shape(reference, estimate, "reference", "estimate")
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    ref_energy = float(np.sum(reference ** 2))
    if ref_energy == 0.0:
        raise ValueError("si_sdr is undefined for a zero reference")
    scaling = float(np.dot(reference, estimate)) / ref_energy
    target = scaling * reference
    target_energy = float(np.sum(target ** 2))
    residual_energy = float(np.sum((estimate - target) ** 2))
    if target_energy == 0.0:
        return -DB_CAP
    return _capped_db(target_energy, residual_energy)


def snr(reference, estimate):
    """Plain signal-to-noise ratio in dB (not scale-invariant)."""
    check_same_shape(reference, estimate, "reference", "estimate")
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    ref_energy = float(np.sum(reference ** 2))
    if ref_energy == 0.0:
        raise ValueError("snr is undefined for a zero reference")
    return _capped_db(ref_energy, float(np.sum((reference - estimate) ** 2)))


def spectral_log_mse(ref_coeffs, est_coeffs, floor=1e-8):
    """Mean squared log-magnitude distance between coefficient grids."""
    check_same_shape(ref_coeffs, est_coeffs, "ref_coeffs", "est_coeffs")
    ref = np.maximum(np.abs(np.asarray(ref_coeffs)), floor)
    est = np.maximum(np.abs(np.asarray(est_coeffs)), floor)
    return float(np.mean((np.log(ref) - np.log(est)) ** 2))


class MetricReport:
    """Per-example metric rows plus mean/std aggregates."""

    def __init__(self):
        self.rows = []

    def add(self, example_id, **metrics):
        unknown = set(metrics) - set(REPORT_FIELDS)
        if unknown:
            raise ValueError(f"unknown metric fields: {sorted(unknown)}")
        row = {field: None for field in REPORT_FIELDS}
        row["id"] = example_id
        row.update(metrics)
        self.rows.append(row)

    def summary(self):
        out = {}
        for field in REPORT_FIELDS[1:]:
            values = [row[field] for row in self.rows if row[field] is not None]
            if values:
                arr = np.asarray(values, dtype=np.float64)
                out[field] = {"mean": float(arr.mean()),
                              "std": float(arr.std(ddof=0)),
                              "n": len(values)}
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
            writer.writeheader()
            writer.writerows(self.rows)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump({"examples": self.rows, "summary": self.summary()},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
