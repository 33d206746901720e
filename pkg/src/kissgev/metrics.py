"""
SDR-family scoring and the four-way method comparison.
"""

import csv
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_toeplitz
from scipy.signal import fftconvolve

from .beamform import EnhanceParams, ds_enhance, kissgev_enhance
from .errors import InputError
from .oracle import oracle_gev_enhance
from .roomsim import synthesize_mixture
from .wavio import read_wav

logger = logging.getLogger(__name__)

__all__ = [
    "DB_CAP",
    "METHODS",
    "si_sdr",
    "sdr_filtered",
    "ScoreReport",
    "run_methods",
    "evaluate_methods",
]

DB_CAP = 100.0
METHODS = ("unprocessed", "ds", "kissgev", "oracle_gev")
METHOD_LABELS = {
    "unprocessed": "Unprocessed",
    "ds": "Delay-and-sum",
    "kissgev": "KISS-GEV",
    "oracle_gev": "GEV with oracle mask",
}


def _as_vector(x):
    x = np.asarray(getattr(x, "samples", x), dtype=np.float64)
    return x[0] if x.ndim == 2 else x


def _ratio_db(signal_energy, error_energy):
    if error_energy <= 0.0:
        return DB_CAP
    if signal_energy <= 0.0:
        return -DB_CAP
    return float(np.clip(10.0 * np.log10(signal_energy / error_energy), -DB_CAP, DB_CAP))


def si_sdr(estimate, reference):
    """
    Scale-invariant SDR in dB, clamped to [-100, 100].

    ``estimate`` is projected onto ``reference``; the residual counts as
    distortion. Inputs must have equal length.
    """
    est, ref = _as_vector(estimate), _as_vector(reference)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: estimate {est.shape[0]}, reference {ref.shape[0]}")
    ref_energy = np.dot(ref, ref)
    if ref_energy <= 0.0:
        raise InputError("reference signal is all zeros")
    target = (np.dot(est, ref) / ref_energy) * ref
    error = est - target
    return _ratio_db(np.dot(target, target), np.dot(error, error))


def sdr_filtered(estimate, reference, taps=512):
    """
    SDR allowing a time-invariant FIR distortion of the reference.

    The reference is filtered by the least-squares ``taps``-long FIR that
    best matches the estimate; the residual is the distortion.
    """
    est, ref = _as_vector(estimate), _as_vector(reference)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: estimate {est.shape[0]}, reference {ref.shape[0]}")
    if not np.any(ref):
        raise InputError("reference signal is all zeros")
    n = len(ref)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    ref_f = np.fft.rfft(ref, nfft)
    auto = np.fft.irfft(np.abs(ref_f) ** 2, nfft)[:taps]
    cross = np.fft.irfft(np.conj(ref_f) * np.fft.rfft(est, nfft), nfft)[:taps]
    auto[0] *= 1.0 + 1e-10
    fir = solve_toeplitz(auto, cross)
    target = fftconvolve(ref, fir)[:n]
    error = est - target
    return _ratio_db(np.dot(target, target), np.dot(error, error))


METRICS = {"si_sdr": si_sdr, "sdr": sdr_filtered}


@dataclass
class ScoreReport:
    """Per-item scores plus failures; aggregates are computed on demand."""

    records: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def add(self, scenario_id, interference_type, method, metric, value):
        self.records.append({
            "scenario": scenario_id,
            "interference_type": interference_type,
            "method": method,
            "metric": metric,
            "value_db": float(value),
        })

    def means(self, metric="si_sdr"):
        """``{(method, interference_type): mean dB}`` for one metric."""
        groups = defaultdict(list)
        for r in self.records:
            if r["metric"] == metric:
                groups[(r["method"], r["interference_type"])].append(r["value_db"])
        return {k: float(np.mean(v)) for k, v in groups.items()}

    def improvements(self, metric="si_sdr", baseline="unprocessed"):
        """Mean per-scenario gain over ``baseline``."""
        base = {r["scenario"]: r["value_db"] for r in self.records
                if r["method"] == baseline and r["metric"] == metric}
        groups = defaultdict(list)
        for r in self.records:
            if r["metric"] == metric and r["scenario"] in base:
                groups[(r["method"], r["interference_type"])].append(r["value_db"] - base[r["scenario"]])
        return {k: float(np.mean(v)) for k, v in groups.items()}

    @property
    def metrics(self):
        return list(dict.fromkeys(r["metric"] for r in self.records))

    @property
    def methods(self):
        return list(dict.fromkeys(r["method"] for r in self.records))

    @property
    def interference_types(self):
        return sorted({r["interference_type"] for r in self.records})

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, ["scenario", "interference_type", "method", "metric", "value_db"])
            writer.writeheader()
            writer.writerows(sorted(self.records, key=self._order))

    @staticmethod
    def _order(r):
        rank = METHODS.index(r["method"]) if r["method"] in METHODS else len(METHODS)
        return r["scenario"], rank, r["metric"]

    def format_table(self, metric="si_sdr"):
        """Mean dB per method (rows) and interference type (columns), with
        the improvement over the unprocessed mixture in brackets."""
        types = self.interference_types
        means, gains = self.means(metric), self.improvements(metric)
        label_w = max([len("Method")] + [len(METHOD_LABELS.get(m, m)) for m in self.methods]) + 2
        header = "Method".ljust(label_w) + "".join(t.capitalize().rjust(18) for t in types)
        lines = [header, "-" * len(header)]
        for m in self.methods:
            row = METHOD_LABELS.get(m, m).ljust(label_w)
            for t in types:
                if (m, t) in means:
                    cell = f"{means[(m, t)]:6.2f} ({gains.get((m, t), 0.0):+5.2f})"
                else:
                    cell = "-"
                row += cell.rjust(18)
            lines.append(row)
        return "\n".join(lines)


def _load_signals(scenario, base_dir=None):
    files = scenario.extra.get("files")
    if not files:
        return synthesize_mixture(scenario)
    root = Path(base_dir) if base_dir else Path(".")
    return tuple(read_wav(root / files[k]) for k in ("mixture", "target_image", "interference_image"))


def run_methods(mixture, target_image, interference_image, geometry, doa, methods=METHODS,
                params=EnhanceParams()):
    """Mono output clip for each requested method."""
    out = {}
    for method in methods:
        if method == "unprocessed":
            out[method] = mixture.channel(params.reference_channel)
        elif method == "ds":
            out[method] = ds_enhance(mixture, geometry, doa, params)
        elif method == "kissgev":
            out[method] = kissgev_enhance(mixture, geometry, doa, params)
        elif method == "oracle_gev":
            out[method] = oracle_gev_enhance(mixture, target_image, interference_image, geometry, doa, params)
        else:
            raise ValueError(f"unknown method {method!r}")
    return out


def _score_scenario(args):
    scenario, methods, params, metrics, base_dir = args
    try:
        mixture, target_image, interference_image = _load_signals(scenario, base_dir)
    except (OSError, InputError) as exc:
        return scenario.id, None, f"{scenario.id}: {exc}"
    reference = target_image.samples[params.reference_channel]
    outputs = run_methods(mixture, target_image, interference_image, scenario.geometry,
                          scenario.target_doa, methods, params)
    scores = {}
    for method, clip in outputs.items():
        n = min(clip.num_samples, len(reference))
        for metric in metrics:
            scores[method, metric] = METRICS[metric](clip.samples[0, :n], reference[:n])
    return scenario.id, scores, None


def evaluate_methods(scenarios, methods=METHODS, params=EnhanceParams(), metrics=("si_sdr",),
                     base_dir=None, jobs=1):
    """
    Score every method on every scenario against the clean target image at
    the reference microphone.

    Scenarios whose signals cannot be loaded are recorded in
    ``report.errors`` and skipped. Records are ordered by scenario, not by
    completion.
    """
    if not methods:
        raise ValueError("no methods requested")
    if isinstance(metrics, str):
        metrics = (metrics,)
    unknown = [m for m in metrics if m not in METRICS]
    if unknown or not metrics:
        raise ValueError(f"unknown or empty metric list {list(metrics)!r}")
    tasks = [(s, tuple(methods), params, tuple(metrics), base_dir) for s in scenarios]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_score_scenario, tasks))
    else:
        results = [_score_scenario(t) for t in tasks]

    report = ScoreReport()
    for scenario, (sid, scores, err) in zip(scenarios, results):
        if err is not None:
            logger.warning(err)
            report.errors.append(err)
            continue
        for method in methods:
            for metric in metrics:
                report.add(sid, scenario.interference_type, method, metric, scores[method, metric])
    return report
