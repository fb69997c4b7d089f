"""Parameter-deviation fault detection.

Tracks the Frobenius distance between the live ARX predictor and a nominal
predictor captured during fault-free operation. A large distance trips the
fault verdict outright; a moderate distance triggers comparison of the
per-component predictor deviation against a library of recorded fault and
load-increase patterns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

DEFAULT_MATCH_FLOOR = 0.8
DEFAULT_HIGH_FACTOR = 5.0
DEFAULT_LOW_FACTOR = 1.5
DEFAULT_HOLD = 3

LIBRARY_FORMAT_VERSION = 1


class InsufficientDataError(ValueError):
    """Not enough snapshots to calibrate or build from."""


class EmptyLibraryError(ValueError):
    """Signature matching requested against an empty library."""


class Verdict(str, Enum):
    NORMAL = "normal"
    FAULT = "fault"
    LOAD_INCREASE = "load_increase"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class NominalPredictor:
    """Reference predictor from fault-free operation."""

    theta_star: np.ndarray  # (2, 4*order)
    calibration_window: int
    calibrated_at: float  # timestamp of the newest snapshot used


@dataclass(frozen=True)
class Thresholds:
    d_high: float
    d_low: float

    def __post_init__(self):
        if not 0.0 < self.d_low < self.d_high:
            raise ValueError(
                f"need 0 < d_low < d_high, got d_low={self.d_low}, "
                f"d_high={self.d_high}"
            )


@dataclass(frozen=True)
class Signature:
    """Unit-norm predictor-deviation pattern from one recorded scenario."""

    label: Verdict  # FAULT or LOAD_INCREASE
    delta_theta: np.ndarray  # (2, 4*order), unit Frobenius norm
    source_scenario: str = ""


@dataclass
class SignatureLibrary:
    order: int
    signatures: list = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "version": LIBRARY_FORMAT_VERSION,
            "order": self.order,
            "signatures": [
                {
                    "label": sig.label.value,
                    "delta_theta": sig.delta_theta.flatten().tolist(),
                    "shape": list(sig.delta_theta.shape),
                    "source_scenario": sig.source_scenario,
                }
                for sig in self.signatures
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SignatureLibrary":
        doc = json.loads(text)
        lib = cls(order=doc["order"])
        for entry in doc["signatures"]:
            delta = np.array(entry["delta_theta"]).reshape(entry["shape"])
            lib.signatures.append(
                Signature(
                    label=Verdict(entry["label"]),
                    delta_theta=delta,
                    source_scenario=entry.get("source_scenario", ""),
                )
            )
        return lib


@dataclass(frozen=True)
class DetectionEvent:
    verdict: Verdict
    d: float
    t: float
    matched_label: Verdict | None = None
    matched_similarity: float | None = None


def calibrate_nominal(theta_stream, window: int) -> NominalPredictor:
    """Elementwise mean of the last `window` (t, theta) snapshots."""
    snapshots = list(theta_stream)
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if len(snapshots) < window:
        raise InsufficientDataError(
            f"need {window} snapshots, have {len(snapshots)}"
        )
    tail = snapshots[-window:]
    theta_star = np.mean([np.asarray(th, float) for _, th in tail], axis=0)
    return NominalPredictor(
        theta_star=theta_star,
        calibration_window=window,
        calibrated_at=float(tail[-1][0]),
    )


def frobenius_distance(theta, theta_star) -> float:
    theta = np.asarray(theta, float)
    theta_star = np.asarray(theta_star, float)
    if theta.shape != theta_star.shape:
        raise ValueError(
            f"shape mismatch: {theta.shape} vs {theta_star.shape}"
        )
    return float(np.linalg.norm(theta - theta_star))


def calibrate_thresholds(
    d_values,
    high_factor: float = DEFAULT_HIGH_FACTOR,
    low_factor: float = DEFAULT_LOW_FACTOR,
) -> Thresholds:
    """Scale the worst fault-free distance into trip thresholds."""
    d_values = np.asarray(list(d_values), float)
    if d_values.size == 0:
        raise InsufficientDataError("no distance samples to calibrate from")
    d_max = float(np.max(d_values))
    if d_max <= 0:
        raise InsufficientDataError("fault-free distances are all zero")
    return Thresholds(d_high=high_factor * d_max, d_low=low_factor * d_max)


def match_signature(delta_theta, library: SignatureLibrary,
                    match_floor: float = DEFAULT_MATCH_FLOOR):
    """Best cosine match of the flattened deviation against the library.

    Cosine similarity is scale-free, so one recorded signature covers a
    range of disturbance severities. Returns (label, similarity); the label
    is None when the best similarity is below `match_floor`.
    """
    if not library.signatures:
        raise EmptyLibraryError("signature library is empty")
    v = np.asarray(delta_theta, float).flatten()
    norm_v = np.linalg.norm(v)
    best_label, best_sim = None, -np.inf
    for sig in library.signatures:
        w = sig.delta_theta.flatten()
        denom = norm_v * np.linalg.norm(w)
        sim = float(v @ w / denom) if denom > 0 else 0.0
        if sim > best_sim:
            best_label, best_sim = sig.label, sim
    if best_sim < match_floor:
        return None, best_sim
    return best_label, best_sim


def classify(
    theta,
    nominal: NominalPredictor,
    thresholds: Thresholds,
    library: SignatureLibrary,
    t: float = 0.0,
    match_floor: float = DEFAULT_MATCH_FLOOR,
) -> DetectionEvent:
    """Two-criterion decision on one predictor snapshot.

    d > d_high trips the fault verdict without consulting the library.
    d_low < d <= d_high consults the signature library; an empty or
    non-matching library yields the unclassified verdict. Otherwise normal.
    """
    if nominal is None:
        raise ValueError("nominal predictor is not calibrated")
    d = frobenius_distance(theta, nominal.theta_star)
    if d > thresholds.d_high:
        return DetectionEvent(verdict=Verdict.FAULT, d=d, t=t)
    if d > thresholds.d_low:
        delta = np.asarray(theta, float) - nominal.theta_star
        if not library.signatures:
            return DetectionEvent(verdict=Verdict.UNCLASSIFIED, d=d, t=t)
        label, sim = match_signature(delta, library, match_floor)
        if label is Verdict.FAULT:
            verdict = Verdict.FAULT
        elif label is Verdict.LOAD_INCREASE:
            verdict = Verdict.LOAD_INCREASE
        else:
            verdict = Verdict.UNCLASSIFIED
        return DetectionEvent(
            verdict=verdict, d=d, t=t, matched_label=label, matched_similarity=sim
        )
    return DetectionEvent(verdict=Verdict.NORMAL, d=d, t=t)


def classify_series(thetas, nominal: NominalPredictor, thresholds: Thresholds,
                    library: SignatureLibrary,
                    match_floor: float = DEFAULT_MATCH_FLOOR):
    """Vectorized `classify` over a trajectory of predictor snapshots.

    Returns (d array, verdict list, similarity array) with per-snapshot
    semantics identical to `classify`; similarity is NaN outside the
    criterion-2 band.
    """
    thetas = np.asarray(thetas, float)
    deltas = thetas - nominal.theta_star
    d = np.linalg.norm(deltas, axis=(1, 2))
    m = thetas.shape[0]
    verdicts = [Verdict.NORMAL] * m
    similarity = np.full(m, np.nan)

    in_band = (d > thresholds.d_low) & (d <= thresholds.d_high)
    above = d > thresholds.d_high
    for k in np.nonzero(above)[0]:
        verdicts[k] = Verdict.FAULT

    band_idx = np.nonzero(in_band)[0]
    if band_idx.size:
        if not library.signatures:
            for k in band_idx:
                verdicts[k] = Verdict.UNCLASSIFIED
        else:
            flat = deltas[band_idx].reshape(band_idx.size, -1)
            sig_mat = np.stack(
                [s.delta_theta.flatten() for s in library.signatures]
            )
            sig_norm = np.linalg.norm(sig_mat, axis=1)
            v_norm = np.linalg.norm(flat, axis=1)
            denom = np.outer(v_norm, sig_norm)
            sims = np.divide(flat @ sig_mat.T, denom,
                             out=np.zeros((band_idx.size, len(sig_norm))),
                             where=denom > 0)
            best = np.argmax(sims, axis=1)
            best_sim = sims[np.arange(band_idx.size), best]
            similarity[band_idx] = best_sim
            for row, k in enumerate(band_idx):
                if best_sim[row] < match_floor:
                    verdicts[k] = Verdict.UNCLASSIFIED
                else:
                    label = library.signatures[best[row]].label
                    verdicts[k] = (
                        Verdict.FAULT if label is Verdict.FAULT
                        else Verdict.LOAD_INCREASE
                    )
    return d, verdicts, similarity


def detection_times(t, d, t_start: float, t_end: float,
                    thresholds: Thresholds, trip: str = "high"):
    """Detection and recovery delays from a distance time series.

    dt1: first time after t_start at which d crosses the trip threshold
    (d_high for low-impedance runs, d_low for high-impedance runs), minus
    t_start. dt2: first time after t_end at which d falls back to d_low or
    below, minus t_end. Either is None when no crossing occurs.
    """
    t = np.asarray(t, float)
    d = np.asarray(d, float)
    if trip == "high":
        level = thresholds.d_high
    elif trip == "low":
        level = thresholds.d_low
    else:
        raise ValueError(f"trip must be 'high' or 'low', got {trip!r}")

    after_start = (t >= t_start) & (d > level)
    dt1 = float(t[after_start][0] - t_start) if np.any(after_start) else None
    after_end = (t >= t_end) & (d <= thresholds.d_low)
    dt2 = float(t[after_end][0] - t_end) if np.any(after_end) else None
    return dt1, dt2


def debounce(verdicts, hold: int = DEFAULT_HOLD):
    """Suppress single-sample verdict chatter.

    The reported verdict changes only after the raw verdict has held its new
    value for `hold` consecutive samples.
    """
    if hold < 1:
        raise ValueError(f"hold must be >= 1, got {hold}")
    out = []
    current = None
    candidate, streak = None, 0
    for v in verdicts:
        if current is None:
            current = v
        if v == current:
            candidate, streak = None, 0
        elif v == candidate:
            streak += 1
            if streak >= hold:
                current = v
                candidate, streak = None, 0
        else:
            candidate, streak = v, 1
            if hold == 1:
                current = v
                candidate, streak = None, 0
        out.append(current)
    return out


def build_library(scenario_runs, nominal: NominalPredictor,
                  thresholds: Thresholds, order: int) -> SignatureLibrary:
    """Record one unit-norm deviation signature per offline scenario run.

    Each run is (label, t array, theta trajectory, t_start, t_end). The
    signature averages theta over the second half of the disturbance window
    (the settled segment, past the estimator transient). Runs whose distance
    never exceeds d_low inside the window are rejected: their deviation
    would be noise, not signal.
    """
    lib = SignatureLibrary(order=order)
    for label, t, thetas, t_start, t_end, source in scenario_runs:
        t = np.asarray(t, float)
        thetas = np.asarray(thetas, float)
        in_window = (t >= t_start) & (t < t_end)
        if not np.any(in_window):
            raise InsufficientDataError(
                f"run {source!r}: no snapshots inside the disturbance window"
            )
        d_window = np.linalg.norm(
            thetas[in_window] - nominal.theta_star, axis=(1, 2)
        )
        if float(np.max(d_window)) <= thresholds.d_low:
            raise InsufficientDataError(
                f"run {source!r}: distance never exceeded d_low inside the "
                "disturbance window; signature would be noise"
            )
        settled = (t >= (t_start + t_end) / 2.0) & (t < t_end)
        delta = np.mean(thetas[settled], axis=0) - nominal.theta_star
        norm = np.linalg.norm(delta)
        if norm <= 0:
            raise InsufficientDataError(f"run {source!r}: zero deviation")
        lib.signatures.append(
            Signature(
                label=Verdict(label) if not isinstance(label, Verdict) else label,
                delta_theta=delta / norm,
                source_scenario=str(source),
            )
        )
    return lib
