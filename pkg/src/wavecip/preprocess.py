"""Measurement pre-processing: signal corrections, scatter extraction,
time-reversal transport, calibration and target classification.

The correction steps are sklearn-style transformers over TraceCube objects so
they compose in a Pipeline; each is also usable as a plain function call via
``fit_transform``. The synthetic corruption model lives here too, so every
correction can be exercised against known injected defects.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks
from sklearn.base import BaseEstimator, TransformerMixin

from .timereversal import time_reverse_propagate
from .validation import ValidationError, check_trace_cube

log = logging.getLogger(__name__)

# Philox sub-stream ids so toggling one corruption never shifts another's draw
STREAM_NOISE = 1
STREAM_SHIFT = 2
STREAM_JITTER = 3


@dataclass(frozen=True)
class ScatterGeometry:
    """Arrival-time bookkeeping the extraction step needs.

    ``direct_arrival`` is when the incident wave crosses the measurement
    plane; everything before ``exclusion_end`` (direct signal, any known
    structure echoes, and times earlier than an echo from the nearest
    possible target) is discarded before peak hunting, and so is everything
    after ``latest_arrival`` (an echo from the deepest possible target).
    ``pulse_period`` is the duration of one excitation period.
    """

    direct_arrival: float
    exclusion_end: float
    pulse_period: float
    measurement_plane_z: float
    speed: float = 1.0
    latest_arrival: float = None

    def to_dict(self):
        return {
            "direct_arrival": self.direct_arrival,
            "exclusion_end": self.exclusion_end,
            "pulse_period": self.pulse_period,
            "measurement_plane_z": self.measurement_plane_z,
            "speed": self.speed,
            "latest_arrival": self.latest_arrival,
        }

    @staticmethod
    def from_dict(d):
        return ScatterGeometry(**d)


# ---------------------------------------------------------------------------
# synthetic corruption model (stand-in for hardware effects)


@dataclass(frozen=True)
class CorruptionModel:
    """Injected defects: each member is toggleable by setting it to zero."""

    noise_sigma: float = 0.05          # fraction of the cube's max amplitude
    time_shift_max: int = 20           # per-detector shift, samples
    dc_offset: float = 0.0             # absolute offset added to every sample
    amplitude_jitter: float = 0.0      # per-detector multiplicative, fraction
    structure_echo: float = 0.0        # amplitude factor of a fake room echo
    structure_echo_delay: float = 0.3  # echo delay after the direct arrival


@dataclass
class CorruptionRecord:
    """Ground-truth metadata of what was injected (used by round-trip tests)."""

    shifts: np.ndarray = None
    offset: float = 0.0
    jitter: np.ndarray = None
    noise_sigma_abs: float = 0.0


def _stream_rng(seed, stream):
    return np.random.Generator(np.random.Philox(key=np.uint64(seed) + (np.uint64(stream) << 32)))


def apply_corruption(cube, model, seed, direct_arrival=None, noise_reference=None):
    """Corrupt a clean cube; returns (corrupted cube, injected-defect record).

    ``noise_reference`` sets the amplitude the noise percentage refers to.
    The generator passes the RMS of the scattered signal over the record, so
    that x% noise means ||noise|| = x% of ||data|| in L2 (the usual
    convention for noisy inverse-problem data); standalone callers fall back
    to the cube maximum.
    """
    traces = cube.traces.copy()
    nx, ny, _ = traces.shape
    record = CorruptionRecord()
    peak = float(np.max(np.abs(traces)))
    if noise_reference is None or noise_reference <= 0:
        noise_reference = peak

    if model.structure_echo and direct_arrival is not None:
        delay = int(round(model.structure_echo_delay / cube.dt))
        echo = np.zeros_like(traces)
        echo[:, :, delay:] = model.structure_echo * traces[:, :, :-delay]
        # only echo the early (direct) part of the record
        cutoff = int(round((direct_arrival + model.structure_echo_delay * 1.5) / cube.dt))
        echo[:, :, min(cutoff, traces.shape[2]):] = 0.0
        traces += echo

    if model.amplitude_jitter:
        rng = _stream_rng(seed, STREAM_JITTER)
        record.jitter = 1.0 + model.amplitude_jitter * rng.uniform(-1, 1, size=(nx, ny))
        traces *= record.jitter[:, :, None]

    if model.time_shift_max:
        rng = _stream_rng(seed, STREAM_SHIFT)
        record.shifts = rng.integers(-model.time_shift_max, model.time_shift_max + 1,
                                     size=(nx, ny))
        shifted = np.zeros_like(traces)
        for i in range(nx):
            for j in range(ny):
                k = int(record.shifts[i, j])
                if k > 0:
                    shifted[i, j, k:] = traces[i, j, :-k]
                elif k < 0:
                    shifted[i, j, :k] = traces[i, j, -k:]
                else:
                    shifted[i, j] = traces[i, j]
        traces = shifted

    if model.dc_offset:
        record.offset = model.dc_offset
        traces += model.dc_offset

    if model.noise_sigma:
        rng = _stream_rng(seed, STREAM_NOISE)
        record.noise_sigma_abs = model.noise_sigma * noise_reference
        traces += record.noise_sigma_abs * rng.standard_normal(traces.shape)

    return cube.with_traces(traces), record


# ---------------------------------------------------------------------------
# steps 1-3: signal corrections


class OffsetCorrection(BaseEstimator, TransformerMixin):
    """Remove the temporal mean of every trace."""

    def fit(self, cube, y=None):
        return self

    def transform(self, cube):
        check_trace_cube(cube)
        means = cube.traces.mean(axis=2, keepdims=True)
        return cube.with_traces(cube.traces - means)


class TimeZeroCorrection(BaseEstimator, TransformerMixin):
    """Align every trace to a direct-signal template by integer-sample shifts.

    Detectors whose normalized correlation against the template stays below
    ``min_correlation`` are flagged unusable and zeroed. The per-detector lags
    of the last transform are kept in ``lags_`` and flags in ``flagged_``.
    """

    def __init__(self, template=None, window=None, max_shift=30, min_correlation=0.5):
        self.template = template
        self.window = window
        self.max_shift = max_shift
        self.min_correlation = min_correlation

    def fit(self, cube, y=None):
        if self.template is None:
            raise ValidationError("TimeZeroCorrection requires a direct-signal template")
        return self

    def _window_slice(self, cube):
        if self.window is None:
            return slice(0, cube.n_samples)
        lo = max(0, int(round(self.window[0] / cube.dt)) - self.max_shift)
        hi = min(cube.n_samples, int(round(self.window[1] / cube.dt)) + self.max_shift)
        return slice(lo, hi)

    def transform(self, cube):
        self.fit(cube)
        check_trace_cube(cube)
        sl = self._window_slice(cube)
        nx, ny, _ = cube.traces.shape
        out = np.zeros_like(cube.traces)
        self.lags_ = np.zeros((nx, ny), dtype=int)
        self.flagged_ = np.zeros((nx, ny), dtype=bool)
        for i in range(nx):
            for j in range(ny):
                ref = self.template.traces[i, j, sl]
                sig = cube.traces[i, j, sl]
                lag, score = _best_lag(sig, ref, self.max_shift)
                if score < self.min_correlation:
                    self.flagged_[i, j] = True
                    continue
                self.lags_[i, j] = lag
                out[i, j] = _shift_trace(cube.traces[i, j], -lag)
        if self.flagged_.any():
            log.warning("time-zero correction flagged %d detectors unusable",
                        int(self.flagged_.sum()))
        return cube.with_traces(out)


def _best_lag(signal, reference, max_shift):
    """Lag maximizing the normalized cross-correlation, limited to +-max_shift."""
    n = min(signal.size, reference.size)
    best = (0, -np.inf)
    ref_norm = np.linalg.norm(reference)
    if ref_norm == 0:
        return 0, 0.0
    for lag in range(-max_shift, max_shift + 1):
        shifted = _shift_trace(signal, -lag)[:n]
        denom = ref_norm * np.linalg.norm(shifted)
        score = float(np.dot(shifted, reference[:n]) / denom) if denom > 0 else 0.0
        if score > best[1]:
            best = (lag, score)
    return best


def _shift_trace(trace, k):
    out = np.zeros_like(trace)
    if k > 0:
        out[k:] = trace[:-k]
    elif k < 0:
        out[:k] = trace[-k:]
    else:
        out[:] = trace
    return out


class SourceShift(BaseEstimator, TransformerMixin):
    """Delay all traces by a travel distance, emulating a source moved away.

    The shift is rounded to whole samples and the remainder logged; with
    ``max_remainder`` set, larger rounding residues raise instead.
    """

    def __init__(self, distance=0.0, speed=1.0, max_remainder=None):
        self.distance = distance
        self.speed = speed
        self.max_remainder = max_remainder

    def fit(self, cube, y=None):
        return self

    def samples_for(self, dt):
        exact = self.distance / (self.speed * dt)
        n = int(round(exact))
        remainder = exact - n
        if self.max_remainder is not None and abs(remainder) > self.max_remainder:
            raise ValidationError(
                f"shift of {exact:.3f} samples is not representable within "
                f"{self.max_remainder} samples"
            )
        if abs(remainder) > 1e-9:
            log.info("source shift %.4f rounded to %d samples (remainder %+.3f)",
                     self.distance, n, remainder)
        return n

    def transform(self, cube):
        check_trace_cube(cube)
        n = self.samples_for(cube.dt)
        if n == 0:
            return cube
        out = np.zeros_like(cube.traces)
        if n > 0:
            out[:, :, n:] = cube.traces[:, :, :-n]
        else:
            out[:, :, :n] = cube.traces[:, :, -n:]
        return cube.with_traces(out)


# ---------------------------------------------------------------------------
# step 4: extraction of the target-scattered signals


@dataclass
class ScatterSignature:
    """Per-detector outcome of the extraction step."""

    detected: bool
    window: tuple = (0.0, 0.0)
    n_negative: int = 0
    n_positive: int = 0
    peak_amplitude: float = 0.0
    peak_time: float = 0.0
    distance: float = float("nan")

    def to_dict(self):
        return {
            "detected": self.detected, "window": list(self.window),
            "n_negative": self.n_negative, "n_positive": self.n_positive,
            "peak_amplitude": self.peak_amplitude, "peak_time": self.peak_time,
            "distance": self.distance,
        }


class ScatterExtraction(BaseEstimator, TransformerMixin):
    """Keep only the target-scattered wave train of each trace.

    After discarding everything before the geometry's exclusion time, the
    strongest negative peak is located and a window of up to ``n_peaks`` peaks
    (4 negative + 3 positive) is kept, anchored at the first negative peak
    before the strongest one if that peak is weaker than ``anchor_ratio``
    times the strongest, else at the second one before. Signatures of the
    last transform are stored in ``signatures_``.
    """

    def __init__(self, geometry=None, prominence=0.05, n_peaks=7,
                 anchor_ratio=0.8, onset_level=0.05, snr_floor=5.0):
        self.geometry = geometry
        self.prominence = prominence
        self.n_peaks = n_peaks
        self.anchor_ratio = anchor_ratio
        self.onset_level = onset_level
        self.snr_floor = snr_floor

    def fit(self, cube, y=None):
        if self.geometry is None:
            raise ValidationError("ScatterExtraction requires a ScatterGeometry")
        return self

    def transform(self, cube):
        self.fit(cube)
        check_trace_cube(cube)
        nx, ny, nt = cube.traces.shape
        out = np.zeros_like(cube.traces)
        self.signatures_ = np.empty((nx, ny), dtype=object)
        # windows close with a half-cosine taper: a hard cut mid-oscillation
        # would radiate a spurious broadband front when the data are re-emitted
        # by the time-reversal solve
        n_taper = max(2, int(round(self.geometry.pulse_period / 4.0 / cube.dt)))
        ramp = 0.5 * (1.0 + np.cos(np.linspace(0.0, np.pi, n_taper)))
        for i in range(nx):
            for j in range(ny):
                window, sig = self._extract_one(cube.traces[i, j], cube.dt)
                self.signatures_[i, j] = sig
                if sig.detected:
                    lo, hi = window
                    out[i, j, lo:hi] = cube.traces[i, j, lo:hi]
                    k = min(n_taper, hi - lo)
                    out[i, j, hi - k:hi] *= ramp[-k:]
        return cube.with_traces(out)

    def _extract_one(self, trace, dt):
        g = self.geometry
        i_excl = min(trace.size, max(0, int(np.ceil(g.exclusion_end / dt))))
        i_late = trace.size
        if g.latest_arrival is not None:
            i_late = min(trace.size, max(i_excl, int(np.floor(g.latest_arrival / dt))))
        # noise level from the pre-direct segment (nothing but noise arrives there)
        n_noise = int(0.8 * g.direct_arrival / dt)
        sigma = float(np.std(trace[:n_noise])) if n_noise >= 20 else 0.0
        corridor = trace[i_excl:i_late]
        if corridor.size == 0 or not np.any(corridor):
            return (0, 0), ScatterSignature(detected=False)
        prom = max(self.prominence * float(np.max(np.abs(corridor))), 3.0 * sigma)
        # peaks are hunted on the untouched trace and filtered to the corridor,
        # so the exclusion cut cannot fabricate edge extrema
        neg_idx, _ = find_peaks(-trace, prominence=prom)
        pos_idx, _ = find_peaks(trace, prominence=prom)
        neg_idx = neg_idx[(neg_idx >= i_excl) & (neg_idx < i_late)]
        pos_idx = pos_idx[(pos_idx >= i_excl) & (pos_idx < i_late)]
        if neg_idx.size == 0:
            return (0, 0), ScatterSignature(detected=False)

        strongest_pos = neg_idx[np.argmin(trace[neg_idx])]
        strongest_amp = -float(trace[strongest_pos])
        if strongest_amp < self.snr_floor * sigma:
            return (0, 0), ScatterSignature(detected=False)
        priors = neg_idx[neg_idx < strongest_pos]
        anchor = strongest_pos
        if priors.size >= 1:
            first_prior = priors[-1]
            if -trace[first_prior] < self.anchor_ratio * strongest_amp:
                anchor = first_prior
            elif priors.size >= 2:
                anchor = priors[-2]
            else:
                anchor = first_prior

        all_peaks = np.sort(np.concatenate([neg_idx, pos_idx]))
        train = all_peaks[all_peaks >= anchor]
        kept = []
        n_neg = n_pos = 0
        for p in train:
            if p in neg_idx:
                if n_neg >= 4:
                    continue
                n_neg += 1
            else:
                if n_pos >= 3:
                    continue
                n_pos += 1
            kept.append(p)
            if n_neg >= 4 and n_pos >= 3:
                break
        kept = np.array(kept)

        # lobe onset: the peak of a half-period lobe sits a quarter period
        # after the wave train begins
        quarter = max(1, int(round(g.pulse_period / 4.0 / dt)))
        lo = max(i_excl, anchor - quarter)
        hi = min(trace.size, int(kept.max()) + quarter + 1)
        t_onset = lo * dt
        distance = (t_onset - g.direct_arrival) * g.speed / 2.0
        sig = ScatterSignature(
            detected=True, window=(lo * dt, hi * dt),
            n_negative=n_neg, n_positive=n_pos,
            peak_amplitude=strongest_amp, peak_time=strongest_pos * dt,
            distance=distance,
        )
        return (lo, hi), sig

    def front_distance(self, top_fraction=0.1):
        """Robust target distance: median over the strongest-decile detectors."""
        sigs = [s for s in self.signatures_.ravel() if s is not None and s.detected]
        if not sigs:
            return float("nan")
        amps = np.array([s.peak_amplitude for s in sigs])
        cut = np.quantile(amps, 1.0 - top_fraction)
        best = [s.distance for s in sigs if s.peak_amplitude >= cut]
        return float(np.median(best))


# ---------------------------------------------------------------------------
# step 5: data propagation


class TimeReversalPropagation(BaseEstimator, TransformerMixin):
    """Transport traces from the measurement plane to the propagation plane."""

    def __init__(self, bottom_z=-0.1, output_plane_z=0.04, z_spacing=None,
                 stability_report=False):
        self.bottom_z = bottom_z
        self.output_plane_z = output_plane_z
        self.z_spacing = z_spacing
        self.stability_report = stability_report

    def fit(self, cube, y=None):
        return self

    def transform(self, cube):
        out, info = time_reverse_propagate(
            cube, self.bottom_z, self.output_plane_z, z_spacing=self.z_spacing,
            stability_report=self.stability_report,
        )
        self.info_ = info
        return out


# ---------------------------------------------------------------------------
# step 6: calibration


@dataclass
class CalibrationRecord:
    """Per-pseudo-frequency factors rescaling measured data to simulation units."""

    s_values: np.ndarray
    factors: np.ndarray
    d_sim: np.ndarray
    d_exp: np.ndarray
    calibrator_id: str = ""
    target_class: str = "dielectric"

    def factor_at(self, s):
        idx = np.where(np.isclose(self.s_values, s, rtol=0, atol=1e-10))[0]
        if idx.size != 1:
            raise ValidationError(f"no calibration factor stored for s = {s}")
        return float(self.factors[idx[0]])

    def to_dict(self):
        return {
            "s_values": [float(v) for v in self.s_values],
            "factors": [float(v) for v in self.factors],
            "d_sim": [float(v) for v in self.d_sim],
            "d_exp": [float(v) for v in self.d_exp],
            "calibrator_id": self.calibrator_id,
            "target_class": self.target_class,
        }

    @staticmethod
    def from_dict(d):
        return CalibrationRecord(
            s_values=np.asarray(d["s_values"]), factors=np.asarray(d["factors"]),
            d_sim=np.asarray(d["d_sim"]), d_exp=np.asarray(d["d_exp"]),
            calibrator_id=d.get("calibrator_id", ""),
            target_class=d.get("target_class", "dielectric"),
        )


def calibration_factor(sim_scatter, exp_scatter, s):
    """Factor d_sim,s / d_exp,s from the plane minima of two scattered transforms."""
    d_sim = float(np.min(sim_scatter.at(s)))
    d_exp = float(np.min(exp_scatter.at(s)))
    if d_sim >= 0 or d_exp >= 0:
        raise ValidationError(
            f"scattered transforms must have negative minima (d_sim={d_sim:.3e}, "
            f"d_exp={d_exp:.3e}); extraction or propagation failed"
        )
    return d_sim / d_exp


def build_calibration(sim_scatter, exp_scatter, calibrator_id="", target_class="dielectric"):
    """CalibrationRecord over every s sample shared by the two series."""
    if not np.allclose(sim_scatter.s_values, exp_scatter.s_values):
        raise ValidationError("calibration inputs must share their s samples")
    s_values = sim_scatter.s_values
    d_sim = sim_scatter.values.min(axis=(0, 1))
    d_exp = exp_scatter.values.min(axis=(0, 1))
    if np.any(d_sim >= 0) or np.any(d_exp >= 0):
        raise ValidationError("scattered transforms must be negative at their minima")
    return CalibrationRecord(
        s_values=s_values.copy(), factors=d_sim / d_exp, d_sim=d_sim, d_exp=d_exp,
        calibrator_id=calibrator_id, target_class=target_class,
    )


# ---------------------------------------------------------------------------
# classification and footprint estimation


def _top_decile_amplitude(signatures):
    amps = np.array([
        s.peak_amplitude for s in np.asarray(signatures, dtype=object).ravel()
        if s is not None and s.detected
    ])
    if amps.size == 0:
        return 0.0
    cut = np.quantile(amps, 0.9)
    return float(np.mean(amps[amps >= cut]))


def classify_target(signatures, reference_signatures, threshold=2.0, low_band=1.5):
    """Label a measurement metallic when its strongest amplitudes are at least
    ``threshold`` times the dielectric reference's; returns (label, confident).
    """
    target_amp = _top_decile_amplitude(signatures)
    ref_amp = _top_decile_amplitude(reference_signatures)
    if ref_amp == 0.0 or target_amp == 0.0:
        log.warning("classification fell back to dielectric on degenerate input")
        return "dielectric", False
    ratio = target_amp / ref_amp
    if ratio >= threshold:
        return "metallic", True
    if ratio >= low_band:
        log.warning("amplitude ratio %.2f in the ambiguous band [%g, %g); "
                    "defaulting to dielectric", ratio, low_band, threshold)
        return "dielectric", False
    return "dielectric", True


@dataclass
class GammaT:
    """Estimated xy projection of the target from the propagated tail."""

    mask: np.ndarray
    xy_grid: object
    area: float
    box: tuple = None  # (x_min, x_max, y_min, y_max)

    @property
    def empty(self):
        return self.box is None

    def points(self):
        xs, ys = self.xy_grid.meshgrid()
        return np.column_stack([xs[self.mask], ys[self.mask]])

    def extended_box(self, margin=0.03):
        if self.empty:
            raise ValidationError("cannot extend an empty footprint")
        x0, x1, y0, y1 = self.box
        return (x0 - margin, x1 + margin, y0 - margin, y1 + margin)


def estimate_xy_projection(v_signature, xy_grid, threshold=0.85, min_component=2):
    """Threshold the (incident-subtracted) propagated tail at 0.85 of its minimum.

    Connected components smaller than ``min_component`` cells are treated as
    noise speckle and dropped from the footprint.
    """
    from scipy.ndimage import label, median_filter

    v = np.asarray(v_signature, dtype=float)
    # a median-filtered reference keeps single-cell outliers from setting the scale
    v_min = float(median_filter(v, size=3).min())
    if v_min >= 0.0:
        log.warning("propagated tail has no negative minimum; empty footprint")
        return GammaT(mask=np.zeros_like(v, dtype=bool), xy_grid=xy_grid, area=0.0)
    mask = v < threshold * v_min
    labels, n_components = label(mask)
    if n_components >= 1:
        sizes = np.bincount(labels.ravel())
        keep = np.flatnonzero(sizes >= min_component)
        keep = keep[keep != 0]
        mask = np.isin(labels, keep)
    if not mask.any():
        log.warning("footprint reduced to speckle; returning empty estimate")
        return GammaT(mask=mask, xy_grid=xy_grid, area=0.0)
    area = float(np.count_nonzero(mask)) * xy_grid.cell_area()
    xs, ys = xy_grid.meshgrid()
    box = (
        float(xs[mask].min()), float(xs[mask].max()),
        float(ys[mask].min()), float(ys[mask].max()),
    )
    return GammaT(mask=mask, xy_grid=xy_grid, area=area, box=box)
