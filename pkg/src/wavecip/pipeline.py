"""Run orchestration: scenario synthesis, pre-processing, inversion, artifacts.

A run directory holds one manifest plus per-stage subdirectories; every stage
reads only files written by its predecessor, so stages can be re-run in
isolation and `full` is exactly the three stages chained.
"""

import hashlib
import json
import logging
import time as _time
from copy import deepcopy
from pathlib import Path

import numpy as np
import yaml

from . import fileio
from .forward import ForwardConfig, run_forward, run_forward_homogeneous
from .grids import Grid2, bilinear_resample_xy, grid_from_bounds
from .inversion import (
    GlobalReconstruction,
    InversionConfig,
    InversionInput,
    _forward_config,
)
from .preprocess import (
    CorruptionModel,
    OffsetCorrection,
    ScatterExtraction,
    ScatterGeometry,
    SourceShift,
    TimeReversalPropagation,
    TimeZeroCorrection,
    apply_corruption,
    build_calibration,
    classify_target,
    estimate_xy_projection,
)
from .scenes import STOCK_SCENES, TargetScene, generate_scene
from .spectral import PseudoFreqGrid, PseudoFreqSeries, clamp_positive, laplace_transform_cube
from .validation import ValidationError

log = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "seed": 20140901,
    "scene": "dielectric-cube",
    "scene_params": {},
    # The measurement world mimics the experiment: a much shorter pulse than
    # the inversion model uses (the per-s calibration bridges the two), a fine
    # grid carrying it, and a detector pitch of 0.02.
    "acquisition": {
        "lateral_halfwidth": 0.56,
        "detector_halfwidth": 0.5,
        "spacing": 0.01,
        "detector_spacing": 0.02,
        "source_plane_z": 0.9,
        "measurement_plane_z": 0.8,
        "bottom_z": -0.36,
        "final_time": 2.4,
        "dt": 0.0015,
        "record_stride": 2,
        "omega": 63.0,
    },
    "corruption": {
        "noise_sigma": 0.05,
        "time_shift_max": 20,
        "dc_offset": 0.0,
        "amplitude_jitter": 0.0,
        "structure_echo": 0.0,
        "structure_echo_delay": 0.3,
    },
    "preprocess": {
        "exclusion_margin": 0.05,
        "prominence": 0.05,
        "anchor_ratio": 0.8,
        "max_shift": 30,
        "min_correlation": 0.5,
        "source_shift_distance": 0.0,
        "propagation_bottom_z": -0.1,
        "causality_margin": 0.0,
        "floor_level": 0.05,
        "stability_report": False,
    },
    "inversion": {
        "omega_box": [[-0.5, -0.5, -0.1], [0.5, 0.5, 0.04]],
        "sim_box": [[-0.56, -0.56, -0.16], [0.56, 0.56, 0.1]],
        "spacing": 0.02,
        "s_min": 8.0,
        "s_max": 10.0,
        "s_step": 0.05,
        "carleman_lambda": 20.0,
        "eta": 1.0e-6,
        "max_inner": None,
        "contrast_bound": None,
        "omega": 30.0,
        "final_time": 1.2,
        "dt": 0.0015,
        "delta_fraction": 0.25,
        "gamma_t_threshold": 0.85,
        "depth_truncation": 0.9,
        "no_target_level": 1.05,
        "test2_margin": 0.03,
        "boundary_shell": 1,
        "mode": "test1",
    },
    "calibrators": {
        "dielectric": "wood-calibrator",
        "metallic": "metal-calibrator",
    },
}

# Philox stream bases per data role, so each cube gets independent corruption
ROLE_STREAM = {"target": 0, "calibrator-dielectric": 16, "calibrator-metallic": 32}


def _deep_merge(base, override):
    out = deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=None):
    """Default configuration, deep-merged with a YAML file and overrides."""
    cfg = deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as f:
            user = yaml.safe_load(f) or {}
        cfg = _deep_merge(cfg, user)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    return cfg


def config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def resolve_scene(cfg):
    scene = cfg["scene"]
    if isinstance(scene, dict):
        return TargetScene.from_dict(scene)
    if scene in STOCK_SCENES:
        return STOCK_SCENES[scene](**cfg.get("scene_params", {}))
    raise ValidationError(f"unknown scene {scene!r}; stock scenes: {sorted(STOCK_SCENES)}")


def resolve_calibrator(cfg, target_class):
    name = cfg["calibrators"][target_class]
    if name in STOCK_SCENES:
        return STOCK_SCENES[name]()
    raise ValidationError(f"unknown calibrator scene {name!r}")


class RunManifest:
    """Stage-by-stage record of one run; identical manifests imply identical outputs."""

    def __init__(self, outdir, cfg):
        self.path = Path(outdir) / "manifest.json"
        if self.path.exists():
            with open(self.path) as f:
                self.data = json.load(f)
        else:
            self.data = {
                "config_hash": config_hash(cfg),
                "seed": cfg["seed"],
                "config": cfg,
                "stages": {},
                "status": "running",
            }

    def record_stage(self, name, params, outputs, wall_time, status="ok"):
        self.data["stages"][name] = {
            "params": params,
            "outputs": sorted(str(p) for p in outputs),
            "wall_time_s": wall_time,
            "status": status,
        }
        self.flush()

    def mark_failure(self, stage, message):
        self.data["status"] = f"failed at {stage}: {message}"
        self.flush()

    def mark_complete(self):
        self.data["status"] = "complete"
        self.flush()

    def flush(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fileio.write_json(self.data, self.path)


# ---------------------------------------------------------------------------
# geometry derived from the configuration


def acquisition_grid(cfg):
    a = cfg["acquisition"]
    h = a["spacing"]
    w = a["lateral_halfwidth"]
    return grid_from_bounds((-w, -w, a["bottom_z"]), (w, w, a["source_plane_z"]), (h, h, h))


def detector_grid(cfg):
    a = cfg["acquisition"]
    h = a.get("detector_spacing", a["spacing"])
    w = a["detector_halfwidth"]
    n = int(round(2 * w / h)) + 1
    return Grid2((-w, -w), (h, h), (n, n))


def inversion_grids(cfg):
    inv = cfg["inversion"]
    h = inv["spacing"]
    omega = grid_from_bounds(inv["omega_box"][0], inv["omega_box"][1], (h, h, h))
    sim = grid_from_bounds(inv["sim_box"][0], inv["sim_box"][1], (h, h, h))
    return omega, sim


def build_inversion_config(cfg, mode=None, target_class="dielectric"):
    inv = cfg["inversion"]
    omega_grid, sim_grid = inversion_grids(cfg)
    return InversionConfig(
        omega_grid=omega_grid,
        sim_grid=sim_grid,
        mode=mode or inv["mode"],
        pseudo_grid=PseudoFreqGrid(inv["s_min"], inv["s_max"], inv["s_step"]),
        carleman_lambda=inv["carleman_lambda"],
        eta=inv["eta"],
        max_inner=inv["max_inner"],
        contrast_bound=inv["contrast_bound"],
        omega=inv["omega"],
        final_time=inv["final_time"],
        dt=inv["dt"],
        delta_fraction=inv["delta_fraction"],
        gamma_t_threshold=inv["gamma_t_threshold"],
        depth_truncation=inv["depth_truncation"],
        no_target_level=inv["no_target_level"],
        test2_margin=inv["test2_margin"],
        boundary_shell=inv["boundary_shell"],
        target_class=target_class,
    )


def scatter_geometry(cfg):
    """Arrival-time corridor: targets live inside the inversion box, so echoes
    can only arrive within a window the geometry fixes on both sides."""
    a = cfg["acquisition"]
    c = cfg["corruption"]
    margin = cfg["preprocess"]["exclusion_margin"]
    period = 2 * np.pi / a["omega"]
    direct = a["source_plane_z"] - a["measurement_plane_z"]
    exclusion = direct + period + margin
    if c["structure_echo"]:
        exclusion += c["structure_echo_delay"] + period
    z_top, z_bottom = cfg["inversion"]["omega_box"][1][2], cfg["inversion"]["omega_box"][0][2]
    earliest = direct + 2.0 * (a["measurement_plane_z"] - z_top) - margin
    latest = direct + 2.0 * (a["measurement_plane_z"] - z_bottom) + period + margin
    return ScatterGeometry(
        direct_arrival=direct,
        exclusion_end=max(exclusion, earliest),
        pulse_period=period,
        measurement_plane_z=a["measurement_plane_z"],
        latest_arrival=latest,
    )


# ---------------------------------------------------------------------------
# simulate stage


def _measurement_run(cfg, scene):
    a = cfg["acquisition"]
    grid = acquisition_grid(cfg)
    omega_box = cfg["inversion"]["omega_box"]
    epsilon = generate_scene(scene, grid, inversion_box=omega_box)
    fwd = ForwardConfig(
        grid=grid,
        epsilon=epsilon,
        omega=a["omega"],
        final_time=a["final_time"],
        dt=a["dt"],
        record_plane_z=a["measurement_plane_z"],
        record_xy=detector_grid(cfg),
        record_stride=a["record_stride"],
    )
    return run_forward(fwd).traces, fwd


def stage_simulate(cfg, outdir):
    """Synthesize raw (corrupted) measurement data for the scene and calibrators."""
    outdir = Path(outdir)
    stage_dir = outdir / "simulate"
    stage_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(outdir, cfg)
    t0 = _time.perf_counter()
    outputs = []
    try:
        scene = resolve_scene(cfg)
        geometry = scatter_geometry(cfg)
        corruption = CorruptionModel(**cfg["corruption"])
        seed = int(cfg["seed"])

        clean, fwd_cfg = _measurement_run(cfg, scene)
        incident = run_forward_homogeneous(fwd_cfg).traces

        cubes = {"target_raw": (clean, ROLE_STREAM["target"])}
        calibrators = {"dielectric": resolve_calibrator(cfg, "dielectric")}
        if scene.label == "metallic":
            calibrators["metallic"] = resolve_calibrator(cfg, "metallic")
        for cls, cal_scene in calibrators.items():
            cal_clean, _ = _measurement_run(cfg, cal_scene)
            cubes[f"calibrator_{cls}_raw"] = (cal_clean, ROLE_STREAM[f"calibrator-{cls}"])

        for name, (cube, stream_base) in cubes.items():
            # x% noise means ||noise||_L2 = x% of ||scattered data||_L2, so the
            # per-sample sigma is that percentage of the scattered-signal RMS
            scatter_rms = float(np.sqrt(np.mean((cube.traces - incident.traces) ** 2)))
            corrupted, _ = apply_corruption(
                cube, corruption, seed + (stream_base << 8), geometry.direct_arrival,
                noise_reference=scatter_rms,
            )
            path = stage_dir / f"{name}.trcb"
            fileio.write_trace_cube(corrupted, path)
            outputs.append(path)

        incident_path = stage_dir / "incident.trcb"
        fileio.write_trace_cube(incident, incident_path)
        outputs.append(incident_path)

        omega_grid, _ = inversion_grids(cfg)
        from .grids import restrict_to_subdomain

        eps_true = generate_scene(scene, acquisition_grid(cfg))
        eps_true_omega = restrict_to_subdomain(eps_true, omega_grid)
        eps_path = stage_dir / "epsilon_true.vtk"
        fileio.write_structured_points(eps_true_omega, eps_path, name="epsilon_true")
        outputs.append(eps_path)

        meta = {
            "scene": scene.to_dict(),
            "geometry": geometry.to_dict(),
            "calibrator_classes": sorted(calibrators),
        }
        meta_path = stage_dir / "scene.json"
        fileio.write_json(meta, meta_path)
        outputs.append(meta_path)
    except Exception as exc:
        manifest.mark_failure("simulate", str(exc))
        raise
    manifest.record_stage("simulate", {"scene": cfg["scene"], "seed": cfg["seed"]},
                          outputs, _time.perf_counter() - t0)
    return stage_dir


# ---------------------------------------------------------------------------
# preprocess stage


def _correction_chain(cfg, incident, geometry):
    p = cfg["preprocess"]
    steps = [
        OffsetCorrection(),
        TimeZeroCorrection(
            template=incident,
            window=(max(0.0, geometry.direct_arrival - 0.05),
                    geometry.direct_arrival + geometry.pulse_period + 0.05),
            max_shift=p["max_shift"],
            min_correlation=p["min_correlation"],
        ),
    ]
    if p["source_shift_distance"]:
        steps.append(SourceShift(distance=p["source_shift_distance"]))
    extraction = ScatterExtraction(
        geometry=geometry, prominence=p["prominence"], anchor_ratio=p["anchor_ratio"]
    )
    steps.append(extraction)
    return steps, extraction


def _preprocess_cube(cfg, raw, incident, geometry):
    """Steps 1-5 on one raw cube; returns (propagated cube, extraction, info)."""
    steps, extraction = _correction_chain(cfg, incident, geometry)
    cube = raw
    for step in steps:
        cube = step.fit_transform(cube)
    p = cfg["preprocess"]
    propagate = TimeReversalPropagation(
        bottom_z=p["propagation_bottom_z"],
        output_plane_z=_propagation_plane(cfg),
        z_spacing=cfg["acquisition"]["spacing"],
        stability_report=p["stability_report"],
    )
    propagated = propagate.fit_transform(cube)
    # causality: no scattered signal can cross the propagation plane before the
    # incident wave reaches it, so earlier samples are reversal artifacts; they
    # would otherwise dominate the exponentially weighted transforms
    t_first = (
        geometry.direct_arrival
        + (geometry.measurement_plane_z - propagated.plane_z) / geometry.speed
        - p["causality_margin"]
    )
    traces = propagated.traces.copy()
    traces[:, :, propagated.times < t_first] = 0.0
    traces = _front_lobe_window(traces, propagated.dt, geometry.pulse_period,
                                p["floor_level"])
    propagated = propagated.with_traces(traces)
    return propagated, extraction, propagate.info_


def _front_lobe_window(traces, dt, pulse_period, floor_level):
    """Keep only the front-reflection lobe of each propagated trace.

    Every target with epsilon > 1 reflects the excitation with a negative
    leading lobe, so the strongest negative excursion marks the retarded
    arrival (the same principle the extraction step uses on the raw data).
    Time reversal without a sink also produces an earlier, sign-flipped
    converging copy of that lobe; under the exp(-s t) kernel the copy would
    dominate, so everything outside the negative lobe is discarded. Traces
    whose response stays below ``floor_level`` of the plane's strongest are
    cleared: they carry no usable arrival.
    """
    out = traces.copy()
    dips = -np.min(out, axis=2)
    global_dip = float(dips.max())
    if global_dip <= 0.0:
        return np.zeros_like(out)
    taper_n = max(2, int(round(pulse_period / 8.0 / dt)))
    ramp_in = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, taper_n)))
    nx, ny, nt = out.shape
    for i in range(nx):
        for j in range(ny):
            trace = out[i, j]
            if dips[i, j] < floor_level * global_dip:
                out[i, j] = 0.0
                continue
            peak = int(np.argmin(trace))
            lo = peak
            while lo > 0 and trace[lo - 1] < 0.0:
                lo -= 1
            hi = peak
            while hi < nt - 1 and trace[hi + 1] < 0.0:
                hi += 1
            windowed = np.zeros(nt)
            windowed[lo:hi + 1] = trace[lo:hi + 1]
            k = min(taper_n, peak - lo + 1)
            windowed[lo:lo + k] *= ramp_in[:k]
            k = min(taper_n, hi - peak + 1)
            windowed[hi - k + 1:hi + 1] *= ramp_in[:k][::-1]
            out[i, j] = windowed
    return out


def _propagation_plane(cfg):
    return cfg["inversion"]["omega_box"][1][2]


def _simulated_scatter_series(cfg, target_class, sample_values):
    """Laplace transform of the simulated calibrator's scattered wave on the
    propagation plane (the d_sim side of the calibration)."""
    cal_scene = resolve_calibrator(cfg, target_class)
    inv_cfg = build_inversion_config(cfg, target_class=target_class)
    embedding_grid = inv_cfg.sim_grid
    epsilon = generate_scene(cal_scene, embedding_grid)
    fwd = _forward_config(inv_cfg, epsilon.values)
    total = run_forward(fwd)
    homog = run_forward_homogeneous(fwd)
    w_total = total.boundary.laplace(sample_values)["z+"]
    w_inc = homog.boundary.laplace(sample_values)["z+"]
    face_grid = inv_cfg.omega_grid.face_grid("z+")
    return PseudoFreqSeries(face_grid, sample_values, w_total - w_inc,
                            plane_z=_propagation_plane(cfg)), w_inc


def _scatter_series(cfg, propagated, sample_values):
    w = laplace_transform_cube(propagated.traces, propagated.dt, sample_values,
                               warn_undecayed=False)
    return PseudoFreqSeries(propagated.xy_grid, sample_values, w,
                            plane_z=propagated.plane_z)


def stage_preprocess(cfg, outdir):
    """Steps 1-6 plus footprint estimation on the simulated raw data."""
    outdir = Path(outdir)
    sim_dir = outdir / "simulate"
    stage_dir = outdir / "preprocess"
    stage_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(outdir, cfg)
    t0 = _time.perf_counter()
    outputs = []
    try:
        meta = fileio.read_json(sim_dir / "scene.json")
        geometry = ScatterGeometry.from_dict(meta["geometry"])
        incident = fileio.read_trace_cube(sim_dir / "incident.trcb")
        target_raw = fileio.read_trace_cube(sim_dir / "target_raw.trcb")

        inv_cfg = build_inversion_config(cfg)
        sample_values = inv_cfg.sample_values()
        pseudo = inv_cfg.pseudo_grid
        s_bar = pseudo.s_max

        # steps 1-5 on the target and the dielectric calibrator
        target_prop, target_extraction, prop_info = _preprocess_cube(
            cfg, target_raw, incident, geometry
        )
        wood_raw = fileio.read_trace_cube(sim_dir / "calibrator_dielectric_raw.trcb")
        wood_prop, wood_extraction, _ = _preprocess_cube(cfg, wood_raw, incident, geometry)

        # classification against the dielectric calibrating object
        target_class, confident = classify_target(
            target_extraction.signatures_, wood_extraction.signatures_
        )
        if target_class == "metallic":
            metal_raw = fileio.read_trace_cube(sim_dir / "calibrator_metallic_raw.trcb")
            cal_prop, _, _ = _preprocess_cube(cfg, metal_raw, incident, geometry)
        else:
            cal_prop = wood_prop

        # calibration: simulated vs measured scattered transforms of the calibrator
        sim_scatter, w_incident = _simulated_scatter_series(cfg, target_class, sample_values)
        exp_scatter = _scatter_series(cfg, cal_prop, sample_values)
        exp_scatter = _resample_series(exp_scatter, sim_scatter.xy_grid)
        calibration = build_calibration(
            sim_scatter, exp_scatter,
            calibrator_id=cfg["calibrators"][target_class], target_class=target_class,
        )

        # calibrated total transform on the propagation plane
        target_scatter = _resample_series(
            _scatter_series(cfg, target_prop, sample_values), sim_scatter.xy_grid
        )
        w_prop = w_incident + target_scatter.values * calibration.factors[None, None, :]
        w_prop = clamp_positive(w_prop, where="calibrated propagated transform")

        face_grid = sim_scatter.xy_grid
        psi_columns = []
        delta = inv_cfg.delta
        from .spectral import psi_from_phi

        for s in pseudo.s_values:
            i_m = int(np.argmin(np.abs(sample_values - (s - delta))))
            i_c = int(np.argmin(np.abs(sample_values - s)))
            i_p = int(np.argmin(np.abs(sample_values - (s + delta))))
            psi_columns.append(
                psi_from_phi(w_prop[..., i_m], w_prop[..., i_c], w_prop[..., i_p],
                             float(s), delta)
            )
        psi_prop = PseudoFreqSeries(face_grid, pseudo.s_values,
                                    np.stack(psi_columns, axis=-1),
                                    plane_z=_propagation_plane(cfg))

        i_bar = int(np.argmin(np.abs(sample_values - s_bar)))
        v_prop_bar = np.log(w_prop[..., i_bar]) / s_bar**2
        v_incident_bar = np.log(clamp_positive(w_incident[..., i_bar],
                                               where="incident transform")) / s_bar**2
        v_signature = v_prop_bar - v_incident_bar

        gamma_t = estimate_xy_projection(v_signature, face_grid,
                                         inv_cfg.gamma_t_threshold)
        distance = target_extraction.front_distance()
        z_front = geometry.measurement_plane_z - distance if np.isfinite(distance) else None

        # artifacts -------------------------------------------------------
        prop_path = stage_dir / "target_propagated.trcb"
        fileio.write_trace_cube(target_prop, prop_path)
        outputs.append(prop_path)

        psi_path = stage_dir / "psi_prop.csv"
        fileio.series_to_csv(psi_prop, psi_path)
        outputs.append(psi_path)

        for name, values in (("v_prop.csv", v_prop_bar), ("v_signature.csv", v_signature)):
            path = stage_dir / name
            xs, ys = face_grid.meshgrid()
            fileio.points_to_csv(
                np.column_stack([xs.ravel(), ys.ravel(), values.ravel()]),
                path, header="x,y,value",
            )
            outputs.append(path)

        gamma_path = stage_dir / "gamma_t.csv"
        fileio.points_to_csv(gamma_t.points(), gamma_path, header="x,y")
        outputs.append(gamma_path)

        cal_path = stage_dir / "calibration.json"
        fileio.write_json(calibration.to_dict(), cal_path)
        outputs.append(cal_path)

        signatures = [
            {"detector": [int(i), int(j)],
             **target_extraction.signatures_[i, j].to_dict()}
            for i in range(target_extraction.signatures_.shape[0])
            for j in range(target_extraction.signatures_.shape[1])
            if target_extraction.signatures_[i, j].detected
        ]
        sig_path = stage_dir / "signatures.json"
        fileio.write_json({"detections": signatures}, sig_path)
        outputs.append(sig_path)

        summary = {
            "target_class": target_class,
            "classification_confident": confident,
            "z_front": z_front,
            "gamma_t_area": gamma_t.area,
            "gamma_t_box": list(gamma_t.box) if gamma_t.box else None,
            "n_detections": len(signatures),
            "propagation": prop_info.to_dict(),
        }
        summary_path = stage_dir / "summary.json"
        fileio.write_json(summary, summary_path)
        outputs.append(summary_path)
    except Exception as exc:
        manifest.mark_failure("preprocess", str(exc))
        raise
    manifest.record_stage("preprocess", dict(cfg["preprocess"]), outputs,
                          _time.perf_counter() - t0)
    return stage_dir


def _resample_series(series, target_grid):
    if series.xy_grid == target_grid:
        return series
    values = bilinear_resample_xy(series.values, series.xy_grid, target_grid)
    return PseudoFreqSeries(target_grid, series.s_values, values, series.plane_z)


# ---------------------------------------------------------------------------
# invert stage


def load_inversion_input(cfg, outdir):
    pre_dir = Path(outdir) / "preprocess"
    summary = fileio.read_json(pre_dir / "summary.json")
    psi_prop = fileio.series_from_csv(pre_dir / "psi_prop.csv")

    inv_cfg = build_inversion_config(cfg, target_class=summary["target_class"])
    face_grid = inv_cfg.omega_grid.face_grid("z+")
    psi_prop = _resample_series(psi_prop, face_grid)

    def read_plane(name):
        rows = np.genfromtxt(pre_dir / name, delimiter=",", names=True)
        xs = np.unique(rows["x"])
        ys = np.unique(rows["y"])
        values = np.full((xs.size, ys.size), np.nan)
        values[np.searchsorted(xs, rows["x"]), np.searchsorted(ys, rows["y"])] = rows["value"]
        grid = Grid2((xs[0], ys[0]), (xs[1] - xs[0], ys[1] - ys[0]), (xs.size, ys.size))
        return values, grid

    v_prop, plane_grid = read_plane("v_prop.csv")
    v_sig, _ = read_plane("v_signature.csv")
    if plane_grid != face_grid:
        v_prop = bilinear_resample_xy(v_prop, plane_grid, face_grid)
        v_sig = bilinear_resample_xy(v_sig, plane_grid, face_grid)
    gamma_t = estimate_xy_projection(v_sig, face_grid, inv_cfg.gamma_t_threshold)

    return InversionInput(
        psi_prop=psi_prop,
        v_prop_bar=v_prop,
        v_signature=v_sig,
        gamma_t=gamma_t,
        z_front=summary["z_front"],
        target_class=summary["target_class"],
    )


def stage_invert(cfg, outdir, mode=None):
    """Run the reconstruction on saved pre-processed data and emit artifacts."""
    outdir = Path(outdir)
    stage_dir = outdir / "invert"
    stage_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(outdir, cfg)
    t0 = _time.perf_counter()
    outputs = []
    try:
        data = load_inversion_input(cfg, outdir)
        inv = cfg["inversion"]
        estimator = GlobalReconstruction(
            omega_grid=build_inversion_config(cfg).omega_grid,
            sim_grid=build_inversion_config(cfg).sim_grid,
            mode=mode or inv["mode"],
            s_min=inv["s_min"], s_max=inv["s_max"], s_step=inv["s_step"],
            carleman_lambda=inv["carleman_lambda"], eta=inv["eta"],
            max_inner=inv["max_inner"], contrast_bound=inv["contrast_bound"],
            omega=inv["omega"], final_time=inv["final_time"], dt=inv["dt"],
            delta_fraction=inv["delta_fraction"],
            gamma_t_threshold=inv["gamma_t_threshold"],
            depth_truncation=inv["depth_truncation"],
            no_target_level=inv["no_target_level"],
            test2_margin=inv["test2_margin"],
            boundary_shell=inv["boundary_shell"],
        ).fit(data)
        result = estimator.result_
        outputs += emit_result(result, stage_dir)
        outputs += emit_plots(result, stage_dir / "plots")
    except Exception as exc:
        manifest.mark_failure("invert", str(exc))
        raise
    manifest.record_stage("invert", {"mode": mode or cfg["inversion"]["mode"]},
                          outputs, _time.perf_counter() - t0)
    manifest.mark_complete()
    return stage_dir


def emit_result(result, stage_dir):
    stage_dir = Path(stage_dir)
    stage_dir.mkdir(parents=True, exist_ok=True)
    outputs = []

    eps_path = stage_dir / "epsilon_rec.vtk"
    fileio.write_structured_points(result.epsilon, eps_path, name="epsilon_rec")
    outputs.append(eps_path)

    trunc_path = stage_dir / "epsilon_trunc.vtk"
    fileio.write_structured_points(result.epsilon_truncated, trunc_path,
                                   name="epsilon_trunc")
    outputs.append(trunc_path)

    csv_path = stage_dir / "epsilon_rec.csv"
    fileio.field_to_csv(result.epsilon, csv_path)
    outputs.append(csv_path)

    norms_path = stage_dir / "norms.csv"
    with open(norms_path, "w") as f:
        f.write("n,i,E,D\n")
        for n, i, e, d in result.inner_history:
            f.write(f"{n},{i},{e:.17g},{d:.17g}\n")
    outputs.append(norms_path)

    summary_path = stage_dir / "summary.json"
    summary = result.summary()
    if not result.detected:
        summary["message"] = "no target detected"
    fileio.write_json(summary, summary_path)
    outputs.append(summary_path)
    return outputs


def emit_plots(result, plot_dir):
    """CSV data sufficient to regenerate the norm-history and slice figures."""
    plot_dir = Path(plot_dir)
    plot_dir.mkdir(parents=True, exist_ok=True)
    outputs = []

    for name, series in (("d_first.csv", result.d_first), ("d_final.csv", result.d_final)):
        path = plot_dir / name
        rows = np.column_stack([np.arange(1, len(series) + 1), series])
        fileio.points_to_csv(rows, path, header="n,value")
        outputs.append(path)

    field = result.epsilon_truncated
    g = field.grid
    k0 = int(np.argmax(field.values.max(axis=(0, 1))))
    xs, ys = np.meshgrid(g.axis(0), g.axis(1), indexing="ij")
    slice_z = np.column_stack([xs.ravel(), ys.ravel(), field.values[:, :, k0].ravel()])
    path = plot_dir / "slice_z_peak.csv"
    fileio.points_to_csv(slice_z, path, header="x,y,epsilon")
    outputs.append(path)

    i_mid = g.counts[0] // 2
    yy, zz = np.meshgrid(g.axis(1), g.axis(2), indexing="ij")
    slice_x = np.column_stack([yy.ravel(), zz.ravel(), field.values[i_mid, :, :].ravel()])
    path = plot_dir / "slice_x_mid.csv"
    fileio.points_to_csv(slice_x, path, header="y,z,epsilon")
    outputs.append(path)

    if result.gamma_t is not None and not result.gamma_t.empty:
        path = plot_dir / "gamma_t_map.csv"
        fileio.points_to_csv(result.gamma_t.points(), path, header="x,y")
        outputs.append(path)
    return outputs


# ---------------------------------------------------------------------------
# entry point used by the CLI


def run_pipeline(command, cfg, outdir, mode=None):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if command == "simulate":
        stage_simulate(cfg, outdir)
    elif command == "preprocess":
        stage_preprocess(cfg, outdir)
    elif command == "invert":
        stage_invert(cfg, outdir, mode=mode)
    elif command == "full":
        stage_simulate(cfg, outdir)
        stage_preprocess(cfg, outdir)
        stage_invert(cfg, outdir, mode=mode)
    else:
        raise ValidationError(f"unknown command {command!r}")
    return outdir
