"""Layer-stripping reconstruction driver.

Marches down the pseudo-frequency grid solving one convection-diffusion
problem per layer, alternating with tail updates through full wave solves,
and applies the stopping, selection and post-processing rules that decide the
final reconstructed dielectric field.
"""

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .elliptic import EllipticProblem, carleman_coefficients, solve_elliptic, solve_laplace
from .forward import ForwardConfig, run_forward, run_forward_homogeneous
from .grids import ScalarField3, gradient, laplacian, l2_norm
from .preprocess import GammaT
from .spectral import (
    PseudoFreqGrid,
    PseudoFreqSeries,
    clamp_positive,
    psi_from_phi,
    psi_layer_average,
)
from .validation import ValidationError

log = logging.getLogger(__name__)

FACE_WRITE_ORDER = ("y-", "y+", "x-", "x+", "z-", "z+")  # later entries own shared edges


class ReconstructionError(RuntimeError):
    """Raised with a state dump when a sub-operation fails mid-run."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state or {}


@dataclass
class InversionConfig:
    """Everything one reconstruction run needs besides the boundary data."""

    omega_grid: object
    sim_grid: object
    mode: str = "test1"
    pseudo_grid: PseudoFreqGrid = field(default_factory=PseudoFreqGrid)
    carleman_lambda: float = 20.0
    eta: float = 1e-6
    max_inner: int = None
    contrast_bound: float = None
    omega: float = 30.0
    final_time: float = 1.2
    dt: float = 0.0015
    delta_fraction: float = 0.25   # s-derivative step as a fraction of the layer width
    gamma_t_threshold: float = 0.85
    depth_truncation: float = 0.9
    no_target_level: float = 1.05
    test2_margin: float = 0.03
    boundary_shell: int = 1
    target_class: str = "dielectric"

    def __post_init__(self):
        if self.mode not in ("test1", "test2"):
            raise ValidationError("mode must be test1 or test2")
        if self.eta <= 0:
            raise ValidationError("eta must be positive")
        if self.max_inner is None:
            self.max_inner = 5 if self.mode == "test2" else 25
        if self.contrast_bound is None:
            if self.mode == "test2":
                self.contrast_bound = 20.0 if self.target_class == "metallic" else 10.0
            else:
                self.contrast_bound = 30.0
        if self.contrast_bound <= 1.0:
            raise ValidationError("contrast bound 1 + d must exceed 1")

    @property
    def delta(self):
        return self.delta_fraction * self.pseudo_grid.step

    def sample_values(self):
        """All s values the boundary transforms are needed at: s_m and s_m +- delta."""
        s = self.pseudo_grid.s_values
        return np.unique(np.concatenate([s - self.delta, s, s + self.delta]))


@dataclass
class InversionInput:
    """Pre-processed boundary data driving one reconstruction."""

    psi_prop: PseudoFreqSeries        # psi on the backscatter face at s_0..s_N
    v_prop_bar: np.ndarray            # propagated tail V_prop(x, y) at s_max
    v_signature: np.ndarray           # incident-subtracted tail used for the footprint
    gamma_t: GammaT = None
    z_front: float = None
    target_class: str = "dielectric"


@dataclass
class ReconstructionResult:
    epsilon: ScalarField3 = None
    epsilon_truncated: ScalarField3 = None
    mode: str = "test1"
    target_class: str = "dielectric"
    detected: bool = True
    selected_layer: int = 0
    selection_rule: str = ""
    layers_run: int = 0
    d_first: np.ndarray = None
    d_final: np.ndarray = None
    inner_history: list = field(default_factory=list)  # rows (n, i, E, D)
    n_comp: float = 1.0
    eps_comp: float = 1.0
    truncation_gamma: float = None
    z_peak: float = None
    blob_center: tuple = None
    gamma_t: GammaT = None
    q_fields: list = field(default_factory=list)
    q_sum: np.ndarray = None
    runtime_s: float = 0.0

    def summary(self):
        # wall-clock timing stays out of here: stage outputs must be
        # bit-reproducible, timing lives in the run manifest
        out = {
            "mode": self.mode,
            "target_class": self.target_class,
            "detected": self.detected,
            "selected_layer": self.selected_layer,
            "selection_rule": self.selection_rule,
            "layers_run": self.layers_run,
            "n_comp": self.n_comp,
            "eps_comp": self.eps_comp,
            "truncation_gamma": self.truncation_gamma,
            "z_peak": self.z_peak,
            "blob_center": list(self.blob_center) if self.blob_center else None,
        }
        if self.gamma_t is not None:
            out["gamma_t_area"] = self.gamma_t.area
            out["gamma_t_box"] = list(self.gamma_t.box) if self.gamma_t.box else None
        return out


# ---------------------------------------------------------------------------
# stopping and selection rules (pure functions over norm sequences)


def inner_stop(e_history, d_history, eta, max_inner, mode=None):
    """True when the inner iteration should stop at the current iterate."""
    if not e_history:
        raise ValidationError("stopping rule needs at least one iterate")
    i = len(e_history)
    if e_history[-1] <= eta or d_history[-1] <= eta:
        return True
    if i >= 2 and (e_history[-1] >= e_history[-2] or d_history[-1] >= d_history[-2]):
        return True
    return i >= max_inner


def local_minima(seq):
    """Indices of interior local minima; a plateau collapses to its first index."""
    seq = np.asarray(seq, dtype=float)
    mins = []
    i = 1
    while i < len(seq) - 1:
        if seq[i] < seq[i - 1]:
            j = i
            while j + 1 < len(seq) and seq[j + 1] == seq[i]:
                j += 1
            if j + 1 < len(seq) and seq[j + 1] > seq[i]:
                mins.append(i)
            i = j + 1
        else:
            i += 1
    return mins


def select_final_test1(d_first, d_final, max_eps_by_layer):
    """Layer choice: argmin of the first norms, replaced by the smallest local
    minimum of the final norms when the candidate's max epsilon is in [5, 10].

    Layers are 1-based; ties resolve to the earliest layer.
    """
    d_first = np.asarray(d_first, dtype=float)
    d_final = np.asarray(d_final, dtype=float)
    n1 = int(np.argmin(d_first))
    if np.count_nonzero(d_first == d_first[n1]) > 1:
        log.info("multiple minima of the first norm; keeping the earliest layer %d", n1 + 1)
    if 5.0 <= max_eps_by_layer[n1] <= 10.0:
        minima = local_minima(d_final)
        if minima:
            n2 = min(minima, key=lambda idx: (d_final[idx], idx))
            return n2 + 1, "final-norm"
    return n1 + 1, "first-norm"


def outer_stop_test2(d_final_history):
    """Stop after the final norm's first uptick; the previous layer is the result."""
    return len(d_final_history) >= 2 and d_final_history[-1] > d_final_history[-2]


# ---------------------------------------------------------------------------
# geometry helpers


class BoxEmbedding:
    """Index mapping of the inversion box into the simulation grid."""

    def __init__(self, sim_grid, omega_grid):
        if not np.allclose(sim_grid.spacing, omega_grid.spacing):
            raise ValidationError("inversion and simulation grids must share spacing")
        self.sim = sim_grid
        self.omega = omega_grid
        off = sim_grid.index_of(omega_grid.point(0, 0, 0))
        self.slices = tuple(
            slice(off[d], off[d] + omega_grid.counts[d]) for d in range(3)
        )

    def embed(self, omega_values, fill=1.0):
        out = np.full(self.sim.shape, float(fill))
        out[self.slices] = omega_values
        return out

    def extract(self, sim_values):
        return sim_values[self.slices].copy()


def build_boundary_field(grid, face_values):
    """Full-grid array whose boundary carries the per-face data.

    Faces are written in a fixed order so shared edges are owned by exactly
    one face (the backscatter face z+ last, hence highest priority).
    """
    out = np.zeros(grid.shape)
    writers = {
        "x-": (lambda a, v: a.__setitem__((0, slice(None), slice(None)), v)),
        "x+": (lambda a, v: a.__setitem__((-1, slice(None), slice(None)), v)),
        "y-": (lambda a, v: a.__setitem__((slice(None), 0, slice(None)), v)),
        "y+": (lambda a, v: a.__setitem__((slice(None), -1, slice(None)), v)),
        "z-": (lambda a, v: a.__setitem__((slice(None), slice(None), 0), v)),
        "z+": (lambda a, v: a.__setitem__((slice(None), slice(None), -1), v)),
    }
    for name in FACE_WRITE_ORDER:
        if name in face_values:
            writers[name](out, face_values[name])
    return out


# ---------------------------------------------------------------------------
# boundary data assembly


def psi_from_face_transforms(face_w, sample_values, grid_values, delta):
    """psi at the grid samples from w transforms at (s - delta, s, s + delta)."""
    sample_values = np.asarray(sample_values)
    out = {}
    for name, w in face_w.items():
        cols = []
        for s in grid_values:
            i_m = int(np.argmin(np.abs(sample_values - (s - delta))))
            i_c = int(np.argmin(np.abs(sample_values - s)))
            i_p = int(np.argmin(np.abs(sample_values - (s + delta))))
            w_m = clamp_positive(w[..., i_m], where=f"{name} face w(s-delta)")
            w_c = clamp_positive(w[..., i_c], where=f"{name} face w(s)")
            w_p = clamp_positive(w[..., i_p], where=f"{name} face w(s+delta)")
            cols.append(psi_from_phi(w_m, w_c, w_p, float(s), delta))
        out[name] = np.stack(cols, axis=-1)
    return out


def assemble_boundary_psi(cfg, psi_prop):
    """psi on all six faces of the inversion box at every grid sample.

    The backscatter face carries the propagated measured data; the remaining
    faces are complemented with the homogeneous-medium simulation.
    """
    grid_values = cfg.pseudo_grid.s_values
    if psi_prop.values.shape != (*cfg.omega_grid.face_grid("z+").counts, grid_values.size):
        raise ValidationError("propagated psi does not cover the backscatter face")
    homog = run_forward_homogeneous(_forward_config(cfg, None))
    face_w = homog.boundary.laplace(cfg.sample_values())
    psi_faces = psi_from_face_transforms(face_w, cfg.sample_values(), grid_values, cfg.delta)
    psi_faces["z+"] = psi_prop.values
    return psi_faces


def _forward_config(cfg, eps_field, embedding=None):
    if eps_field is None:
        values = np.ones(cfg.sim_grid.shape)
    else:
        values = eps_field
    return ForwardConfig(
        grid=cfg.sim_grid,
        epsilon=ScalarField3(cfg.sim_grid, values),
        omega=cfg.omega,
        final_time=cfg.final_time,
        dt=cfg.dt,
        boundary_subgrid=cfg.omega_grid,
        laplace_s=(cfg.pseudo_grid.s_max,),
    )


# ---------------------------------------------------------------------------
# tails and coefficient extraction


def initial_tail(cfg, psi_faces):
    """First tail from the Laplace problem: p harmonic, p = -s_max^2 psi on the
    boundary, V0 = p / s_max."""
    s_bar = cfg.pseudo_grid.s_max
    boundary = build_boundary_field(
        cfg.omega_grid, {name: -s_bar**2 * values[..., 0] for name, values in psi_faces.items()}
    )
    p = solve_laplace(cfg.omega_grid, boundary)
    return p / s_bar


def initial_tail_test2(cfg, data, embedding):
    """First tail from a guessed high-contrast slab over the estimated footprint."""
    if data.gamma_t is None or data.gamma_t.empty:
        log.warning("empty footprint estimate: test 2 falls back to the harmonic tail")
        return None
    if data.z_front is None or not np.isfinite(data.z_front):
        raise ValidationError("test 2 needs a front-depth estimate")
    x0, x1, y0, y1 = data.gamma_t.extended_box(cfg.test2_margin)
    g = cfg.omega_grid
    x0 = max(x0, g.bounds(0)[0]); x1 = min(x1, g.bounds(0)[1])
    y0 = max(y0, g.bounds(1)[0]); y1 = min(y1, g.bounds(1)[1])
    z_lo = g.bounds(2)[0]
    z_hi = float(np.clip(data.z_front, z_lo, g.bounds(2)[1]))
    xs, ys, zs = np.meshgrid(g.axis(0), g.axis(1), g.axis(2), indexing="ij")
    mask = (
        (xs >= x0 - 1e-12) & (xs <= x1 + 1e-12)
        & (ys >= y0 - 1e-12) & (ys <= y1 + 1e-12)
        & (zs >= z_lo - 1e-12) & (zs <= z_hi + 1e-12)
    )
    eps0 = np.where(mask, cfg.contrast_bound, 1.0)
    run = run_forward(_forward_config(cfg, embedding.embed(eps0)))
    w = embedding.extract(run.w_volume[cfg.pseudo_grid.s_max])
    w = clamp_positive(w, where="test2 initial tail")
    return np.log(w) / cfg.pseudo_grid.s_max**2, mask


def epsilon_from_v(v_values, s, bound, spacing, mask=None, boundary_shell=1):
    """Coefficient from the layer field: lap(v) + s^2 |grad v|^2, truncated to
    [1, bound]; with a mask (test 2) the outside is reset to 1.

    The outermost ``boundary_shell`` node layers are pinned to 1: targets are
    strictly interior, and next to the Dirichlet faces the one-sided stencils
    of the data seams would otherwise imprint spurious coefficient fringes
    that the tail iteration then chases.
    """
    grads = gradient(v_values, spacing)
    raw = laplacian(v_values, spacing) + s * s * (
        grads[0] ** 2 + grads[1] ** 2 + grads[2] ** 2
    )
    outside = float(np.mean((raw < 1.0) | (raw > bound)))
    if outside > 0:
        log.debug("epsilon truncation clipped %.1f%% of the volume", 100 * outside)
    out = np.clip(raw, 1.0, bound)
    if mask is not None:
        out = np.where(mask, out, 1.0)
    k = int(boundary_shell)
    if k > 0:
        out[:k, :, :] = 1.0
        out[-k:, :, :] = 1.0
        out[:, :k, :] = 1.0
        out[:, -k:, :] = 1.0
        out[:, :, :k] = 1.0
        out[:, :, -k:] = 1.0
    return out


# ---------------------------------------------------------------------------
# post-processing


def postprocess_truncate(eps_field, gamma_t, depth_truncation=0.9):
    """Footprint-matched truncation of the reconstruction plus depth trimming.

    Finds the plane of the maximum, bisects the truncation factor until the
    superlevel area on that plane matches the footprint estimate within one
    cell, keeps only the matching (x, y) columns, then trims values below
    ``depth_truncation`` times the maximum.
    """
    values = eps_field.values
    g = eps_field.grid
    if gamma_t is None or gamma_t.empty:
        log.warning("no footprint estimate: returning the reconstruction untruncated")
        return eps_field, None, None
    if values.max() <= 1.0:
        log.warning("reconstruction is flat; truncation skipped")
        return eps_field, None, None

    plane_max = values.max(axis=(0, 1))
    k0 = int(np.argmax(plane_max))  # earliest plane on ties (smallest z)
    z0 = g.axis(2)[k0]
    plane = values[:, :, k0]
    peak = float(plane.max())
    cell = g.spacing[0] * g.spacing[1]

    def area_of(gamma):
        return np.count_nonzero(plane > gamma * peak) * cell

    lo, hi = 0.0, 1.0
    best = (np.inf, 0.5)
    for _ in range(60):
        gamma = 0.5 * (lo + hi)
        a = area_of(gamma)
        if abs(a - gamma_t.area) < best[0]:
            best = (abs(a - gamma_t.area), gamma)
        if abs(a - gamma_t.area) <= cell:
            break
        if a > gamma_t.area:
            lo = gamma
        else:
            hi = gamma
    gamma = best[1]
    keep_column = plane > gamma * peak
    out = np.where(keep_column[:, :, None], values, 1.0)
    out = np.where(out >= depth_truncation * out.max(), out, 1.0)
    return ScalarField3(g, out), float(gamma), float(z0)


def blob_center(eps_field):
    """Center of mass of (epsilon - 1); None for a flat field."""
    excess = eps_field.values - 1.0
    total = excess.sum()
    if total <= 0:
        return None
    g = eps_field.grid
    xs, ys, zs = np.meshgrid(g.axis(0), g.axis(1), g.axis(2), indexing="ij")
    return (
        float((excess * xs).sum() / total),
        float((excess * ys).sum() / total),
        float((excess * zs).sum() / total),
    )


# ---------------------------------------------------------------------------
# the driver


def run_global_reconstruction(cfg, data):
    """Execute the full layer march and return a ReconstructionResult."""
    start = _time.perf_counter()
    g = cfg.omega_grid
    grid_s = cfg.pseudo_grid.s_values
    n_layers = cfg.pseudo_grid.n_layers
    h = cfg.pseudo_grid.step
    s_bar = cfg.pseudo_grid.s_max
    spacing = g.spacing
    face_area = g.spacing[0] * g.spacing[1]
    embedding = BoxEmbedding(cfg.sim_grid, g)

    psi_faces = assemble_boundary_psi(cfg, data.psi_prop)
    v_prop = np.asarray(data.v_prop_bar, dtype=float)

    test2_mask = None
    v_tail = None
    if cfg.mode == "test2":
        tail = initial_tail_test2(cfg, data, embedding)
        if tail is not None:
            v_tail, test2_mask = tail
    if v_tail is None:
        v_tail = initial_tail(cfg, psi_faces)

    q_sum = np.zeros(g.shape)     # running h * sum of q_j (the qbar accumulator)
    q_fields = []
    eps_prev_layer = None
    eps_layers = []
    d_first = []
    d_final = []
    inner_rows = []
    stop_layer = None

    state = {"layer": 0, "inner": 0}
    try:
        for n in range(1, n_layers + 1):
            state["layer"] = n
            s_n = float(grid_s[n])
            coefs = carleman_coefficients(n, cfg.pseudo_grid, cfg.carleman_lambda)
            psi_n = {
                name: psi_layer_average(vals, n, cfg.pseudo_grid)
                for name, vals in psi_faces.items()
            }
            dirichlet = build_boundary_field(g, psi_n)

            if eps_prev_layer is None:
                eps_prev = epsilon_from_v(v_tail, s_n, cfg.contrast_bound, spacing,
                                          test2_mask, cfg.boundary_shell)
            else:
                eps_prev = eps_prev_layer

            e_hist = []
            d_hist = []
            q_n = None
            eps_n = None
            for i in range(1, cfg.max_inner + 1):
                state["inner"] = i
                grad_tail = gradient(v_tail, spacing)
                grad_qbar = gradient(q_sum, spacing)
                drift = [grad_tail[d] - grad_qbar[d] for d in range(3)]
                convection = tuple(coefs.a1 * c for c in drift)
                rhs = coefs.a3 * (drift[0] ** 2 + drift[1] ** 2 + drift[2] ** 2)
                problem = EllipticProblem(
                    grid=g, rhs=rhs, dirichlet=dirichlet, convection=convection
                )
                q_n = solve_elliptic(problem)

                v_layer = -h * q_n - q_sum + v_tail
                eps_values = epsilon_from_v(v_layer, s_n, cfg.contrast_bound,
                                            spacing, test2_mask, cfg.boundary_shell)

                e_norm = float(
                    np.linalg.norm(eps_values - eps_prev) / np.linalg.norm(eps_prev)
                )
                d_norm = l2_norm(v_tail[:, :, -1] - v_prop, face_area)
                e_hist.append(e_norm)
                d_hist.append(d_norm)
                inner_rows.append((n, i, e_norm, d_norm))

                run = run_forward(_forward_config(cfg, embedding.embed(eps_values)))
                w = clamp_positive(embedding.extract(run.w_volume[s_bar]),
                                   where=f"tail update (layer {n}, inner {i})")
                v_tail = np.log(w) / s_bar**2

                eps_prev = eps_values
                eps_n = eps_values
                if inner_stop(e_hist, d_hist, cfg.eta, cfg.max_inner, cfg.mode):
                    break

            if len(e_hist) == cfg.max_inner and cfg.mode == "test1" and \
                    not inner_stop(e_hist, d_hist, cfg.eta, cfg.max_inner, cfg.mode):
                log.warning("layer %d hit the inner-iteration cap %d", n, cfg.max_inner)

            q_fields.append(q_n)
            q_sum = q_sum + h * q_n
            eps_prev_layer = eps_n
            eps_layers.append(eps_n)
            d_first.append(d_hist[0])
            d_final.append(d_hist[-1])
            log.info("layer %2d: m_n=%d  D_first=%.3e  D_final=%.3e  max_eps=%.2f",
                     n, len(e_hist), d_hist[0], d_hist[-1], eps_n.max())

            if cfg.mode == "test2" and outer_stop_test2(d_final):
                stop_layer = n - 1
                break
    except Exception as exc:
        if isinstance(exc, ReconstructionError):
            raise
        raise ReconstructionError(
            f"reconstruction aborted at layer {state['layer']}, inner {state['inner']}: {exc}",
            state={
                "layer": state["layer"], "inner": state["inner"],
                "d_first": d_first, "d_final": d_final, "inner_history": inner_rows,
            },
        ) from exc

    layers_run = len(eps_layers)
    if cfg.mode == "test1":
        max_eps = [float(e.max()) for e in eps_layers]
        selected, rule = select_final_test1(d_first, d_final, max_eps)
    else:
        selected = stop_layer if stop_layer is not None else layers_run
        rule = "outer-minimum" if stop_layer is not None else "last-layer"
    eps_rec = ScalarField3(g, eps_layers[selected - 1])

    result = ReconstructionResult(
        epsilon=eps_rec,
        mode=cfg.mode,
        target_class=data.target_class,
        selected_layer=selected,
        selection_rule=rule,
        layers_run=layers_run,
        d_first=np.asarray(d_first),
        d_final=np.asarray(d_final),
        inner_history=inner_rows,
        gamma_t=data.gamma_t,
        q_fields=q_fields,
        q_sum=q_sum,
    )

    max_eps_rec = eps_rec.max()
    result.detected = max_eps_rec >= cfg.no_target_level
    result.eps_comp = max_eps_rec
    result.n_comp = float(np.sqrt(max_eps_rec))
    if not result.detected:
        log.info("no target detected (max epsilon %.3f)", max_eps_rec)
        result.epsilon_truncated = eps_rec
    else:
        truncated, gamma, z0 = postprocess_truncate(
            eps_rec, data.gamma_t, cfg.depth_truncation
        )
        result.epsilon_truncated = truncated
        result.truncation_gamma = gamma
        result.z_peak = z0
        result.blob_center = blob_center(truncated)
    result.runtime_s = _time.perf_counter() - start
    return result


# ---------------------------------------------------------------------------
# estimator front-end


class GlobalReconstruction(BaseEstimator):
    """Scikit-learn style wrapper around the layer-stripping reconstruction.

    Parameters mirror InversionConfig; ``fit`` consumes an InversionInput and
    exposes the reconstruction through fitted attributes.

    Attributes
    ----------
    result_ : ReconstructionResult
    epsilon_ : ScalarField3
        Selected reconstructed coefficient.
    epsilon_truncated_ : ScalarField3
        Footprint- and depth-truncated version of ``epsilon_``.
    n_comp_ : float
        sqrt(max epsilon), the reported refractive index for dielectrics.
    eps_comp_ : float
        max epsilon, the reported appearing dielectric constant for metals.
    """

    def __init__(self, omega_grid=None, sim_grid=None, mode="test1",
                 s_min=8.0, s_max=10.0, s_step=0.05, carleman_lambda=20.0,
                 eta=1e-6, max_inner=None, contrast_bound=None, omega=30.0,
                 final_time=1.2, dt=0.0015, delta_fraction=0.25,
                 gamma_t_threshold=0.85, depth_truncation=0.9,
                 no_target_level=1.05, test2_margin=0.03, boundary_shell=1):
        self.omega_grid = omega_grid
        self.sim_grid = sim_grid
        self.mode = mode
        self.s_min = s_min
        self.s_max = s_max
        self.s_step = s_step
        self.carleman_lambda = carleman_lambda
        self.eta = eta
        self.max_inner = max_inner
        self.contrast_bound = contrast_bound
        self.omega = omega
        self.final_time = final_time
        self.dt = dt
        self.delta_fraction = delta_fraction
        self.gamma_t_threshold = gamma_t_threshold
        self.depth_truncation = depth_truncation
        self.no_target_level = no_target_level
        self.test2_margin = test2_margin
        self.boundary_shell = boundary_shell

    def _config(self, target_class):
        if self.omega_grid is None or self.sim_grid is None:
            raise ValidationError("omega_grid and sim_grid are required to fit")
        return InversionConfig(
            omega_grid=self.omega_grid,
            sim_grid=self.sim_grid,
            mode=self.mode,
            pseudo_grid=PseudoFreqGrid(self.s_min, self.s_max, self.s_step),
            carleman_lambda=self.carleman_lambda,
            eta=self.eta,
            max_inner=self.max_inner,
            contrast_bound=self.contrast_bound,
            omega=self.omega,
            final_time=self.final_time,
            dt=self.dt,
            delta_fraction=self.delta_fraction,
            gamma_t_threshold=self.gamma_t_threshold,
            depth_truncation=self.depth_truncation,
            no_target_level=self.no_target_level,
            test2_margin=self.test2_margin,
            boundary_shell=self.boundary_shell,
            target_class=target_class,
        )

    def fit(self, X, y=None):
        """Run the reconstruction on an InversionInput."""
        if not isinstance(X, InversionInput):
            raise ValidationError("fit expects an InversionInput")
        result = run_global_reconstruction(self._config(X.target_class), X)
        self.result_ = result
        self.epsilon_ = result.epsilon
        self.epsilon_truncated_ = result.epsilon_truncated
        self.n_comp_ = result.n_comp
        self.eps_comp_ = result.eps_comp
        return self
