"""Synthetic target scenes: ground-truth geometry and dielectric values."""

from dataclasses import dataclass, field

import numpy as np

from .grids import ScalarField3
from .validation import ValidationError

APPEARING_METAL_RANGE = (10.0, 30.0)


@dataclass(frozen=True)
class TargetShape:
    """One target: an axis-aligned box, a sphere, or a box shell with a fill.

    ``dims`` are full extents for boxes and shells; for spheres ``dims[0]`` is
    the diameter. A shell has wall thickness ``wall`` and its interior is
    filled with ``fill_epsilon`` up to ``fill_fraction`` of its height (the
    remainder stays at the background value, i.e. air).
    """

    kind: str
    center: tuple
    dims: tuple
    epsilon: float
    wall: float = 0.0
    fill_epsilon: float = 1.0
    fill_fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in ("box", "sphere", "shell"):
            raise ValidationError(f"unknown shape kind {self.kind!r}")
        if self.epsilon < 1.0 or self.fill_epsilon < 1.0:
            raise ValidationError("dielectric values must be >= 1")
        if self.kind == "shell" and self.wall <= 0:
            raise ValidationError("shell requires a positive wall thickness")

    def bounding_box(self):
        c = np.asarray(self.center)
        if self.kind == "sphere":
            r = self.dims[0] / 2.0
            return c - r, c + r
        d = np.asarray(self.dims) / 2.0
        return c - d, c + d

    def to_dict(self):
        return {
            "kind": self.kind, "center": list(self.center), "dims": list(self.dims),
            "epsilon": self.epsilon, "wall": self.wall,
            "fill_epsilon": self.fill_epsilon, "fill_fraction": self.fill_fraction,
        }


@dataclass(frozen=True)
class TargetScene:
    """A labeled collection of targets placed inside the inversion box."""

    targets: tuple
    label: str = "dielectric"
    scene_id: str = "scene"

    def __post_init__(self):
        if self.label not in ("dielectric", "metallic"):
            raise ValidationError("scene label must be dielectric or metallic")
        if self.label == "metallic":
            lo, hi = APPEARING_METAL_RANGE
            for t in self.targets:
                if not lo <= t.epsilon <= hi:
                    raise ValidationError(
                        f"metallic proxy epsilon {t.epsilon} outside [{lo}, {hi}]"
                    )

    @property
    def max_epsilon(self):
        values = [1.0]
        for t in self.targets:
            values.append(t.epsilon)
            if t.kind == "shell":
                values.append(t.fill_epsilon)
        return max(values)

    def to_dict(self):
        return {
            "scene_id": self.scene_id, "label": self.label,
            "targets": [t.to_dict() for t in self.targets],
        }

    @staticmethod
    def from_dict(data):
        targets = tuple(
            TargetShape(
                kind=t["kind"], center=tuple(t["center"]), dims=tuple(t["dims"]),
                epsilon=t["epsilon"], wall=t.get("wall", 0.0),
                fill_epsilon=t.get("fill_epsilon", 1.0),
                fill_fraction=t.get("fill_fraction", 0.5),
            )
            for t in data["targets"]
        )
        return TargetScene(targets, data.get("label", "dielectric"),
                           data.get("scene_id", "scene"))


def _box_mask(xs, ys, zs, center, dims):
    return (
        (np.abs(xs - center[0]) <= dims[0] / 2 + 1e-12)
        & (np.abs(ys - center[1]) <= dims[1] / 2 + 1e-12)
        & (np.abs(zs - center[2]) <= dims[2] / 2 + 1e-12)
    )


def generate_scene(scene, grid, inversion_box=None):
    """Rasterize a scene onto a grid; epsilon is 1 outside all targets.

    ``inversion_box`` is an optional pair of corner points; every target must
    lie inside it (the reconstruction assumes a homogeneous exterior).
    """
    xs, ys, zs = np.meshgrid(grid.axis(0), grid.axis(1), grid.axis(2), indexing="ij")
    values = np.ones(grid.shape)
    for t in scene.targets:
        lo, hi = t.bounding_box()
        if inversion_box is not None:
            blo, bhi = np.asarray(inversion_box[0]), np.asarray(inversion_box[1])
            if np.any(lo < blo - 1e-9) or np.any(hi > bhi + 1e-9):
                raise ValidationError(
                    f"target {t.kind} at {t.center} extends outside the inversion box"
                )
        if t.kind == "box":
            values[_box_mask(xs, ys, zs, t.center, t.dims)] = t.epsilon
        elif t.kind == "sphere":
            r = t.dims[0] / 2.0
            mask = (xs - t.center[0]) ** 2 + (ys - t.center[1]) ** 2 + \
                   (zs - t.center[2]) ** 2 <= r * r + 1e-12
            values[mask] = t.epsilon
        else:  # shell
            outer = _box_mask(xs, ys, zs, t.center, t.dims)
            inner_dims = tuple(max(d - 2 * t.wall, 0.0) for d in t.dims)
            inner = _box_mask(xs, ys, zs, t.center, inner_dims)
            values[outer & ~inner] = t.epsilon
            z_lo = t.center[2] - inner_dims[2] / 2
            fill = inner & (zs <= z_lo + t.fill_fraction * inner_dims[2] + 1e-12)
            values[fill] = t.fill_epsilon
    return ScalarField3(grid, values)


# ---------------------------------------------------------------------------
# stock scenes used by the pipeline defaults and the acceptance runs


def wood_calibrator():
    """Dielectric calibrating object: a wood-like cube, front face at z = 0.02."""
    return TargetScene(
        (TargetShape("box", (0.0, 0.0, -0.05), (0.1, 0.1, 0.1), 4.28),),
        label="dielectric", scene_id="calibrator-wood",
    )


def metal_calibrator():
    """Metallic calibrating object modeled with the appearing dielectric constant.

    The front face is larger than the wood calibrator's so the measured
    amplitudes reproduce the >= 2x metal-to-dielectric contrast that real
    (near-perfectly reflecting) metals show.
    """
    return TargetScene(
        (TargetShape("box", (0.0, 0.0, -0.05), (0.14, 0.14, 0.1), 12.0),),
        label="metallic", scene_id="calibrator-metal",
    )


def dielectric_cube(epsilon=4.0, side=0.1, center=(0.0, 0.0, -0.05)):
    return TargetScene(
        (TargetShape("box", center, (side, side, side), epsilon),),
        label="dielectric", scene_id=f"dielectric-cube-eps{epsilon:g}",
    )


def metal_box(epsilon=15.0, dims=(0.14, 0.14, 0.1), center=(0.0, 0.0, -0.05)):
    return TargetScene(
        (TargetShape("box", center, dims, epsilon),),
        label="metallic", scene_id=f"metal-box-eps{epsilon:g}",
    )


def doll_with_sand():
    """Heterogeneous target: a wooden shell whose lower half is filled with sand."""
    return TargetScene(
        (TargetShape("shell", (0.0, 0.0, -0.04), (0.16, 0.16, 0.12), 4.4,
                     wall=0.02, fill_epsilon=5.0, fill_fraction=0.5),),
        label="dielectric", scene_id="doll-sand",
    )


def no_target():
    return TargetScene((), label="dielectric", scene_id="no-target")


STOCK_SCENES = {
    "wood-calibrator": wood_calibrator,
    "metal-calibrator": metal_calibrator,
    "dielectric-cube": dielectric_cube,
    "metal-box": metal_box,
    "doll-sand": doll_with_sand,
    "no-target": no_target,
}
