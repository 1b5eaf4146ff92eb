import numpy as np
import pytest

from wavecip.grids import grid_from_bounds
from wavecip.scenes import (
    TargetScene,
    TargetShape,
    dielectric_cube,
    doll_with_sand,
    generate_scene,
    metal_box,
    metal_calibrator,
    no_target,
    wood_calibrator,
)
from wavecip.validation import ValidationError

OMEGA_BOX = ((-0.5, -0.5, -0.1), (0.5, 0.5, 0.04))


def sim_grid(h=0.02):
    return grid_from_bounds((-0.56, -0.56, -0.16), (0.56, 0.56, 0.1), (h, h, h))


def test_wood_calibrator_values():
    scene = wood_calibrator()
    assert scene.targets[0].epsilon == 4.28
    assert np.sqrt(scene.max_epsilon) == pytest.approx(2.069, abs=1e-3)
    field = generate_scene(scene, sim_grid(), inversion_box=OMEGA_BOX)
    inside = np.count_nonzero(field.values == 4.28)
    # 0.1-sided box on the 0.02 grid: 5 nodes across in x and y, 6 in z
    assert inside == 5 * 5 * 6
    assert field.values.max() == 4.28 and field.values.min() == 1.0


def test_metal_calibrator_uses_appearing_constant():
    scene = metal_calibrator()
    assert scene.label == "metallic"
    assert scene.targets[0].epsilon == 12.0


def test_metal_label_enforces_appearing_range():
    with pytest.raises(ValidationError):
        TargetScene((TargetShape("box", (0, 0, -0.03), (0.1, 0.1, 0.1), 5.0),),
                    label="metallic")


def test_sphere_rasterization():
    scene = TargetScene(
        (TargetShape("sphere", (0.0, 0.0, -0.03), (0.08, 0.08, 0.08), 12.0),),
        label="metallic",
    )
    field = generate_scene(scene, sim_grid(0.01))
    volume = np.count_nonzero(field.values == 12.0) * 0.01**3
    assert volume == pytest.approx(4 / 3 * np.pi * 0.04**3, rel=0.25)


def test_doll_shell_and_fill():
    field = generate_scene(doll_with_sand(), sim_grid(0.01), inversion_box=OMEGA_BOX)
    values = field.values
    assert set(np.unique(values)) == {1.0, 4.4, 5.0}
    g = field.grid
    # sand fills only the lower half of the cavity
    i, j = g.index_of((0.0, 0.0, -0.06))[:2], None
    ix, iy, _ = g.index_of((0.0, 0.0, -0.06))
    assert values[ix, iy, g.index_of((0.0, 0.0, -0.06))[2]] == 5.0
    assert values[ix, iy, g.index_of((0.0, 0.0, -0.02))[2]] == 1.0
    assert values[ix, iy, g.index_of((0.0, 0.0, -0.09))[2]] == 4.4


def test_target_outside_box_rejected():
    scene = dielectric_cube(center=(0.48, 0.0, -0.03))
    with pytest.raises(ValidationError):
        generate_scene(scene, sim_grid(), inversion_box=OMEGA_BOX)


def test_no_target_scene_is_uniform():
    field = generate_scene(no_target(), sim_grid(), inversion_box=OMEGA_BOX)
    assert np.all(field.values == 1.0)


def test_scene_dict_round_trip():
    scene = doll_with_sand()
    back = TargetScene.from_dict(scene.to_dict())
    assert back == scene


def test_metal_box_front_face_larger_than_wood():
    wood = wood_calibrator().targets[0]
    metal = metal_box().targets[0]
    assert metal.dims[0] * metal.dims[1] > 1.5 * wood.dims[0] * wood.dims[1]
