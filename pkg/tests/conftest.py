import numpy as np
import pytest

from vcath.geometry import fit_centerline, init_frames
from vcath.phantom import Bifurcation, VesselSpec, generate_vessel
from vcath.transforms import SamplingGridSpec, virtual_catheter_sample


@pytest.fixture(scope="session")
def small_vessel():
    spec = VesselSpec(
        kind="random-smooth",
        length=60.0,
        seed=3,
        bifurcations=[Bifurcation(0.35, 40.0, 1.0), Bifurcation(0.7, 220.0, 0.9)],
    )
    return generate_vessel(spec)


@pytest.fixture(scope="session")
def small_ct(small_vessel):
    """CT-side catheter and virtual pullbacks at 0.4 mm frame spacing."""
    c = fit_centerline(small_vessel.ct_centerline_points())
    F = init_frames(c, int(round(c.total_length / 0.4)) + 1)
    spec = SamplingGridSpec()
    lumen = virtual_catheter_sample(F, small_vessel.lumen, spec)
    wall = virtual_catheter_sample(F, small_vessel.wall, spec)
    return c, F, lumen, wall

