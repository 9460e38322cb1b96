from __future__ import annotations

from typing import Callable

import pytest

from helixtorque.cholesteric import CholestericSlab, Handedness
from helixtorque.lifshitz import InteractionConfig, QuadratureSpec
from helixtorque.media import DielectricModel, ThermalGrid, load_example_model

UM = 1e-6


@pytest.fixture(scope="session")
def example_model() -> DielectricModel:
    return load_example_model()


@pytest.fixture
def fast_quadrature() -> QuadratureSpec:
    return QuadratureSpec(n_eta=16, n_krho=16, phi_points=16)


@pytest.fixture
def fast_thermal() -> ThermalGrid:
    return ThermalGrid(rel_tol=1e-6)


@pytest.fixture
def make_slab(example_model: DielectricModel) -> Callable[..., CholestericSlab]:
    def factory(
        d_tot: float = 2 * UM,
        pitch: float = 0.3 * UM,
        handedness: Handedness = Handedness.RIGHT,
        theta_front: float = 0.0,
        model: DielectricModel | None = None,
    ) -> CholestericSlab:
        return CholestericSlab(
            d_tot=d_tot,
            pitch=pitch,
            handedness=handedness,
            theta_front=theta_front,
            model=model or example_model,
        )

    return factory


@pytest.fixture
def make_interaction(
    make_slab: Callable[..., CholestericSlab],
    fast_quadrature: QuadratureSpec,
    fast_thermal: ThermalGrid,
) -> Callable[..., InteractionConfig]:
    def factory(
        separation: float = 2 * UM,
        d_tot: float = 2 * UM,
        pairing: str = "homochiral",
        **slab_kwargs,
    ) -> InteractionConfig:
        slab = make_slab(d_tot=d_tot, **slab_kwargs)
        config = InteractionConfig(
            slab1=slab,
            slab2=slab,
            separation=separation,
            thermal=fast_thermal,
            quadrature=fast_quadrature,
        )
        return config.with_pairing(pairing)

    return factory
