"""Built-in scenarios: a manifold, a torus or circle action and an invariant function."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import ManifoldSpec, isospectral, projective_space, sphere
from .morse import InvariantFunction, height_function, trace_function
from .symmetry import GroupActionSpec, conjugation_action, linear_action


@dataclass(frozen=True)
class Scenario:
    name: str
    manifold: ManifoldSpec
    function: InvariantFunction
    group: GroupActionSpec
    group_label: str
    expected_critical: int
    euler_characteristic: int
    weyl_order: int | None = None       # set for flag manifolds G/T
    n_starts: int = 200

    def describe(self) -> dict:
        return {"name": self.name, "manifold": self.manifold.name,
                "dimension": self.manifold.intrinsic_dim,
                "ambient_dimension": self.manifold.ambient_dim,
                "group": self.group_label, "group_dim": self.group.group_dim,
                "function": self.function.name,
                "expected_critical": self.expected_critical}


def _check_generic(D: np.ndarray) -> None:
    if len(np.unique(np.round(D, 12))) < len(D):
        raise ValueError(f"diag{tuple(D)} has repeated entries: tr(DX) is not Morse")


def sphere_height() -> Scenario:
    rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    return Scenario("sphere-height", sphere(2), height_function(3),
                    linear_action("SO(2)", rot), "SO(2)", 2, 2)


def cp2_torus(D=(0.0, 1.0, 2.0), check_generic: bool = True) -> Scenario:
    D = np.asarray(D, dtype=float)
    if check_generic:
        _check_generic(D)
    # the diagonal U(1)^3; its centre acts trivially, leaving an effective T^2
    gens = [1j * np.diag(e) for e in np.eye(3)]
    return Scenario("cp2-torus", projective_space(3), trace_function(D),
                    conjugation_action("T^3", gens), "T^3 (diagonal)", 3, 3)


def flag_su2(D=(0.0, 1.0), check_generic: bool = True) -> Scenario:
    D = np.asarray(D, dtype=float)
    if check_generic:
        _check_generic(D)
    gens = [0.5j * np.diag([1.0, -1.0])]
    return Scenario("flag-su2", isospectral([-1.0, 1.0]), trace_function(D),
                    conjugation_action("T^1", gens), "T^1", 2, 2, weyl_order=2)


def flag_su3(D=(0.0, 1.0, 2.0), check_generic: bool = True) -> Scenario:
    D = np.asarray(D, dtype=float)
    if check_generic:
        _check_generic(D)
    gens = [1j * np.diag([1.0, -1.0, 0.0]), 1j * np.diag([0.0, 1.0, -1.0])]
    return Scenario("flag-su3", isospectral([0.0, 1.0, 2.0]), trace_function(D),
                    conjugation_action("T^2", gens), "T^2 (rank-2 torus)", 6, 6,
                    weyl_order=6, n_starts=2000)


REGISTRY = {
    "sphere-height": sphere_height,
    "cp2-torus": cp2_torus,
    "flag-su2": flag_su2,
    "flag-su3": flag_su3,
}


def get_scenario(name: str) -> Scenario:
    try:
        return REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(REGISTRY)}") from None


def list_scenarios() -> list[dict]:
    return [REGISTRY[name]().describe() for name in REGISTRY]
