"""Numerical lab for Morse theory of torus-invariant functions on compact manifolds."""
from .critical import (CriticalPoint, certify_cr_equals_fixed, certify_weyl_count,
                       enumerate_critical_points)
from .flow import (FlowLine, StepControl, equivariance_certificate, flow_to_limit,
                   integrate_flow)
from .manifold import (ManifoldSpec, isospectral, on_manifold, project_to_tangent,
                       projective_space, retract, sphere)
from .moduli import (ModuliComponent, UnstableSphereSample, certify_circle,
                     certify_rotation_action, certify_stabilizer, moduli_components,
                     sample_unstable_sphere, transversality_check)
from .morse import (InvariantFunction, morse_index, riemannian_gradient,
                    riemannian_hessian_at_critical)
from .runner import ScenarioConfig, run_scenario
from .scenarios import get_scenario, list_scenarios
from .symmetry import (GroupActionSpec, GroupElement, act, enumerate_fixed_points,
                       invariance_residual, is_fixed_point)

__version__ = "0.1.0"
