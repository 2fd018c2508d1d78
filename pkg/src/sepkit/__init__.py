"""Separation bodies of convex polytopes and cells of Poisson hyperplane processes."""
from .directional import (
    DirectionalDistribution,
    make_axes,
    make_discrete,
    make_facet_measure,
    make_sigma,
    phi_functional,
)
from .geometry import HPolytope, Halfspace, Hyperplane, VPolytope, mean_width, support, volume
from .poisson import ProcessParams, estimate_functionals, integral_313, sample_kcell, sample_zero_cell
from .sepbody import (
    SeparationQuery,
    boundary_ray,
    k_phi,
    m_value,
    membership,
    psi_value,
    support_sepbody,
)

__version__ = "0.1.0"
