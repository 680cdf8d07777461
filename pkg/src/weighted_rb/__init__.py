"""Weighted reduced basis methods for a parabolic heat problem with random data.

Layers, bottom-up: :mod:`mesh` and :mod:`fem` (P1 assembly on the benchmark
domain), :mod:`stochastics` (densities, samplers, KL field), :mod:`solvers`
(affine model, implicit Euler primal/dual), :mod:`rom` (reduced model,
estimators, persistence), :mod:`construction` (POD-greedy, POD, Monte Carlo
statistics) and :mod:`harness` (configuration, caches, experiments).
"""

from .construction import (
    GreedyConfig,
    GreedyResult,
    Mode,
    PodResult,
    Weighting,
    mc_abs_output_error,
    mc_rms_solution_error,
    pod1,
    pod_greedy,
    pod_projection_error,
    pod_reference,
)
from .mesh import Tag, TriMesh, build_benchmark_mesh, load_mesh, save_mesh
from .rom import (
    ReducedModel,
    Reductor,
    corrected_output,
    estimate,
    load_reduced_model,
    reduced_output,
    save_reduced_model,
    solve_reduced_dual,
    solve_reduced_primal,
)
from .solvers import (
    AffineModel,
    build_affine_model,
    detailed_output,
    solve_both,
    solve_dual,
    solve_primal,
)
from .stochastics import BENCHMARK_DENSITY, DensityModel, KLField, kl_eigenpairs

__version__ = "0.1.0"
