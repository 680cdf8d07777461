"""Benchmark setup: mesh, random boundary field, densities and one detailed solve.

Run with ``python3 demos/01_benchmark_setup.py``.
"""
import numpy as np

from weighted_rb.mesh import Tag, build_benchmark_mesh
from weighted_rb.solvers import build_affine_model, detailed_output, solve_both
from weighted_rb.stochastics import DensityModel, kl_eigenpairs

# The plate [0,10]x[0,4] with three 2x2 cooling holes. h must divide 1.
mesh = build_benchmark_mesh(1.0 / 3.0)
print(f"nodes: {mesh.n_nodes}, triangles: {len(mesh.triangles)}")
print(f"area {mesh.signed_areas().sum():.6f}, |OUT| {mesh.edge_lengths(Tag.OUT).sum():.6f}, "
      f"|IN| {mesh.edge_lengths(Tag.IN).sum():.6f}")

# KL expansion of the inflow field on the left edge (exponential kernel, a = 2)
kl = kl_eigenpairs(mesh, a=2.0, Q=10, mean_value=10.0)
print("KL eigenvalues:", np.round(kl.eigenvalues, 4))
print(f"sum of the first 10: {kl.eigenvalues.sum():.4f} (kernel trace is 4)")

# parameters: 10 uniform KL coordinates plus a beta-distributed cooling coefficient
density = DensityModel()
rng = np.random.default_rng(0)
xi = density.sample(rng, 1)[0]
print("xi_out:", np.round(xi[:10], 3), " xi_in:", round(xi[10], 3))
print(f"joint pdf at xi: {density.joint_pdf(xi):.3e}")

# affine model: 13 matrix and 11 load components, implicit Euler with dt = 0.4
model = build_affine_model(mesh, kl, dt=0.4, K=50)
print(f"Qa = {model.Qa}, Qb = {model.Qb}, T = {model.T}")

U, P = solve_both(model, xi)  # one factorization serves both sweeps
print(f"mean temperature at T: {detailed_output(model, U):.6f}")
print(f"dual final state is constant 1/28: {np.allclose(P.final, 1 / 28)}")

# a cold inflow field and strong cooling give a lower output
cold = np.append(np.full(10, -1.5), 9.5)
print(f"output for a cold, strongly cooled sample: {detailed_output(model, solve_both(model, cold)[0]):.6f}")
