import time

import numpy as np

from kgmachine.grid import Grid, Field, StatePair, energy_norm
from kgmachine.potentials import PotentialSpec
from kgmachine.resolvent import (
    free_resolvent_apply, free_resolvent_apply_blocks, build_dense_generator,
    PerturbedResolvent, resolvent_identity_residual, scaling_relation_check,
    free_kernel_check_3d, weighted_resolvent_norm, limiting_absorption_sweep,
)

grid = Grid(dim=1, num_points=512, half_extent=30.0)
x = grid.axis_coords
rng = np.random.default_rng(3)
state = StatePair(
    Field(grid, rng.standard_normal(512) * np.exp(-x**2 / 30), "physical"),
    Field(grid, rng.standard_normal(512) * np.exp(-x**2 / 20), "physical"),
)
beta, shift = 0.6, complex(0.35, 0.1)

# two free paths agree, and (L0 - z) applied to the result recovers the data
u_direct = free_resolvent_apply(state, beta, shift)
u_blocks = free_resolvent_apply_blocks(state, beta, shift)
print(f"free paths agree: {energy_norm(u_direct - u_blocks) / energy_norm(u_direct):.2e}")
dense0 = build_dense_generator(grid, beta)
stacked = np.concatenate([u_direct.first.values, u_direct.second.values])
back = dense0 @ stacked - shift * stacked
orig = np.concatenate([state.first.values.astype(complex), state.second.values])
print(f"dense/(symbol-inverse) consistency: {np.max(np.abs(back - orig)) / np.max(np.abs(orig)):.2e}")

# perturbed resolvent + identity residual
pt = PotentialSpec(family="poeschl_teller", depth=6.0, width=1.0)
V = pt.sample_lab(grid, beta=beta, center=0.0)
t0 = time.time()
pert = PerturbedResolvent(grid, beta, shift, V)
print(f"LU build {time.time() - t0:.2f}s")
rv = pert.apply(state)
res_apply = dense0 @ np.concatenate([rv.first.values, rv.second.values])
res_apply[512:] -= V * rv.first.values
res_apply -= shift * np.concatenate([rv.first.values, rv.second.values])
print(f"perturbed solve residual: {np.max(np.abs(res_apply - orig)) / np.max(np.abs(orig)):.2e}")
print(f"resolvent identity residual: {resolvent_identity_residual(state, beta, shift, V, pert):.2e}")

# scaling relation
t0 = time.time()
out = scaling_relation_check()
print(f"scaling check ({time.time() - t0:.1f}s): pointwise={out['pointwise_relative_deviation']:.2e} "
      f"weak={out['weak_form_relative_deviation']:.2e} n={out['points_compared']}")
out2 = scaling_relation_check(num_points=1024)
print(f"scaling check N=1024: pointwise={out2['pointwise_relative_deviation']:.2e} "
      f"weak={out2['weak_form_relative_deviation']:.2e}")

# 3d kernel spot check
t0 = time.time()
out3 = free_kernel_check_3d()
print(f"3d kernel check ({time.time() - t0:.1f}s): max rel dev={out3['max_relative_deviation']:.2e} "
      f"at {out3['points_checked']} points")

# weighted sweep on a small grid: free case should saturate everywhere
small = Grid(dim=1, num_points=256, half_extent=30.0)
Vs = pt.sample_lab(small, beta=0.4, center=0.0)
t0 = time.time()
rows = limiting_absorption_sweep(small, 0.4, Vs, lam_values=[0.5, 1.2, 2.0], eps_ladder=(1e-1, 1e-2))
print(f"sweep ({time.time() - t0:.1f}s):")
for r in rows:
    print(f"  lam={r['lam']:.2f} eps={r['eps']:.0e} norm={r['weighted_norm']:.3e} sat={r['saturating']}")
