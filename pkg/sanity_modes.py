import numpy as np

from kgmachine.grid import Grid, StatePair, Field, energy_norm, l2_norm, l2_pairing
from kgmachine.potentials import PotentialSpec, closed_form_bound_states
from kgmachine.spectrum import solve_scalar_spectrum, agmon_decay_rate
from kgmachine.modes import (
    ClosedFormScalar, GridScalar, build_modes, build_projections,
    apply_comoving_generator, measured_secular_constant,
)

grid = Grid(dim=1, num_points=2048, half_extent=40.0)
pt6 = PotentialSpec(family="poeschl_teller", depth=6.0, width=1.0)

# 1. restructured closed forms still satisfy the scalar eigenrelation
forms = closed_form_bound_states(pt6)
x = grid.axis_coords
V = pt6(x)
for f in forms:
    phi = f.profile(x)
    lap = np.real(np.fft.ifft(-grid.k_squared * np.fft.fft(phi)))
    res = -lap + (1.0 + V) * phi - f.eigenvalue * phi
    nrm = np.sqrt(np.sum(np.abs(phi) ** 2) * grid.spacing)
    dphi = f.derivative(x)
    dspec = np.real(np.fft.ifft(1j * grid.axis_wavenumbers * np.fft.fft(phi)))
    print(f"form eig={f.eigenvalue:+.6f} norm={nrm:.12f} eigres={np.max(np.abs(res)):.2e} "
          f"deriv_err={np.max(np.abs(dphi - dspec)):.2e}")

# 2. mode eigenrelations across velocities
for beta in (0.0, 0.4, 0.8, 0.9):
    bundle = build_modes(grid, pt6, beta=beta, center=0.0)
    Vlab = pt6.sample_lab(grid, beta=beta, center=0.0)
    print(f"beta={beta}: gamma={bundle.gamma:.4f}, modes={[m.kind for m in bundle.modes]}")
    for m in bundle.modes:
        img = apply_comoving_generator(m.pair, beta, Vlab)
        if m.kind in ("growing", "decaying"):
            resid = img - m.pair * m.eigenvalue
            rel = energy_norm(resid) / energy_norm(m.pair)
            print(f"  {m.kind:8s} eig={m.eigenvalue:+.6f} rel_residual={rel:.2e}")
        elif m.kind == "kernel":
            rel = energy_norm(img) / energy_norm(m.pair)
            print(f"  kernel   residual={rel:.2e}")
        else:
            img2 = apply_comoving_generator(img, beta, Vlab)
            rel2 = energy_norm(img2) / energy_norm(m.pair)
            print(f"  secular  L^2 residual={rel2:.2e}")
    c = measured_secular_constant(bundle, Vlab)
    print(f"  secular constant measured={c:.8f} expected={1.0 / bundle.gamma:.8f} "
          f"diff={abs(c - 1.0 / bundle.gamma):.2e}")

# 3. projections: idempotence, compatibility, coefficient recovery
beta = 0.8
bundle = build_modes(grid, pt6, beta=beta, center=-5.0)
proj = build_projections([bundle])
rng = np.random.default_rng(7)
u = StatePair(
    Field(grid, rng.standard_normal(grid.num_points) * np.exp(-((x - 3) ** 2) / 8), "physical"),
    Field(grid, rng.standard_normal(grid.num_points) * np.exp(-((x + 2) ** 2) / 6), "physical"),
)
Pd = proj.component(u)
PPd = proj.component(Pd)
print(f"idempotence: {energy_norm(PPd - Pd) / max(energy_norm(Pd), 1e-30):.2e}")
Pg = proj.component(u, kinds=("growing",))
PgPd = proj.component(Pd, kinds=("growing",))
print(f"compatibility P_grow P_full = P_grow: {energy_norm(PgPd - Pg) / max(energy_norm(Pg), 1e-30):.2e}")
Pk = proj.component(u, kinds=("kernel", "secular"))
PgPk = proj.component(Pk, kinds=("growing",))
print(f"orthogonality P_grow P_neutral = 0: {energy_norm(PgPk) / energy_norm(u):.2e}")
# synthetic combination recovery
coeffs_true = np.array([0.3, -1.2, 0.7, 2.1])
vals = np.tensordot(coeffs_true, proj.pair_stack, axes=(0, 0))
synth = StatePair(Field(grid, vals[0], "physical"), Field(grid, vals[1], "physical"))
rec = proj.coefficients(synth)
print(f"coefficient recovery err={np.max(np.abs(rec - coeffs_true)):.2e}")
rem = proj.remove(u)
print(f"pairings after removal: {np.max(np.abs(proj.pairings(rem))):.2e}")

# 4. two wells, different velocities is NOT supported by one bundle pair ->
#    two bundles at the same time slice, well centers far apart
b1 = build_modes(grid, pt6, beta=0.5, center=-12.0)
b2 = build_modes(grid, pt6, beta=-0.5, center=12.0)
proj2 = build_projections([b1, b2])
print(f"two-well gram cond={np.linalg.cond(proj2.gram):.2e}, n={len(proj2.labels)}")
Pd2 = proj2.component(u)
print(f"two-well idempotence: {energy_norm(proj2.component(Pd2) - Pd2) / max(energy_norm(Pd2), 1e-30):.2e}")
w0 = proj2.component(u, wells=[0])
w0w1 = proj2.component(w0, wells=[1])
print(f"cross-well orthogonality: {energy_norm(w0w1) / energy_norm(u):.2e}")

# 5. grid-scalar path vs closed-form path
spectrum = solve_scalar_spectrum(grid, pt6(x))
states = []
for st in spectrum.states:
    if st.classification == "negative":
        fit = agmon_decay_rate(st.function)
        states.append(GridScalar(st.function, st.eigenvalue, fit.rate))
    elif st.classification == "zero":
        fit = agmon_decay_rate(st.function)
        states.append(GridScalar(st.function, st.eigenvalue, fit.rate))
bundle_g = build_modes(grid, pt6, beta=0.4, center=0.0, scalar_states=states)
bundle_c = build_modes(grid, pt6, beta=0.4, center=0.0)
for mg, mc in zip(bundle_g.modes, bundle_c.modes):
    ng = energy_norm(mg.pair); nc = energy_norm(mc.pair)
    # scalar states have arbitrary sign; compare up to sign
    d1 = energy_norm(mg.pair * (1 / ng) - mc.pair * (1 / nc))
    d2 = energy_norm(mg.pair * (1 / ng) + mc.pair * (1 / nc))
    print(f"grid-vs-closed beta=0.4 {mg.kind:8s}: {min(d1, d2):.2e}")
try:
    build_modes(grid, pt6, beta=0.8, center=0.0, scalar_states=states)
    print("grid path beta=0.8: unexpectedly succeeded")
except ValueError as err:
    print(f"grid path beta=0.8 raises as designed: {str(err)[:40]}")

# 6. a well without closed forms, full grid path
gauss = PotentialSpec(family="gaussian", depth=4.0, width=1.5)
spec_g = solve_scalar_spectrum(grid, gauss(x))
gstates = []
for st in spec_g.states:
    if st.classification in ("negative", "zero"):
        fit = agmon_decay_rate(st.function)
        gstates.append(GridScalar(st.function, st.eigenvalue, fit.rate))
print(f"gaussian well: {len(gstates)} bound states, eigs "
      f"{[f'{s.eigenvalue:.4f}' for s in gstates]}")
gb = build_modes(grid, gauss, beta=0.3, center=0.0, scalar_states=gstates)
Vg = gauss.sample_lab(grid, beta=0.3, center=0.0)
for m in gb.modes:
    img = apply_comoving_generator(m.pair, 0.3, Vg)
    if m.kind in ("growing", "decaying"):
        rel = energy_norm(img - m.pair * m.eigenvalue) / energy_norm(m.pair)
        print(f"gaussian {m.kind:8s} eig={m.eigenvalue:+.6f} rel_residual={rel:.2e}")
