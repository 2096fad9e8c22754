"""Scratch validation for evolution.py before writing the real tests."""
import math
import time

import numpy as np

from kgmachine.grid import (
    Field, Grid, StatePair, energy_norm, l2_norm, weighted_local_norm,
)
from kgmachine.potentials import PotentialSpec, Trajectory, reduce_trajectory
from kgmachine.evolution import (
    EvolutionScenario, FrozenWellChannel, StateStream, WellMotion,
    apply_T, apply_T0, apply_T1, damped_step, damped_step_split,
    dump_snapshots, evolve, free_propagate, load_snapshots, neumann_invert,
    truncated_duhamel_norm,
)
from kgmachine.modes import build_modes, build_projections

rng = np.random.default_rng(7)


def smooth_state(grid, seed, kmax=3.0):
    r = np.random.default_rng(seed)
    k = grid.axis_wavenumbers
    mask = np.abs(k) <= kmax
    def comp():
        spec = (r.normal(size=grid.num_points) + 1j * r.normal(size=grid.num_points)) * mask
        vals = np.fft.ifft(spec * np.exp(-k**2))
        return np.real(vals)
    return StatePair(Field(grid, comp(), "physical"), Field(grid, comp(), "physical"))


print("== free propagator ==")
g = Grid(dim=1, num_points=256, half_extent=20.0)
x = g.axis_coords
k0 = 2.0 * math.pi / (2 * g.half_extent)  # fundamental
# single-mode oracle at k = 8*k0
kk = 8 * k0
u = StatePair(Field(g, np.cos(kk * x), "physical"), Field(g, np.zeros_like(x), "physical"))
tau = 0.37
out = free_propagate(u, tau)
disp = math.sqrt(1 + kk * kk)
pred1 = math.cos(tau * disp) * np.cos(kk * x)
pred2 = -disp * math.sin(tau * disp) * np.cos(kk * x)
print("single-mode err:", np.max(np.abs(out.first.values - pred1)), np.max(np.abs(out.second.values - pred2)))

w = smooth_state(g, 1)
ab = free_propagate(free_propagate(w, 0.31), 0.54)
once = free_propagate(w, 0.85)
print("group law err:", energy_norm(ab - once) / energy_norm(w))
print("energy conservation:", abs(energy_norm(free_propagate(w, 5.0)) - energy_norm(w)) / energy_norm(w))

print("== evolve: V=0 equals free ==")
scen0 = EvolutionScenario(grid=g, wells=(), time_step=0.05)
run0 = evolve(w, scen0, (0.0, 1.0))
diff = energy_norm(run0.final_state - free_propagate(w, 1.0)) / energy_norm(w)
print("V=0 vs free:", diff)
drift = np.max(np.abs(np.diff(run0.diagnostics.energy))) / run0.diagnostics.energy[0]
print("free run per-step energy drift:", drift)

print("== static kernel stationarity ==")
gs = Grid(dim=1, num_points=512, half_extent=30.0)
pt6 = PotentialSpec(depth=6.0, width=1.0)
bundle0 = build_modes(gs, pt6, beta=0.0)
kernel_mode = bundle0.by_kind("kernel")[0].pair
for dt, steps in ((0.025, 100), (0.0125, 200)):
    scen = EvolutionScenario(
        grid=gs,
        wells=(WellMotion(pt6, Trajectory.linear(0.0)),),
        time_step=dt,
    )
    run = evolve(kernel_mode, scen, (0.0, dt * steps))
    drift = energy_norm(run.final_state - kernel_mode) / energy_norm(kernel_mode)
    print(f"kernel drift dt={dt}: {drift:.3e}")

print("== Richardson on a moving run ==")
gm = Grid(dim=1, num_points=512, half_extent=30.0)
wave = smooth_state(gm, 5)
errs = []
for dt in (0.04, 0.02, 0.01):
    scen = EvolutionScenario(
        grid=gm,
        wells=(WellMotion(pt6, Trajectory.linear(0.4)),),
        time_step=dt,
    )
    run = evolve(wave, scen, (0.0, 2.0))
    errs.append(run.final_state)
e1 = energy_norm(errs[0] - errs[2])
e2 = energy_norm(errs[1] - errs[2])
# error(dt) ~ C dt^2: ||u_dt - u_dt/4|| / ||u_dt/2 - u_dt/4|| ~ (16-1)/(4-1) = 5
print("Richardson ratio (expect ~5 for the 4x ladder):", e1 / e2)
scenA = EvolutionScenario(grid=gm, wells=(WellMotion(pt6, Trajectory.linear(0.4)),), time_step=0.02)
runA = evolve(wave, scenA, (0.0, 2.0))
runB1 = evolve(wave, scenA, (0.0, 1.0))
runB2 = evolve(runB1.final_state, scenA, (1.0, 2.0))
print("semigroup:", energy_norm(runA.final_state - runB2.final_state) / energy_norm(wave))

print("== full-run frozen energy ==")
def frozen_energy(state, vvals):
    base = energy_norm(state) ** 2
    pot = np.sum(vvals * np.abs(state.first.values) ** 2) * state.grid.quadrature_weight
    return base + pot

for dt in (0.025, 0.0125):
    scen = EvolutionScenario(
        grid=gs, wells=(WellMotion(pt6, Trajectory.linear(0.0)),), time_step=dt,
        snapshot_stride=1,
    )
    run = evolve(smooth_state(gs, 9), scen, (0.0, 1.0))
    vv = pt6.sample_lab(gs, beta=0.0, center=0.0)
    es = [frozen_energy(s, vv) for s in run.snapshots]
    print(f"dt={dt} max per-step frozen-energy drift:", np.max(np.abs(np.diff(es))) / es[0])

print("== T0 recursion vs direct double loop ==")
gt = Grid(dim=1, num_points=512, half_extent=30.0)
beta = 0.4
chan = FrozenWellChannel(gt, pt6, beta=beta)
dt = 0.025
nsteps = 50
times = np.arange(nsteps + 1) * dt
sa = smooth_state(gt, 11)
sb = smooth_state(gt, 12)
gstream = StateStream(gt, times, [sa * math.cos(1.3 * t) + sb * math.sin(0.7 * t) for t in times])
t_start = time.time()
fast = apply_T0(gstream, chan)
print("recursion time:", time.time() - t_start)

def t0_direct(stream, channel):
    dt_ = float(stream.times[1] - stream.times[0])
    outs = [stream.states[0] * 0.0]
    for n in range(1, len(stream.times)):
        acc = stream.states[0] * 0.0
        for m in range(n + 1):
            wgt = dt_ if 0 < m < n else dt_ / 2.0
            term = channel.apply(float(stream.times[m]), stream.states[m]) * wgt
            acc = acc + free_propagate(term, float(stream.times[n] - stream.times[m]))
        outs.append(acc)
    return StateStream(stream.grid, stream.times, outs)

t_start = time.time()
slow = t0_direct(gstream, chan)
print("direct time:", time.time() - t_start)
num = max(energy_norm(a - b) for a, b in zip(fast.states, slow.states))
den = max(energy_norm(s) for s in fast.states)
print("recursion vs direct:", num / den)

print("== small-t leading order ==")
const_stream = StateStream(gt, np.array([0.0, dt / 4]), [sa, sa])
lead = apply_T0(const_stream, chan)
pred = chan.apply(0.0, sa) * (dt / 4)
print("leading-order rel err:", energy_norm(lead.states[1] - pred) / energy_norm(pred))

print("== T vs T0, a == 0 ==")
lin = Trajectory.linear(beta)
red0 = reduce_trajectory(lin, horizon=times[-1])
t_eq = apply_T(gstream, chan, red0)
print("T == T0 at a=0:", max(energy_norm(a - b) for a, b in zip(t_eq.states, fast.states)) / den)

print("== (T - T0) monotone in drift amplitude ==")
vals = []
for amp in (0.04, 0.02, 0.01):
    om = 1.7

    def pos(t, amp=amp, om=om):
        return np.array([beta * t + (amp / om) * (1.0 - math.cos(om * t))])

    def vel(t, amp=amp, om=om):
        return np.array([beta + amp * math.sin(om * t)])

    traj = Trajectory(dim=1, position=pos, velocity=vel)
    red = reduce_trajectory(traj, horizon=float(times[-1]))
    tg = apply_T(gstream, chan, red)
    w_norm = max(
        weighted_local_norm(a - b, [np.array([beta * t])])
        for a, b, t in zip(tg.states, fast.states, times)
    )
    vals.append(w_norm)
    print(f"amp={amp}: sup weighted (T-T0)g = {w_norm:.4e}")
print("monotone:", vals[0] > vals[1] > vals[2])

print("== operator identity ==")
for dt_i, label in ((0.025, "dt"), (0.0125, "dt/2")):
    n_i = int(round(1.5 / dt_i))
    tms = np.arange(n_i + 1) * dt_i
    gstr = StateStream(gt, tms, [sa * math.cos(1.3 * t) + sb * math.sin(0.7 * t) for t in tms])
    t1 = apply_T1(gstr, chan)
    one_plus = gstr + t1
    t0_of = apply_T0(one_plus, chan)
    resid_stream = (one_plus - t0_of) - gstr
    resid = resid_stream.norm() / gstr.norm()
    print(f"(1-T0)(1+T1) residual at {label}: {resid:.3e}  (10*dt^2 = {10*dt_i**2:.3e})")
    t0g = apply_T0(gstr, chan)
    one_minus = gstr - t0g
    t1_of = apply_T1(one_minus, chan)
    resid2 = ((one_minus + t1_of) - gstr).norm() / gstr.norm()
    print(f"(1+T1)(1-T0) residual at {label}: {resid2:.3e}")

print("== kappa sensitivity via channel split ==")
chan_k = FrozenWellChannel(gt, pt6, beta=beta)
chan_2k = FrozenWellChannel(gt, pt6, beta=beta, kappa=2 * chan_k.kappa)
short_times = np.arange(41) * dt
gshort = StateStream(gt, short_times, [sa * math.cos(1.3 * t) + sb * math.sin(0.7 * t) for t in short_times])
out_k = apply_T1(gshort, chan_k, channel_split=True)
out_2k = apply_T1(gshort, chan_2k, channel_split=True)
pc_diff = 0.0
pd_diff = 0.0
for t, a, b in zip(short_times, out_k.states, out_2k.states):
    proj = chan_k.projections(float(t))
    pc_diff = max(pc_diff, energy_norm(proj.continuous_part(a) - proj.continuous_part(b)))
    pd_diff = max(pd_diff, energy_norm(proj.discrete_part(a) - proj.discrete_part(b)))
scale = max(energy_norm(s) for s in out_k.states)
print("P_c channel diff (rel):", pc_diff / scale, " P_d channel diff (rel):", pd_diff / scale)

print("== split vs direct at beta=0 ==")
chan0 = FrozenWellChannel(gt, pt6, beta=0.0)
state0 = smooth_state(gt, 21)
d1 = damped_step(state0, chan0, 0.0, dt)
d2 = damped_step_split(state0, chan0, 0.0, dt)
print("one-step split vs direct (beta=0):", energy_norm(d1 - d2) / energy_norm(state0), "~O(dt^3)...")

print("== neumann ==")
res_id = neumann_invert(gshort, lambda s: StateStream(s.grid, s.times, [st * 0.0 for st in s.states]))
print("T=0 residual:", res_id.residual, "terms:", res_id.terms_used)

pt2 = PotentialSpec(depth=2.0, width=1.0)
chan_weak = FrozenWellChannel(gt, pt2, beta=0.3)
short2 = np.arange(31) * 0.02
gweak = StateStream(gt, short2, [sa * math.cos(1.3 * t) + sb * math.sin(0.7 * t) for t in short2])
res_w = neumann_invert(gweak, lambda s: apply_T0(s, chan_weak))
print("weak-channel neumann residual:", res_w.residual, "terms:", res_w.terms_used,
      "increments:", [f"{v:.2e}" for v in res_w.increments[:6]])

try:
    neumann_invert(gstream, lambda s: apply_T0(s, chan))
    print("ERROR: no divergence raised")
except ValueError as e:
    print("divergence raised ok:", str(e)[:60])

print("== truncated duhamel ==")
gtd = Grid(dim=1, num_points=1024, half_extent=100.0)
beta1, beta2 = -0.4, 0.4
w_traj = Trajectory.linear(beta1)

def source(s):
    xs = gtd.axis_coords - beta2 * s
    return np.exp(-0.25 * xs**2) * np.cos(1.5 * xs)

print("f=0 -> ", truncated_duhamel_norm(lambda s: np.zeros(gtd.num_points), gtd, 5.0, 60.0, 0.05, w_traj).value)
try:
    truncated_duhamel_norm(source, gtd, 60.0, 60.0, 0.05, w_traj)
    print("ERROR: horizon error not raised")
except ValueError as e:
    print("horizon error ok:", str(e)[:50])

norms = []
for M in (5.0, 10.0, 20.0, 40.0):
    t_start = time.time()
    r = truncated_duhamel_norm(source, gtd, M, 60.0, 0.05, w_traj, sigma=15.0)
    norms.append(r.value)
    print(f"M={M}: norm={r.value:.4e} ({time.time()-t_start:.2f}s)")
print("strictly decreasing:", all(a > b for a, b in zip(norms, norms[1:])))
slope = -np.polyfit(np.log([5.0, 10.0, 20.0, 40.0]), np.log(norms), 1)[0]
print("fitted eta-hat:", slope)

print("== snapshots round trip ==")
import tempfile
with tempfile.TemporaryDirectory() as td:
    scen = EvolutionScenario(grid=g, wells=(), time_step=0.05, snapshot_stride=4)
    runs = evolve(w, scen, (0.0, 0.4))
    dump_snapshots(runs, td)
    tms, states, sidecar = load_snapshots(td)
    ok = max(energy_norm(a - b) for a, b in zip(states, runs.snapshots))
    print("round trip max err:", ok, "count:", len(states), "endianness:", sidecar["endianness"])

print("== evolve amplitude recording smoke ==")
scen_amp = EvolutionScenario(
    grid=gs,
    wells=(WellMotion(pt6, Trajectory.linear(0.4)),),
    time_step=0.025,
    amplitude_wells=(0,),
    diagnostic_stride=4,
)
bundle = build_modes(gs, pt6, beta=0.4)
grow = bundle.by_kind("growing")[0].pair
run_amp = evolve(grow, scen_amp, (0.0, 1.0))
amps = run_amp.diagnostics.amplitudes[:, 0, 0, 0]
tsamp = run_amp.diagnostics.times
rate_fit = np.polyfit(tsamp, np.log(np.abs(amps)), 1)[0]
nu_over_gamma = bundle.modes[0].rate / bundle.gamma
print("measured growth rate:", rate_fit, "expected nu/gamma:", nu_over_gamma)
