"""
How much can an adversary recover?
==================================

Two error measures describe an adversary who takes the released points at
face value. The average distance (AD) is the mean gap between true and
released positions. The consecutive positioning degree (CPD) looks at runs
of records that land within ``C`` meters of the truth; long runs reveal a
stretch of the route.
"""

from privtravel import average_distance, cpd, cpd_exact_oracle, cpd_hit_probability, sanitize_all, simulate_experiment

ds = simulate_experiment(1, trips=2000, rng=5)
for eps in (0.05, 0.3, 0.8):
    released = sanitize_all(ds.trajectories, eps, seed=5)
    print(f"eps={eps}: AD {average_distance(ds.trajectories, released):6.1f} m "
          f"(gamma mean {2 / (eps / 10):6.1f} m)")

# %%
# CPD at the largest budget. ``p_l`` spreads the counted runs over their
# lengths; the exact expectation enumerates all 2**10 hit patterns.
released = sanitize_all(ds.trajectories, 0.8, seed=5)
for C in (20.0, 40.0, 80.0):
    rep = cpd(ds.trajectories, released, C)
    exact = cpd_exact_oracle(10, cpd_hit_probability(C, 0.8, 10))
    print(f"C={C:>4.0f} m: P(l=10) simulated {rep.p_l[10]:.3f}, exact {exact.p_l[10]:.3f}; "
          f"mean correct {rep.mean_correct:.2f} of 10")

# %%
# The full run-length distribution for C = 40 m.
rep = cpd(ds.trajectories, released, 40.0)
print("l   :", " ".join(f"{l:>5}" for l in range(11)))
print("p(l):", " ".join(f"{v:5.3f}" for v in rep.p_l))
