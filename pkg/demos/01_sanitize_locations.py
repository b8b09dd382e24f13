"""
Releasing a location with planar Laplace noise
==============================================

A traveler reports a position ``(x, y)`` in meters. Before it leaves the
phone, the position is pushed away in a uniformly random direction by a
distance that follows a gamma law with shape 2 and rate ``epsilon``. Small
``epsilon`` means strong privacy and large displacements.
"""
import numpy as np

from privtravel import sample_polar_noise, sanitize_point, sanitize_points, usefulness_delta

rng = np.random.default_rng(2024)

# One record, released at 0.05 per meter: the typical displacement is 2/eps = 40 m.
print("released:", sanitize_point((120.0, 80.0), 0.05, rng))

# %%
# The displacement radius is what matters for utility. Its mean and spread
# follow directly from the gamma law.
noise = sample_polar_noise(0.05, rng, size=200_000)
print(f"mean radius {noise.r.mean():.1f} m (theory 40.0), sd {noise.r.std():.1f} m (theory {np.sqrt(2) / 0.05:.1f})")

# %%
# How often does the released point stay within ``alpha`` meters of the
# truth? The closed form is the gamma CDF; a simulation agrees.
for eps, alpha in [(2.0, 1.5), (0.05, 20.0), (0.05, 60.0)]:
    out = sanitize_points(np.zeros((100_000, 2)), eps, rng)
    sim = np.mean(np.hypot(out[:, 0], out[:, 1]) <= alpha)
    print(f"eps={eps:<5} alpha={alpha:<5} within alpha: closed form {usefulness_delta(eps, alpha):.4f}, "
          f"simulated {sim:.4f}")

# %%
# A trajectory of ``n`` records shares one budget: each record gets
# ``epsilon_total / n``. Ten records at a total of 0.3 leave 0.03 per record.
from privtravel import PrivacyBudget, Trajectory, sanitize_trajectory

trip = Trajectory("demo", np.arange(10) * 20.0, np.column_stack([np.arange(10) * 480.0, np.zeros(10)]))
budget = PrivacyBudget.for_trajectory(0.3, len(trip))
released = sanitize_trajectory(trip, budget, rng)
print("per-record epsilon:", budget.epsilon_record)
print("displacements (m):", np.round(np.hypot(*(released.xy - trip.xy).T), 1))
