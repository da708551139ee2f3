"""The scoring battery: density comparison for climate, energy score for
weather.

Run:  python demos/03_scoring_rules.py
"""
import numpy as np

from stochparam.scores import (
    empirical_autocov,
    d_r,
    energy_score,
    hellinger_distance,
    kde_fit,
    kl_divergence,
)

rng = np.random.default_rng(0)

# --- climate scores: compare two stationary densities ----------------------
p = kde_fit(rng.standard_normal(100_000))
q_same = kde_fit(rng.standard_normal(100_000))
q_shift = kde_fit(rng.standard_normal(100_000) + 1.0)

print("density scores (sampling noise floor vs a real one-sigma shift):")
print(f"  KL        same {kl_divergence(p, q_same):.2e}   shifted {kl_divergence(p, q_shift):.3f}"
      f"   (analytic shifted value: 0.5)")
print(f"  Hellinger same {hellinger_distance(p, q_same):.2e}   shifted {hellinger_distance(p, q_shift):.3f}"
      f"   (analytic: {np.sqrt(1 - np.exp(-0.125)):.3f})")

# --- autocovariance comparison ---------------------------------------------
from scipy.signal import lfilter

noise = rng.standard_normal(200_000)
slow = lfilter([1.0], [1.0, -0.95], noise)
fast = lfilter([1.0], [1.0, -0.80], rng.standard_normal(200_000))
r_slow = empirical_autocov(slow, dt=1.0, max_lag=60)
r_fast = empirical_autocov(fast, dt=1.0, max_lag=60)
print(f"\nrelative L2 autocovariance error between phi=0.95 and phi=0.80 chains: "
      f"{d_r(r_slow, r_fast):.3f}")

# --- energy score: strictly proper for ensembles ---------------------------
truth = np.array([0.0, 0.0])
sharp_biased = rng.normal(loc=(1.0, 0.0), scale=0.2, size=(50, 2))
calibrated = rng.normal(loc=(0.0, 0.0), scale=1.0, size=(50, 2))
print("\nenergy score (lower is better):")
print(f"  sharp but biased ensemble: {energy_score(sharp_biased, truth):.3f}")
print(f"  calibrated ensemble:       {energy_score(calibrated, truth):.3f}")
print(f"  hand-checkable case {{0, 2}} vs 1: {energy_score(np.array([[0.0], [2.0]]), np.array([1.0])):.3f}"
      f" (exactly 0.5)")
