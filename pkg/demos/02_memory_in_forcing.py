"""Why the obvious Markovian surrogate of a two-step-memory process is not
the best one.

The AR(2) error process has autocovariance gamma(m) = A*phi_+^m + B*phi_-^m.
The "natural" AR(1) surrogate matches its one-step transitions but decays
like phi_M^m with phi_M < phi_+, so it forgets too quickly. Using the
dominant root phi_+ as the AR(1) coefficient keeps the long-range memory.

Run:  python demos/02_memory_in_forcing.py
"""
import numpy as np

from stochparam.forcing import (
    Ar2Spec,
    ar1_autocov,
    ar1_step,
    ar2_autocov_closed_form,
    ar2_roots,
    ar2_step,
    derive_ar1_natural,
    derive_ar1_plus,
    sample_stationary_init,
)

spec = Ar2Spec()  # phi1=0.45, phi2=0.5, stationary variance 1e-4
natural = derive_ar1_natural(spec)
plus = derive_ar1_plus(spec)
root_plus, root_minus = ar2_roots(spec)

print(f"AR(2) roots: phi_+ = {root_plus.real:.3f}, phi_- = {root_minus.real:.3f}")
print(f"natural surrogate coefficient phi_M = {natural.phi:.3f}")
print(f"dominant-root surrogate coefficient = {plus.phi:.3f}")

lags = np.array([0, 1, 2, 5, 10, 20, 50])
print("\nautocovariance ratio to the true AR(2) (1.0 is perfect):")
print("lag   natural   dominant-root")
g_true = ar2_autocov_closed_form(spec, lags)
for lag, g in zip(lags, g_true):
    print(f"{lag:3d}   {ar1_autocov(natural, lag) / g:7.3f}   {ar1_autocov(plus, lag) / g:7.3f}")

# Monte Carlo check of the closed form at a few lags
rng = np.random.default_rng(1)
state = sample_stationary_init(spec, rng, shape=(400,))
chains = np.array([ar2_step(state, spec) for _ in range(4_000)])  # (time, chains)
x = chains - chains.mean()
print("\nsimulated vs closed-form autocovariance:")
for lag in (0, 5, 20):
    emp = (x[: len(x) - lag] * x[lag:]).mean() if lag else x.var()
    print(f"  lag {lag:2d}: {emp:.3e} vs {ar2_autocov_closed_form(spec, lag):.3e}")

# both surrogates share the stationary variance with the truth
state_n = sample_stationary_init(natural, rng, shape=(50_000,))
state_p = sample_stationary_init(plus, rng, shape=(50_000,))
print(f"\nstationary variances: natural {ar1_step(state_n, natural).var():.2e}, "
      f"dominant-root {ar1_step(state_p, plus).var():.2e} (target 1.0e-04)")
