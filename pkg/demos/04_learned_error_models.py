"""Learn the conditional error distribution of a reduced model from data.

Generates a short two-scale climate dataset, diagnoses the one-step error of
the reduced map, fits a small mixture density network and the polynomial
baseline, and compares their conditional predictions.

Run:  python demos/04_learned_error_models.py   (about a minute)
"""
import numpy as np

from stochparam.dynamics import L96Spec
from stochparam.harness import generate_climate_dataset
from stochparam.mdn import (
    TrainConfig,
    fit_poly_ar1,
    forward,
    mixture_mean,
    sample_mixture,
    train_mdn,
)

system = L96Spec()
print("generating a 60-time-unit climate dataset...")
ds = generate_climate_dataset(system, n_steps=60_000, dt=1e-3, seed=0)
print(f"  {len(ds)} (state, error) pairs; error rms {np.sqrt((ds.m ** 2).mean()):.2e}")

config = TrainConfig(hidden=(32, 32), n_components=4, epochs=10, batch_size=512, seed=0)
print("training a weakly-local mixture density network...")
model = train_mdn(ds, config, mode="weakly-local")
hist = model.loss_history["val"]
print(f"  validation NLL {hist[0]:.3f} -> {min(hist):.3f}")

baseline = fit_poly_ar1(ds, degree=3)
print(f"polynomial baseline: residual AR(1) coefficient {baseline.phi_r:.3f}")

# conditional means along a line in state space through the dataset mean
probe = np.tile(ds.x.mean(axis=0), (5, 1))
probe[:, 0] = np.linspace(ds.x[:, 0].min(), ds.x[:, 0].max(), 5)
params = forward(model, probe)
net_mean = mixture_mean(params)[:, 0]
poly_mean = baseline.conditional_mean(probe[:, 0])
print("\nconditional mean of the first error component along X_1:")
print("   X_1      network    polynomial")
for row, nm, pm in zip(probe[:, 0], net_mean, poly_mean):
    print(f" {row:7.2f}   {nm:9.5f}   {pm:9.5f}")

rng = np.random.default_rng(1)
draws = np.array([sample_mixture(forward(model, probe[2]), rng) for _ in range(2_000)])
print(f"\nsampled error spread at the middle probe: std {draws.std(axis=0)[:4]}")
