"""Ensemble-size study on the chaotic Lorenz-96 system.

Twenty coupled variables with forcing F=8 are fully chaotic; the guess prior
N(0, I) is deliberately far from the attractor, so the run also exercises
recovery from an initial distribution shift.  Doubling down on particles
buys a visibly better posterior: RMSE and CRPS drop while the 95% coverage
climbs.  This demo uses one seed and fewer particles than the acceptance
suite to finish quickly.
"""

import numpy as np

from ssls import (
    AnnealPlan,
    SslsConfig,
    TrainConfig,
    assimilate,
    make_lorenz96,
    make_schedule,
    simulate_reference,
)

STEPS = 30
model = make_lorenz96(dim=20, forcing=8.0, dt=0.05, obs_noise_std=0.5)
run = simulate_reference(model, STEPS, rng=np.random.default_rng(99))

print(f"{'n':>5} {'rmse':>7} {'spread':>7} {'coverage':>9} {'crps':>7}")
for n in (100, 300):
    config = SslsConfig(
        ensemble_size=n,
        train=TrainConfig(smoothing=0.1, epochs=50, batch_size=100),
        plan=AnnealPlan(betas=make_schedule(10), n_inner=20, step_size=0.01),
        init_epochs=150,
        seed=21,
    )
    records = assimilate(model, run, config)
    rmse = np.mean([r.metrics.rmse for r in records])
    spread = np.mean([r.metrics.spread for r in records])
    cover = np.mean([r.metrics.coverage for r in records])
    crps = np.mean([r.metrics.crps for r in records])
    print(f"{n:5d} {rmse:7.3f} {spread:7.3f} {cover:9.3f} {crps:7.3f}")

print("\nmetrics are averaged over dimensions and time steps; larger ensembles")
print("estimate the prediction score better, which shows up in every column.")
