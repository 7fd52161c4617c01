"""
Estimation and phase design in a loop
=====================================

In practice the channel parameters are not known and the phases are designed
from estimates. This loop re-estimates, rebuilds kappa from the estimate and
re-optimises, warm-starting from the previous phases. The estimator here is a
stand-in: the truth plus Gaussian noise that shrinks each round.
"""

import numpy as np

import risloc
from risloc.channel import snr_to_power
from risloc.scenario import draw_gains

layout = risloc.RisLayout(5, 5, 0.1)
geometry = risloc.ScenarioGeometry.from_layout([0, 0, 0], [50, 100, 0], layout)
array = risloc.ArrayConfig(10, 10)
rng = np.random.default_rng(3)
scenario = risloc.Scenario(geometry, draw_gains(rng, 25), array)
steer = risloc.compute_aod(np.zeros(3), geometry.ris_elements.mean(axis=0))
pilot = risloc.make_pilot(array, 1, snr_to_power(30.0, 10), mode="steered", steer=steer)

spec = risloc.EstimatorSpec("perturbed_oracle", perturbation_scale=1e-3, decay=0.5, seed=1)
result = risloc.alternating_optimize(scenario, spec, pilot, risloc.NoiseModel(1.0, seed=1),
                                     initial_phases=rng.uniform(0, 2 * np.pi, 25))

# score every round's phases against the true channel
truth = risloc.kappa_from_geometry(geometry, scenario.gains, pilot, array)
for k, trace in enumerate(result.traces):
    f = risloc.crlb(risloc.position_fim(truth, trace.phases, 1.0))
    print(f"round {k}: true CRLB {f:.4g}  ({trace.n_steps} descent steps)")
print(result.status, "after", result.n_outer, "rounds")
