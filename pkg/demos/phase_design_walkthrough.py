"""
Designing RIS phases for localisation
=====================================

A 5x5 RIS sits between a 10-antenna BS and a 10-antenna MS. Every RIS element
is one propagation path. The lower bound on the MS position error depends on
the RIS phases, and here we pick the phases that make that bound small.
"""

import numpy as np

import risloc
from risloc.channel import snr_to_power

# geometry: BS at the origin, RIS centred near (-19.8, 50, 20.2), MS on the ground
layout = risloc.RisLayout(rows=5, cols=5, element_spacing=0.1, reference=(-20.0, 50.0, 20.0))
geometry = risloc.ScenarioGeometry.from_layout([0, 0, 0], [50, 100, 0], layout)
array = risloc.ArrayConfig(n_tx=10, n_rx=10)
print(geometry.n_paths, "paths")

rng = np.random.default_rng(7)
gains = (rng.standard_normal(25) + 1j * rng.standard_normal(25)) / np.sqrt(2)

# one pilot slot at 30 dB, beam pointed at the RIS
steer = risloc.compute_aod(np.zeros(3), geometry.ris_elements.mean(axis=0))
pilot = risloc.make_pilot(array, 1, snr_to_power(30.0, array.n_rx), mode="steered", steer=steer)

###############################################################################
# The kappa tensor holds everything that does not depend on the phases.
# Build it once; after that each CRLB evaluation is a small quadratic form.

kappa = risloc.kappa_from_geometry(geometry, gains, pilot, array)
phases = rng.uniform(0, 2 * np.pi, 25)
J = risloc.position_fim(kappa, phases, 1.0)
print("FIM at random phases:\n", J.matrix)
print("CRLB at random phases: %.4g m^2" % risloc.crlb(J))

###############################################################################
# Gradient descent with backtracking

trace = risloc.gdm_optimize(kappa, phases, 1.0, risloc.GdmConfig(max_iterations=300))
obj = trace.objectives
for k in (0, 1, 5, 20, 50, 100, len(obj) - 1):
    if k < len(obj):
        print(f"iter {k:4d}  CRLB {obj[k]:.4g}")
print("status:", trace.status)

# a global phase rotation leaves the bound alone
print(np.isclose(risloc.crlb(risloc.position_fim(kappa, trace.phases + 1.3, 1.0)),
                 trace.final_objective, rtol=1e-10))
