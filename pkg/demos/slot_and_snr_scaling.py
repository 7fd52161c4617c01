"""
How the bound scales
====================

Two exact laws, and one that is only a trend.
"""

import dataclasses

import numpy as np

from risloc import experiments as ex

# Same channel and phases, 10 dB more SNR: the bound drops by exactly 10.
cfg = dataclasses.replace(ex.default_config("convergence"), n_seeds=3)
for rec in ex.evaluate_crlb(cfg):
    print(rec)

# Repeating a steered pilot L times divides the bound by L at fixed phases.
# After optimisation the curve can only do better, since each L warm-starts
# from the previous optimum.
small = dataclasses.replace(ex.default_config("sweep"), n_seeds=3, ris_sizes=(16, 25),
                            snr_db=(30.0,), slots=(1, 2, 4, 8))
rows = [r for r in ex.run_sweep(small) if r["seed"] == -1]
for n in small.ris_sizes:
    curve = [(r["n_slots"], r["crlb"]) for r in rows if r["n_elements"] == n]
    print(n, "elements:", "  ".join(f"L={L}: {v:.3g}" for L, v in curve))

# More elements usually help, but with random gains this is a tendency only.
print(np.array([[r["n_elements"], r["n_slots"], r["crlb"]] for r in rows]))
