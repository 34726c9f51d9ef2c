"""How close can two reflectors be before they merge?

Sweeps the separation from a tenth of the Rayleigh resolution up to
the resolution itself at 20 dB and prints the success rate with the
threshold rho / 4.
"""

import math

import numpy as np

from gridless_doa.harness import ExperimentConfig, run_separation_sweep
from gridless_doa.metrics import resolution_from

config = ExperimentConfig(kind="separation_sweep", n_trials=20, seed=5, separation_snrs_db=(20.0,),
                          algorithms=("dbf", "fnlanm"))
rho, _ = resolution_from(config.wavelength, config.aperture_m)
grid = tuple(float(v) for v in np.round(np.linspace(0.1, 1.0, 10) * math.degrees(rho), 3))
table = run_separation_sweep(config.replace(separation_grid_deg=grid))

print(f"rho = {math.degrees(rho):.2f} deg")
print(f"{'delta deg':>9} {'SR DBF':>7} {'SR FNLANM':>10}")
for d in grid:
    print(f"{d:9.3f} {table.row(d, 'dbf').sr:7.2f} {table.row(d, 'fnlanm').sr:10.2f}")
