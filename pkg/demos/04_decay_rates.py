"""Whole-space L^2 decay exponents of the standard datum.

Synthesizes ||U(t)|| from independent Fourier modes on a radial grid and
fits the log-log slope over t in [1e2, 1e5].  Expected exponents:
Boltzmann -3/4, one-species Vlasov-Poisson -1/4, one-species
Vlasov-Maxwell -3/8 and the two-species model -3/4.  A 120-point grid keeps
the run short; pass --full for the 400-point grid.
"""

import sys

from kinedecay import MODELS, build_basis, build_collision, compare_models
from kinedecay.decay_analysis import radial_grid

count = 400 if "--full" in sys.argv else 120
basis = build_basis(6)
reports, _ = compare_models(
    MODELS, basis, build_collision(basis, "const"), grid=radial_grid(count=count)
)
for rep in reports:
    row = rep.row()
    print(
        f"{row['model']:>10}  fitted {row['fitted_rate']:+.4f}  expected {row['theoretical_rate']:+.4f}  pass {row['pass']}"
    )
