"""Per-mode decay rate of each model across wave numbers.

Prints the spectral gap -max Re eig(A(k)) on a coarse grid.  The
one-species Vlasov-Maxwell-Boltzmann gap degenerates at both ends like
|k|^4 near zero and |k|^-2 at infinity, while the Boltzmann gap saturates.
"""

import numpy as np

from kinedecay import MODELS, ModelSpec, assemble_generator, build_basis, build_collision
from kinedecay.decay_analysis import phi
from kinedecay.spectral_generator import spectral_abscissa

basis = build_basis(6)
collision = build_collision(basis, "const")
radii = np.geomspace(1e-2, 1e2, 9)

print("|k|       " + "".join(f"{m:>12}" for m in MODELS) + "   phi(|k|)")
for r in radii:
    gaps = []
    for model in MODELS:
        gen = assemble_generator(np.array([r, 0.0, 0.0]), ModelSpec(model, collision), basis)
        gaps.append(-spectral_abscissa(gen)[0])
    print(f"{r:<10.3g}" + "".join(f"{g:12.4e}" for g in gaps) + f"{phi(r):11.4e}")
