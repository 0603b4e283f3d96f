"""Steady cell problems and the averaged permeability tensor.

For each coordinate direction e_j the steady Stokes problem on the
perforated cell is solved with unit body force e_j, no slip on the
inclusion and periodicity across the outer faces.  The permeability
entry K[i, j] is the cell average of the i-th component of the j-th
solution.
"""

import numpy as np

from .fem import SolverError, StokesSystem


class CellSolution:
    """Solutions of the d steady cell problems plus the averaged tensor."""

    def __init__(self, system, saddle_vectors, k_bar):
        self.system = system
        self.saddle_vectors = saddle_vectors
        self.k_bar = k_bar


def solve_cell_steady(mesh, system=None, symmetry_tol=1e-8):
    """Solve the steady cell problems and average the velocities.

    Returns a CellSolution whose k_bar is the symmetrized 2x2 tensor.
    Raises SolverError if the raw tensor is asymmetric beyond
    symmetry_tol (relative to its norm) or fails to be positive
    definite.
    """
    if system is None:
        system = StokesSystem(mesh)
    factor = system.factor
    vectors = []
    raw = np.empty((2, 2))
    for j in range(2):
        x = factor.solve(system.unit_load(j))
        div = system.divergence_norm(x)
        if div > 1e-10 * max(1.0, np.linalg.norm(x)):
            raise SolverError(f"cell solution {j} divergence residual {div:.2e}")
        vectors.append(x)
        raw[:, j] = system.velocity_average(x)

    scale = np.linalg.norm(raw)
    if abs(raw[0, 1] - raw[1, 0]) > symmetry_tol * max(scale, 1e-30):
        raise SolverError(
            f"permeability asymmetry {abs(raw[0, 1] - raw[1, 0]):.2e} "
            f"exceeds {symmetry_tol:.0e} relative tolerance"
        )
    k_bar = 0.5 * (raw + raw.T)
    eigs = np.linalg.eigvalsh(k_bar)
    if eigs[0] <= 0.0:
        raise SolverError(f"permeability not positive definite: eigs {eigs}")
    return CellSolution(system, vectors, k_bar)


def energy_tensor(solution):
    """Permeability recomputed from gradient energies of the solutions.

    Entry [i, j] is the integral of grad(w_i):grad(w_j), which equals the
    velocity-average form when the discrete solves are exact.
    """
    system = solution.system
    stiff = system.stiff_r
    nv = system.n_velocity
    out = np.empty((2, 2))
    for i in range(2):
        xi = solution.saddle_vectors[i]
        for j in range(2):
            xj = solution.saddle_vectors[j]
            out[i, j] = (xi[:nv] @ (stiff @ xj[:nv])
                         + xi[nv:2 * nv] @ (stiff @ xj[nv:2 * nv]))
    return out


def write_permeability_csv(k_bar, path):
    """CSV rows i,j,value with 1-based indices."""
    with open(path, "w") as fh:
        fh.write("i,j,value\n")
        for i in range(2):
            for j in range(2):
                fh.write(f"{i + 1},{j + 1},{float(k_bar[i, j])!r}\n")


def read_permeability_csv(path):
    k = np.zeros((2, 2))
    seen = np.zeros((2, 2), dtype=bool)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "i,j,value":
            raise ValueError(f"bad permeability header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            i, j, value = line.split(",")
            k[int(i) - 1, int(j) - 1] = float(value)
            seen[int(i) - 1, int(j) - 1] = True
    if not seen.all():
        raise ValueError("permeability file is missing entries")
    return k
