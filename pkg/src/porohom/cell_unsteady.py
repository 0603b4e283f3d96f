"""Time-resolved cell problems: the direct route to the memory kernel.

Backward Euler is applied to the unsteady Stokes cell problem starting
from the interpolated unit field e_j.  The first implicit step performs
the projection onto divergence-free fields, so sample times below a few
steps carry the projection transient and are excluded from comparisons.
The kernel sample K[i, j](t) is the cell average of solution j against
direction i.
"""

import numpy as np
import scipy.sparse as sp

from .fem import SolverError, SparseFactor, StokesSystem


class KernelSamples:
    """Sampled kernel history: times (n,), values (n, 2, 2)."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.times.size, 2, 2):
            raise ValueError("values must have shape (len(times), 2, 2)")

    def component(self, i, j):
        return self.values[:, i, j]


def solve_cell_unsteady(mesh, tau, horizon, system=None, lambda1_hint=40.0,
                        store_every=1):
    """March the unsteady cell problems and sample the kernel.

    Parameters
    ----------
    tau : float
        Time step; must resolve the slowest mode, tau <= 0.1/lambda1_hint.
    horizon : float
        Final time; the number of steps is round(horizon / tau).
    store_every : int
        Keep every store_every-th sample (sample 0 is always kept).

    Returns KernelSamples whose first row is the raw t=0 average, equal
    to the fluid area times the identity.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    if tau > 0.1 / lambda1_hint:
        raise ValueError(
            f"tau={tau} too coarse for the slowest mode "
            f"(requires tau <= {0.1 / lambda1_hint:.2e})"
        )
    nsteps = int(round(horizon / tau))
    if nsteps < 1:
        raise ValueError("horizon shorter than one step")
    if system is None:
        system = StokesSystem(mesh)

    nv = system.n_velocity
    npr = system.n_pressure
    mass_tau = (system.mass_r / tau).tocsr()
    cvec = sp.csr_matrix(system.mean_r[:, None])
    stepper = sp.bmat([
        [system.stiff_r + mass_tau, None, system.bx_r.T, None],
        [None, system.stiff_r + mass_tau, system.by_r.T, None],
        [system.bx_r, system.by_r, None, cvec],
        [None, None, cvec.T, None],
    ], format="csc")
    factor = SparseFactor(stepper)

    area = float(np.sum(mesh.triangle_areas()))
    times = [0.0]
    values = [area * np.eye(2)]
    states = [system.unit_load(j) / tau for j in range(2)]  # raw loads
    for n in range(1, nsteps + 1):
        sample = np.empty((2, 2))
        for j in range(2):
            x = factor.solve(states[j], check=False)
            div = system.divergence_norm(x)
            if div > 1e-8 * max(1.0, np.linalg.norm(x)):
                raise SolverError(
                    f"unsteady step {n} direction {j}: divergence {div:.2e}"
                )
            rhs = np.zeros_like(x)
            rhs[:nv] = mass_tau @ x[:nv]
            rhs[nv:2 * nv] = mass_tau @ x[nv:2 * nv]
            states[j] = rhs
            sample[:, j] = system.velocity_average(x)
        if n % store_every == 0 or n == nsteps:
            times.append(n * tau)
            values.append(sample)
    return KernelSamples(np.array(times), np.array(values))


def kernel_time_integral(samples, component=(0, 0), tail=True):
    """Trapezoid integral of one kernel component with a geometric tail.

    The tail beyond the last sample assumes the decay rate observed over
    the final step, which is exact once a single exponential dominates.
    """
    i, j = component
    t = samples.times
    k = samples.values[:, i, j]
    total = float(np.trapezoid(k, t))
    if tail and len(k) >= 2 and k[-1] > 0.0 and k[-2] > k[-1]:
        ratio = k[-1] / k[-2]
        dt = t[-1] - t[-2]
        # sum_{n>=1} k_N * ratio^n * dt
        total += float(k[-1] * dt * ratio / (1.0 - ratio))
    return total


def write_samples_csv(samples, path):
    """CSV rows t,K11,K12,K22 (the sampled kernel is symmetric)."""
    asym = np.max(np.abs(samples.values[:, 0, 1] - samples.values[:, 1, 0]))
    scale = max(1e-30, np.max(np.abs(samples.values)))
    if asym > 1e-8 * scale:
        raise ValueError(f"kernel samples asymmetric by {asym:.2e}")
    with open(path, "w") as fh:
        fh.write("t,K11,K12,K22\n")
        for t, k in zip(samples.times, samples.values):
            k12 = 0.5 * (k[0, 1] + k[1, 0])
            fh.write(f"{float(t)!r},{float(k[0, 0])!r},{float(k12)!r},"
                     f"{float(k[1, 1])!r}\n")


def read_samples_csv(path):
    times = []
    values = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,K11,K12,K22":
            raise ValueError(f"bad kernel samples header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            t, k11, k12, k22 = map(float, line.split(","))
            times.append(t)
            values.append([[k11, k12], [k12, k22]])
    return KernelSamples(np.array(times), np.array(values))
