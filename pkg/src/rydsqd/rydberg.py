"""Statevector simulation of a globally driven Rydberg-atom array.

Hamiltonian (angular units, rad/us):

    H(t) = sum_j Omega(t) (e^{i phi}|g_j><r_j| + h.c.)
           - sum_j Delta(t) n_j + sum_{j<k} V_jk n_j n_k

with n_j = |r_j><r_j| and V_jk = C6 / |r_j - r_k|^6.  Note the Rabi term
carries no factor 1/2: a resonant pulse gives P(r) = sin^2(integral Omega dt).
Schedule frequencies are entered in MHz and converted by 2*pi internally;
C6 = 862690 * 2*pi MHz um^6 already carries its 2*pi.  Pulse shapes are
functions of normalized time s = t / t_max: Omega(s) = Omega_max sin^2(pi s)
(zero at both ends, as the hardware requires) and Delta(s) ramps linearly
from delta_start to delta_end.

Statevector ordering: qubit j is bit j of the basis index (qubit 0 least
significant), |g> = 0 and |r> = 1.  Sample files list qubit 0 leftmost.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

TWO_PI = 2.0 * np.pi

#: van der Waals coefficient, rad/us * um^6 (the quoted 862690 is in MHz).
C6 = 862690.0 * TWO_PI

#: statevector size cap: larger systems must ingest external sample files
MAX_ATOMS = 24

# hardware envelope, validated with warnings only
_MAX_OMEGA_RAD = 15.8          # rad/us
_MAX_ABS_DELTA_RAD = 125.0     # rad/us
_MIN_SPACING_UM = 4.0          # um
_MAX_TIME_US = 4.0             # us


@dataclass(frozen=True)
class AtomGeometry:
    """2-D atom positions in micrometers."""

    positions: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must be a list of 2-D coordinates")
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= 0.0:
            raise ValueError("coincident atoms")

    @property
    def n_atoms(self) -> int:
        return len(self.positions)

    @classmethod
    def chain(cls, n: int, spacing: float) -> "AtomGeometry":
        """One-dimensional chain along x with the given lattice spacing."""
        return cls(tuple((i * spacing, 0.0) for i in range(n)))


@dataclass(frozen=True)
class PulseSchedule:
    """Global drive defined by five hyperparameters (MHz, rad, us)."""

    omega_max: float
    delta_start: float
    delta_end: float
    phi: float
    t_max: float

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.omega_max < 0:
            raise ValueError(f"omega_max must be >= 0, got {self.omega_max}")

    def omega_rad(self, t: float) -> float:
        """Rabi amplitude at time t (us), in rad/us."""
        s = t / self.t_max
        return TWO_PI * self.omega_max * np.sin(np.pi * s) ** 2

    def delta_rad(self, t: float) -> float:
        """Detuning at time t (us), in rad/us."""
        s = t / self.t_max
        return TWO_PI * (self.delta_start + (self.delta_end - self.delta_start) * s)

    def as_theta(self) -> np.ndarray:
        return np.array([self.omega_max, self.delta_start, self.delta_end, self.phi, self.t_max])

    @classmethod
    def from_theta(cls, theta: Sequence[float]) -> "PulseSchedule":
        omega_max, delta_start, delta_end, phi, t_max = (float(x) for x in theta)
        return cls(omega_max, delta_start, delta_end, phi, t_max)


def vdw_matrix(geometry: AtomGeometry) -> np.ndarray:
    """Pairwise van der Waals energies C6/r^6 (rad/us), zero diagonal."""
    pos = np.asarray(geometry.positions, dtype=float)
    diff = pos[:, None, :] - pos[None, :, :]
    r2 = (diff**2).sum(-1)
    np.fill_diagonal(r2, np.inf)
    return C6 / r2**3


def ground_state(n_atoms: int) -> np.ndarray:
    """|g...g> statevector."""
    psi = np.zeros(1 << n_atoms, dtype=complex)
    psi[0] = 1.0
    return psi


def default_steps(t_max: float) -> int:
    """Step count from dt = min(1e-3 us, t_max/500)."""
    return max(500, int(np.ceil(t_max / 1e-3)))


def _warn_hardware_limits(schedule: PulseSchedule, geometry: AtomGeometry) -> None:
    if TWO_PI * schedule.omega_max > _MAX_OMEGA_RAD:
        warnings.warn(
            f"omega_max={schedule.omega_max} MHz exceeds the hardware Rabi cap "
            f"({_MAX_OMEGA_RAD / TWO_PI:.2f} MHz); simulating anyway",
            stacklevel=3,
        )
    for d in (schedule.delta_start, schedule.delta_end):
        if abs(TWO_PI * d) > _MAX_ABS_DELTA_RAD:
            warnings.warn(
                f"detuning {d} MHz exceeds the hardware bound "
                f"({_MAX_ABS_DELTA_RAD / TWO_PI:.2f} MHz); simulating anyway",
                stacklevel=3,
            )
    if schedule.t_max > _MAX_TIME_US:
        warnings.warn(f"t_max={schedule.t_max} us exceeds the hardware limit; simulating anyway", stacklevel=3)
    pos = np.asarray(geometry.positions, dtype=float)
    if len(pos) > 1:
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() < _MIN_SPACING_UM:
            warnings.warn(
                f"minimum atom spacing {dist.min():.2f} um is below the hardware "
                f"limit ({_MIN_SPACING_UM} um); simulating anyway",
                stacklevel=3,
            )


def evolve(
    schedule: PulseSchedule,
    geometry: AtomGeometry,
    initial: Optional[np.ndarray] = None,
    steps: Optional[int] = None,
) -> np.ndarray:
    """Propagate through the drive schedule with second-order split stepping.

    Each step applies exp(-i dt/2 D) exp(-i dt R) exp(-i dt/2 D) with the
    diagonal part D (detuning + interactions) treated exactly and the Rabi
    part R as commuting per-qubit rotations, both evaluated at the step
    midpoint.  Output is normalized; the stepping itself is exactly unitary.
    """
    n = geometry.n_atoms
    if n > MAX_ATOMS:
        raise ValueError(f"{n} atoms exceeds the statevector cap of {MAX_ATOMS}")
    dim = 1 << n
    if initial is None:
        psi = ground_state(n)
    else:
        psi = np.asarray(initial, dtype=complex).copy()
        if psi.shape != (dim,):
            raise ValueError(f"initial state has dimension {psi.shape}, expected ({dim},)")
    if steps is None:
        steps = default_steps(schedule.t_max)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    _warn_hardware_limits(schedule, geometry)

    V = vdw_matrix(geometry)
    idx = np.arange(dim, dtype=np.int64)
    n_excited = np.bitwise_count(idx).astype(float)
    v_diag = np.zeros(dim)
    for j in range(n):
        for k in range(j + 1, n):
            v_diag += V[j, k] * ((idx >> j) & (idx >> k) & 1)

    dt = schedule.t_max / steps
    phase = np.exp(1j * schedule.phi)
    shape_masks = [(dim >> (q + 1), 2, 1 << q) for q in range(n)]
    for step in range(steps):
        t_mid = (step + 0.5) * dt
        omega = schedule.omega_rad(t_mid)
        delta = schedule.delta_rad(t_mid)
        diag_half = np.exp(-0.5j * dt * (v_diag - delta * n_excited))
        psi *= diag_half
        if omega != 0.0:
            theta = omega * dt
            c, s = np.cos(theta), np.sin(theta)
            for q, shp in enumerate(shape_masks):
                psi_r = psi.reshape(shp)
                a0 = psi_r[:, 0, :].copy()
                a1 = psi_r[:, 1, :]
                psi_r[:, 0, :] = c * a0 - 1j * s * phase * a1
                psi_r[:, 1, :] = -1j * s * np.conj(phase) * a0 + c * a1
        psi *= diag_half
    psi /= np.linalg.norm(psi)
    return psi


def sample(state: np.ndarray, shots: int, seed: int) -> list[str]:
    """Computational-basis samples as bitstrings with qubit 0 leftmost."""
    state = np.asarray(state)
    probs = np.abs(state) ** 2
    norm = probs.sum()
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"state norm deviates from 1 by {abs(norm - 1.0):.2e}")
    if shots == 0:
        return []
    n = int(np.log2(state.shape[0]))
    if (1 << n) != state.shape[0]:
        raise ValueError(f"state dimension {state.shape[0]} is not a power of two")
    rng = np.random.default_rng(seed)
    draws = rng.choice(state.shape[0], size=shots, p=probs / norm)
    return [format(d, f"0{n}b")[::-1] for d in draws]


def write_samples(
    path: Union[str, Path],
    bitstrings: Sequence[str],
    shots: int,
    seed: int,
    source: str,
) -> None:
    """Persist samples: header '# shots=<n> seed=<s> source=<tag>', one string per line."""
    lines = [f"# shots={shots} seed={seed} source={source}"]
    lines.extend(bitstrings)
    Path(path).write_text("\n".join(lines) + "\n")


def read_samples(path: Union[str, Path]) -> tuple[list[str], dict[str, str]]:
    """Read a sample file; returns (bitstrings, header fields)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '# shots=... seed=... source=...' header")
    header = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split())
    bitstrings = [ln.strip() for ln in lines[1:] if ln.strip()]
    for b in bitstrings:
        if set(b) - {"0", "1"}:
            raise ValueError(f"invalid bitstring {b!r} in {path}")
    return bitstrings, header
