"""Exact reference solvers and energy-based observables.

Dense diagonalization covers dimensions up to DENSE_CAP; beyond that a
seeded Lanczos with full reorthogonalization takes over.  These references
are deliberately independent of the Davidson solver used by the subspace
pipeline so the two can cross-check each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp

DENSE_CAP = 2000

Operator = Union[np.ndarray, sp.spmatrix, Callable[[np.ndarray], np.ndarray]]


class LanczosError(RuntimeError):
    pass


def _as_action(op: Operator, dim: Optional[int]) -> tuple[Callable[[np.ndarray], np.ndarray], int]:
    if callable(op) and not sp.issparse(op) and not isinstance(op, np.ndarray):
        if dim is None:
            raise ValueError("matrix-free operator needs an explicit dim")
        return op, dim
    n = op.shape[0]
    if op.shape != (n, n):
        raise ValueError(f"operator must be square, got shape {op.shape}")
    return (lambda v: op @ v), n


def lanczos_ground_state(
    op: Operator,
    dim: Optional[int] = None,
    tol: float = 1e-8,
    seed: int = 0,
    max_iter: int = 600,
    max_restarts: int = 3,
) -> tuple[float, np.ndarray]:
    """Smallest eigenpair by Lanczos with full reorthogonalization.

    Breakdown (vanishing residual without convergence) restarts from a fresh
    seeded vector; after max_restarts the best residual is reported in the
    raised error.
    """
    act, n = _as_action(op, dim)
    if n == 1:
        e = float(act(np.ones(1))[0])
        return e, np.ones(1)
    m_cap = min(max_iter, n)
    best_res = np.inf
    for attempt in range(max_restarts):
        rng = np.random.default_rng(seed + 7919 * attempt)
        V = np.empty((m_cap, n))
        v = rng.standard_normal(n)
        V[0] = v / np.linalg.norm(v)
        alphas = np.empty(m_cap)
        betas = np.empty(m_cap)
        w = act(V[0])
        res = np.inf
        for k in range(m_cap):
            alphas[k] = np.dot(V[k], w)
            w = w - alphas[k] * V[k]
            if k > 0:
                w = w - betas[k - 1] * V[k - 1]
            # full reorthogonalization, twice for safety
            basis = V[: k + 1]
            w -= basis.T @ (basis @ w)
            w -= basis.T @ (basis @ w)
            T = np.diag(alphas[: k + 1])
            if k > 0:
                T += np.diag(betas[:k], 1) + np.diag(betas[:k], -1)
            evals, evecs = np.linalg.eigh(T)
            theta = evals[0]
            y = evecs[:, 0]
            beta = np.linalg.norm(w)
            res = abs(beta * y[-1])
            if res <= tol or k + 1 == n:
                x = basis.T @ y
                x /= np.linalg.norm(x)
                true_res = np.linalg.norm(act(x) - theta * x)
                if true_res <= max(tol, 1e-7):
                    return float(theta), x
                best_res = min(best_res, true_res)
                break
            if beta < 1e-14:
                best_res = min(best_res, res)
                break  # breakdown: restart with a new seed
            if k + 1 < m_cap:
                V[k + 1] = w / beta
                betas[k] = beta
                w = act(V[k + 1])
        else:
            best_res = min(best_res, res)
    raise LanczosError(f"Lanczos did not converge; best residual {best_res:.3e}")


def exact_ground_state(
    op: Operator,
    dim: Optional[int] = None,
    seed: int = 0,
    lanczos_tol: float = 1e-8,
) -> tuple[float, np.ndarray]:
    """Reference smallest eigenpair: dense up to DENSE_CAP, else Lanczos."""
    _, n = _as_action(op, dim)
    is_materialized = sp.issparse(op) or isinstance(op, np.ndarray)
    if is_materialized and n <= DENSE_CAP:
        mat = op.toarray() if sp.issparse(op) else np.asarray(op)
        evals, evecs = scipy.linalg.eigh(mat)
        return float(evals[0]), evecs[:, 0]
    return lanczos_ground_state(op, dim=n, tol=lanczos_tol, seed=seed)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """|<a|b>|^2 for normalized vectors of equal dimension."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(abs(np.vdot(a, b)) ** 2)


@dataclass
class EnergyRow:
    n_occ: int
    energy: float
    method: str
    seed: int


@dataclass
class EnergyTable:
    """Ground energies per total occupation, tagged by method and seed."""

    rows: list[EnergyRow] = field(default_factory=list)

    def add(self, n_occ: int, energy: float, method: str, seed: int = 0) -> None:
        for r in self.rows:
            if (r.n_occ, r.method, r.seed) == (n_occ, method, seed):
                # keep the lower energy when a sector is solved through
                # several (n_up, n_dn) splits
                r.energy = min(r.energy, energy)
                return
        self.rows.append(EnergyRow(n_occ, energy, method, seed))

    def energy(self, n_occ: int, method: Optional[str] = None) -> float:
        found = [r.energy for r in self.rows if r.n_occ == n_occ and (method is None or r.method == method)]
        if not found:
            raise KeyError(f"no energy recorded for N_occ={n_occ}" + (f" method={method}" if method else ""))
        return min(found)

    def to_text(self) -> str:
        lines = ["N_occ\tE\tmethod\tseed"]
        for r in sorted(self.rows, key=lambda r: (r.method, r.seed, r.n_occ)):
            lines.append(f"{r.n_occ}\t{r.energy!r}\t{r.method}\t{r.seed}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EnergyTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].split("\t") != ["N_occ", "E", "method", "seed"]:
            raise ValueError("energy table must start with 'N_occ\\tE\\tmethod\\tseed'")
        table = cls()
        for ln in lines[1:]:
            n_occ, e, method, seed = ln.split("\t")
            table.rows.append(EnergyRow(int(n_occ), float(e), method, int(seed)))
        return table


def chemical_potential(
    table: EnergyTable, n_occ: int, method: Optional[str] = None
) -> tuple[float, Optional[float]]:
    """mu(N) = E(N) - E(N-1); mu'(N) additionally needs E(N+1)."""
    try:
        e_n = table.energy(n_occ, method)
        e_prev = table.energy(n_occ - 1, method)
    except KeyError as err:
        raise KeyError(str(err)) from None
    mu = e_n - e_prev
    try:
        e_next = table.energy(n_occ + 1, method)
    except KeyError:
        return mu, None
    return mu, e_next - 2.0 * e_n + e_prev


def perturbation_validator(
    p, U_list: Sequence[float]
) -> tuple[list[tuple[float, float]], float]:
    """Deviation of the effective-model energy from exact Hubbard, per U.

    Returns [(U, |E_hub - E_eff|), ...] at half filling plus the fitted
    power k of the U^-k decay (log-log least squares).  Third-order terms
    vanish on a bipartite NN chain, so NN-only parameter sets fit k near 3.
    """
    from .fock import build_hubbard_matrix, enumerate_sector
    from .models import hubbard_hamiltonian_spec, perturbative_energy_estimate

    if p.L > 8:
        raise ValueError(f"validator needs exact Hubbard diagonalization, L={p.L} > 8")
    n_up = (p.L + 1) // 2
    n_dn = p.L - n_up
    basis = enumerate_sector(p.L, n_up, n_dn)
    devs = []
    for U in U_list:
        pu = type(p)(U=U, t_up=p.t_up, t_dn=p.t_dn, L=p.L, tp_up=p.tp_up, tp_dn=p.tp_dn)
        e_hub, _ = exact_ground_state(build_hubbard_matrix(hubbard_hamiltonian_spec(pu), basis))
        e_eff = perturbative_energy_estimate(pu)
        devs.append((float(U), abs(e_hub - e_eff)))
    power = float("nan")
    positive = [(u, d) for (u, d) in devs if d > 0]
    if len(positive) >= 2:
        logs_u = np.log([u for u, _ in positive])
        logs_d = np.log([d for _, d in positive])
        power = -float(np.polyfit(logs_u, logs_d, 1)[0])
    return devs, power
