"""Sample-based diagonalization of the Hubbard chain over measured configurations.

The self-consistent loop is: repair samples into the target particle sector
(guided by estimated orbital occupancies), draw K batches, project the
Hamiltonian onto each batch, solve each projected problem with Davidson,
average the resulting occupancies, and repeat until the best batch energy
stops moving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .fock import (
    Determinant,
    FermionHamiltonianSpec,
    SectorBasis,
    _assemble_coo,
)
from .seeding import derive_seed


@dataclass
class ConfigurationSet:
    """Deduplicated configurations with their sample multiplicities."""

    L: int
    configs: list[Determinant]
    multiplicities: np.ndarray

    def __post_init__(self):
        self.multiplicities = np.asarray(self.multiplicities, dtype=np.int64)
        if len(self.configs) != self.multiplicities.shape[0]:
            raise ValueError("configs and multiplicities length mismatch")
        if len(self.configs) and self.multiplicities.min() < 1:
            raise ValueError("multiplicities must be >= 1")

    def __len__(self) -> int:
        return len(self.configs)

    @property
    def total_samples(self) -> int:
        return int(self.multiplicities.sum())

    @classmethod
    def from_determinants(cls, dets: Iterable[Determinant], L: int) -> "ConfigurationSet":
        counts: dict[Determinant, int] = {}
        for d in dets:
            counts[d] = counts.get(d, 0) + 1
        configs = list(counts)
        return cls(L, configs, np.array([counts[c] for c in configs], dtype=np.int64))

    def in_sector(self, n_up: int, n_dn: int) -> "ConfigurationSet":
        keep = [a for a, c in enumerate(self.configs) if c.n_up() == n_up and c.n_dn() == n_dn]
        return ConfigurationSet(
            self.L, [self.configs[a] for a in keep], self.multiplicities[keep]
        )


@dataclass
class SqdConfig:
    """Knobs of one subspace-diagonalization run."""

    target_sector: tuple[int, int]
    d: int
    K: int = 5
    max_outer_iters: int = 10
    davidson_tol: float = 1e-8
    energy_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.d < 1:
            raise ValueError("need K >= 1 and d >= 1")
        if self.davidson_tol <= 0:
            raise ValueError("davidson_tol must be positive")


@dataclass
class SubspaceResult:
    """Per-batch solutions of the final iteration plus the outer-loop trace."""

    energy: float
    batch_energies: list[float]
    batch_configs: list[list[Determinant]]
    batch_vectors: list[np.ndarray]
    occupancies: np.ndarray
    energy_trace: list[float]
    outer_iterations: int
    converged: bool
    subspace_dimension: int = 0


class DavidsonError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(message)
        self.best_residual = best_residual


def davidson_ground_state(
    op: Union[np.ndarray, sp.spmatrix, Callable[[np.ndarray], np.ndarray]],
    tol: float = 1e-8,
    seed: int = 0,
    dim: Optional[int] = None,
    diagonal: Optional[np.ndarray] = None,
    max_subspace: int = 30,
    max_iters: int = 2000,
) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of a real symmetric operator by Davidson iteration.

    Single-vector targets with a diagonal (D - theta)^-1 preconditioner, a
    seeded random start, and thick restarts at the subspace cap.  Raises
    DavidsonError carrying the best residual when max_iters is exhausted.
    """
    if callable(op) and not sp.issparse(op) and not isinstance(op, np.ndarray):
        if dim is None or diagonal is None:
            raise ValueError("matrix-free Davidson needs dim and diagonal")
        act, n = op, dim
        diag = np.asarray(diagonal, dtype=float)
    else:
        n = op.shape[0]
        act = lambda v: op @ v
        diag = np.asarray(op.diagonal(), dtype=float) if sp.issparse(op) else np.diag(op).astype(float)

    if n == 1:
        return float(act(np.ones(1))[0]), np.ones(1)

    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    v0 /= np.linalg.norm(v0)
    V = np.empty((max_subspace, n))
    W = np.empty((max_subspace, n))
    V[0] = v0
    W[0] = act(v0)
    m = 1
    best_res = np.inf
    theta, x = np.inf, v0
    for _ in range(max_iters):
        T = V[:m] @ W[:m].T
        T = 0.5 * (T + T.T)
        evals, evecs = np.linalg.eigh(T)
        theta = float(evals[0])
        y = evecs[:, 0]
        x = V[:m].T @ y
        hx = W[:m].T @ y
        r = hx - theta * x
        res = float(np.linalg.norm(r))
        best_res = min(best_res, res)
        if res <= tol:
            return theta, x / np.linalg.norm(x)
        if m == n:
            # subspace is the full space; the Ritz pair is exact
            return theta, x / np.linalg.norm(x)
        if m == max_subspace:
            # thick restart: keep the three lowest Ritz vectors
            keep = min(3, max_subspace - 1, n - 1)
            Y = evecs[:, :keep]
            V[:keep] = (V[:m].T @ Y).T
            W[:keep] = (W[:m].T @ Y).T
            m = keep
        denom = diag - theta
        denom = np.where(np.abs(denom) < 1e-8, np.copysign(1e-8, denom + 1e-300), denom)
        t = r / denom
        # orthogonalize against the current basis, twice
        t -= V[:m].T @ (V[:m] @ t)
        t -= V[:m].T @ (V[:m] @ t)
        norm_t = np.linalg.norm(t)
        if norm_t < 1e-12:
            t = rng.standard_normal(n)
            t -= V[:m].T @ (V[:m] @ t)
            norm_t = np.linalg.norm(t)
            if norm_t < 1e-12:
                return theta, x / np.linalg.norm(x)
        V[m] = t / norm_t
        W[m] = act(V[m])
        m += 1
    raise DavidsonError(
        f"Davidson did not reach residual {tol:.1e} in {max_iters} iterations "
        f"(best {best_res:.3e})",
        best_residual=best_res,
    )


def recover_configurations(
    raw: ConfigurationSet,
    occupancies: np.ndarray,
    sector: tuple[int, int],
    seed: int = 0,
) -> ConfigurationSet:
    """Repair every sampled configuration into the target particle sector.

    In-sector configurations pass through unchanged.  Out-of-sector ones are
    repaired one spin channel at a time by flipping bits whose flip moves the
    channel count toward the target, each candidate weighted by
    |occupied - estimated occupancy|.  Every raw sample occurrence is
    repaired independently, so one noisy configuration can fan out into
    several repaired ones.
    """
    if len(raw) == 0:
        raise ValueError("cannot recover from an empty configuration set")
    occupancies = np.asarray(occupancies, dtype=float)
    if occupancies.shape != (2 * raw.L,):
        raise ValueError(
            f"occupancy vector must have length {2 * raw.L}, got {occupancies.shape}"
        )
    n_up, n_dn = sector
    rng = np.random.default_rng(seed)
    L = raw.L

    def repair_channel(mask: int, target: int, occ: np.ndarray) -> int:
        count = mask.bit_count()
        while count != target:
            if count > target:
                candidates = [p for p in range(L) if (mask >> p) & 1]
                weights = np.array([abs(1.0 - occ[p]) for p in candidates])
            else:
                candidates = [p for p in range(L) if not (mask >> p) & 1]
                weights = np.array([abs(occ[p]) for p in candidates])
            total = weights.sum()
            probs = weights / total if total > 0 else np.full(len(candidates), 1.0 / len(candidates))
            pick = candidates[rng.choice(len(candidates), p=probs)]
            mask ^= 1 << pick
            count += 1 if count < target else -1
        return mask

    repaired: list[Determinant] = []
    for det, mult in zip(raw.configs, raw.multiplicities):
        if det.n_up() == n_up and det.n_dn() == n_dn:
            repaired.extend([det] * int(mult))
            continue
        for _ in range(int(mult)):
            up = repair_channel(det.up, n_up, occupancies[:L])
            dn = repair_channel(det.dn, n_dn, occupancies[L:])
            repaired.append(Determinant(up, dn))
    return ConfigurationSet.from_determinants(repaired, L)


def partition_batches(cs: ConfigurationSet, cfg: SqdConfig) -> list[list[Determinant]]:
    """K independent random batches of at most d configurations each.

    Draws are without replacement inside a batch, weighted by sample
    multiplicity, so batches may overlap each other.  Batch k uses the seed
    derived from (cfg.seed, "batch:k") no matter in which order batches are
    materialized.
    """
    if len(cs) == 0:
        raise ValueError("cannot partition an empty configuration set")
    size = min(cfg.d, len(cs))
    probs = cs.multiplicities / cs.multiplicities.sum()
    batches = []
    for k in range(cfg.K):
        rng = np.random.default_rng(derive_seed(cfg.seed, f"batch:{k}"))
        chosen = rng.choice(len(cs), size=size, replace=False, p=probs)
        batch = sorted((cs.configs[a] for a in chosen))
        batches.append([Determinant(*c) for c in batch])
    return batches


def project_hamiltonian(
    spec: FermionHamiltonianSpec, batch: Sequence[Determinant]
) -> sp.csr_matrix:
    """Hamiltonian projected onto the span of a configuration batch.

    Entry (a, b) is <x_a|H|x_b>; hops leaving the batch are dropped, which
    is exactly the submatrix of the full sector matrix on these rows/columns.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    sectors = {(d.n_up(), d.n_dn()) for d in batch}
    if len(sectors) > 1:
        raise ValueError(f"batch mixes particle sectors: {sorted(sectors)}")
    if len(set(batch)) != len(batch):
        raise ValueError("batch contains duplicate configurations")
    up_arr = np.fromiter((d.up for d in batch), dtype=np.int64, count=len(batch))
    dn_arr = np.fromiter((d.dn for d in batch), dtype=np.int64, count=len(batch))
    rows, cols, vals = _assemble_coo(spec, up_arr, dn_arr, spec.L)
    n = len(batch)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return mat


def average_occupancies(
    results: Sequence[tuple[np.ndarray, Sequence[Determinant]]], L: int
) -> np.ndarray:
    """Batch-averaged orbital occupancies n_{p,sigma} from the ground vectors."""
    total = np.zeros(2 * L)
    for vec, batch in results:
        weights = np.abs(np.asarray(vec)) ** 2
        occ = np.array([det.occupancies(L) for det in batch])
        total += weights @ occ
    return total / len(results)


def initial_occupancies(raw: ConfigurationSet, sector: tuple[int, int]) -> np.ndarray:
    """First-round occupancy guess from the raw samples in the target sector.

    Falls back to the sector-uniform filling when no raw sample lands in the
    sector, which keeps the first repair round unbiased.
    """
    n_up, n_dn = sector
    clean = raw.in_sector(n_up, n_dn)
    if len(clean) == 0:
        occ = np.empty(2 * raw.L)
        occ[: raw.L] = n_up / raw.L
        occ[raw.L :] = n_dn / raw.L
        return occ
    weights = clean.multiplicities / clean.multiplicities.sum()
    occ_rows = np.array([det.occupancies(raw.L) for det in clean.configs])
    return weights @ occ_rows


def sqd_run(
    spec: FermionHamiltonianSpec,
    samples: ConfigurationSet,
    cfg: SqdConfig,
) -> SubspaceResult:
    """Self-consistent recover/partition/project/diagonalize loop.

    The reported energy per iteration is the minimum over batches, which is
    variationally safe; occupancy feedback averages over all batches.
    Identical (samples, cfg) inputs reproduce the result bit for bit.
    """
    if len(samples) == 0:
        raise ValueError("no samples supplied")
    if samples.L != spec.L:
        raise ValueError(f"samples have L={samples.L} but Hamiltonian has L={spec.L}")
    occ = initial_occupancies(samples, cfg.target_sector)
    trace: list[float] = []
    best_prev = None
    converged = False
    batches: list[list[Determinant]] = []
    solutions: list[tuple[float, np.ndarray]] = []
    iterations = 0
    for it in range(cfg.max_outer_iters):
        iterations = it + 1
        recovered = recover_configurations(
            samples, occ, cfg.target_sector, seed=derive_seed(cfg.seed, f"recovery:{it}")
        )
        batch_cfg = SqdConfig(
            target_sector=cfg.target_sector,
            d=cfg.d,
            K=cfg.K,
            max_outer_iters=cfg.max_outer_iters,
            davidson_tol=cfg.davidson_tol,
            energy_tol=cfg.energy_tol,
            seed=derive_seed(cfg.seed, f"partition:{it}"),
        )
        batches = partition_batches(recovered, batch_cfg)
        solutions = []
        for k, batch in enumerate(batches):
            mat = project_hamiltonian(spec, batch)
            energy, vec = davidson_ground_state(
                mat, tol=cfg.davidson_tol, seed=derive_seed(cfg.seed, f"davidson:{it}:{k}")
            )
            solutions.append((energy, vec))
        occ = average_occupancies(
            [(vec, batch) for (_, vec), batch in zip(solutions, batches)], spec.L
        )
        best = min(e for e, _ in solutions)
        trace.append(best)
        if best_prev is not None and abs(best - best_prev) < cfg.energy_tol:
            converged = True
            break
        best_prev = best
    return SubspaceResult(
        energy=trace[-1],
        batch_energies=[e for e, _ in solutions],
        batch_configs=batches,
        batch_vectors=[v for _, v in solutions],
        occupancies=occ,
        energy_trace=trace,
        outer_iterations=iterations,
        converged=converged,
        subspace_dimension=max(len(b) for b in batches),
    )
