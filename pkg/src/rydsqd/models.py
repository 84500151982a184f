"""Hubbard and Heisenberg parameter sets and the large-U perturbative mapping.

The spin-asymmetric Hubbard chain (NN hops t_up/t_dn, NNN hops tp_up/tp_dn,
repulsion U) maps at second order in t/U onto an anisotropic J1-J2 XXZ chain
on the singly occupied subspace.  The exchange couplings are

    Jxy1 = 4 t_up t_dn / U        Jz1 = 2 (t_up^2 + t_dn^2) / U
    Jxy2 = 4 tp_up tp_dn / U      Jz2 = 2 (tp_up^2 + tp_dn^2) / U

plus a constant -Jz/4 per bond.  Measured spin bitstrings become half-filled
Hubbard configurations by taking the bits as the up channel and their
complement as the down channel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .fock import DN, UP, Determinant, FermionHamiltonianSpec, bits_to_mask


@dataclass(frozen=True)
class HubbardParams:
    """Couplings of the spin-asymmetric NNN Hubbard chain (open boundaries)."""

    U: float
    t_up: float
    t_dn: float
    L: int
    tp_up: float = 0.0
    tp_dn: float = 0.0

    def __post_init__(self):
        if self.U <= 0:
            raise ValueError(f"on-site repulsion must be positive, got U={self.U}")
        if self.L < 2:
            raise ValueError(f"need at least two sites, got L={self.L}")


@dataclass(frozen=True)
class HeisenbergParams:
    """NN and NNN XXZ couplings of an open chain."""

    jxy1: float
    jz1: float
    L: int
    jxy2: float = 0.0
    jz2: float = 0.0

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"need at least two sites, got L={self.L}")
        for name in ("jxy1", "jz1", "jxy2", "jz2"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def isotropic(self) -> bool:
        return self.jxy1 == self.jz1 and self.jxy2 == self.jz2


class SpinTerm(NamedTuple):
    k: int
    l: int
    kind: str  # "xy" for S^x S^x + S^y S^y, "zz" for S^z S^z
    value: float


@dataclass(frozen=True)
class SpinHamiltonianSpec:
    """Symbolic two-site spin terms plus an overall constant shift."""

    L: int
    terms: tuple[SpinTerm, ...]
    constant_shift: float = 0.0

    def __post_init__(self):
        for t in self.terms:
            if not (0 <= t.k < t.l < self.L):
                raise ValueError(f"term {t} violates k < l < L")
            if t.kind not in ("xy", "zz"):
                raise ValueError(f"unknown term kind {t.kind!r}")


def effective_couplings(p: HubbardParams) -> HeisenbergParams:
    """Second-order exchange couplings of the large-U effective spin model."""
    return HeisenbergParams(
        jxy1=4.0 * p.t_up * p.t_dn / p.U,
        jz1=2.0 * (p.t_up**2 + p.t_dn**2) / p.U,
        jxy2=4.0 * p.tp_up * p.tp_dn / p.U,
        jz2=2.0 * (p.tp_up**2 + p.tp_dn**2) / p.U,
        L=p.L,
    )


def build_spin_hamiltonian(h: HeisenbergParams, include_shift: bool = False) -> SpinHamiltonianSpec:
    """XXZ terms on NN (k,k+1) and NNN (k,k+2) bonds of an open chain.

    With include_shift the constant -Jz/4 per bond is carried along, which
    makes the spectrum directly comparable to half-filled Hubbard energies.
    """
    terms: list[SpinTerm] = []
    for k in range(h.L - 1):
        if h.jxy1 != 0.0:
            terms.append(SpinTerm(k, k + 1, "xy", h.jxy1))
        if h.jz1 != 0.0:
            terms.append(SpinTerm(k, k + 1, "zz", h.jz1))
    for k in range(h.L - 2):
        if h.jxy2 != 0.0:
            terms.append(SpinTerm(k, k + 2, "xy", h.jxy2))
        if h.jz2 != 0.0:
            terms.append(SpinTerm(k, k + 2, "zz", h.jz2))
    shift = 0.0
    if include_shift:
        shift = -(h.jz1 / 4.0) * (h.L - 1) - (h.jz2 / 4.0) * max(0, h.L - 2)
    return SpinHamiltonianSpec(L=h.L, terms=tuple(terms), constant_shift=shift)


def spin_matrix(spec: SpinHamiltonianSpec) -> sp.csr_matrix:
    """Sparse matrix over the 2^L computational basis (bit=1 means spin up)."""
    dim = 1 << spec.L
    idx = np.arange(dim, dtype=np.int64)
    diag = np.full(dim, spec.constant_shift)
    rows, cols, vals = [], [], []
    for (k, l, kind, value) in spec.terms:
        bk = (idx >> k) & 1
        bl = (idx >> l) & 1
        if kind == "zz":
            diag += value * (bk - 0.5) * (bl - 0.5)
        else:
            flip = bk != bl
            target = idx[flip] ^ np.int64((1 << k) | (1 << l))
            rows.append(target)
            cols.append(idx[flip])
            vals.append(np.full(target.shape[0], 0.5 * value))
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    ).tocsr()
    mat.sum_duplicates()
    return mat


def spin_to_hubbard_config(bits: str) -> Determinant:
    """Map a measured spin string to a singly occupied Hubbard configuration.

    The bits give the up-channel occupations; the down channel is their
    complement, so every site hosts exactly one fermion.
    """
    L = len(bits)
    if L == 0:
        raise ValueError("empty bitstring")
    up = bits_to_mask(bits)
    full = (1 << L) - 1
    return Determinant(up, up ^ full)


def hubbard_hamiltonian_spec(p: HubbardParams) -> FermionHamiltonianSpec:
    """NN + NNN hop list and on-site U for an open chain."""
    hops: list[tuple[int, int, int, float]] = []
    for i in range(p.L - 1):
        hops.append((i, i + 1, UP, p.t_up))
        hops.append((i, i + 1, DN, p.t_dn))
    for i in range(p.L - 2):
        if p.tp_up != 0.0:
            hops.append((i, i + 2, UP, p.tp_up))
        if p.tp_dn != 0.0:
            hops.append((i, i + 2, DN, p.tp_dn))
    return FermionHamiltonianSpec(L=p.L, hops=tuple(hops), onsite_U=p.U)


def perturbative_energy_estimate(p: HubbardParams) -> float:
    """Ground energy of the effective spin model, shift included.

    Accurate to the leading correction beyond second order in t/U, so it
    approximates the half-filled Hubbard ground energy for U >> t.
    """
    from .oracles import exact_ground_state

    spec = build_spin_hamiltonian(effective_couplings(p), include_shift=True)
    energy, _ = exact_ground_state(spin_matrix(spec))
    return energy
