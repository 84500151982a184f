"""Fixed-particle-number fermionic Fock bases and sparse Hubbard Hamiltonians.

Occupations are stored as integer bitmasks, one per spin channel, with bit i
corresponding to lattice site i.  In text form the masks are little-endian
0/1 strings ("up=1010 dn=0101" puts site 0 leftmost).  Spin-up orbitals are
ordered 0..L-1 and spin-down L..2L-1; hopping parity is counted within a spin
channel only, which is exact because every term conserves both channel
occupations and the interaction is density-density, so cross-channel Jordan-
Wigner strings cancel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp

UP = 0
DN = 1

#: Above this many spin orbitals (2L) prefer the matrix-free operator.
MATRIX_FREE_THRESHOLD = 24


class Determinant(NamedTuple):
    """One Fock configuration: an occupation bitmask per spin channel."""

    up: int
    dn: int

    def n_up(self) -> int:
        return self.up.bit_count()

    def n_dn(self) -> int:
        return self.dn.bit_count()

    def double_occupancy(self) -> int:
        return (self.up & self.dn).bit_count()

    def occupancies(self, L: int) -> np.ndarray:
        """Occupation vector of length 2L, up orbitals first then down."""
        bits = [(self.up >> i) & 1 for i in range(L)]
        bits += [(self.dn >> i) & 1 for i in range(L)]
        return np.asarray(bits, dtype=float)

    def text(self, L: int) -> str:
        return f"up={mask_to_bits(self.up, L)} dn={mask_to_bits(self.dn, L)}"


def bits_to_mask(bits: str) -> int:
    """Little-endian 0/1 string to bitmask (leftmost char is site 0)."""
    mask = 0
    for i, c in enumerate(bits):
        if c == "1":
            mask |= 1 << i
        elif c != "0":
            raise ValueError(f"invalid bit character {c!r} in {bits!r}")
    return mask


def mask_to_bits(mask: int, L: int) -> str:
    return "".join("1" if (mask >> i) & 1 else "0" for i in range(L))


def parse_determinant(text: str, L: int) -> Determinant:
    """Parse the "up=... dn=..." text form."""
    parts = dict(p.split("=", 1) for p in text.split())
    up, dn = bits_to_mask(parts["up"]), bits_to_mask(parts["dn"])
    if len(parts["up"]) != L or len(parts["dn"]) != L:
        raise ValueError(f"determinant {text!r} does not have {L} sites")
    return Determinant(up, dn)


@dataclass
class SectorBasis:
    """All determinants of a fixed (n_up, n_dn) sector in canonical order.

    Canonical order is ascending integer value of up_mask, then dn_mask, so
    indices are reproducible across runs and platforms.
    """

    L: int
    n_up: int
    n_dn: int
    dets: list[Determinant]
    index: dict[Determinant, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.dets)

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """Channel masks as int64 arrays (up_arr, dn_arr)."""
        up = np.fromiter((d.up for d in self.dets), dtype=np.int64, count=len(self.dets))
        dn = np.fromiter((d.dn for d in self.dets), dtype=np.int64, count=len(self.dets))
        return up, dn


@dataclass(frozen=True)
class FermionHamiltonianSpec:
    """Symbolic Hubbard-type Hamiltonian: hops plus on-site repulsion.

    Each hop (i, j, spin, t) contributes t * (c+_i c_j + c+_j c_i); the
    Hermitian conjugate is implied and must not be listed separately.
    """

    L: int
    hops: tuple[tuple[int, int, int, float], ...]
    onsite_U: float

    def __post_init__(self):
        for (i, j, spin, t) in self.hops:
            if i == j:
                raise ValueError(f"hop ({i},{j}) must connect distinct sites")
            if spin not in (UP, DN):
                raise ValueError(f"spin must be UP(0) or DN(1), got {spin}")
            if not (0 <= i < self.L and 0 <= j < self.L):
                raise ValueError(f"hop ({i},{j}) has a site index outside 0..{self.L - 1}")


def enumerate_sector(L: int, n_up: int, n_dn: int) -> SectorBasis:
    """Enumerate the C(L,n_up)*C(L,n_dn) determinants of one particle sector."""
    if L < 1:
        raise ValueError(f"need at least one site, got L={L}")
    if not (0 <= n_up <= L and 0 <= n_dn <= L):
        raise ValueError(f"particle counts ({n_up},{n_dn}) invalid for L={L}")
    up_masks = sorted(sum(1 << i for i in occ) for occ in combinations(range(L), n_up))
    dn_masks = sorted(sum(1 << i for i in occ) for occ in combinations(range(L), n_dn))
    dets = [Determinant(u, d) for u in up_masks for d in dn_masks]
    assert len(dets) == comb(L, n_up) * comb(L, n_dn)
    return SectorBasis(L, n_up, n_dn, dets, {det: a for a, det in enumerate(dets)})


def _parity_sign(mask: int, i: int, j: int) -> int:
    lo, hi = (i, j) if i < j else (j, i)
    between = mask & (((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1))
    return -1 if between.bit_count() & 1 else 1


def apply_hop(det: Determinant, i: int, j: int, spin: int) -> Optional[tuple[Determinant, int]]:
    """Apply c+_{i,spin} c_{j,spin}; None when blocked by occupation.

    The sign is (-1)^(occupied orbitals of the same spin strictly between
    i and j), evaluated on the state before the move.
    """
    if i == j:
        raise ValueError("hop requires distinct sites")
    mask = det.up if spin == UP else det.dn
    if not (mask >> j) & 1 or (mask >> i) & 1:
        return None
    sign = _parity_sign(mask, i, j)
    new_mask = mask ^ ((1 << i) | (1 << j))
    new_det = Determinant(new_mask, det.dn) if spin == UP else Determinant(det.up, new_mask)
    return new_det, sign


def _directed_hops(spec: FermionHamiltonianSpec):
    for (i, j, spin, t) in spec.hops:
        if t != 0.0:
            yield i, j, spin, t
            yield j, i, spin, t


def _hop_arrays(up_arr, dn_arr, dst, src, spin):
    """Vectorized c+_dst c_src on every determinant of a packed basis.

    Returns (valid_mask, new_up, new_dn, signs) with entries only for the
    determinants where the move is allowed.
    """
    m = up_arr if spin == UP else dn_arr
    ok = (((m >> src) & 1) == 1) & (((m >> dst) & 1) == 0)
    lo, hi = (dst, src) if dst < src else (src, dst)
    between = np.int64(((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1))
    par = np.bitwise_count(m[ok] & between).astype(np.int64)
    signs = 1.0 - 2.0 * (par & 1)
    moved = m[ok] ^ np.int64((1 << dst) | (1 << src))
    if spin == UP:
        return ok, moved, dn_arr[ok], signs
    return ok, up_arr[ok], moved, signs


def _assemble_coo(spec: FermionHamiltonianSpec, up_arr, dn_arr, L):
    """COO triplets for the Hamiltonian over a packed, canonically sorted basis."""
    n = up_arr.shape[0]
    key = (up_arr << L) | dn_arr
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]

    rows, cols, vals = [], [], []
    diag = spec.onsite_U * np.bitwise_count(up_arr & dn_arr).astype(float)
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)

    cols_all = np.arange(n)
    for dst, src, spin, t in _directed_hops(spec):
        ok, new_up, new_dn, signs = _hop_arrays(up_arr, dn_arr, dst, src, spin)
        new_key = (new_up << L) | new_dn
        pos = np.searchsorted(sorted_key, new_key)
        pos = np.clip(pos, 0, n - 1)
        found = sorted_key[pos] == new_key
        rows.append(order[pos[found]])
        cols.append(cols_all[ok][found])
        vals.append(t * signs[found])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def build_hubbard_matrix(spec: FermionHamiltonianSpec, basis: SectorBasis) -> sp.csr_matrix:
    """Sparse symmetric Hamiltonian over a sector basis.

    Off-diagonals carry the hop amplitudes with anticommutation signs from
    apply_hop; the diagonal is U times the number of doubly occupied sites.
    """
    if basis.L != spec.L:
        raise ValueError(f"basis has L={basis.L} but Hamiltonian spec has L={spec.L}")
    up_arr, dn_arr = basis.packed()
    rows, cols, vals = _assemble_coo(spec, up_arr, dn_arr, spec.L)
    n = len(basis)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    return mat


def hubbard_diagonal(spec: FermionHamiltonianSpec, basis: SectorBasis) -> np.ndarray:
    up_arr, dn_arr = basis.packed()
    return spec.onsite_U * np.bitwise_count(up_arr & dn_arr).astype(float)


def hubbard_action(spec: FermionHamiltonianSpec, basis: SectorBasis) -> Callable[[np.ndarray], np.ndarray]:
    """Matrix-free |v> -> H|v| over the sector, for 2L beyond the sparse cap.

    Precomputes per-hop index and sign arrays once; each application is a
    handful of vectorized gathers, so no O(n^2) or per-element Python work.
    """
    if basis.L != spec.L:
        raise ValueError(f"basis has L={basis.L} but Hamiltonian spec has L={spec.L}")
    up_arr, dn_arr = basis.packed()
    L = spec.L
    n = up_arr.shape[0]
    key = (up_arr << L) | dn_arr
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    diag = spec.onsite_U * np.bitwise_count(up_arr & dn_arr).astype(float)

    terms = []
    src_all = np.arange(n)
    for dst, src, spin, t in _directed_hops(spec):
        ok, new_up, new_dn, signs = _hop_arrays(up_arr, dn_arr, dst, src, spin)
        new_key = (new_up << L) | new_dn
        pos = np.clip(np.searchsorted(sorted_key, new_key), 0, n - 1)
        found = sorted_key[pos] == new_key
        terms.append((order[pos[found]], src_all[ok][found], t * signs[found]))

    def act(v: np.ndarray) -> np.ndarray:
        out = diag * v
        for rows, cols, amps in terms:
            np.add.at(out, rows, amps * v[cols])
        return out

    return act
