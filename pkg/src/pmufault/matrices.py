"""Phase-domain bus admittance/impedance matrices and their block partitions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .netmodel import NetworkError, NetworkModel, NodeIndexMap, build_index_map

COND_LIMIT = 1e14


class SingularMatrixError(NetworkError):
    """A matrix that must be inverted is numerically singular."""


@dataclass(frozen=True)
class AdmittanceMatrix:
    Y: np.ndarray
    index_map: NodeIndexMap


@dataclass(frozen=True)
class ImpedanceMatrix:
    Z: np.ndarray
    index_map: NodeIndexMap


@dataclass(frozen=True)
class Placement:
    """Monitored buses and the node-phase indices they expose (sorted)."""

    monitored: tuple[str, ...]
    available_indices: tuple[int, ...]

    @property
    def K(self) -> int:
        return len(self.available_indices)


def make_placement(index_map: NodeIndexMap, buses) -> Placement:
    if isinstance(buses, str):
        buses = [b for b in buses.split(",") if b.strip()]
    buses = [str(b).strip() for b in buses]
    if not buses:
        raise ValueError("placement must contain at least one bus")
    if len(set(buses)) != len(buses):
        raise ValueError(f"duplicate buses in placement {buses}")
    idx = []
    for b in buses:
        found = index_map.indices(b)
        if not found:
            raise ValueError(f"placement references unknown bus {b!r}")
        idx.extend(found)
    return Placement(tuple(buses), tuple(sorted(idx)))


@dataclass(frozen=True)
class PartitionedBlocks:
    """Blocks of Y and Z under the available-first ordering.

    ``permutation`` lists original indices in Pi order: the K available
    node-phases followed by the M - K unavailable ones.
    """

    Z_aa: np.ndarray
    Z_au: np.ndarray
    Z_a: np.ndarray
    Y_aa: np.ndarray
    Y_au: np.ndarray
    Y_uu: np.ndarray
    permutation: np.ndarray
    K: int

    @property
    def M(self) -> int:
        return len(self.permutation)

    @property
    def available(self) -> np.ndarray:
        return self.permutation[:self.K]

    @property
    def unavailable(self) -> np.ndarray:
        return self.permutation[self.K:]

    def permutation_matrix(self) -> np.ndarray:
        P = np.zeros((self.M, self.M))
        P[np.arange(self.M), self.permutation] = 1.0
        return P

    def to_pi_order(self, vec: np.ndarray) -> np.ndarray:
        """Reorder an M-vector (or rows of an M x n array) into Pi order."""
        return np.asarray(vec)[self.permutation]


def _stamp(Y, rows, block):
    Y[np.ix_(rows, rows)] += block


def build_admittance(model: NetworkModel, index_map: NodeIndexMap | None = None,
                     load_scale: float = 1.0) -> AdmittanceMatrix:
    """Assemble Y from line primitives, half line-charging and shunt elements.

    Constant-power loads enter through their equivalent impedance at nominal
    voltage.  ``load_scale`` multiplies every load admittance (used to study
    the load-free limit).
    """
    imap = index_map or build_index_map(model)
    Y = np.zeros((imap.M, imap.M), dtype=complex)
    for ln in model.lines:
        yp = ln.primitive_admittance
        i = imap.indices(ln.from_bus, ln.phases)
        j = imap.indices(ln.to_bus, ln.phases)
        half = ln.shunt_admittance / 2.0
        _stamp(Y, i, yp + half)
        _stamp(Y, j, yp + half)
        Y[np.ix_(i, j)] -= yp
        Y[np.ix_(j, i)] -= yp
    for sh in model.shunts:
        rows = imap.indices(sh.bus, sh.phases)
        y = sh.admittance(model.bus(sh.bus).nominal_voltage)
        if sh.kind in ("zload", "pload"):
            y = y * load_scale
        _stamp(Y, rows, y)
    cond = np.linalg.cond(Y)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(
            f"assembled admittance matrix is singular (condition {cond:.3g})")
    return AdmittanceMatrix(Y, imap)


def invert_to_impedance(adm: AdmittanceMatrix) -> ImpedanceMatrix:
    Y = adm.Y
    M = Y.shape[0]
    try:
        Z = np.linalg.solve(Y, np.eye(M, dtype=complex))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from None
    resid = np.linalg.norm(Z @ Y - np.eye(M)) / np.sqrt(M)
    if not resid < 1e-9:
        raise SingularMatrixError(f"inversion residual {resid:.3g} exceeds 1e-9")
    return ImpedanceMatrix(Z, adm.index_map)


def partition(adm: AdmittanceMatrix, imp: ImpedanceMatrix,
              placement: Placement) -> PartitionedBlocks:
    M = adm.Y.shape[0]
    avail = np.array(placement.available_indices, dtype=int)
    if avail.size == 0:
        raise ValueError("empty placement")
    if avail.min() < 0 or avail.max() >= M or len(set(avail.tolist())) != avail.size:
        raise ValueError("placement indices are invalid for this network")
    mask = np.ones(M, bool)
    mask[avail] = False
    unavail = np.flatnonzero(mask)
    perm = np.concatenate([avail, unavail])
    Y, Z = adm.Y, imp.Z
    return PartitionedBlocks(
        Z_aa=Z[np.ix_(avail, avail)],
        Z_au=Z[np.ix_(avail, unavail)],
        Z_a=Z[np.ix_(avail, perm)],
        Y_aa=Y[np.ix_(avail, avail)],
        Y_au=Y[np.ix_(avail, unavail)],
        Y_uu=Y[np.ix_(unavail, unavail)],
        permutation=perm,
        K=avail.size,
    )


def schur_z_blocks(blocks: PartitionedBlocks,
                   index_map: NodeIndexMap | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Z_aa and Z_au from the admittance blocks alone.

    Z_aa = (Y_aa - Y_au Y_uu^-1 Y_au^T)^-1 and Z_au = -Z_aa Y_au Y_uu^-1.
    The plain transpose is correct for complex-symmetric (reciprocal) Y.
    """
    Y_aa, Y_au, Y_uu = blocks.Y_aa, blocks.Y_au, blocks.Y_uu
    if Y_uu.size == 0:
        return np.linalg.inv(Y_aa), np.zeros((blocks.K, 0), complex)
    T = _y_uu_solve(Y_uu, Y_au, blocks, index_map)
    schur = Y_aa - T @ Y_au.T
    lu = _lu_checked(schur)
    if lu is None:
        raise SingularMatrixError("Schur complement Y_aa - Y_au Y_uu^-1 Y_au^T is singular")
    Z_aa = sla.lu_solve(lu, np.eye(blocks.K, dtype=complex))
    return Z_aa, -Z_aa @ T


def _y_uu_solve(Y_uu, Y_au, blocks, index_map=None) -> np.ndarray:
    """Return Y_au Y_uu^-1, naming a floating unavailable node if Y_uu is singular."""
    lu = _lu_checked(Y_uu)
    if lu is None:
        raise SingularMatrixError("Y_uu is singular" + _floating_hint(Y_uu, blocks, index_map))
    # Y_au Y_uu^-1 = (Y_uu^-T Y_au^T)^T
    return sla.lu_solve(lu, Y_au.T, trans=1).T


def _lu_checked(A: np.ndarray):
    """LU factors of A, or None when A is singular to within COND_LIMIT.

    Uses the LAPACK 1-norm condition estimate on the factors, which is far
    cheaper than an SVD and agrees with cond() to within a small factor.
    """
    A = np.asarray(A, dtype=complex)
    if not np.all(np.isfinite(A)):
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    if np.any(np.diag(lu) == 0):
        return None
    gecon, = sla.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, np.linalg.norm(A, 1), norm="1")
    if info != 0 or rcond * COND_LIMIT < 1.0:
        return None
    return lu, piv


def _floating_hint(Y_uu, blocks, index_map) -> str:
    # a hidden island without a shunt or line to an observed node has zero row sums
    from scipy.sparse.csgraph import connected_components

    n_comp, labels = connected_components(np.abs(Y_uu) > 0, directed=False)
    scale = np.abs(np.diag(Y_uu)).max()
    for c in range(n_comp):
        rows = np.flatnonzero(labels == c)
        if np.abs(Y_uu[rows].sum(axis=1)).max() <= 1e-12 * scale:
            idx = blocks.unavailable[rows[0]]
            name = index_map.label(idx) if index_map is not None else str(idx)
            return f" (unobserved node-phase {name} has no shunt path to reference)"
    return ""


def transfer_matrix(blocks: PartitionedBlocks) -> np.ndarray:
    """Y_au Y_uu^-1, the K x (M-K) coupling between observed and hidden regions."""
    return _y_uu_solve(blocks.Y_uu, blocks.Y_au, blocks)


def write_matrix_csv(path, A: np.ndarray) -> None:
    """Row-major CSV; each complex entry written as a ``re,im`` pair."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    with open(path, "w", encoding="utf-8") as fh:
        for row in A:
            fh.write(",".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals = [float(v) for v in line.split(",")]
            rows.append([complex(r, i) for r, i in zip(vals[0::2], vals[1::2])])
    return np.array(rows, dtype=complex)
