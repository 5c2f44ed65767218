"""Least-squares fault localization: raw and whitened metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .faultsim import FAULT_TYPES, MeasurementSet
from .matrices import PartitionedBlocks, SingularMatrixError, transfer_matrix
from .netmodel import PHASES, NetworkModel, NodeIndexMap, build_index_map

DEFAULT_EPS = 0.25
DEFAULT_RANK_TOL = 1e-10


@dataclass(frozen=True)
class Candidate:
    bus: str
    phases: tuple[str, ...]
    support: tuple[int, ...]

    @property
    def label(self) -> str:
        if len(self.phases) == 3:
            return self.bus
        return f"{self.bus}-{'-'.join(self.phases)}"

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class CandidateSet:
    fault_type: str
    candidates: tuple[Candidate, ...]

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]

    def find(self, bus: str, phases=None) -> int:
        for i, c in enumerate(self.candidates):
            if c.bus == str(bus) and (phases is None or tuple(phases) == c.phases):
                return i
        raise KeyError(f"no candidate at {bus} {phases or ''}")


def enumerate_candidates(model: NetworkModel, fault_type: str, phases=None,
                         index_map: NodeIndexMap | None = None) -> CandidateSet:
    """Candidate locations F(t) for a fault type.

    With ``phases`` given (e.g. ``("B", "C")`` for a BC-G fault) only buses
    carrying exactly those phases are candidates; without it every feasible
    phase combination of the right size is enumerated.
    """
    if fault_type not in FAULT_TYPES:
        raise ValueError(f"unknown fault type {fault_type!r}")
    imap = index_map or build_index_map(model)
    n = {"LLL": 3, "LLL_G": 3, "LG": 1, "LL": 2, "LL_G": 2}[fault_type]
    if phases is not None:
        phases = tuple(sorted({p.upper() for p in phases}, key=PHASES.index))
        if len(phases) != n:
            raise ValueError(f"{fault_type} needs {n} phase(s), got {phases}")
    out = []
    for bus in model.buses:
        combos = [phases] if phases is not None else list(combinations(bus.phases, n))
        for combo in combos:
            if set(combo) <= set(bus.phases):
                out.append(Candidate(bus.id, tuple(combo),
                                     tuple(imap.indices(bus.id, combo))))
    if not out:
        raise ValueError(f"no feasible {fault_type} candidates in this network")
    return CandidateSet(fault_type, tuple(out))


@dataclass
class WhitenedModel:
    """Whitening of Y_au Y_uu^-1 = U S W^H truncated to its numerical rank.

    ``D`` is laid out in the available-first (Pi) ordering of ``blocks``.
    """

    U: np.ndarray
    s: np.ndarray
    W: np.ndarray
    R: np.ndarray
    D: np.ndarray
    singular_values: np.ndarray
    rank_tol: float = DEFAULT_RANK_TOL

    @property
    def S(self) -> np.ndarray:
        return np.diag(self.s)

    @property
    def rank(self) -> int:
        return len(self.s)

    @property
    def condition(self) -> float:
        sv = self.singular_values
        if sv.size == 0:
            return 1.0
        return float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf


def build_whitened_model(blocks: PartitionedBlocks,
                         rank_tol: float = DEFAULT_RANK_TOL) -> WhitenedModel:
    """SVD-whitened sensing matrix D = (S^-1 U^H | -W^H).

    Under full observability (no unavailable node-phases) there is nothing
    to whiten and D reduces to the identity.
    """
    K, M = blocks.K, blocks.M
    if M == K:
        eye = np.eye(K, dtype=complex)
        return WhitenedModel(eye, np.ones(K), np.zeros((0, K), complex), eye, eye,
                             np.ones(0), rank_tol)
    T = transfer_matrix(blocks)
    U, sv, Wh = np.linalg.svd(T, full_matrices=False)
    if sv.size == 0 or sv[0] <= 1e-300:
        raise SingularMatrixError("Y_au Y_uu^-1 is zero: observed and hidden regions "
                                  "are not coupled")
    keep = sv > rank_tol * sv[0]
    U, s, Wh = U[:, keep], sv[keep], Wh[keep]
    R = (U.conj().T) / s[:, None]
    D = np.hstack([R, -Wh])
    return WhitenedModel(U, s, Wh.conj().T, R, D, sv, rank_tol)


@dataclass
class LocalizationResult:
    candidates: CandidateSet
    objective_values: np.ndarray
    order: np.ndarray
    eps: float
    metric_kind: str
    ambiguity: list[int] = field(default_factory=list)

    @property
    def ranking(self) -> list[Candidate]:
        return [self.candidates[i] for i in self.order]

    @property
    def winner(self) -> Candidate:
        return self.candidates[int(self.order[0])]

    @property
    def ambiguity_set(self) -> list[Candidate]:
        return [self.candidates[i] for i in self.ambiguity]

    def objective(self, bus: str, phases=None) -> float:
        return float(self.objective_values[self.candidates.find(bus, phases)])

    def rank_of(self, bus: str, phases=None) -> int:
        """0-based rank of a candidate."""
        i = self.candidates.find(bus, phases)
        return int(np.flatnonzero(self.order == i)[0])


def ambiguity_set(values, eps: float = DEFAULT_EPS) -> list[int]:
    """Indices whose objective is within a (1 + eps) factor of the minimum."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty ranking")
    lo = values.min()
    idx = np.flatnonzero(values <= (1.0 + eps) * lo)
    return sorted(idx.tolist(), key=lambda i: (values[i], i))


def _result(cands, values, eps, kind) -> LocalizationResult:
    order = np.argsort(values, kind="stable")
    return LocalizationResult(cands, values, order, eps, kind, ambiguity_set(values, eps))


def _hypothesis_matrix(blocks: PartitionedBlocks, cands: CandidateSet,
                       I_G: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Columns A @ I~_E,l for every candidate l (A given in Pi order)."""
    I_G = np.asarray(I_G, dtype=complex).ravel()
    inv = np.empty(blocks.M, dtype=int)
    inv[blocks.permutation] = np.arange(blocks.M)
    cols = np.empty((A.shape[0], len(cands)), dtype=complex)
    for k, c in enumerate(cands):
        if len(c.support) != I_G.size:
            raise ValueError(f"fault current has {I_G.size} entries but candidate "
                             f"{c.label} spans {len(c.support)} phases")
        cols[:, k] = A[:, inv[list(c.support)]] @ I_G
    return cols


def _check(meas: MeasurementSet, blocks: PartitionedBlocks):
    if meas.dV_a.shape != (blocks.K,) or meas.dI_a.shape != (blocks.K,):
        raise ValueError(f"measurements have {meas.dV_a.shape[0]} channels, "
                         f"blocks expect {blocks.K}")
    if tuple(meas.placement.available_indices) != tuple(blocks.available.tolist()):
        raise ValueError("measurement placement does not match the partition")


def raw_objectives(meas, blocks, I_G, cands) -> np.ndarray:
    _check(meas, blocks)
    base = meas.dV_a - blocks.Z_aa @ meas.dI_a
    H = _hypothesis_matrix(blocks, cands, I_G, blocks.Z_a)
    return np.sum(np.abs(base[:, None] - H) ** 2, axis=0)


def localize_raw(meas: MeasurementSet, blocks: PartitionedBlocks, I_G,
                 cands: CandidateSet, eps: float = DEFAULT_EPS) -> LocalizationResult:
    """argmin over candidates of ||dV_a - Z_aa dI_a - Z_a I~_E,l||^2."""
    return _result(cands, raw_objectives(meas, blocks, I_G, cands), eps, "raw")


def whitened_rhs(meas: MeasurementSet, blocks: PartitionedBlocks,
                 wm: WhitenedModel) -> np.ndarray:
    """b_hat = R (Z_aa^-1 dV_a - dI_a)."""
    if np.linalg.cond(blocks.Z_aa) > 1e14:
        raise SingularMatrixError("Z_aa is singular")
    b = np.linalg.solve(blocks.Z_aa, meas.dV_a) - meas.dI_a
    return wm.R @ b


def whitened_objectives(meas, blocks, wm, I_G, cands) -> np.ndarray:
    _check(meas, blocks)
    if wm.D.shape[1] != blocks.M:
        raise ValueError("whitened model does not match the partition")
    b_hat = whitened_rhs(meas, blocks, wm)
    H = _hypothesis_matrix(blocks, cands, I_G, wm.D)
    return np.sum(np.abs(b_hat[:, None] - H) ** 2, axis=0)


def localize_whitened(meas: MeasurementSet, blocks: PartitionedBlocks, wm: WhitenedModel,
                      I_G, cands: CandidateSet,
                      eps: float = DEFAULT_EPS) -> LocalizationResult:
    """argmin over candidates of ||b_hat - D I~_E,l||^2."""
    return _result(cands, whitened_objectives(meas, blocks, wm, I_G, cands), eps,
                   "whitened")


def write_result_csv(path, result: LocalizationResult, header: dict | None = None) -> None:
    meta = {"metric_kind": result.metric_kind, "eps": repr(float(result.eps))}
    meta.update(header or {})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        fh.write("rank,bus,phases,objective\n")
        for r, i in enumerate(result.order, start=1):
            c = result.candidates[int(i)]
            fh.write(f"{r},{c.bus},{''.join(c.phases)},{float(result.objective_values[i])!r}\n")
