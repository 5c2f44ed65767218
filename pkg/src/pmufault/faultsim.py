"""Linear phasor-domain fault simulation and sparse PMU measurements."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .matrices import (AdmittanceMatrix, ImpedanceMatrix, Placement, SingularMatrixError,
                       build_admittance, invert_to_impedance)
from .netmodel import PHASES, NetworkError, NetworkModel, NodeIndexMap

Z_MIN = 1e-6
VMIN_PU = 0.85
MAX_ITER = 50
TOL = 1e-8

FAULT_TYPES = ("LLL", "LLL_G", "LG", "LL", "LL_G")
_N_PHASES = {"LLL": 3, "LLL_G": 3, "LG": 1, "LL": 2, "LL_G": 2}


class ConvergenceError(RuntimeError):
    pass


class UnmonitoredSourceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FaultSpec:
    fault_type: str
    phases: tuple[str, ...]
    bus: str
    fault_impedance: complex = 0.0

    def __post_init__(self):
        if self.fault_type not in FAULT_TYPES:
            raise ValueError(f"unknown fault type {self.fault_type!r}")
        phases = tuple(sorted({p.upper() for p in self.phases}, key=PHASES.index))
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "bus", str(self.bus))
        if len(phases) != _N_PHASES[self.fault_type]:
            raise ValueError(f"{self.fault_type} fault needs {_N_PHASES[self.fault_type]} "
                             f"phase(s), got {''.join(phases)}")

    @property
    def grounded(self) -> bool:
        return self.fault_type in ("LLL_G", "LG", "LL_G")

    @property
    def label(self) -> str:
        if self.fault_type == "LLL":
            return "LLL"
        return "".join(self.phases) + ("-G" if self.grounded else "")

    def __str__(self):
        return f"{self.label}@{self.bus}"


def parse_fault(text: str, fault_impedance: complex = 0.0) -> FaultSpec:
    """Parse ``LLL@816``, ``AG@822``, ``BCG@852``, ``AB@830``, ``ABCG@834``..."""
    m = re.fullmatch(r"\s*([A-Za-z_-]+)\s*@\s*(\S+)\s*", text)
    if not m:
        raise ValueError(f"bad fault spec {text!r}; expected e.g. LLL@816 or AG@822")
    code, bus = m.group(1).upper().replace("-", "").replace("_", ""), m.group(2)
    if code in ("LLL", "ABC"):
        return FaultSpec("LLL", PHASES, bus, fault_impedance)
    if code in ("LLLG", "ABCG"):
        return FaultSpec("LLL_G", PHASES, bus, fault_impedance)
    grounded = code.endswith("G")
    letters = code[:-1] if grounded else code
    if not letters or any(c not in PHASES for c in letters) or len(set(letters)) != len(letters):
        raise ValueError(f"bad fault code {m.group(1)!r}")
    if len(letters) == 1:
        if not grounded:
            raise ValueError("single-phase fault must be to ground (e.g. AG)")
        return FaultSpec("LG", tuple(letters), bus, fault_impedance)
    if len(letters) == 2:
        return FaultSpec("LL_G" if grounded else "LL", tuple(letters), bus, fault_impedance)
    return FaultSpec("LLL_G" if grounded else "LLL", tuple(letters), bus, fault_impedance)


@dataclass
class PhasorSnapshot:
    V0: np.ndarray
    I0: np.ndarray
    VF: np.ndarray
    IF: np.ndarray
    I_E_true: np.ndarray
    index_map: NodeIndexMap
    fault: FaultSpec | None
    source_currents_pre: list[np.ndarray] = field(default_factory=list)
    source_currents_post: list[np.ndarray] = field(default_factory=list)
    iterations: tuple[int, int] = (0, 0)

    @property
    def dV(self) -> np.ndarray:
        return self.VF - self.V0

    @property
    def dI(self) -> np.ndarray:
        return self.IF - self.I0

    def residuals(self, Z: np.ndarray) -> dict[str, float]:
        """Relative residuals of V0 = Z I0, VF = Z(IF + I_E) and their difference."""
        def rel(a, b):
            return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-300))
        return {
            "prefault": rel(self.V0, Z @ self.I0),
            "postfault": rel(self.VF, Z @ (self.IF + self.I_E_true)),
            "delta": rel(self.dV, Z @ (self.dI + self.I_E_true)) if np.any(self.dV) else 0.0,
        }


@dataclass(frozen=True)
class NoiseModel:
    magnitude_std: float = 0.0
    angle_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.magnitude_std < 0 or self.angle_std < 0:
            raise ValueError("noise standard deviations must be non-negative")

    def apply(self, rng: np.random.Generator, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        mag = 1.0 + self.magnitude_std * rng.standard_normal(x.shape)
        ang = self.angle_std * rng.standard_normal(x.shape)
        return x * mag * np.exp(1j * ang)


@dataclass
class MeasurementSet:
    placement: Placement
    dV_a: np.ndarray
    dI_a: np.ndarray
    source_currents_pre: list[np.ndarray]
    source_currents_post: list[np.ndarray]
    noise_seed: int = 0


class _Circuit:
    """Precomputed pieces shared by the pre- and post-fault solves."""

    def __init__(self, model: NetworkModel, adm: AdmittanceMatrix | None = None,
                 load_scale: float = 1.0):
        self.model = model
        self.adm = adm or build_admittance(model, load_scale=load_scale)
        self.imap = self.adm.index_map
        M = self.imap.M
        self.I_N = np.zeros(M, complex)
        self.sources = []
        for sh in model.sources:
            rows = self.imap.indices(sh.bus, sh.phases)
            self.I_N[rows] += sh.norton_current
            self.sources.append((sh, rows, np.linalg.inv(sh.value)))
        rows, s, vn = [], [], []
        for sh in model.shunts:
            if sh.kind != "pload":
                continue
            vnom = model.bus(sh.bus).nominal_voltage
            for p, sp in zip(sh.phases, sh.value):
                rows.append(self.imap.index(sh.bus, p))
                s.append(sp * load_scale)
                vn.append(vnom)
        self.pl_rows = np.array(rows, dtype=int)
        self.pl_s = np.array(s, dtype=complex)
        self.pl_vn = np.array(vn, dtype=float)

    def deviation(self, V: np.ndarray) -> np.ndarray:
        """Constant-power load current minus its nominal-impedance current."""
        d = np.zeros_like(V)
        if self.pl_rows.size == 0:
            return d
        v = V[self.pl_rows]
        y_eq = np.conj(self.pl_s) / self.pl_vn ** 2
        low = np.abs(v) < VMIN_PU * self.pl_vn
        with np.errstate(divide="ignore", invalid="ignore"):
            withdrawn = np.where(low, v * y_eq / VMIN_PU ** 2, np.conj(self.pl_s / v))
        # injections are positive into the network
        np.add.at(d, self.pl_rows, -(withdrawn - v * y_eq))
        return d

    def solve(self, Y: np.ndarray, V_start=None) -> tuple[np.ndarray, np.ndarray, int]:
        try:
            lu = _factor(Y)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(str(exc)) from None
        V = lu(self.I_N) if V_start is None else V_start
        for it in range(1, MAX_ITER + 1):
            I = self.I_N + self.deviation(V)
            V_new = lu(I)
            change = np.max(np.abs(V_new - V)) / max(np.max(np.abs(V_new)), 1e-300)
            V = V_new
            if change < TOL:
                # return the injection that produced V so that V = Z I holds exactly
                return V, I, it
        raise ConvergenceError(f"load fixed point did not converge in {MAX_ITER} iterations")

    def source_currents(self, V: np.ndarray) -> list[np.ndarray]:
        """Current each source injects into the grid, per phase."""
        return [sh.norton_current - y_s @ V[rows] for sh, rows, y_s in self.sources]


def _factor(Y):
    from scipy.linalg import lu_factor, lu_solve

    if np.linalg.cond(Y) > 1e14:
        raise np.linalg.LinAlgError("matrix is singular")
    f = lu_factor(Y)
    return lambda b: lu_solve(f, b)


def solve_prefault(model: NetworkModel, adm: AdmittanceMatrix | None = None,
                   load_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    ckt = _Circuit(model, adm, load_scale)
    V0, I0, _ = ckt.solve(ckt.adm.Y)
    return V0, I0


def fault_admittance(imap: NodeIndexMap, fault: FaultSpec) -> np.ndarray:
    """Delta-Y of the fault paths; phase-to-ground or phase-to-phase branches."""
    z = complex(fault.fault_impedance)
    if np.isinf(abs(z)):
        y = 0.0
    else:
        y = 1.0 / (z if abs(z) >= Z_MIN else Z_MIN)
    M = imap.M
    dY = np.zeros((M, M), complex)
    idx = imap.indices(fault.bus, fault.phases)
    if fault.grounded:
        for i in idx:
            dY[i, i] += y
    else:
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                i, j = idx[a], idx[b]
                dY[i, i] += y
                dY[j, j] += y
                dY[i, j] -= y
                dY[j, i] -= y
    return dY


def apply_fault(model: NetworkModel, fault: FaultSpec | None,
                adm: AdmittanceMatrix | None = None, imp: ImpedanceMatrix | None = None,
                load_scale: float = 1.0, check: bool = True) -> PhasorSnapshot:
    """Simulate pre- and post-fault steady states for one fault.

    ``fault=None`` returns an unfaulted snapshot (VF = V0).
    """
    ckt = _Circuit(model, adm, load_scale)
    imap = ckt.imap
    V0, I0, it0 = ckt.solve(ckt.adm.Y)
    if fault is not None:
        bus = model.bus(fault.bus)
        missing = set(fault.phases) - set(bus.phases)
        if missing:
            raise NetworkError(f"fault {fault}: bus {fault.bus} lacks phase(s) {sorted(missing)}")
        dY = fault_admittance(imap, fault)
    else:
        dY = np.zeros_like(ckt.adm.Y)
    if np.any(dY):
        VF, IF, itF = ckt.solve(ckt.adm.Y + dY, V_start=V0)
    else:
        # open fault: the post-fault state is the pre-fault state
        VF, IF, itF = V0.copy(), I0.copy(), 0
    # I_E = -dY VF, evaluated as Y VF - IF on the faulted node-phases: the
    # two agree exactly, but a bolted fault's huge admittance would amplify
    # rounding in VF by |dY| in the direct form
    I_E = np.zeros(imap.M, complex)
    if np.any(dY):
        idx = imap.indices(fault.bus, fault.phases)
        I_E[idx] = (ckt.adm.Y[idx] @ VF) - IF[idx]
    snap = PhasorSnapshot(V0, I0, VF, IF, I_E, imap, fault,
                          ckt.source_currents(V0), ckt.source_currents(VF), (it0, itF))
    if check:
        Z = (imp or invert_to_impedance(ckt.adm)).Z
        res = snap.residuals(Z)
        if max(res.values()) > 1e-9:
            raise RuntimeError(f"circuit-law residuals too large: {res}")
    return snap


def measure(snapshot: PhasorSnapshot, placement: Placement, noise: NoiseModel | None = None,
            model: NetworkModel | None = None) -> MeasurementSet:
    """Extract the monitored deltas and source currents, with optional noise."""
    noise = noise or NoiseModel()
    idx = np.array(placement.available_indices, dtype=int)
    dV_a = snapshot.dV[idx]
    dI_a = snapshot.dI[idx]
    pre = [c.copy() for c in snapshot.source_currents_pre]
    post = [c.copy() for c in snapshot.source_currents_post]
    if noise.magnitude_std or noise.angle_std:
        rng = np.random.default_rng(noise.seed)
        dV_a = noise.apply(rng, dV_a)
        dI_a = noise.apply(rng, dI_a)
        pre = [noise.apply(rng, c) for c in pre]
        post = [noise.apply(rng, c) for c in post]
    if model is not None:
        unmonitored = [b for b in model.source_buses if b not in placement.monitored]
        if unmonitored:
            warnings.warn(f"source bus(es) {unmonitored} are not monitored; the fault "
                          "current cannot be approximated", UnmonitoredSourceWarning,
                          stacklevel=2)
    return MeasurementSet(placement, dV_a, dI_a, pre, post, noise.seed)


def approximate_fault_current(meas: MeasurementSet, fault: FaultSpec,
                              model: NetworkModel) -> np.ndarray:
    """Fault injection per faulted phase from the change in source currents.

    The fault's injection is the negative of the extra current the sources
    deliver, so I_G[p] = -sum_s (post_s[p] - pre_s[p]).
    """
    unmonitored = [b for b in model.source_buses if b not in meas.placement.monitored]
    if unmonitored:
        raise ValueError(f"source bus(es) {unmonitored} must be monitored to "
                         "approximate the fault current")
    I_G = np.zeros(len(fault.phases), complex)
    for sh, pre, post in zip(model.sources, meas.source_currents_pre,
                             meas.source_currents_post):
        for k, p in enumerate(fault.phases):
            if p in sh.phases:
                j = sh.phases.index(p)
                I_G[k] -= post[j] - pre[j]
    return I_G


def exact_fault_current(snapshot: PhasorSnapshot) -> np.ndarray:
    f = snapshot.fault
    if f is None:
        raise ValueError("snapshot has no fault")
    return snapshot.I_E_true[snapshot.index_map.indices(f.bus, f.phases)]


def write_snapshot_csv(path, snapshot: PhasorSnapshot) -> None:
    cols = ["V0", "VF", "I0", "IF", "IE", "dV", "dI"]
    data = [snapshot.V0, snapshot.VF, snapshot.I0, snapshot.IF, snapshot.I_E_true,
            snapshot.dV, snapshot.dI]
    header = ["bus", "phase"] + [f"{c}_{part}" for c in cols for part in ("re", "im")]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i, (bus, ph) in enumerate(snapshot.index_map.entries):
            vals = []
            for arr in data:
                vals += [repr(float(arr[i].real)), repr(float(arr[i].imag))]
            fh.write(",".join([bus, ph] + vals) + "\n")


def simulate(model: NetworkModel, fault: FaultSpec | None, placement: Placement,
             noise: NoiseModel | None = None) -> tuple[PhasorSnapshot, MeasurementSet]:
    snap = apply_fault(model, fault)
    return snap, measure(snap, placement, noise, model)


__all__ = [
    "FaultSpec", "PhasorSnapshot", "NoiseModel", "MeasurementSet", "parse_fault",
    "solve_prefault", "apply_fault", "measure", "approximate_fault_current",
    "exact_fault_current", "fault_admittance", "write_snapshot_csv", "simulate",
]
