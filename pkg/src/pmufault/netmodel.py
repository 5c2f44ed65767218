"""Feeder data model, network-file parser and node-phase indexing.

The network description is a line-oriented text format::

    # comment
    bus 800 phases=ABC vnom=14376.02
    line 800 802 phases=ABC z=[0.1+0.2j, 0.01+0.05j, ...] ysh=[0+1e-6j, ...]
    shunt 800 phases=ABC kind=source z=[2+20j, 2+20j, 2+20j] inorton=[...]
    shunt 860 phases=ABC kind=pload s=[20000+16000j, ...]

Optional ``[buses]``/``[lines]``/``[shunts]`` section headers are accepted and
ignored; every record is self-describing through its leading keyword.
Impedances are in ohms, admittances in siemens, powers in VA per phase and
``vnom`` is the line-to-ground voltage magnitude in volts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

PHASES = ("A", "B", "C")

SHUNT_KINDS = ("zload", "pload", "cap", "source")

_KIND_ALIASES = {
    "zload": "zload",
    "constant_impedance_load": "zload",
    "pload": "pload",
    "constant_power_load": "pload",
    "cap": "cap",
    "capacitor_or_reactor": "cap",
    "source": "source",
    "source_norton": "source",
}


class NetworkError(ValueError):
    """Raised when a network description is inconsistent."""


class NetworkParseError(NetworkError):
    """Syntax error in a network file, with 1-based line and column."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def _normalize_phases(phases: Iterable[str] | str) -> tuple[str, ...]:
    if isinstance(phases, str):
        phases = list(phases.upper())
    phases = [p.upper() for p in phases]
    if not phases:
        raise NetworkError("phase set must be non-empty")
    if len(set(phases)) != len(phases):
        raise NetworkError(f"duplicate phases in {''.join(phases)!r}")
    bad = [p for p in phases if p not in PHASES]
    if bad:
        raise NetworkError(f"unknown phase(s) {bad}")
    return tuple(sorted(phases, key=PHASES.index))


def _as_square(values, p: int, what: str, diagonal_ok: bool = True) -> np.ndarray:
    arr = np.asarray(values, dtype=complex)
    if arr.ndim == 1:
        if arr.size == p * p:
            return arr.reshape(p, p)
        if diagonal_ok and arr.size == p:
            return np.diag(arr)
    elif arr.shape == (p, p):
        return arr.copy()
    raise NetworkError(f"{what}: expected {p} or {p * p} entries, got shape {arr.shape}")


@dataclass(frozen=True, eq=False)
class BusSpec:
    id: str
    phases: tuple[str, ...]
    nominal_voltage: float

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "phases", _normalize_phases(self.phases))
        object.__setattr__(self, "nominal_voltage", float(self.nominal_voltage))
        if not self.nominal_voltage > 0:
            raise NetworkError(f"bus {self.id}: nominal voltage must be positive")

    def __eq__(self, other):
        if not isinstance(other, BusSpec):
            return NotImplemented
        return (self.id, self.phases, self.nominal_voltage) == (
            other.id, other.phases, other.nominal_voltage)


@dataclass(frozen=True, eq=False)
class LineSpec:
    from_bus: str
    to_bus: str
    phases: tuple[str, ...]
    series_impedance: np.ndarray
    shunt_admittance: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "from_bus", str(self.from_bus))
        object.__setattr__(self, "to_bus", str(self.to_bus))
        phases = _normalize_phases(self.phases)
        object.__setattr__(self, "phases", phases)
        p = len(phases)
        label = f"line {self.from_bus}-{self.to_bus}"
        z = _as_square(self.series_impedance, p, label + " z")
        object.__setattr__(self, "series_impedance", z)
        ysh = self.shunt_admittance
        ysh = np.zeros((p, p), complex) if ysh is None else _as_square(ysh, p, label + " ysh")
        object.__setattr__(self, "shunt_admittance", ysh)
        if self.from_bus == self.to_bus:
            raise NetworkError(f"{label}: both ends on the same bus")
        if np.linalg.cond(z) > 1e14:
            raise NetworkError(f"{label}: series impedance is singular")

    @property
    def primitive_admittance(self) -> np.ndarray:
        z = self.series_impedance
        if np.linalg.cond(z) > 1e14:
            raise NetworkError(
                f"line {self.from_bus}-{self.to_bus}: series impedance is singular")
        y = np.linalg.inv(z)
        # reciprocal line: keep Y exactly symmetric despite rounding in inv
        return (y + y.T) / 2 if np.allclose(z, z.T) else y

    def __eq__(self, other):
        if not isinstance(other, LineSpec):
            return NotImplemented
        return ((self.from_bus, self.to_bus, self.phases)
                == (other.from_bus, other.to_bus, other.phases)
                and np.array_equal(self.series_impedance, other.series_impedance)
                and np.array_equal(self.shunt_admittance, other.shunt_admittance))


@dataclass(frozen=True, eq=False)
class ShuntSpec:
    """Element between node-phases of one bus and the implicit reference.

    ``value`` holds impedances in ohms (``zload``, ``cap``, ``source``) as a
    p x p matrix, or nominal complex power per phase in VA (``pload``) as a
    length-p vector.
    """

    bus: str
    phases: tuple[str, ...]
    kind: str
    value: np.ndarray
    norton_current: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "bus", str(self.bus))
        phases = _normalize_phases(self.phases)
        object.__setattr__(self, "phases", phases)
        kind = _KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise NetworkError(f"shunt at {self.bus}: unknown kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        p = len(phases)
        label = f"{kind} shunt at {self.bus}"
        if kind == "pload":
            s = np.asarray(self.value, dtype=complex).ravel()
            if s.size != p:
                raise NetworkError(f"{label}: expected {p} power values")
            if np.any(np.abs(s) == 0):
                raise NetworkError(f"{label}: power magnitude must be positive")
            object.__setattr__(self, "value", s)
        else:
            object.__setattr__(self, "value", _as_square(self.value, p, label))
        if kind == "source":
            if self.norton_current is None:
                raise NetworkError(f"{label}: Norton current missing")
            i_n = np.asarray(self.norton_current, dtype=complex).ravel()
            if i_n.size != p:
                raise NetworkError(f"{label}: expected {p} Norton current values")
            object.__setattr__(self, "norton_current", i_n)
        elif self.norton_current is not None:
            raise NetworkError(f"{label}: only sources carry a Norton current")

    def admittance(self, nominal_voltage: float) -> np.ndarray:
        """p x p admittance stamped on the bus diagonal block."""
        if self.kind == "pload":
            # z_eq = |V|^2 / conj(S)  =>  y_eq = conj(S) / |V|^2
            return np.diag(np.conj(self.value) / nominal_voltage ** 2)
        return np.linalg.inv(self.value)

    def __eq__(self, other):
        if not isinstance(other, ShuntSpec):
            return NotImplemented
        if (self.bus, self.phases, self.kind) != (other.bus, other.phases, other.kind):
            return False
        if not np.array_equal(self.value, other.value):
            return False
        if self.norton_current is None or other.norton_current is None:
            return self.norton_current is other.norton_current
        return np.array_equal(self.norton_current, other.norton_current)


@dataclass(frozen=True)
class NodeIndexMap:
    """Deterministic bijection between (bus, phase) pairs and 0..M-1."""

    entries: tuple[tuple[str, str], ...]
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lookup = {}
        for i, key in enumerate(self.entries):
            if key in lookup:
                raise NetworkError(f"duplicate node-phase {key}")
            lookup[key] = i
        object.__setattr__(self, "_lookup", lookup)

    @property
    def M(self) -> int:
        return len(self.entries)

    def __len__(self):
        return len(self.entries)

    def index(self, bus: str, phase: str) -> int:
        try:
            return self._lookup[(str(bus), phase)]
        except KeyError:
            raise KeyError(f"no node-phase {bus}.{phase}") from None

    def indices(self, bus: str, phases: Sequence[str] | None = None) -> list[int]:
        """Indices of a bus's node-phases (all of them, or the given phases)."""
        bus = str(bus)
        if phases is None:
            return [i for i, (b, _) in enumerate(self.entries) if b == bus]
        return [self.index(bus, p) for p in phases]

    def phase_indices(self, phase: str) -> list[int]:
        return [i for i, (_, p) in enumerate(self.entries) if p == phase]

    def label(self, i: int) -> str:
        bus, phase = self.entries[i]
        return f"{bus}.{phase}"


@dataclass(eq=False)
class NetworkModel:
    buses: list[BusSpec]
    lines: list[LineSpec]
    shunts: list[ShuntSpec]

    def __post_init__(self):
        self.validate()

    @property
    def bus_ids(self) -> list[str]:
        return [b.id for b in self.buses]

    def bus(self, bus_id: str) -> BusSpec:
        for b in self.buses:
            if b.id == str(bus_id):
                return b
        raise NetworkError(f"unknown bus {bus_id!r}")

    @property
    def sources(self) -> list[ShuntSpec]:
        return [s for s in self.shunts if s.kind == "source"]

    @property
    def source_buses(self) -> list[str]:
        seen = []
        for s in self.sources:
            if s.bus not in seen:
                seen.append(s.bus)
        return seen

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.bus_ids)
        for ln in self.lines:
            g.add_edge(ln.from_bus, ln.to_bus)
        return g

    def validate(self) -> None:
        ids = [b.id for b in self.buses]
        if not ids:
            raise NetworkError("network has no buses")
        dup = {i for i in ids if ids.count(i) > 1}
        if dup:
            raise NetworkError(f"duplicate bus id(s): {sorted(dup)}")
        phases = {b.id: set(b.phases) for b in self.buses}
        for ln in self.lines:
            for end in (ln.from_bus, ln.to_bus):
                if end not in phases:
                    raise NetworkError(f"line {ln.from_bus}-{ln.to_bus}: unknown bus {end!r}")
                if not set(ln.phases) <= phases[end]:
                    raise NetworkError(
                        f"line {ln.from_bus}-{ln.to_bus}: phases {''.join(ln.phases)} "
                        f"not present at bus {end}")
        for sh in self.shunts:
            if sh.bus not in phases:
                raise NetworkError(f"{sh.kind} shunt: unknown bus {sh.bus!r}")
            if not set(sh.phases) <= phases[sh.bus]:
                raise NetworkError(
                    f"{sh.kind} shunt at {sh.bus}: phases {''.join(sh.phases)} not present")
        if not any(s.kind == "source" for s in self.shunts):
            raise NetworkError("network needs at least one source")
        if not nx.is_connected(self.graph()):
            raise NetworkError("network graph is not connected")

    def __eq__(self, other):
        if not isinstance(other, NetworkModel):
            return NotImplemented
        return (self.buses == other.buses and self.lines == other.lines
                and self.shunts == other.shunts)


def build_index_map(model: NetworkModel) -> NodeIndexMap:
    """Buses in declaration order, phases A < B < C within each bus."""
    return NodeIndexMap(tuple((b.id, p) for b in model.buses for p in b.phases))


# --------------------------------------------------------------------------
# text format

_COMPLEX_RE = re.compile(
    r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?([+-](\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)?j?$")


def parse_complex(token: str) -> complex:
    tok = token.strip().replace(" ", "")
    if not tok or not _COMPLEX_RE.match(tok):
        raise ValueError(f"bad complex literal {token!r}")
    return complex(tok)


def _parse_vector(text: str, lineno: int, col: int) -> np.ndarray:
    if not (text.startswith("[") and text.endswith("]")):
        raise NetworkParseError("expected bracketed list '[...]'", lineno, col)
    body = text[1:-1].strip()
    if not body:
        return np.zeros(0, complex)
    values = []
    for tok in re.split(r"[,\s]+", body):
        if not tok:
            continue
        try:
            values.append(parse_complex(tok))
        except ValueError as exc:
            raise NetworkParseError(str(exc), lineno, col + 1 + text.find(tok) - 1) from None
    return np.array(values, dtype=complex)


def _tokenize(line: str, lineno: int) -> list[tuple[str, int]]:
    """Split on whitespace outside brackets; return (token, 1-based column)."""
    tokens, buf, start, depth = [], [], None, 0
    for i, ch in enumerate(line):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth < 0:
                raise NetworkParseError("unbalanced ']'", lineno, i + 1)
        if ch.isspace() and depth == 0:
            if buf:
                tokens.append(("".join(buf), start + 1))
                buf = []
            continue
        if not buf:
            start = i
        buf.append(ch)
    if depth:
        raise NetworkParseError("unterminated '['", lineno, len(line))
    if buf:
        tokens.append(("".join(buf), start + 1))
    return tokens


def _keyvals(tokens, lineno) -> dict[str, tuple[str, int]]:
    out = {}
    for tok, col in tokens:
        if "=" not in tok:
            raise NetworkParseError(f"expected key=value, got {tok!r}", lineno, col)
        key, val = tok.split("=", 1)
        if key in out:
            raise NetworkParseError(f"repeated key {key!r}", lineno, col)
        out[key.lower()] = (val, col + len(key) + 1)
    return out


def _require(kv, key, lineno, record):
    if key not in kv:
        raise NetworkParseError(f"{record} record missing '{key}='", lineno)
    return kv[key]


def parse_network(text: str) -> NetworkModel:
    """Parse a network description into a validated :class:`NetworkModel`."""
    buses, lines, shunts = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if re.fullmatch(r"\s*\[\w+\]\s*", line):
            continue
        tokens = _tokenize(line, lineno)
        kind, kcol = tokens[0]
        kind = kind.lower()
        try:
            if kind == "bus":
                if len(tokens) < 2:
                    raise NetworkParseError("bus record needs an id", lineno, kcol)
                kv = _keyvals(tokens[2:], lineno)
                ph, _ = _require(kv, "phases", lineno, "bus")
                vn, vcol = _require(kv, "vnom", lineno, "bus")
                try:
                    vnom = float(vn)
                except ValueError:
                    raise NetworkParseError(f"bad float {vn!r}", lineno, vcol) from None
                buses.append(BusSpec(tokens[1][0], ph, vnom))
            elif kind == "line":
                if len(tokens) < 3:
                    raise NetworkParseError("line record needs two bus ids", lineno, kcol)
                kv = _keyvals(tokens[3:], lineno)
                ph, _ = _require(kv, "phases", lineno, "line")
                z, zcol = _require(kv, "z", lineno, "line")
                ysh = None
                if "ysh" in kv:
                    ysh = _parse_vector(kv["ysh"][0], lineno, kv["ysh"][1])
                lines.append(LineSpec(tokens[1][0], tokens[2][0], ph,
                                      _parse_vector(z, lineno, zcol), ysh))
            elif kind == "shunt":
                if len(tokens) < 2:
                    raise NetworkParseError("shunt record needs a bus id", lineno, kcol)
                kv = _keyvals(tokens[2:], lineno)
                ph, _ = _require(kv, "phases", lineno, "shunt")
                sk, _ = _require(kv, "kind", lineno, "shunt")
                sk = _KIND_ALIASES.get(sk.lower(), sk)
                key = "s" if sk == "pload" else "z"
                val, vcol = _require(kv, key, lineno, "shunt")
                inorton = None
                if "inorton" in kv:
                    inorton = _parse_vector(kv["inorton"][0], lineno, kv["inorton"][1])
                shunts.append(ShuntSpec(tokens[1][0], ph, sk,
                                        _parse_vector(val, lineno, vcol), inorton))
            else:
                raise NetworkParseError(f"unknown record type {kind!r}", lineno, kcol)
        except NetworkParseError:
            raise
        except NetworkError as exc:
            raise NetworkParseError(str(exc), lineno, kcol) from None
    return NetworkModel(buses, lines, shunts)


def load_network(path) -> NetworkModel:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def format_complex(z: complex) -> str:
    z = complex(z)
    return f"{z.real!r}{'+' if z.imag >= 0 or np.isnan(z.imag) else '-'}{abs(z.imag)!r}j"


def _fmt_vec(values) -> str:
    return "[" + ", ".join(format_complex(v) for v in np.asarray(values).ravel()) + "]"


def format_network(model: NetworkModel) -> str:
    """Serialize a model; ``parse_network(format_network(m)) == m``."""
    out = ["[buses]"]
    for b in model.buses:
        out.append(f"bus {b.id} phases={''.join(b.phases)} vnom={b.nominal_voltage!r}")
    out.append("[lines]")
    for ln in model.lines:
        rec = (f"line {ln.from_bus} {ln.to_bus} phases={''.join(ln.phases)} "
               f"z={_fmt_vec(ln.series_impedance)}")
        if np.any(ln.shunt_admittance):
            rec += f" ysh={_fmt_vec(ln.shunt_admittance)}"
        out.append(rec)
    out.append("[shunts]")
    for sh in model.shunts:
        key = "s" if sh.kind == "pload" else "z"
        rec = f"shunt {sh.bus} phases={''.join(sh.phases)} kind={sh.kind} {key}={_fmt_vec(sh.value)}"
        if sh.norton_current is not None:
            rec += f" inorton={_fmt_vec(sh.norton_current)}"
        out.append(rec)
    return "\n".join(out) + "\n"
