"""Bundled feeders and a random radial feeder generator."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .netmodel import BusSpec, LineSpec, NetworkModel, ShuntSpec, parse_network

# 5 three-phase uPMUs each; the first is the well-spread design, the second
# is crowded on the upstream side of the feeder.
IEEE34_GOOD_PLACEMENT = ("800", "830", "848", "832", "862")
IEEE34_BAD_PLACEMENT = ("800", "814", "816", "848", "850")

FORK_IMPEDANCES = {"z0": 0.5 + 2.0j, "z12": 1.0 + 2.0j, "z23": 0.8 + 1.5j, "z24": 1.2 + 1.8j}


def load_bundled(name: str) -> NetworkModel:
    text = resources.files("pmufault.data").joinpath(name).read_text(encoding="utf-8")
    return parse_network(text)


def ieee34() -> NetworkModel:
    """IEEE 34-node feeder replica with a 100 kW generator at 848."""
    return load_bundled("ieee34.net")


def fork_network(z0=None, z12=None, z23=None, z24=None, vnom: float = 7200.0) -> NetworkModel:
    """Four single-phase buses: source at 1, lines 1-2, 2-3, 2-4, no loads."""
    z = dict(FORK_IMPEDANCES)
    for k, v in (("z0", z0), ("z12", z12), ("z23", z23), ("z24", z24)):
        if v is not None:
            z[k] = complex(v)
    buses = [BusSpec(str(i), "A", vnom) for i in range(1, 5)]
    lines = [LineSpec("1", "2", "A", [z["z12"]]),
             LineSpec("2", "3", "A", [z["z23"]]),
             LineSpec("2", "4", "A", [z["z24"]])]
    shunts = [ShuntSpec("1", "A", "source", [z["z0"]], [vnom / z["z0"]])]
    return NetworkModel(buses, lines, shunts)


def chain_network(vnom: float = 7200.0, source_bus: str = "1") -> NetworkModel:
    """Six single-phase buses in a chain 1-2-3-4-5-6, a load on every bus."""
    buses = [BusSpec(str(i), "A", vnom) for i in range(1, 7)]
    zl = [0.9 + 1.6j, 1.1 + 1.9j, 0.7 + 1.4j, 1.0 + 1.7j, 0.8 + 1.5j]
    lines = [LineSpec(str(i), str(i + 1), "A", [zl[i - 1]]) for i in range(1, 6)]
    z_src = 0.4 + 2.5j
    shunts = [ShuntSpec(source_bus, "A", "source", [z_src], [vnom / z_src])]
    for i, kw in zip(range(1, 7), (40e3, 55e3, 30e3, 60e3, 45e3, 35e3)):
        s = kw + 0.4j * kw
        shunts.append(ShuntSpec(str(i), "A", "zload", [vnom ** 2 / np.conj(s)]))
    return NetworkModel(buses, lines, shunts)


def _phase_line(rng, p: int, scale: float) -> np.ndarray:
    r = rng.uniform(0.2, 1.0, p)
    x = rng.uniform(0.4, 1.5, p)
    Z = np.diag(r + 1j * x).astype(complex)
    for i in range(p):
        for j in range(i + 1, p):
            m = rng.uniform(0.05, 0.25) + 1j * rng.uniform(0.2, 0.5)
            Z[i, j] = Z[j, i] = m
    return Z * scale


def random_radial_network(rng: np.random.Generator, max_node_phases: int = 40,
                          min_node_phases: int = 4, load_kinds=("zload", "pload"),
                          line_charging: bool = True, load_fraction: float = 0.7,
                          n_sources: int = 1, vnom: float = 7200.0) -> NetworkModel:
    """Random tree feeder with mixed 1/2/3-phase laterals.

    Bus 0 is a three-phase source.  Children inherit a subset of the parent's
    phases.  The node-phase count lands in [min_node_phases, max_node_phases].
    """
    target = int(rng.integers(min_node_phases, max_node_phases + 1))
    phases_of = {"0": "ABC"}
    order = ["0"]
    lines = []
    total = 3
    while total < target:
        parent = order[int(rng.integers(len(order)))]
        pp = phases_of[parent]
        room = target - total
        k = int(min(rng.choice([1, 2, 3], p=[0.3, 0.2, 0.5]), len(pp), room))
        ph = "".join(sorted(rng.choice(list(pp), size=k, replace=False)))
        name = str(len(order))
        phases_of[name] = ph
        order.append(name)
        total += len(ph)
        Z = _phase_line(rng, len(ph), rng.uniform(0.3, 3.0))
        ysh = None
        if line_charging:
            ysh = 1j * rng.uniform(1e-6, 5e-6) * (np.eye(len(ph)) - 0.2 * (1 - np.eye(len(ph))))
        lines.append(LineSpec(parent, name, ph, Z, ysh))
    buses = [BusSpec(b, phases_of[b], vnom) for b in order]
    shunts = []
    src_buses = ["0"] + [b for b in order[1:] if phases_of[b] == "ABC"][: max(n_sources - 1, 0)]
    for b in src_buses:
        ph = phases_of[b]
        zs = np.diag(rng.uniform(0.05, 0.3, len(ph)) + 1j * rng.uniform(0.5, 2.0, len(ph)))
        angles = {"A": 0.0, "B": -2 * np.pi / 3, "C": 2 * np.pi / 3}
        e = np.array([vnom * np.exp(1j * angles[p]) for p in ph])
        shunts.append(ShuntSpec(b, ph, "source", zs, np.linalg.solve(zs, e)))
    for b in order:
        if rng.random() > load_fraction:
            continue
        ph = phases_of[b]
        kind = str(rng.choice(list(load_kinds)))
        s = rng.uniform(5e3, 60e3, len(ph)) * (1 + 1j * rng.uniform(0.2, 0.5, len(ph)))
        if kind == "pload":
            shunts.append(ShuntSpec(b, ph, "pload", s))
        else:
            shunts.append(ShuntSpec(b, ph, "zload", vnom ** 2 / np.conj(s)))
    return NetworkModel(buses, lines, shunts)
