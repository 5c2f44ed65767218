"""Regenerate src/pmufault/data/ieee34.net from the IEEE 34-node feeder sheet.

Line geometry codes 300-304 in ohm/mile and uS/mile, lengths in feet, spot
and distributed loads in kW/kvar.  Distributed loads are lumped half at
each end of their segment and all loads run at half the published
value (see LOAD_SCALE); delta loads are split evenly onto the two phases
of each branch.  Both regulators are kept as their short series sections and
the 832-888 transformer is referred to the 24.9 kV side, so every bus uses
the same 14.376 kV line-to-ground base.

    python tools/make_ieee34.py > src/pmufault/data/ieee34.net
"""

import sys

import numpy as np

from pmufault.faultsim import solve_prefault
from pmufault.netmodel import BusSpec, LineSpec, NetworkModel, ShuntSpec, format_network

VLN = 24900 / np.sqrt(3)
V_SOURCE_PU = 1.05
# without regulator boost the full-load feeder sags below 0.8 pu at 890;
# half load keeps every node-phase inside [0.90, 1.10] pu
LOAD_SCALE = 0.5
MILE = 5280.0

_UPPER = {
    300: ([1.3368 + 1.3343j, 0.2101 + 0.5779j, 0.2130 + 0.5015j,
           1.3238 + 1.3569j, 0.2066 + 0.4591j, 1.3294 + 1.3471j],
          [5.3350, -1.5313, -0.9943, 5.0979, -0.6212, 4.8880]),
    301: ([1.9300 + 1.4115j, 0.2327 + 0.6442j, 0.2359 + 0.5691j,
           1.9157 + 1.4281j, 0.2288 + 0.5238j, 1.9219 + 1.4209j],
          [5.1207, -1.4364, -0.9402, 4.9055, -0.5951, 4.7154]),
}
_SINGLE = {302: (2.7995 + 1.4855j, 4.2251), 303: (2.7995 + 1.4855j, 4.2251),
           304: (1.9217 + 1.4212j, 4.3637)}

BUSES = [
    ("800", "ABC"), ("802", "ABC"), ("806", "ABC"), ("808", "ABC"), ("810", "B"),
    ("812", "ABC"), ("814", "ABC"), ("850", "ABC"), ("816", "ABC"), ("818", "A"),
    ("820", "A"), ("822", "A"), ("824", "ABC"), ("826", "B"), ("828", "ABC"),
    ("830", "ABC"), ("854", "ABC"), ("856", "B"), ("852", "ABC"), ("832", "ABC"),
    ("858", "ABC"), ("864", "A"), ("834", "ABC"), ("842", "ABC"), ("844", "ABC"),
    ("846", "ABC"), ("848", "ABC"), ("860", "ABC"), ("836", "ABC"), ("840", "ABC"),
    ("862", "ABC"), ("838", "B"), ("888", "ABC"), ("890", "ABC"),
]

# from, to, feet, config
LINES = [
    ("800", "802", 2580, 300), ("802", "806", 1730, 300), ("806", "808", 32230, 300),
    ("808", "810", 5804, 303), ("808", "812", 37500, 300), ("812", "814", 29730, 300),
    ("814", "850", 10, 301), ("816", "818", 1710, 302), ("816", "824", 10210, 301),
    ("818", "820", 48150, 302), ("820", "822", 13740, 302), ("824", "826", 3030, 303),
    ("824", "828", 840, 301), ("828", "830", 20440, 301), ("830", "854", 520, 301),
    ("832", "858", 4900, 301), ("834", "860", 2020, 301), ("834", "842", 280, 301),
    ("836", "840", 860, 301), ("836", "862", 280, 301), ("842", "844", 1350, 301),
    ("844", "846", 3640, 301), ("846", "848", 530, 301), ("850", "816", 310, 301),
    ("852", "832", 10, 301), ("854", "856", 23330, 303), ("854", "852", 36830, 301),
    ("858", "864", 1620, 302), ("858", "834", 5830, 301), ("860", "836", 2680, 301),
    ("862", "838", 4860, 304),
]

# bus, connection, model, {phase or delta branch: (kW, kvar)}
SPOT = [
    ("860", "Y", "PQ", {"A": (20, 16), "B": (20, 16), "C": (20, 16)}),
    ("840", "Y", "I", {"A": (9, 7), "B": (9, 7), "C": (9, 7)}),
    ("844", "Y", "Z", {"A": (135, 105), "B": (135, 105), "C": (135, 105)}),
    ("848", "D", "PQ", {"AB": (20, 16), "BC": (20, 16), "CA": (20, 16)}),
    ("830", "D", "Z", {"AB": (10, 5), "BC": (10, 5), "CA": (25, 10)}),
    ("890", "D", "I", {"AB": (150, 75), "BC": (150, 75), "CA": (150, 75)}),
]

DISTRIBUTED = [
    ("802", "806", "Y", "PQ", {"B": (30, 15), "C": (25, 14)}),
    ("808", "810", "Y", "I", {"B": (16, 8)}),
    ("818", "820", "Y", "Z", {"A": (34, 17)}),
    ("820", "822", "Y", "PQ", {"A": (135, 70)}),
    ("816", "824", "D", "I", {"BC": (5, 2)}),
    ("824", "826", "Y", "I", {"B": (40, 20)}),
    ("824", "828", "Y", "PQ", {"C": (4, 2)}),
    ("828", "830", "Y", "PQ", {"A": (7, 3)}),
    ("854", "856", "Y", "PQ", {"B": (4, 2)}),
    ("832", "858", "D", "Z", {"AB": (7, 3), "BC": (2, 1), "CA": (6, 3)}),
    ("858", "864", "Y", "PQ", {"A": (2, 1)}),
    ("858", "834", "D", "PQ", {"AB": (4, 2), "BC": (15, 8), "CA": (13, 7)}),
    ("834", "860", "D", "Z", {"AB": (16, 8), "BC": (20, 10), "CA": (110, 55)}),
    ("860", "836", "D", "PQ", {"AB": (30, 15), "BC": (10, 6), "CA": (42, 22)}),
    ("836", "840", "D", "I", {"AB": (18, 9), "BC": (22, 11)}),
    ("862", "838", "Y", "PQ", {"B": (28, 14)}),
    ("842", "844", "Y", "PQ", {"A": (9, 5)}),
    ("844", "846", "Y", "PQ", {"B": (25, 12), "C": (20, 11)}),
    ("846", "848", "Y", "PQ", {"B": (23, 11)}),
]

CAPACITORS = [("844", 100.0), ("848", 150.0)]  # kvar per phase


def _line(frm, to, feet, code, phases):
    miles = feet / MILE
    if code in _UPPER:
        zu, bu = _UPPER[code]
        Z = np.zeros((3, 3), complex)
        B = np.zeros((3, 3))
        k = 0
        for i in range(3):
            for j in range(i, 3):
                Z[i, j] = Z[j, i] = zu[k]
                B[i, j] = B[j, i] = bu[k]
                k += 1
    else:
        z, b = _SINGLE[code]
        Z, B = np.array([[z]]), np.array([[b]])
    return LineSpec(frm, to, phases, Z * miles, 1j * B * 1e-6 * miles)


def _wye_powers(conn, powers, scale=1.0):
    """Per-phase complex VA (wye equivalent) from a load table entry."""
    out = {}
    for key, (kw, kvar) in powers.items():
        s = (kw + 1j * kvar) * 1e3 * scale
        phases = [key] if conn == "Y" else list(key)
        for p in phases:
            out[p] = out.get(p, 0) + s / len(phases)
    return out


def _load_shunts(bus, conn, model, powers, phases_at_bus, scale=1.0):
    per_phase = _wye_powers(conn, powers, scale)
    ph = "".join(p for p in "ABC" if p in per_phase and p in phases_at_bus)
    s = np.array([per_phase[p] for p in ph])
    if model == "Z":
        return ShuntSpec(bus, ph, "zload", VLN ** 2 / np.conj(s))
    return ShuntSpec(bus, ph, "pload", s)


def build(gen_kw: float = 100.0) -> NetworkModel:
    phase_of = dict(BUSES)
    buses = [BusSpec(b, ph, VLN) for b, ph in BUSES]
    lines = [_line(f, t, ft, code, "".join(p for p in phase_of[t] if p in phase_of[f]))
             for f, t, ft, code in LINES]
    # XFM-1 500 kVA, 1.9 % + j4.08 %, and the 4.16 kV line, referred to 24.9 kV
    zbase = 24900 ** 2 / 500e3
    lines.append(LineSpec("832", "888", "ABC", np.eye(3) * (0.019 + 0.0408j) * zbase))
    ratio2 = (24.9 / 4.16) ** 2
    l890 = _line("888", "890", 10560, 300, "ABC")
    lines.append(LineSpec("888", "890", "ABC", l890.series_impedance * ratio2,
                          l890.shunt_admittance / ratio2))

    shunts = []
    # substation: 2500 kVA, 1 % + j8 % on 24.9 kV, behind a stiff 69 kV bus
    zs = np.eye(3) * (0.01 + 0.08j) * 24900 ** 2 / 2500e3
    e = V_SOURCE_PU * VLN * np.exp(1j * np.array([0.0, -2 * np.pi / 3, 2 * np.pi / 3]))
    shunts.append(ShuntSpec("800", "ABC", "source", zs, np.linalg.solve(zs, e)))
    for bus, conn, mdl, powers in SPOT:
        shunts.append(_load_shunts(bus, conn, mdl, powers, phase_of[bus], LOAD_SCALE))
    for a, b, conn, mdl, powers in DISTRIBUTED:
        for bus in (a, b):
            shunts.append(_load_shunts(bus, conn, mdl, powers, phase_of[bus],
                                       0.5 * LOAD_SCALE))
    for bus, kvar in CAPACITORS:
        zc = VLN ** 2 / (1j * kvar * 1e3)
        shunts.append(ShuntSpec(bus, "ABC", "cap", np.full(3, zc)))

    # 100 kW synchronous machine at 848: X'' = 0.2 pu, R = 0.01 pu on 100 kVA
    zg = np.eye(3) * (0.01 + 0.2j) * 24900 ** 2 / 100e3
    gen_index = len(shunts)
    i_n = np.zeros(3, complex)
    shunts.append(ShuntSpec("848", "ABC", "source", zg, i_n))
    model = NetworkModel(buses, lines, shunts)
    # dispatch the machine at unity power factor, ~gen_kw total
    yg = np.linalg.inv(zg)
    for _ in range(8):
        V0, _ = solve_prefault(model)
        idx = [sum(len(p) for _, p in BUSES[:26]) + k for k in range(3)]
        v = V0[idx]
        i_out = np.conj(gen_kw * 1e3 / 3 / v)
        i_n = i_out + yg @ v
        shunts[gen_index] = ShuntSpec("848", "ABC", "source", zg, i_n)
        model = NetworkModel(buses, lines, shunts)
    return model


def main():
    model = build()
    assert [b.id for b in model.buses].index("848") == 26
    sys.stdout.write("# IEEE 34-node test feeder replica (phase domain, ohms/siemens, VA).\n"
                     "# Regulators kept as short series sections, XFM-1 referred to 24.9 kV,\n"
                     "# loads at 50 %, 100 kW generator at 848.  Generated by tools/make_ieee34.py.\n")
    sys.stdout.write(format_network(model))


if __name__ == "__main__":
    main()
