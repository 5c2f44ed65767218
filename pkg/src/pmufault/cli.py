"""pmufault command line: matrices, simulate, localize, communities, placement.

Every flag can also come from ``--config FILE``, a text file of
``key = value`` lines (``#`` comments) using the flag names without the
leading dashes, e.g. ``placement = 800,830,848,832,862``.  Flags given on
the command line win over the file.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import dataclass

import numpy as np

from . import __version__
from .community import (DEFAULT_TAU, community_graph, extract_communities, feeder_order,
                        greedy_placement, heatmap_svg, phase_view, placement_quality,
                        spans_disconnected_region, write_adjacency_csv, write_communities_csv,
                        write_correlation_csv)
from .faultsim import (NoiseModel, apply_fault, approximate_fault_current,
                       exact_fault_current, measure, parse_fault, write_snapshot_csv)
from .localizer import (DEFAULT_EPS, DEFAULT_RANK_TOL, build_whitened_model,
                        enumerate_candidates, localize_raw, localize_whitened, write_result_csv)
from .matrices import (build_admittance, invert_to_impedance, make_placement, partition,
                       write_matrix_csv)
from .netmodel import PHASES, NetworkError, load_network
from .networks import load_bundled

EXIT_ERROR = 2
_COMMANDS = ("matrices", "simulate", "localize", "communities", "placement")


class CLIError(Exception):
    pass


@dataclass
class RunConfig:
    network: str
    placement: list[str]
    fault: str | None = None
    fault_z: complex = 0.0
    noise_mag: float = 0.0
    noise_ang: float = 0.0
    tau: float = DEFAULT_TAU
    eps: float = DEFAULT_EPS
    rank_tol: float = DEFAULT_RANK_TOL
    seed: int = 0
    out: str = "."
    n_sensors: int | None = None
    baseline: list[str] | None = None
    exact_current: bool = False


def parse_impedance(text: str) -> complex:
    t = str(text).strip().lower().replace(" ", "")
    if t in ("inf", "+inf", "infinity", "open"):
        return complex(np.inf)
    try:
        return complex(t)
    except ValueError:
        raise CLIError(f"bad fault impedance {text!r}; use e.g. 0, 2.5, 1+2j or inf") from None


def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; keys use dashes or underscores."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as e:
        raise CLIError(f"cannot read config {path}: {e.strerror}") from None
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _bus_list(text) -> list[str] | None:
    if text is None:
        return None
    return [b.strip() for b in str(text).split(",") if b.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file supplying defaults for any flag")
    common.add_argument("--network", help="network file, or bundled:ieee34.net")
    common.add_argument("--placement", help="comma-separated monitored buses")
    common.add_argument("--fault", help="fault spec, e.g. LLL@816, AG@822, BCG@852")
    common.add_argument("--fault-z", dest="fault_z", help="fault impedance in ohms (inf = none)")
    common.add_argument("--noise-mag", dest="noise_mag", type=float,
                        help="relative magnitude noise std")
    common.add_argument("--noise-ang", dest="noise_ang", type=float,
                        help="angle noise std in radians")
    common.add_argument("--tau", type=float, help="correlation threshold")
    common.add_argument("--eps", type=float, help="ambiguity margin")
    common.add_argument("--rank-tol", dest="rank_tol", type=float, help="relative SVD cutoff")
    common.add_argument("--seed", type=int, help="noise seed")
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="pmufault", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pmufault {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("matrices", parents=[common], help="write Y, Z and the block partition")
    sub.add_parser("simulate", parents=[common], help="simulate one fault, write phasors")
    loc = sub.add_parser("localize", parents=[common], help="simulate, then rank locations")
    loc.add_argument("--exact-current", dest="exact_current", action="store_true",
                     default=None, help="use the true fault current instead of the "
                     "source-current approximation")
    sub.add_parser("communities", parents=[common], help="correlations and communities")
    pl = sub.add_parser("placement", parents=[common], help="greedy sensor placement")
    pl.add_argument("--n-sensors", dest="n_sensors", type=int, help="number of sensors")
    pl.add_argument("--baseline", help="placement to compare against")
    return p


def make_config(args: argparse.Namespace) -> RunConfig:
    file_vals = read_config(args.config) if args.config else {}
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(file_vals) - known)
    if unknown:
        raise CLIError(f"unknown config key(s): {', '.join(unknown)}")

    def get(key, conv=str, default=None):
        v = getattr(args, key, None)
        if v is None and key in file_vals:
            try:
                v = conv(file_vals[key])
            except ValueError:
                raise CLIError(f"config key {key}: bad value {file_vals[key]!r}") from None
        return default if v is None else v

    network = get("network")
    if not network:
        raise CLIError("--network is required")
    cfg = RunConfig(
        network=network,
        placement=_bus_list(get("placement")) or [],
        fault=get("fault"),
        fault_z=parse_impedance(get("fault_z", str, "0")),
        noise_mag=get("noise_mag", float, 0.0),
        noise_ang=get("noise_ang", float, 0.0),
        tau=get("tau", float, DEFAULT_TAU),
        eps=get("eps", float, DEFAULT_EPS),
        rank_tol=get("rank_tol", float, DEFAULT_RANK_TOL),
        seed=get("seed", int, 0),
        out=get("out", str, "."),
        n_sensors=get("n_sensors", int),
        baseline=_bus_list(get("baseline")),
        exact_current=str(get("exact_current", str, False)).lower() in ("1", "true", "yes"),
    )
    if not 0.0 < cfg.tau <= 1.0:
        raise CLIError(f"--tau must lie in (0, 1], got {cfg.tau}")
    if cfg.eps < 0:
        raise CLIError("--eps must be non-negative")
    if cfg.noise_mag < 0 or cfg.noise_ang < 0:
        raise CLIError("noise levels must be non-negative")
    return cfg


def _load(cfg: RunConfig):
    if cfg.network.startswith("bundled:"):
        try:
            model = load_bundled(cfg.network.split(":", 1)[1])
        except FileNotFoundError:
            raise CLIError(f"no bundled network {cfg.network}") from None
    else:
        if not os.path.isfile(cfg.network):
            raise CLIError(f"network file not found: {cfg.network}")
        model = load_network(cfg.network)
    adm = build_admittance(model)
    imp = invert_to_impedance(adm)
    return model, adm, imp


def _placement(cfg, model, imap, required=True):
    if not cfg.placement:
        if required:
            raise CLIError("--placement is required")
        return None
    missing = [b for b in cfg.placement if b not in model.bus_ids]
    if missing:
        raise CLIError(f"placement names unknown bus(es): {', '.join(missing)}")
    return make_placement(imap, cfg.placement)


def _outdir(cfg) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def _fault(cfg):
    if not cfg.fault:
        raise CLIError("--fault is required")
    return parse_fault(cfg.fault, cfg.fault_z)


def _fmt_z(z: complex) -> str:
    if np.isinf(abs(z)):
        return "inf"
    return repr(complex(z))


def cmd_matrices(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model, adm, imp = _load(cfg)
    imap = adm.index_map
    d = _outdir(cfg)
    write_matrix_csv(os.path.join(d, "Y.csv"), adm.Y)
    write_matrix_csv(os.path.join(d, "Z.csv"), imp.Z)
    with open(os.path.join(d, "index.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("index,bus,phase\n")
        for i, (b, p) in enumerate(imap.entries):
            fh.write(f"{i},{b},{p}\n")
    print(f"M = {imap.M}", file=out)
    pl = _placement(cfg, model, imap, required=False)
    if pl is None:
        return 0
    blocks = partition(adm, imp, pl)
    for name in ("Z_aa", "Z_au", "Z_a", "Y_aa", "Y_au", "Y_uu"):
        write_matrix_csv(os.path.join(d, f"{name}.csv"), getattr(blocks, name))
    print(f"K = {pl.K}", file=out)
    if pl.K < imap.M:
        wm = build_whitened_model(blocks, cfg.rank_tol)
        print(f"rank(Y_au Y_uu^-1) = {wm.rank}", file=out)
        print(f"cond(Y_au Y_uu^-1) = {wm.condition:.6g}", file=out)
    else:
        print("full observability: no unmonitored node-phases", file=out)
    return 0


def cmd_simulate(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model, adm, imp = _load(cfg)
    fault = _fault(cfg)
    snap = apply_fault(model, fault, adm, imp)
    d = _outdir(cfg)
    write_snapshot_csv(os.path.join(d, "snapshot.csv"), snap)
    res = snap.residuals(imp.Z)
    print(f"fault {fault}  z_f = {_fmt_z(fault.fault_impedance)} ohm", file=out)
    print("residuals: " + "  ".join(f"{k}={v:.3e}" for k, v in res.items()), file=out)
    vpu = np.abs(snap.VF) / np.array([model.bus(b).nominal_voltage
                                      for b, _ in adm.index_map.entries])
    print(f"post-fault voltage range: {vpu.min():.4f} .. {vpu.max():.4f} pu", file=out)
    if fault.bus in model.bus_ids:
        I_E = exact_fault_current(snap)
        print("fault current |I_E| per phase: " + ", ".join(
            f"{p}={abs(v):.4g} A" for p, v in zip(fault.phases, I_E)), file=out)
    pl = _placement(cfg, model, adm.index_map, required=False)
    if pl is not None:
        noise = NoiseModel(cfg.noise_mag, cfg.noise_ang, cfg.seed)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            meas = measure(snap, pl, noise, model)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        with open(os.path.join(d, "measurements.csv"), "w", encoding="utf-8",
                  newline="") as fh:
            fh.write("bus,phase,dV_re,dV_im,dI_re,dI_im\n")
            for k, i in enumerate(pl.available_indices):
                b, p = adm.index_map.entries[i]
                fh.write(f"{b},{p},{float(meas.dV_a[k].real)!r},{float(meas.dV_a[k].imag)!r},"
                         f"{float(meas.dI_a[k].real)!r},{float(meas.dI_a[k].imag)!r}\n")
    return 0


def cmd_localize(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model, adm, imp = _load(cfg)
    imap = adm.index_map
    fault = _fault(cfg)
    pl = _placement(cfg, model, imap)
    snap = apply_fault(model, fault, adm, imp)
    noise = NoiseModel(cfg.noise_mag, cfg.noise_ang, cfg.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        meas = measure(snap, pl, noise, model)
    if cfg.exact_current:
        I_G, how = exact_fault_current(snap), "exact"
    else:
        unmonitored = [b for b in model.source_buses if b not in pl.monitored]
        if unmonitored:
            raise CLIError(f"source bus(es) {', '.join(unmonitored)} are not monitored; "
                           "add them to --placement or pass --exact-current")
        I_G, how = approximate_fault_current(meas, fault, model), "approximate"
    blocks = partition(adm, imp, pl)
    cands = enumerate_candidates(model, fault.fault_type, fault.phases, imap)
    results = {"raw": localize_raw(meas, blocks, I_G, cands, cfg.eps)}
    wm = None
    if pl.K < imap.M:
        wm = build_whitened_model(blocks, cfg.rank_tol)
    else:
        wm = build_whitened_model(blocks)
    results["whitened"] = localize_whitened(meas, blocks, wm, I_G, cands, cfg.eps)

    d = _outdir(cfg)
    header = {"placement": ",".join(pl.monitored), "fault": str(fault),
              "fault_z": _fmt_z(fault.fault_impedance), "noise_mag": repr(cfg.noise_mag),
              "noise_ang": repr(cfg.noise_ang), "seed": str(cfg.seed), "fault_current": how}
    for kind, res in results.items():
        write_result_csv(os.path.join(d, f"ranking_{kind}.csv"), res, header)

    lines = [f"fault {fault}  z_f = {_fmt_z(fault.fault_impedance)} ohm  "
             f"placement {','.join(pl.monitored)}  K = {pl.K}  M = {imap.M}",
             f"fault current ({how}): " + ", ".join(
                 f"{p}={abs(v):.4g} A" for p, v in zip(fault.phases, I_G)),
             f"noise: magnitude {cfg.noise_mag:g}, angle {cfg.noise_ang:g} rad, seed {cfg.seed}"]
    vals = results["whitened"].objective_values
    flat = np.max(np.abs(I_G)) == 0 or np.ptp(vals) <= 1e-9 * max(np.max(vals), 1e-300)
    if flat:
        lines.append("warning: no detectable fault (objectives are all equal)")
    if wm is not None and wm.rank < min(pl.K, imap.M - pl.K):
        lines.append(f"warning: Y_au Y_uu^-1 is rank deficient (rank {wm.rank} < K = {pl.K})")
    _, graph = community_graph(blocks, imap, cfg.tau, "whitened", wm)
    for kind in ("whitened", "raw"):
        res = results[kind]
        amb = [c.label for c in res.ambiguity_set]
        lines.append(f"{kind}: best {res.winner.label}  "
                     f"ambiguity set (eps={cfg.eps:g}, {len(amb)}): {' '.join(amb)}")
        if fault.bus in model.bus_ids and not flat:
            hit = any(c.bus == fault.bus for c in res.ambiguity_set)
            same = all(_same(graph, imap, fault, c.bus) for c in res.ambiguity_set)
            lines.append(f"  true location in set: {'yes' if hit else 'no'};  "
                         f"all members in its community (tau={cfg.tau:g}): "
                         f"{'yes' if same else 'no'}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(d, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    out.write(text)
    return 0


def _same(graph, imap, fault, bus) -> bool:
    return all(graph.same_community(imap.index(fault.bus, p), imap.index(bus, p))
               for p in fault.phases)


def cmd_communities(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model, adm, imp = _load(cfg)
    imap = adm.index_map
    pl = _placement(cfg, model, imap)
    if pl.K >= imap.M:
        raise CLIError("every node-phase is monitored; communities are all singletons")
    blocks = partition(adm, imp, pl)
    wm = build_whitened_model(blocks, cfg.rank_tol)
    corr, graph = community_graph(blocks, imap, cfg.tau, "whitened", wm)
    d = _outdir(cfg)
    order = feeder_order(model)
    for p in PHASES:
        if not imap.phase_indices(p):
            continue
        labels, C = phase_view(corr, imap, p, order)
        write_correlation_csv(os.path.join(d, f"correlation_{p}.csv"), labels, C)
        with open(os.path.join(d, f"heatmap_{p}.svg"), "w", encoding="utf-8") as fh:
            fh.write(heatmap_svg(labels, C, f"phase {p} column correlations of D"))
        with open(os.path.join(d, f"adjacency_{p}.svg"), "w", encoding="utf-8") as fh:
            fh.write(heatmap_svg(labels, C, f"phase {p} adjacency, tau = {cfg.tau:g}",
                                 tau=cfg.tau))
    write_adjacency_csv(os.path.join(d, "adjacency.csv"),
                        [imap.label(i) for i in range(imap.M)], graph.A)
    comms = extract_communities(graph, imap)
    write_communities_csv(os.path.join(d, "communities.csv"), comms)
    print(f"placement {','.join(pl.monitored)}  K = {pl.K}  M = {imap.M}  tau = {cfg.tau:g}",
          file=out)
    print(f"rank(Y_au Y_uu^-1) = {wm.rank}  cond = {wm.condition:.6g}", file=out)
    for comm in comms:
        phase = comm.members[0][1]
        flag = "  (not contiguous on the feeder)" if spans_disconnected_region(model, comm) else ""
        print(f"community {comm.id} [{phase}] size {len(comm.members)}: "
              f"{' '.join(comm.buses)}{flag}", file=out)
    if graph.unlocatable:
        print("unlocatable node-phases: " + " ".join(imap.label(i) for i in graph.unlocatable),
              file=out)
    return 0


def cmd_placement(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    model, adm, imp = _load(cfg)
    imap = adm.index_map
    if cfg.n_sensors is None:
        raise CLIError("--n-sensors is required")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            pl = greedy_placement(model, cfg.n_sensors, cfg.tau, cfg.rank_tol, adm, imp)
        except ValueError as e:
            raise CLIError(str(e)) from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"greedy placement ({cfg.n_sensors} sensors): {','.join(pl.monitored)}", file=out)
    score = _score(model, pl, cfg, adm, imp)
    print(score if isinstance(score, str) else score.summary(), file=out)
    if cfg.baseline:
        base = make_placement(imap, _check_buses(model, cfg.baseline))
        bscore = _score(model, base, cfg, adm, imp)
        print("baseline:", file=out)
        print(bscore if isinstance(bscore, str) else bscore.summary(), file=out)
        if not isinstance(score, str) and not isinstance(bscore, str):
            g, b = score.overall_max_community, bscore.overall_max_community
            verdict = "better" if g < b else ("equal" if g == b else "worse")
            print(f"max community size: greedy {g} vs baseline {b} ({verdict})", file=out)
    return 0


def _check_buses(model, buses):
    missing = [b for b in buses if b not in model.bus_ids]
    if missing:
        raise CLIError(f"unknown bus(es): {', '.join(missing)}")
    return buses


def _score(model, pl, cfg, adm, imp):
    if pl.K >= adm.index_map.M:
        return (f"placement: {','.join(pl.monitored)}  (K={pl.K}, M={adm.index_map.M})\n"
                "full observability: every community is a singleton")
    return placement_quality(model, pl, cfg.tau, cfg.rank_tol, adm, imp)


_HANDLERS = {"matrices": cmd_matrices, "simulate": cmd_simulate, "localize": cmd_localize,
             "communities": cmd_communities, "placement": cmd_placement}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args)
        return _HANDLERS[args.command](cfg)
    except (CLIError, NetworkError, ValueError, np.linalg.LinAlgError, OSError) as e:
        print(f"pmufault {args.command}: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
