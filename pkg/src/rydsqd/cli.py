"""Config-driven experiment harness.

Subcommands: map, vqite, sample, sqd, chem, validate.  A JSON configuration
plus one master seed fully determines every numerical output; timings are the
only nondeterministic report fields.  Exit codes: 0 success, 2 configuration
error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from math import comb
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .fock import build_hubbard_matrix, enumerate_sector, parse_determinant
from .models import (
    HeisenbergParams,
    HubbardParams,
    build_spin_hamiltonian,
    effective_couplings,
    hubbard_hamiltonian_spec,
    spin_to_hubbard_config,
)
from .oracles import EnergyTable, chemical_potential, exact_ground_state, perturbation_validator
from .rydberg import MAX_ATOMS, read_samples, sample as draw_samples, write_samples
from .seeding import derive_seed
from .oracles import LanczosError
from .sqd import ConfigurationSet, DavidsonError, SqdConfig, sqd_run
from .vqite import (
    CONVERGED_THETA,
    DEFAULT_SPACING,
    INITIAL_THETA,
    AnalogAnsatz,
    VqiteConfig,
    run_vqite,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3

#: sectors above this dimension skip the exact-oracle comparison
DEFAULT_ORACLE_CAP = 100_000

THETA_PRESETS = {"initial": INITIAL_THETA, "converged": CONVERGED_THETA}


class ConfigError(ValueError):
    pass


class StageFailure(RuntimeError):
    """Numerical failure attributed to a pipeline stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ----------------------------------------------------------------------------
# configuration


_DEFAULTS: dict[str, Any] = {
    "version": 1,
    "pipeline": {
        "source": "simulated",
        "shots": 1000,
        "sample_file": None,
        "theta": None,
        "theta_file": None,
        "theta_preset": None,
        "vqite": {
            "d_tau": 0.1,
            "max_steps": 40,
            "spacing": DEFAULT_SPACING,
            "normalize_target": True,
            "track_fidelity": True,
            "theta0": list(INITIAL_THETA),
        },
    },
    "sqd": {
        "K": 3,
        "d": 300,
        "max_outer_iters": 5,
        "davidson_tol": 1e-8,
        "target_sector": None,
        "dimension_sweep": None,
        "compare_random": False,
        "oracle_cap": DEFAULT_ORACLE_CAP,
    },
    "chem": {"sectors": None},
    "validate": {"U_list": [25.0, 50.0, 100.0, 200.0]},
    "output": {"directory": "runs/out"},
}


def _merge_defaults(user: dict, defaults: dict) -> dict:
    out = {}
    for key, default in defaults.items():
        if isinstance(default, dict):
            sub = user.get(key, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"field '{key}' must be an object")
            out[key] = _merge_defaults(sub, default)
        else:
            out[key] = user.get(key, default)
    for key in user:
        if key not in defaults and key not in ("model", "seed"):
            raise ConfigError(f"unknown configuration field '{key}'")
        if key in ("model", "seed"):
            out[key] = user[key]
    return out


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def normalize_config(raw: dict) -> dict:
    """Apply defaults and validate; the result round-trips through JSON."""
    _require(isinstance(raw, dict), "configuration must be a JSON object")
    cfg = _merge_defaults(raw, _DEFAULTS)
    _require(cfg["version"] == 1, f"unsupported config version {cfg.get('version')!r}")
    _require("seed" in cfg, "missing required field 'seed'")
    _require(isinstance(cfg["seed"], int), "'seed' must be an integer")
    _require("model" in cfg, "missing required field 'model'")
    model = cfg["model"]
    _require(isinstance(model, dict) and "type" in model, "'model' needs a 'type'")
    if model["type"] == "hubbard":
        for name in ("U", "t_up", "t_dn", "L"):
            _require(name in model, f"hubbard model missing field '{name}'")
        model.setdefault("tp_up", 0.0)
        model.setdefault("tp_dn", 0.0)
        _require(model["U"] > 0, "'model.U' must be positive")
    elif model["type"] == "heisenberg":
        for name in ("jxy1", "jz1", "L"):
            _require(name in model, f"heisenberg model missing field '{name}'")
        model.setdefault("jxy2", 0.0)
        model.setdefault("jz2", 0.0)
    else:
        raise ConfigError(f"unknown model type {model['type']!r}")
    _require(int(model["L"]) >= 2, "'model.L' must be at least 2")
    pipe = cfg["pipeline"]
    _require(
        pipe["source"] in ("simulated", "file", "random-uniform"),
        "'pipeline.source' must be one of simulated, file, random-uniform",
    )
    _require(pipe["shots"] >= 0, "'pipeline.shots' must be >= 0")
    if pipe["theta_preset"] is not None:
        _require(
            pipe["theta_preset"] in THETA_PRESETS,
            f"'pipeline.theta_preset' must be one of {sorted(THETA_PRESETS)}",
        )
    if pipe["source"] == "file":
        _require(pipe["sample_file"] is not None, "source=file needs 'pipeline.sample_file'")
        _require(Path(pipe["sample_file"]).exists(), f"sample file {pipe['sample_file']} does not exist")
    sqd = cfg["sqd"]
    _require(sqd["K"] >= 1 and sqd["d"] >= 1, "'sqd.K' and 'sqd.d' must be >= 1")
    _require(sqd["davidson_tol"] > 0, "'sqd.davidson_tol' must be positive")
    if sqd["target_sector"] is not None:
        _require(
            isinstance(sqd["target_sector"], list) and len(sqd["target_sector"]) == 2,
            "'sqd.target_sector' must be [n_up, n_dn]",
        )
    if cfg["chem"]["sectors"] is not None:
        for sec in cfg["chem"]["sectors"]:
            _require(
                isinstance(sec, list) and len(sec) == 2,
                "'chem.sectors' must be a list of [n_up, n_dn] pairs",
            )
    return cfg


def load_config(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}") from None
    return normalize_config(raw)


def emit_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True)


def _hubbard_params(cfg: dict) -> HubbardParams:
    model = cfg["model"]
    _require(model["type"] == "hubbard", "this command needs a hubbard model block")
    return HubbardParams(
        U=float(model["U"]),
        t_up=float(model["t_up"]),
        t_dn=float(model["t_dn"]),
        L=int(model["L"]),
        tp_up=float(model["tp_up"]),
        tp_dn=float(model["tp_dn"]),
    )


def _heisenberg_params(cfg: dict) -> HeisenbergParams:
    model = cfg["model"]
    if model["type"] == "hubbard":
        return effective_couplings(_hubbard_params(cfg))
    return HeisenbergParams(
        jxy1=float(model["jxy1"]),
        jz1=float(model["jz1"]),
        L=int(model["L"]),
        jxy2=float(model["jxy2"]),
        jz2=float(model["jz2"]),
    )


# ----------------------------------------------------------------------------
# report plumbing


@dataclass
class RunReport:
    command: str
    config: dict
    seed: int
    version: str = __version__
    energies: dict[str, float] = field(default_factory=dict)
    traces: dict[str, list] = field(default_factory=dict)
    delta_e: Optional[float] = None
    notes: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, indent=2, sort_keys=True)


class StageTimer:
    def __init__(self, report: RunReport):
        self.report = report

    def __call__(self, stage: str):
        return _Timing(self.report, stage)


class _Timing:
    def __init__(self, report: RunReport, stage: str):
        self.report, self.stage = report, stage

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        self.report.timings[self.stage] = time.perf_counter() - self.t0
        return False


def _write(out_dir: Path, name: str, text: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text)


def _tsv(rows: Sequence[Sequence], header: Sequence[str]) -> str:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(repr(x) if isinstance(x, float) else str(x) for x in row))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# shared stages


def _target_spin_model(cfg: dict):
    """VQITE target from the model block; optionally rescaled to jz1 = 1.

    The imaginary-time step is expressed in units of the target's energy
    scale, so normalizing keeps the flow rate comparable across models; the
    prepared state (and therefore the samples) is unchanged by the scaling.
    """
    h = _heisenberg_params(cfg)
    if cfg["pipeline"]["vqite"]["normalize_target"] and h.jz1 != 0.0:
        s = 1.0 / abs(h.jz1)
        h = HeisenbergParams(jxy1=h.jxy1 * s, jz1=h.jz1 * s, L=h.L, jxy2=h.jxy2 * s, jz2=h.jz2 * s)
    return build_spin_hamiltonian(h)


def _vqite_config(cfg: dict) -> VqiteConfig:
    v = cfg["pipeline"]["vqite"]
    return VqiteConfig(
        d_tau=float(v["d_tau"]),
        max_steps=int(v["max_steps"]),
        spacing=float(v["spacing"]),
        track_fidelity=bool(v["track_fidelity"]),
    )


def _resolve_theta(cfg: dict) -> np.ndarray:
    pipe = cfg["pipeline"]
    if pipe["theta"] is not None:
        theta = np.asarray(pipe["theta"], dtype=float)
    elif pipe["theta_file"] is not None:
        path = Path(pipe["theta_file"])
        _require(path.exists(), f"theta file {path} does not exist")
        theta = np.asarray(json.loads(path.read_text())["theta"], dtype=float)
    elif pipe["theta_preset"] is not None:
        theta = np.asarray(THETA_PRESETS[pipe["theta_preset"]], dtype=float)
    else:
        raise ConfigError(
            "simulated sampling needs hyperparameters: set pipeline.theta, "
            "pipeline.theta_file (from a vqite run) or pipeline.theta_preset"
        )
    _require(theta.shape == (5,), "theta must have 5 entries")
    return theta


def _simulated_bitstrings(cfg: dict, theta: np.ndarray, seed: int) -> list[str]:
    L = int(cfg["model"]["L"])
    if L > MAX_ATOMS:
        raise StageFailure(
            "sample",
            f"L={L} exceeds the {MAX_ATOMS}-atom simulator cap; "
            "provide pipeline.source=file with externally produced samples",
        )
    ansatz = AnalogAnsatz(L, spacing=float(cfg["pipeline"]["vqite"]["spacing"]))
    psi = ansatz.state(theta)
    return draw_samples(psi, int(cfg["pipeline"]["shots"]), seed=seed)


def _random_bitstrings(L: int, shots: int, seed: int) -> list[str]:
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, 2, size=(shots, L))
    return ["".join("1" if b else "0" for b in row) for row in draws]


def _ingest_bitstrings(lines: Sequence[str], L: int) -> ConfigurationSet:
    dets = []
    for ln in lines:
        if "up=" in ln:
            dets.append(parse_determinant(ln, L))
        else:
            _require(len(ln) == L, f"bitstring {ln!r} does not have length {L}")
            dets.append(spin_to_hubbard_config(ln))
    _require(len(dets) > 0, "sample source is empty")
    return ConfigurationSet.from_determinants(dets, L)


def _acquire_samples(cfg: dict, out_dir: Path, master_seed: int, tag: str = "") -> ConfigurationSet:
    pipe = cfg["pipeline"]
    L = int(cfg["model"]["L"])
    source = pipe["source"] if not tag else tag
    if source == "file":
        lines, _header = read_samples(pipe["sample_file"])
        return _ingest_bitstrings(lines, L)
    if source == "random-uniform":
        lines = _random_bitstrings(L, int(pipe["shots"]), derive_seed(master_seed, "sample:random"))
        return _ingest_bitstrings(lines, L)
    theta = _resolve_theta(cfg)
    lines = _simulated_bitstrings(cfg, theta, derive_seed(master_seed, "sample:simulated"))
    return _ingest_bitstrings(lines, L)


def _default_sector(L: int) -> tuple[int, int]:
    return ((L + 1) // 2, L // 2)


def _sqd_config(cfg: dict, master_seed: int, sector: tuple[int, int], label: str) -> SqdConfig:
    s = cfg["sqd"]
    return SqdConfig(
        target_sector=sector,
        d=int(s["d"]),
        K=int(s["K"]),
        max_outer_iters=int(s["max_outer_iters"]),
        davidson_tol=float(s["davidson_tol"]),
        seed=derive_seed(master_seed, label),
    )


def _sector_oracle(cfg: dict, sector: tuple[int, int]) -> Optional[float]:
    """Exact sector energy when the dimension is within the oracle cap."""
    p = _hubbard_params(cfg)
    dim = comb(p.L, sector[0]) * comb(p.L, sector[1])
    if dim > int(cfg["sqd"]["oracle_cap"]):
        return None
    basis = enumerate_sector(p.L, sector[0], sector[1])
    mat = build_hubbard_matrix(hubbard_hamiltonian_spec(p), basis)
    energy, _ = exact_ground_state(mat, seed=0)
    return energy


# ----------------------------------------------------------------------------
# commands


def cmd_map(cfg: dict, out_dir: Path, report: RunReport) -> int:
    p = _hubbard_params(cfg)
    h = effective_couplings(p)
    spec = build_spin_hamiltonian(h, include_shift=True)
    payload = {
        "jxy1": h.jxy1,
        "jz1": h.jz1,
        "jxy2": h.jxy2,
        "jz2": h.jz2,
        "L": h.L,
        "constant_shift": spec.constant_shift,
        "isotropic": h.isotropic,
    }
    _write(out_dir, "mapping.json", json.dumps(payload, indent=2, sort_keys=True))
    for key in ("jxy1", "jz1", "jxy2", "jz2"):
        print(f"{key} = {payload[key]!r}")
    print(f"constant_shift = {payload['constant_shift']!r}")
    if h.isotropic:
        print("couplings are isotropic")
    report.energies["constant_shift"] = spec.constant_shift
    return EXIT_OK


def _trace_csv(trace) -> str:
    header = ["step", "omega_max", "delta_start", "delta_end", "phi", "t_max", "energy", "fidelity", "cond_A", "flagged"]
    rows = []
    for r in trace.records:
        fid = "" if r.fidelity is None else repr(r.fidelity)
        rows.append(
            [r.step] + [repr(float(x)) for x in r.theta] + [repr(r.energy), fid, repr(r.cond_A), int(r.flagged)]
        )
    return "\n".join([",".join(header)] + [",".join(str(x) for x in row) for row in rows]) + "\n"


def cmd_vqite(cfg: dict, out_dir: Path, report: RunReport) -> int:
    L = int(cfg["model"]["L"])
    if L > MAX_ATOMS:
        raise StageFailure(
            "vqite",
            f"L={L} exceeds the {MAX_ATOMS}-atom simulator cap; "
            "sample from a file instead (pipeline.source=file)",
        )
    target = _target_spin_model(cfg)
    vcfg = _vqite_config(cfg)
    theta0 = np.asarray(cfg["pipeline"]["vqite"]["theta0"], dtype=float)
    timer = StageTimer(report)
    with timer("vqite"):
        result = run_vqite(target, vcfg, theta0)
    _write(out_dir, "vqite_trace.csv", _trace_csv(result.trace))
    _write(
        out_dir,
        "theta_star.json",
        json.dumps({"theta": [float(x) for x in result.theta], "energy": result.energy}, indent=2, sort_keys=True),
    )
    report.energies["vqite_target_energy"] = result.energy
    report.traces["vqite_energy"] = [r.energy for r in result.trace.records]
    print(f"theta* = {[round(float(x), 6) for x in result.theta]}")
    print(f"target-model energy at theta* = {result.energy!r}")
    print(f"converged = {result.converged}")
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_sample(cfg: dict, out_dir: Path, report: RunReport) -> int:
    pipe = cfg["pipeline"]
    L = int(cfg["model"]["L"])
    shots = int(pipe["shots"])
    timer = StageTimer(report)
    with timer("sample"):
        if pipe["source"] == "random-uniform":
            seed = derive_seed(report.seed, "sample:random")
            lines = _random_bitstrings(L, shots, seed)
            source = "random-uniform"
        elif pipe["source"] == "file":
            raise ConfigError("cmd_sample generates samples; source=file is for consuming them")
        else:
            theta = _resolve_theta(cfg)
            seed = derive_seed(report.seed, "sample:simulated")
            lines = _simulated_bitstrings(cfg, theta, seed)
            source = "simulated"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_samples(out_dir / "samples.txt", lines, shots, seed, source)
    print(f"wrote {len(lines)} samples to {out_dir / 'samples.txt'}")
    return EXIT_OK


def _run_sqd_once(cfg: dict, samples: ConfigurationSet, sector: tuple[int, int], master_seed: int, label: str):
    p = _hubbard_params(cfg)
    spec = hubbard_hamiltonian_spec(p)
    return sqd_run(spec, samples, _sqd_config(cfg, master_seed, sector, label))


def cmd_sqd(cfg: dict, out_dir: Path, report: RunReport) -> int:
    p = _hubbard_params(cfg)
    sector = tuple(cfg["sqd"]["target_sector"] or _default_sector(p.L))
    timer = StageTimer(report)
    with timer("acquire_samples"):
        samples = _acquire_samples(cfg, out_dir, report.seed)
    with timer("sqd"):
        result = _run_sqd_once(cfg, samples, sector, report.seed, "sqd")
    report.energies["sqd"] = result.energy
    report.traces["sqd_iterations"] = list(result.energy_trace)
    _write(
        out_dir,
        "sqd_trace.tsv",
        _tsv([(i + 1, e) for i, e in enumerate(result.energy_trace)], ["iteration", "energy"]),
    )
    occ_rows = [(i, "up" if i < p.L else "dn", float(v)) for i, v in enumerate(result.occupancies)]
    _write(out_dir, "occupancies.tsv", _tsv(occ_rows, ["orbital", "spin", "n"]))

    with timer("oracle"):
        exact = _sector_oracle(cfg, sector)
    if exact is not None:
        report.energies["exact"] = exact
        report.energies["sqd_error"] = abs(result.energy - exact)
        print(f"exact sector energy = {exact!r}, error = {report.energies['sqd_error']:.3e}")
    if cfg["sqd"]["compare_random"]:
        with timer("sqd_random"):
            rand_samples = _acquire_samples(cfg, out_dir, report.seed, tag="random-uniform")
            rand_result = _run_sqd_once(cfg, rand_samples, sector, report.seed, "sqd")
        report.energies["sqd_random"] = rand_result.energy
        if exact is not None:
            report.delta_e = abs(rand_result.energy - exact) - abs(result.energy - exact)
            print(f"delta_e (random error - sampled error) = {report.delta_e!r}")
    sweep = cfg["sqd"]["dimension_sweep"]
    if sweep:
        rows = []
        with timer("dimension_sweep"):
            for d in sweep:
                sub_cfg = json.loads(json.dumps(cfg))
                sub_cfg["sqd"]["d"] = int(d)
                r = _run_sqd_once(sub_cfg, samples, sector, report.seed, f"sqd:d={d}")
                rows.append((int(d), r.energy))
        _write(out_dir, "dimension_sweep.tsv", _tsv(rows, ["d", "energy"]))
        report.traces["dimension_sweep"] = [list(r) for r in rows]
    print(f"SQD energy = {result.energy!r} (sector {sector}, {result.outer_iterations} iterations)")
    return EXIT_OK


def cmd_chem(cfg: dict, out_dir: Path, report: RunReport) -> int:
    p = _hubbard_params(cfg)
    sectors = cfg["chem"]["sectors"]
    _require(sectors is not None and len(sectors) >= 2, "cmd_chem needs 'chem.sectors' with at least two sectors")
    timer = StageTimer(report)
    with timer("acquire_samples"):
        samples = _acquire_samples(cfg, out_dir, report.seed)
    table = EnergyTable()
    for sec in sectors:
        sector = (int(sec[0]), int(sec[1]))
        n_occ = sector[0] + sector[1]
        with timer(f"sqd:{sector}"):
            result = _run_sqd_once(cfg, samples, sector, report.seed, f"sqd:{sector}")
        table.add(n_occ, result.energy, method="sqd", seed=report.seed)
        with timer(f"oracle:{sector}"):
            exact = _sector_oracle(cfg, sector)
        if exact is not None:
            table.add(n_occ, exact, method="exact", seed=0)
    _write(out_dir, "energy_table.tsv", table.to_text())
    mu_rows = []
    occs = sorted({r.n_occ for r in table.rows if r.method == "sqd"})
    for n in occs:
        for method in ("sqd", "exact"):
            try:
                mu, mu_prime = chemical_potential(table, n, method=method)
            except KeyError:
                continue
            mu_rows.append((n, method, mu, "" if mu_prime is None else repr(mu_prime)))
            report.energies[f"mu_{method}_N{n}"] = mu
    _require(len(mu_rows) > 0, "no adjacent sector pair available for a chemical potential")
    _write(out_dir, "chemical_potential.tsv", _tsv(mu_rows, ["N_occ", "method", "mu", "mu_prime"]))
    for row in mu_rows:
        print(f"mu(N={row[0]}, {row[1]}) = {row[2]!r}")
    return EXIT_OK


def cmd_validate(cfg: dict, out_dir: Path, report: RunReport) -> int:
    p = _hubbard_params(cfg)
    U_list = [float(u) for u in cfg["validate"]["U_list"]]
    timer = StageTimer(report)
    with timer("validate"):
        devs, power = perturbation_validator(p, U_list)
    _write(out_dir, "perturbation_validator.tsv", _tsv(devs, ["U", "deviation"]))
    report.energies["fitted_power"] = power
    for U, dev in devs:
        print(f"U={U}: |E_hubbard - E_effective| = {dev!r}")
    print(f"fitted U^-k decay exponent: k = {power!r}")
    return EXIT_OK


COMMANDS = {
    "map": cmd_map,
    "vqite": cmd_vqite,
    "sample": cmd_sample,
    "sqd": cmd_sqd,
    "chem": cmd_chem,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydsqd",
        description="Hubbard-chain energies from sample-based diagonalization "
        "with simulated Rydberg-atom sampling",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = int(args.seed)
        out_dir = Path(args.out if args.out is not None else cfg["output"]["directory"])
        report = RunReport(command=args.command, config=cfg, seed=int(cfg["seed"]))
        code = COMMANDS[args.command](cfg, out_dir, report)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailure as err:
        print(f"stage failure: {err}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (DavidsonError, LanczosError) as err:
        print(f"numerical non-convergence: {err}", file=sys.stderr)
        return EXIT_NONCONVERGED
    _write(out_dir, "report.json", report.to_json())
    return code


if __name__ == "__main__":
    sys.exit(main())
