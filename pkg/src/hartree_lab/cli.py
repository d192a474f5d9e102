"""Command-line runner: configuration, pipelines, caching, CSV export.

One command per invocation:

    hartree-lab ground_state     solve and cache the ground state
    hartree-lab spectrum         sector spectra + nondegeneracy report
    hartree-lab identities       closed-form operator identity defects
    hartree-lab multipole_verify truncated expansion vs the 3D oracle
    hartree-lab semiclassical    eps sweep + concentration prediction

Exit status: 0 all declared checks pass, 2 a check failed (named on
stderr), 1 operational error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .ground_state import (
    GroundState,
    SolverConfig,
    format_cache,
    groundstate_from_cache,
    solve_ground_state,
)
from .linearized_spectrum import identity_defects, nondegeneracy_report
from .newton_potential import multipole_completeness_experiment
from .potentials import make_potential_functions
from .radial_core import DEFAULT_R_MAX, SCHEMES, SUPPORTED_DIMS, build_grid
from .semiclassical import (
    PotentialField,
    predict_concentration,
    semiclassical_sweep,
)

COMMANDS = ("ground_state", "spectrum", "multipole_verify", "identities", "semiclassical")
CACHE_POLICIES = ("use", "refresh", "ignore")
DEFAULT_EPS = (0.2, 0.1, 0.05, 0.025)
DEFAULT_POTENTIAL = "double_well:1.0,0.5"

CONFIG_KEYS = {
    "command": str,
    "n": int,
    "r_max": float,
    "grid_n": int,
    "method": str,
    "tol": float,
    "max_iter": int,
    "damping": float,
    "k_max": int,
    "eps": list,
    "potential": str,
    "out": str,
    "cache": str,
    "scheme": str,
    "workers": int,
}


@dataclass
class RunConfig:
    command: str
    n: int = 3
    r_max: Optional[float] = None
    grid_n: int = 400
    method: str = "fixed_point"
    tol: Optional[float] = None
    max_iter: int = 400
    damping: float = 0.5
    k_max: int = 8
    eps: Tuple[float, ...] = DEFAULT_EPS
    potential: str = DEFAULT_POTENTIAL
    out: str = "."
    cache: str = "use"
    scheme: str = "gauss_legendre_mapped"
    workers: int = 2

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(
                f"unknown command {self.command!r}; expected one of {COMMANDS}"
            )
        if self.n not in SUPPORTED_DIMS:
            raise ValueError(
                f"dimension n={self.n} unsupported; the theory covers n in "
                f"{SUPPORTED_DIMS}"
            )
        if self.r_max is None:
            self.r_max = DEFAULT_R_MAX[self.n]
        if self.cache not in CACHE_POLICIES:
            raise ValueError(f"cache policy must be one of {CACHE_POLICIES}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        self.eps = tuple(float(e) for e in self.eps)
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ValueError("eps list must be strictly decreasing")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            method=self.method,
            tol=self.tol,
            max_iter=self.max_iter,
            damping=self.damping,
        )


def parse_config(argv: Sequence[str]) -> RunConfig:
    """Build a RunConfig from flags, optionally merged over a JSON file.

    Flags override file values; unknown file keys are rejected.
    """
    parser = argparse.ArgumentParser(
        prog="hartree-lab",
        description="Hartree / Schrodinger-Newton ground-state laboratory",
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS)
    parser.add_argument("--cmd", dest="command_flag", choices=COMMANDS,
                        help="alternative way to pass the command")
    parser.add_argument("--config", type=str, help="JSON config file")
    parser.add_argument("--n", type=int)
    parser.add_argument("--r-max", dest="r_max", type=float)
    parser.add_argument("--grid-n", dest="grid_n", type=int)
    parser.add_argument("--method", choices=("shooting", "fixed_point"))
    parser.add_argument("--tol", type=float)
    parser.add_argument("--max-iter", dest="max_iter", type=int)
    parser.add_argument("--damping", type=float)
    parser.add_argument("--k-max", dest="k_max", type=int)
    parser.add_argument("--eps", type=str, help="comma-separated decreasing list")
    parser.add_argument("--potential", type=str)
    parser.add_argument("--out", type=str)
    parser.add_argument("--cache", choices=CACHE_POLICIES)
    parser.add_argument("--scheme", choices=SCHEMES)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--version", action="version", version=__version__)
    args = parser.parse_args(argv)

    settings = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        data = json.loads(path.read_text())
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
        for key, value in data.items():
            if key not in CONFIG_KEYS:
                raise ValueError(f"unknown config key {key!r}")
            settings[key] = value
    command = args.command or args.command_flag or settings.get("command")
    if command is None:
        raise ValueError("no command given (positional, --cmd, or config file)")
    settings["command"] = command
    for key in ("n", "r_max", "grid_n", "method", "tol", "max_iter", "damping",
                "k_max", "potential", "out", "cache", "scheme", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    if args.eps is not None:
        settings["eps"] = [float(tok) for tok in args.eps.split(",") if tok.strip()]
    return RunConfig(**settings)


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def _write_csv(path: Path, rows: List[List[str]]) -> None:
    with path.open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


class CheckFailure(Exception):
    """A declared check failed; the message names it."""


def _obtain_ground_state(cfg: RunConfig, log) -> Tuple[GroundState, Path]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cache_path = out / f"ground_state_n{cfg.n}.txt"
    grid = build_grid(cfg.n, cfg.r_max, cfg.grid_n, cfg.scheme)
    if cfg.cache == "use" and cache_path.exists():
        try:
            gs = groundstate_from_cache(grid, cache_path.read_text())
            log(f"loaded ground-state cache {cache_path}")
            return gs, cache_path
        except ValueError as exc:
            log(f"cache mismatch ({exc}); refreshing")
    gs = solve_ground_state(grid, cfg.solver_config())
    if cfg.cache != "ignore":
        cache_path.write_text(format_cache(gs))
        log(f"wrote ground-state cache {cache_path}")
    return gs, cache_path


def _run_ground_state(cfg: RunConfig, log) -> List[Tuple[str, bool, str]]:
    gs, _ = _obtain_ground_state(cfg, log)
    log(
        f"n={gs.dim} method={gs.method} residual={gs.residual:.3e} "
        f"mass={gs.l2_mass:.12g} nu={gs.nu:.12g} energy={gs.energy:.12g}"
    )
    checks = [
        (
            "equation residual below tolerance",
            gs.residual <= gs.tol,
            f"{gs.residual:.3e} vs {gs.tol:.1e}",
        ),
        (
            "profile positive and monotone",
            bool(np.min(gs.profile.values) > 0.0),
            "",
        ),
    ]
    return checks


def _run_spectrum(cfg: RunConfig, log) -> List[Tuple[str, bool, str]]:
    gs, _ = _obtain_ground_state(cfg, log)
    from .newton_potential import prefetch_kernel_matrices

    prefetch_kernel_matrices(gs.grid, range(cfg.k_max + 1))
    report = nondegeneracy_report(gs, cfg.k_max, workers=cfg.workers)
    out = Path(cfg.out)
    csv_path = out / f"spectrum_n{cfg.n}.csv"
    _write_csv(csv_path, report.to_csv_rows())
    txt_path = out / f"nondegeneracy_n{cfg.n}.txt"
    txt_path.write_text(report.to_text())
    log(f"wrote {csv_path} and {txt_path}")
    checks = [
        (
            "k=1 zero mode",
            abs(report.records[1].lambda0) < report.tol_zero,
            f"lambda_10={report.records[1].lambda0:.3e}",
        ),
        (
            "k=0 kernel gap",
            report.k0_min_abs > report.gap_delta0,
            f"min|lambda|={report.k0_min_abs:.3e}",
        ),
        (
            "positive sectors k>=2",
            all(r.lambda0 > 0 for r in report.records[2:] if r.error is None),
            "",
        ),
        ("nondegeneracy verdict", report.verdict, ""),
    ]
    return checks


def _run_identities(cfg: RunConfig, log) -> List[Tuple[str, bool, str]]:
    gs, _ = _obtain_ground_state(cfg, log)
    defects = identity_defects(gs)
    out = Path(cfg.out)
    rows = [["identity", "relative_defect"]]
    labels = {
        "LU": "L U + 2 (I2*U^2) U",
        "LrU": "L(r U') + 2U - 4 (I2*U^2) U",
        "L2UrU": "L(2U + r U') + 2U",
    }
    for key, value in defects.items():
        rows.append([labels[key], _fmt(value)])
    path = out / f"identities_n{cfg.n}.csv"
    _write_csv(path, rows)
    log(f"wrote {path}")
    return [
        (f"identity defect {labels[key]}", value < 1e-4, f"{value:.3e}")
        for key, value in defects.items()
    ]


def _run_multipole(cfg: RunConfig, log) -> List[Tuple[str, bool, str]]:
    if cfg.n != 3:
        raise ValueError("multipole_verify runs the n=3 oracle comparison")
    rows = multipole_completeness_experiment(k_max=cfg.k_max)
    out = Path(cfg.out)
    table = [["K_max", "x", "y", "z", "oracle", "abs_error"]]
    for row in rows:
        for kmax in sorted(row["errors"]):
            table.append(
                [
                    str(kmax),
                    _fmt(row["point"][0]),
                    _fmt(row["point"][1]),
                    _fmt(row["point"][2]),
                    _fmt(row["oracle"]),
                    _fmt(row["errors"][kmax]),
                ]
            )
    path = out / "multipole_errors_n3.csv"
    _write_csv(path, table)
    log(f"wrote {path}")
    kmax = cfg.k_max
    worst_rel = max(r["errors"][kmax] / abs(r["oracle"]) for r in rows)
    worst_curve = [
        max(r["errors"][k] for r in rows) for k in range(kmax + 1)
    ]
    monotone = all(b <= a for a, b in zip(worst_curve, worst_curve[1:]))
    return [
        (f"expansion error at K_max={kmax}", worst_rel < 1e-4, f"{worst_rel:.3e}"),
        ("error decays monotonically in K_max", monotone, ""),
    ]


def _run_semiclassical(cfg: RunConfig, log) -> List[Tuple[str, bool, str]]:
    gs, _ = _obtain_ground_state(cfg, log)
    value, gradient = make_potential_functions(cfg.potential, cfg.n)
    V = PotentialField(cfg.n, value, gradient)
    box = [(-2.0, 2.0)] * cfg.n
    bound = V.lower_bound_check(box)
    log(f"inf-proxy of 1+V on the box: {bound:.6g}")
    xi = np.full(cfg.n, 0.35)
    report = semiclassical_sweep(gs, V, xi, list(cfg.eps))
    eps_ref = cfg.eps[len(cfg.eps) // 2]
    report.critical_points = predict_concentration(V, box, eps_ref, gs)
    out = Path(cfg.out)
    rows = [["eps", "energy", "leading", "energy_gap", "gradient_proxy", "gamma_half"]]
    for row in report.rows:
        rows.append(
            [
                _fmt(row.eps),
                _fmt(row.energy),
                _fmt(row.leading),
                _fmt(row.energy_gap),
                _fmt(row.gradient_proxy),
                _fmt(row.gamma_half),
            ]
        )
    csv_path = out / f"semiclassical_n{cfg.n}.csv"
    _write_csv(csv_path, rows)
    txt_path = out / f"semiclassical_report_n{cfg.n}.txt"
    txt_path.write_text(report.to_text())
    log(f"wrote {csv_path} and {txt_path}")

    # calibration check independent of the supplied potential: constant V
    mu = 0.3
    const = PotentialField(cfg.n, lambda pts: np.full(pts.shape[0], mu))
    from .semiclassical import leading_coefficient, soliton_energy

    f_const = soliton_energy(gs, const, cfg.eps[0], xi)
    lead = leading_coefficient(gs) * (1.0 + mu) ** (3.0 - cfg.n / 2.0)
    const_rel = abs(f_const - lead) / abs(lead)
    checks = [
        ("condition (V): 1 + V > 0 on box samples", bound > 0.0, f"{bound:.3g}"),
        (
            "constant-V exactness of the soliton energy",
            const_rel < 1e-6,
            f"{const_rel:.3e}",
        ),
        (
            "scaling fit produced finite exponents",
            math.isfinite(report.proxy_exponent),
            f"proxy exponent {report.proxy_exponent:.3f}",
        ),
    ]
    return checks


RUNNERS = {
    "ground_state": _run_ground_state,
    "spectrum": _run_spectrum,
    "identities": _run_identities,
    "multipole_verify": _run_multipole,
    "semiclassical": _run_semiclassical,
}


def run(cfg: RunConfig) -> int:
    """Execute the configured pipeline; returns the process exit status."""

    def log(msg: str) -> None:
        print(f"[hartree-lab] {msg}")

    try:
        checks = RUNNERS[cfg.command](cfg, log)
    except CheckFailure as exc:
        print(f"[hartree-lab] CHECK FAILED: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"[hartree-lab] error: {exc}", file=sys.stderr)
        return 1
    status = 0
    for name, ok, detail in checks:
        tag = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        print(f"[{tag}] {name}{suffix}")
        if not ok:
            status = 2
            print(f"[hartree-lab] failing check: {name}", file=sys.stderr)
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else list(argv))
    except (ValueError, FileNotFoundError) as exc:
        print(f"[hartree-lab] config error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
