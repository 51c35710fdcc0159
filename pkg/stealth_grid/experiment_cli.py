"""
Experiment sweeps and the `stealth-grid` command line.

Every sweep point is evaluated independently with its own random stream,
seeded from (master_seed, point index), so the CSV output depends only on
the configuration and not on the number of worker processes.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Literal, Optional, Sequence, TextIO, Union

import numpy as np
import pandas as pd
import pydantic
import scipy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .attack_engine import mismatched_attack, optimal_attack
from .detector import (
    bound_exponent,
    build_spectrum,
    empirical_rates,
    pool_rates,
    prob_detection,
    simulate_lrt,
)
from .gaussian_model import StateModel
from .grid_jacobian import ac_jacobian_at, dc_jacobian, flat_start, perturb_point
from .matpower_ingest import GridCase, case_summary, resolve_case
from .utils.errors import ConfigError, InvariantViolation, StealthError

logger = logging.getLogger(__name__)

ExperimentName = Literal["rho-sweep", "lambda-sweep", "ac-sensitivity"]

DEFAULT_GRIDS: Dict[str, Dict[str, List[float]]] = {
    "rho-sweep": {
        "rho_grid": [round(0.1 * k, 1) for k in range(1, 10)],
        "lambda_grid": [2.0],
        "snr_db_grid": [10.0],
        "sigma_delta_sq_grid": [],
    },
    "lambda-sweep": {
        "rho_grid": [0.1, 0.9],
        "lambda_grid": [2.0**k for k in range(11)],
        "snr_db_grid": [10.0],
        "sigma_delta_sq_grid": [],
    },
    "ac-sensitivity": {
        "rho_grid": [0.1],
        "lambda_grid": [2.0, 5.0, 10.0],
        "snr_db_grid": [20.0],
        "sigma_delta_sq_grid": [0.0, 0.01, 0.05, 0.1],
    },
}

BOUND_SLACK = 3.0


class ExperimentConfig(BaseModel):
    """Validated sweep configuration. Missing grids take the selected experiment's defaults."""

    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName = "lambda-sweep"
    cases: List[str] = Field(default_factory=lambda: ["case14"], min_length=1)
    rho_grid: List[float] = Field(default_factory=list, min_length=1)
    lambda_grid: List[float] = Field(default_factory=list, min_length=1)
    snr_db_grid: List[float] = Field(default_factory=list, min_length=1)
    sigma_delta_sq_grid: List[float] = Field(default_factory=list)
    tau: float = Field(2.0, gt=0)
    mc_trials: int = Field(10000, ge=1000)
    perturbation_draws: int = Field(200, ge=1)
    states_per_draw: int = Field(2000, ge=1)
    master_seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    out: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def fill_default_grids(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        defaults = DEFAULT_GRIDS.get(data.get("experiment", "lambda-sweep"), {})
        filled = dict(data)
        for key, grid in defaults.items():
            if filled.get(key) is None:
                filled[key] = list(grid)
        return filled

    @field_validator("rho_grid")
    @classmethod
    def check_rho(cls, grid: List[float]) -> List[float]:
        for rho in grid:
            if not 0.0 <= rho < 1.0:
                raise ValueError(f"rho must lie in [0, 1), got {rho}")
        return grid

    @field_validator("lambda_grid")
    @classmethod
    def check_lambda(cls, grid: List[float]) -> List[float]:
        for lam in grid:
            if not lam >= 1.0:
                raise ValueError(f"lambda must be at least 1, got {lam}")
        return grid

    @field_validator("snr_db_grid")
    @classmethod
    def check_snr(cls, grid: List[float]) -> List[float]:
        if not all(np.isfinite(grid)):
            raise ValueError("SNR values must be finite")
        return grid

    @field_validator("sigma_delta_sq_grid")
    @classmethod
    def check_sigma_delta(cls, grid: List[float]) -> List[float]:
        for value in grid:
            if not value >= 0.0:
                raise ValueError(f"perturbation variance must be non-negative, got {value}")
        return grid

    @model_validator(mode="after")
    def check_required_grids(self) -> "ExperimentConfig":
        if self.experiment == "ac-sensitivity" and not self.sigma_delta_sq_grid:
            raise ValueError("ac-sensitivity needs a non-empty sigma_delta_sq_grid")
        return self


def load_config(**values: Any) -> ExperimentConfig:
    """Build an ExperimentConfig, turning validation failures into ConfigError."""
    try:
        return ExperimentConfig(**{k: v for k, v in values.items() if v is not None})
    except ValidationError as e:
        messages = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError("Invalid experiment configuration: " + "; ".join(messages), data=messages) from e


@dataclass(frozen=True)
class SweepRow:
    case: str
    rho: float
    lam: float
    snr_db: float
    tau: float
    sigma_delta_sq: float
    mi_nats: float
    kl_nats: float
    pd_imhof: float
    pd_mc: float
    pd_mc_stderr: float
    pfa_mc: float
    pd_upper_bound: float
    bound_t: float
    seed: int
    mi_std: float = 0.0


# CSV header; `lam` is written as `lambda`
CSV_COLUMNS = [("lambda" if f.name == "lam" else f.name) for f in fields(SweepRow)]


@dataclass(frozen=True)
class SweepPoint:
    """One unit of work: a grid point and its position in declared order."""

    index: int
    case: GridCase
    snr_db: float
    rho: float
    lam: float
    sigma_delta_sq: float
    config: ExperimentConfig


def point_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, index]))


def point_seed(master_seed: int, index: int) -> int:
    """First 32-bit word of the point's seed sequence (the `seed` column)."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def _bound(tr2: float, top: float, tau: float, lam: float):
    if tau <= 1.0:
        return 0.0, 1.0
    return bound_exponent(tr2, top, tau, lam)


def evaluate_dc_point(point: SweepPoint) -> SweepRow:
    """Matched attack on the DC model: analytic MI/KL/P_D plus the empirical LRT."""
    cfg = point.config
    h = dc_jacobian(point.case)
    model = StateModel.from_snr(h, point.rho, point.snr_db)
    attack = optimal_attack(h, model, point.lam)
    spectrum = build_spectrum(h, model, point.lam, cfg.tau)
    _, tr2, top = spectrum.moments
    t, bound = _bound(tr2, top, cfg.tau, point.lam)
    rates = empirical_rates(h, model, attack, cfg.tau, cfg.mc_trials, point_rng(cfg.master_seed, point.index))
    return SweepRow(
        case=point.case.name,
        rho=point.rho,
        lam=point.lam,
        snr_db=point.snr_db,
        tau=cfg.tau,
        sigma_delta_sq=0.0,
        mi_nats=attack.mi_under_attack,
        kl_nats=attack.kl_attack,
        pd_imhof=prob_detection(spectrum),
        pd_mc=rates.p_detect,
        pd_mc_stderr=rates.detect_stderr,
        pfa_mc=rates.p_false_alarm,
        pd_upper_bound=bound,
        bound_t=t,
        seed=point_seed(cfg.master_seed, point.index),
    )


def evaluate_ac_point(point: SweepPoint) -> SweepRow:
    """
    Attack designed on the DC Jacobian, measured through AC Jacobians at
    perturbed operating points.

    The noise variance is fixed from the nominal model; the analytic P_D and
    bound columns are the nominal (unperturbed) values.
    """
    cfg = point.config
    case = point.case
    h0 = dc_jacobian(case)
    model = StateModel.from_snr(h0, point.rho, point.snr_db)
    rng = point_rng(cfg.master_seed, point.index)
    nominal = flat_start(case)

    mi, kl, parts = [], [], []
    for _ in range(cfg.perturbation_draws):
        h_true = ac_jacobian_at(case, perturb_point(nominal, point.sigma_delta_sq, rng))
        attack = mismatched_attack(h_true, h0, model, point.lam)
        mi.append(attack.mi_under_attack)
        kl.append(attack.kl_attack)
        parts.append(simulate_lrt(h_true, model, attack, cfg.tau, cfg.states_per_draw, rng))
    rates = pool_rates(parts)

    spectrum = build_spectrum(h0, model, point.lam, cfg.tau)
    _, tr2, top = spectrum.moments
    t, bound = _bound(tr2, top, cfg.tau, point.lam)
    return SweepRow(
        case=case.name,
        rho=point.rho,
        lam=point.lam,
        snr_db=point.snr_db,
        tau=cfg.tau,
        sigma_delta_sq=point.sigma_delta_sq,
        mi_nats=float(np.mean(mi)),
        kl_nats=float(np.mean(kl)),
        pd_imhof=prob_detection(spectrum),
        pd_mc=rates.p_detect,
        pd_mc_stderr=rates.detect_stderr,
        pfa_mc=rates.p_false_alarm,
        pd_upper_bound=bound,
        bound_t=t,
        seed=point_seed(cfg.master_seed, point.index),
        mi_std=float(np.std(mi)),
    )


def _load_cases(cfg: ExperimentConfig) -> List[GridCase]:
    cases = [resolve_case(name) for name in cfg.cases]
    for case in cases:
        n_bus, n_branch, slack = case_summary(case)
        logger.info(f"Loaded {case.name}: {n_bus} buses, {n_branch} in-service branches, slack bus {slack}")
    return cases


def _evaluate(func: Callable[[SweepPoint], SweepRow], points: List[SweepPoint], workers: int) -> List[SweepRow]:
    if workers == 1 or len(points) <= 1:
        return [func(p) for p in points]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, points))


def dc_points(cfg: ExperimentConfig) -> List[SweepPoint]:
    """Declared order: case, SNR, rho, lambda."""
    points = []
    for case in _load_cases(cfg):
        for snr in cfg.snr_db_grid:
            for rho in cfg.rho_grid:
                for lam in cfg.lambda_grid:
                    points.append(SweepPoint(len(points), case, snr, rho, lam, 0.0, cfg))
    return points


def ac_points(cfg: ExperimentConfig) -> List[SweepPoint]:
    """Declared order: case, sigma_delta_sq, SNR, rho, lambda."""
    points = []
    for case in _load_cases(cfg):
        for sigma_sq in cfg.sigma_delta_sq_grid:
            for snr in cfg.snr_db_grid:
                for rho in cfg.rho_grid:
                    for lam in cfg.lambda_grid:
                        points.append(SweepPoint(len(points), case, snr, rho, lam, sigma_sq, cfg))
    return points


def _run(name: str, func: Callable[[SweepPoint], SweepRow], points: List[SweepPoint], workers: int) -> List[SweepRow]:
    logger.info(f"Starting {name}: {len(points)} points on {workers} worker(s)")
    rows = _evaluate(func, points, workers)
    logger.info(f"Finished {name}: {len(rows)} rows")
    return rows


def run_rho_sweep(cfg: ExperimentConfig) -> List[SweepRow]:
    """One row per (case, SNR, rho, lambda); the default grid fixes lambda = 2."""
    return _run("rho sweep", evaluate_dc_point, dc_points(cfg), cfg.workers)


def run_lambda_sweep(cfg: ExperimentConfig) -> List[SweepRow]:
    """One row per (case, SNR, rho, lambda) including the detection bound."""
    return _run("lambda sweep", evaluate_dc_point, dc_points(cfg), cfg.workers)


def run_ac_sensitivity(cfg: ExperimentConfig) -> List[SweepRow]:
    """One row per (case, sigma_delta_sq, SNR, rho, lambda), averaged over perturbation draws."""
    if not cfg.sigma_delta_sq_grid:
        raise ConfigError("ac-sensitivity needs a non-empty sigma_delta_sq_grid")
    return _run("AC sensitivity", evaluate_ac_point, ac_points(cfg), cfg.workers)


RUNNERS: Dict[str, Callable[[ExperimentConfig], List[SweepRow]]] = {
    "rho-sweep": run_rho_sweep,
    "lambda-sweep": run_lambda_sweep,
    "ac-sensitivity": run_ac_sensitivity,
}


def row_record(row: SweepRow) -> Dict[str, Any]:
    return dict(zip(CSV_COLUMNS, astuple(row)))


def check_rows(rows: Iterable[SweepRow]) -> None:
    """Raise InvariantViolation on the first row that breaks a probability or bound invariant."""
    checked = 0
    for row in rows:
        for name in ("pd_imhof", "pd_mc", "pfa_mc", "pd_upper_bound"):
            value = getattr(row, name)
            if not 0.0 <= value <= 1.0:
                raise InvariantViolation(f"{name}={value} is not a probability", data=row_record(row))
        if row.mi_nats < 0 or row.kl_nats < 0:
            raise InvariantViolation("Information quantities must be non-negative", data=row_record(row))
        if row.tau > 1.0 and row.lam >= 1.0:
            if row.pd_imhof > row.pd_upper_bound + BOUND_SLACK * row.pd_mc_stderr + 1e-9:
                raise InvariantViolation(
                    f"P_D {row.pd_imhof:.6g} exceeds the detection bound {row.pd_upper_bound:.6g}",
                    data=row_record(row),
                )
        checked += 1
    logger.info(f"All {checked} rows satisfy the sweep invariants")


def emit_csv(rows: Sequence[SweepRow], path: Union[str, Path, TextIO]) -> None:
    """Write rows with the fixed header, 12 significant digits and LF newlines."""
    frame = pd.DataFrame([astuple(r) for r in rows], columns=CSV_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
    if isinstance(path, (str, Path)):
        logger.info(f"Wrote {len(rows)} rows to {path}")


def read_csv(path: Union[str, Path]) -> List[SweepRow]:
    frame = pd.read_csv(path, dtype={"case": str}, keep_default_na=False)
    if list(frame.columns) != CSV_COLUMNS:
        raise ConfigError(f"Unexpected CSV header in {path}: {list(frame.columns)}")
    rows = []
    for record in frame.to_dict("records"):
        values = {("lam" if k == "lambda" else k): v for k, v in record.items()}
        for f in fields(SweepRow):
            caster = {"case": str, "seed": int}.get(f.name, float)
            values[f.name] = caster(values[f.name])
        rows.append(SweepRow(**values))
    return rows


def write_manifest(cfg: ExperimentConfig, csv_path: Union[str, Path]) -> Path:
    """Write `<csv>.manifest.json` with the resolved config and library versions."""
    from . import __version__

    target = Path(f"{csv_path}.manifest.json")
    manifest = {
        "config": cfg.model_dump(),
        "seed": cfg.master_seed,
        "versions": {
            "stealth_grid": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "pydantic": pydantic.VERSION,
        },
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return target


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1; status 2 is reserved for invariant violations."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_sweep_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--case", dest="cases", action="append", help="bundled case name or .m path (repeatable)")
    parser.add_argument("--rho", dest="rho_grid", type=float, nargs="+")
    parser.add_argument("--lambda", dest="lambda_grid", type=float, nargs="+")
    parser.add_argument("--snr-db", dest="snr_db_grid", type=float, nargs="+")
    parser.add_argument("--sigma-delta-sq", dest="sigma_delta_sq_grid", type=float, nargs="+")
    parser.add_argument("--tau", type=float)
    parser.add_argument("--trials", dest="mc_trials", type=int)
    parser.add_argument("--draws", dest="perturbation_draws", type=int)
    parser.add_argument("--states-per-draw", type=int)
    parser.add_argument("--seed", dest="master_seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", help="CSV path (stdout if omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="stealth-grid", description="Generalized stealth attack experiments")
    parser.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="logging level"
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)
    for name, help_text in (
        ("rho-sweep", "MI and P_D against state correlation"),
        ("lambda-sweep", "MI, P_D and the detection bound against lambda"),
        ("ac-sensitivity", "DC-designed attacks under AC measurements"),
    ):
        _add_sweep_arguments(sub.add_parser(name, help=help_text))
    info = sub.add_parser("case-info", help="case sizes and measurement rank")
    info.add_argument("--case", dest="cases", action="append")
    return parser


def case_info(name: str) -> Dict[str, Any]:
    case = resolve_case(name)
    h = dc_jacobian(case)
    n_bus, n_branch, slack = case_summary(case)
    return {"case": case.name, "n_bus": n_bus, "n_branch": n_branch, "slack": slack, "m": h.m, "n": h.n, "rank": h.rank()}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(name)s %(levelname)s %(message)s")

    try:
        if args.command == "case-info":
            for name in args.cases or ["case14", "case30", "case118"]:
                sys.stdout.write(json.dumps(case_info(name)) + "\n")
            return 0

        values = {k: v for k, v in vars(args).items() if k not in ("command", "log_level")}
        cfg = load_config(experiment=args.command, **values)
        rows = RUNNERS[cfg.experiment](cfg)
        if cfg.out:
            emit_csv(rows, cfg.out)
            write_manifest(cfg, cfg.out)
        else:
            emit_csv(rows, sys.stdout)
        check_rows(rows)
        return 0
    except InvariantViolation as e:
        logger.error(f"Invariant violation: {e.message}")
        return 2
    except (StealthError, OSError) as e:
        logger.error(str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
