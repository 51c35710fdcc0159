"""
Linearized measurement matrices.

The measurement set is every bus injection followed by the forward and
reverse flow of every in-service branch. States are the voltage angles of
the non-slack buses; the slack angle is fixed to zero.

With zero resistance and unit voltage magnitudes the flow on branch (i, j)
is sin(theta_i - theta_j) / x, so the AC Jacobian differs from the DC one
only by the factor cos(theta_i - theta_j) on each branch.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .matpower_ingest import GridCase
from .utils.errors import CaseValidationError, DimensionError, RegimeError

logger = logging.getLogger(__name__)


class RowKind(Enum):
    INJECTION = "injection"
    FLOW_FWD = "flow_fwd"
    FLOW_REV = "flow_rev"


RowLabel = Tuple[RowKind, int]


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """
    The m x n Jacobian H with labels.

    row_labels reference a bus id for injections and the branch's position
    in the case file for flows; state_labels are non-slack bus ids.
    """

    h: np.ndarray
    row_labels: Tuple[RowLabel, ...]
    state_labels: Tuple[int, ...]

    def __post_init__(self) -> None:
        h = np.array(self.h, dtype=float)
        if h.ndim != 2:
            raise DimensionError(f"H must be 2-D, got shape {h.shape}")
        if h.shape != (len(self.row_labels), len(self.state_labels)):
            raise DimensionError(
                f"H shape {h.shape} does not match {len(self.row_labels)} rows x {len(self.state_labels)} states"
            )
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @property
    def n(self) -> int:
        return self.h.shape[1]

    def rows_of(self, kind: RowKind) -> List[int]:
        return [k for k, (row_kind, _) in enumerate(self.row_labels) if row_kind is kind]

    def rank(self, tol: float = 1e-8) -> int:
        """Numerical rank with a tolerance relative to the largest singular value."""
        s = np.linalg.svd(self.h, compute_uv=False)
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.sum(s > tol * s[0]))

    def dump_csv(self, path: Union[str, Path]) -> None:
        """Write H as CSV: one row per measurement, label first."""
        frame = pd.DataFrame(self.h, columns=[f"theta_{bus}" for bus in self.state_labels])
        frame.insert(0, "row", [f"{kind.value}:{ref}" for kind, ref in self.row_labels])
        frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


@dataclass(frozen=True, eq=False)
class OperatingPoint:
    """Voltage angles (radians) of the non-slack buses."""

    theta: np.ndarray

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(theta)):
            raise RegimeError("Operating point angles must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)


def flat_start(case: GridCase) -> OperatingPoint:
    return OperatingPoint(np.zeros(case.n_bus - 1))


def _assemble(case: GridCase, branch_weights: Sequence[float]) -> MeasurementMatrix:
    state_ids = case.non_slack_ids()
    column = {bus_id: k for k, bus_id in enumerate(state_ids)}
    index = case.bus_index
    branches = case.in_service_branches()
    n_bus, n, nb = case.n_bus, len(state_ids), len(branches)

    flows = np.zeros((nb, n))
    incidence = np.zeros((nb, n_bus))
    for b, ((_, br), w) in enumerate(zip(branches, branch_weights)):
        if br.from_bus in column:
            flows[b, column[br.from_bus]] += w
        if br.to_bus in column:
            flows[b, column[br.to_bus]] -= w
        incidence[b, index[br.from_bus]] = 1.0
        incidence[b, index[br.to_bus]] = -1.0

    # injection at bus k = sum of flows leaving k
    injections = incidence.T @ flows
    paired = np.stack([flows, -flows], axis=1).reshape(2 * nb, n)
    h = np.vstack([injections, paired])

    labels: List[RowLabel] = [(RowKind.INJECTION, bus.id) for bus in case.buses]
    for k, _ in branches:
        labels += [(RowKind.FLOW_FWD, k), (RowKind.FLOW_REV, k)]
    return MeasurementMatrix(h=h, row_labels=tuple(labels), state_labels=tuple(state_ids))


def _reactances(case: GridCase) -> np.ndarray:
    x = np.array([br.reactance_x for _, br in case.in_service_branches()], dtype=float)
    bad = np.flatnonzero(~(x > 0))
    if bad.size:
        k, br = case.in_service_branches()[bad[0]]
        raise CaseValidationError(
            f"Branch {k} ({br.from_bus}-{br.to_bus}) has non-positive reactance {br.reactance_x}",
            data={"branch": k},
        )
    return x


def dc_jacobian(case: GridCase) -> MeasurementMatrix:
    """DC measurement matrix: branch weight 1/x."""
    h = _assemble(case, 1.0 / _reactances(case))
    logger.debug(f"DC Jacobian for {case.name}: m={h.m}, n={h.n}")
    return h


def full_angles(case: GridCase, point: OperatingPoint) -> np.ndarray:
    """Angles for every bus in dense order, slack at zero."""
    state_ids = case.non_slack_ids()
    if point.theta.shape[0] != len(state_ids):
        raise DimensionError(f"Operating point has {point.theta.shape[0]} angles, case needs {len(state_ids)}")
    angles = np.zeros(case.n_bus)
    index = case.bus_index
    for bus_id, value in zip(state_ids, point.theta):
        angles[index[bus_id]] = value
    return angles


def ac_jacobian_at(case: GridCase, point: OperatingPoint) -> MeasurementMatrix:
    """Lossless AC Jacobian at `point`: branch weight cos(theta_i - theta_j)/x."""
    x = _reactances(case)
    angles = full_angles(case, point)
    index = case.bus_index
    diffs = np.array(
        [angles[index[br.from_bus]] - angles[index[br.to_bus]] for _, br in case.in_service_branches()]
    )
    return _assemble(case, np.cos(diffs) / x)


def perturb_point(point: OperatingPoint, sigma_delta_sq: float, rng: np.random.Generator) -> OperatingPoint:
    """Add independent N(0, sigma_delta_sq) increments to every angle."""
    if sigma_delta_sq < 0:
        raise RegimeError(f"Perturbation variance must be non-negative, got {sigma_delta_sq}")
    # One draw per angle at every variance, zero included.
    step = np.sqrt(sigma_delta_sq) * rng.standard_normal(point.theta.shape)
    return OperatingPoint(point.theta + step)
