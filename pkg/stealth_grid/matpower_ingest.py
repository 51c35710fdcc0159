"""
MATPOWER case ingestion.

Parses the `mpc.bus` and `mpc.branch` blocks of a MATPOWER `.m` case file
into an immutable GridCase. Only the columns the DC measurement model needs
are consumed: bus number, bus type and voltage magnitude; branch endpoints,
reactance and status.
"""

import logging
import re
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .utils.errors import CaseParseError, CaseValidationError

logger = logging.getLogger(__name__)

CASES_DIR = Path(__file__).parent / "cases"
BUNDLED_CASES = ("case14", "case30", "case118")

# 1-based MATPOWER column numbers
BUS_I, BUS_TYPE, BUS_VM = 1, 2, 8
F_BUS, T_BUS, BR_X, BR_STATUS = 1, 2, 4, 11


class BusType(IntEnum):
    PQ = 1
    PV = 2
    SLACK = 3
    ISOLATED = 4


@dataclass(frozen=True)
class Bus:
    id: int
    bus_type: BusType
    voltage_magnitude: float = 1.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    reactance_x: float
    status: int = 1

    @property
    def in_service(self) -> bool:
        return self.status != 0


@dataclass(frozen=True)
class GridCase:
    """Network topology with buses and branches in file order."""

    name: str
    buses: Tuple[Bus, ...]
    branches: Tuple[Branch, ...]
    base_mva: float = 100.0

    @cached_property
    def bus_index(self) -> Dict[int, int]:
        """External bus number to dense index 0..n_bus-1."""
        return {bus.id: k for k, bus in enumerate(self.buses)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def slack_id(self) -> int:
        slacks = [bus.id for bus in self.buses if bus.bus_type == BusType.SLACK]
        if len(slacks) != 1:
            raise CaseValidationError(f"Case {self.name} has {len(slacks)} slack buses, expected 1")
        return slacks[0]

    def in_service_branches(self) -> List[Tuple[int, Branch]]:
        """(file index, branch) for every in-service branch."""
        return [(k, br) for k, br in enumerate(self.branches) if br.in_service]

    def non_slack_ids(self) -> List[int]:
        slack = self.slack_id
        return [bus.id for bus in self.buses if bus.id != slack]


def _strip_comments(text: str) -> str:
    return "\n".join(re.sub(r"%.*$", "", line) for line in text.splitlines())


def _extract_block(content: str, block: str) -> np.ndarray:
    pattern = rf"{re.escape(block)}\s*=\s*\[(.*?)\]\s*;"
    match = re.search(pattern, content, re.DOTALL)
    if not match:
        raise CaseParseError(f"Missing {block} block", data={"block": block})

    rows = []
    for chunk in re.split(r"[;\n]", match.group(1)):
        tokens = chunk.replace(",", " ").split()
        if not tokens:
            continue
        try:
            rows.append([float(tok) for tok in tokens])
        except ValueError as e:
            raise CaseParseError(f"Non-numeric entry in {block}: {chunk.strip()!r}", data={"block": block}) from e

    if not rows:
        raise CaseParseError(f"Empty {block} block", data={"block": block})
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise CaseParseError(f"Ragged rows in {block}: widths {sorted(widths)}", data={"block": block})
    return np.array(rows)


def _extract_base_mva(content: str) -> float:
    match = re.search(r"mpc\.baseMVA\s*=\s*([-+0-9.eE]+)", content)
    return float(match.group(1)) if match else 100.0


def _extract_name(content: str, default: str) -> str:
    match = re.search(r"function\s+mpc\s*=\s*(\w+)", content)
    return match.group(1) if match else default


def parse_case(text: str, name: Optional[str] = None) -> GridCase:
    """Parse MATPOWER case text into a validated GridCase."""
    content = _strip_comments(text)
    bus_data = _extract_block(content, "mpc.bus")
    branch_data = _extract_block(content, "mpc.branch")

    if bus_data.shape[1] < BUS_TYPE:
        raise CaseParseError("mpc.bus needs at least 2 columns", data={"block": "mpc.bus"})
    if branch_data.shape[1] < BR_X:
        raise CaseParseError("mpc.branch needs at least 4 columns", data={"block": "mpc.branch"})

    try:
        buses = tuple(
            Bus(
                id=int(row[BUS_I - 1]),
                bus_type=BusType(int(row[BUS_TYPE - 1])),
                voltage_magnitude=float(row[BUS_VM - 1]) if len(row) >= BUS_VM else 1.0,
            )
            for row in bus_data
        )
    except ValueError as e:
        raise CaseParseError(f"Invalid bus type in mpc.bus: {e}", data={"block": "mpc.bus"}) from e

    branches = tuple(
        Branch(
            from_bus=int(row[F_BUS - 1]),
            to_bus=int(row[T_BUS - 1]),
            reactance_x=float(row[BR_X - 1]),
            status=int(row[BR_STATUS - 1]) if len(row) >= BR_STATUS else 1,
        )
        for row in branch_data
    )

    case = GridCase(
        name=name or _extract_name(content, "case"),
        buses=buses,
        branches=branches,
        base_mva=_extract_base_mva(content),
    )
    validate_case(case)
    logger.debug(f"Parsed {case.name}: {case.n_bus} buses, {len(case.branches)} branches")
    return case


def validate_case(case: GridCase) -> None:
    """Raise CaseValidationError if the case breaks a topology invariant."""
    if not case.buses or not case.branches:
        raise CaseValidationError(f"Case {case.name} needs at least one bus and one branch")

    ids = [bus.id for bus in case.buses]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise CaseValidationError(f"Duplicate bus ids: {dupes}", data={"bus": dupes[0]})

    slack = case.slack_id
    index = case.bus_index
    for k, br in enumerate(case.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in index:
                raise CaseValidationError(f"Branch {k} references unknown bus {end}", data={"bus": end})
        if br.from_bus == br.to_bus:
            raise CaseValidationError(f"Branch {k} is a self-loop at bus {br.from_bus}", data={"bus": br.from_bus})
        if br.in_service and not br.reactance_x > 0:
            raise CaseValidationError(
                f"Branch {k} ({br.from_bus}-{br.to_bus}) has non-positive reactance {br.reactance_x}",
                data={"branch": k},
            )

    isolated = disconnected_buses(case)
    if isolated:
        raise CaseValidationError(
            f"In-service network is disconnected: bus {isolated[0]} is not reachable from slack bus {slack}",
            data={"bus": isolated[0]},
        )


def disconnected_buses(case: GridCase) -> List[int]:
    """Bus ids outside the slack bus's connected component (in-service branches only)."""
    index = case.bus_index
    pairs = [(index[br.from_bus], index[br.to_bus]) for _, br in case.in_service_branches()]
    rows = [i for i, _ in pairs]
    cols = [j for _, j in pairs]
    adjacency = sparse.coo_matrix((np.ones(len(pairs)), (rows, cols)), shape=(case.n_bus, case.n_bus))
    _, labels = csgraph.connected_components(adjacency, directed=False)
    root = labels[index[case.slack_id]]
    return [bus.id for bus, label in zip(case.buses, labels) if label != root]


def case_summary(case: GridCase) -> Tuple[int, int, int]:
    """(number of buses, number of in-service branches, slack bus id)."""
    return case.n_bus, len(case.in_service_branches()), case.slack_id


def load_case(path: Union[str, Path]) -> GridCase:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CaseParseError(f"Cannot read case file {path}: {e}", data={"path": str(path)}) from e
    return parse_case(text, name=path.stem)


def bundled_case(name: str) -> GridCase:
    """Load one of the IEEE cases shipped with the package."""
    if name not in BUNDLED_CASES:
        raise CaseParseError(f"Unknown bundled case {name!r}; available: {', '.join(BUNDLED_CASES)}")
    return load_case(CASES_DIR / f"{name}.m")


def bundled_case_text(name: str) -> str:
    if name not in BUNDLED_CASES:
        raise CaseParseError(f"Unknown bundled case {name!r}; available: {', '.join(BUNDLED_CASES)}")
    return (CASES_DIR / f"{name}.m").read_text(encoding="utf-8")


def resolve_case(name_or_path: str) -> GridCase:
    """A bundled case name, or a path to a `.m` file."""
    if name_or_path in BUNDLED_CASES:
        return bundled_case(name_or_path)
    return load_case(name_or_path)


def format_case(case: GridCase) -> str:
    """
    Serialize the consumed columns back to MATPOWER text.

    Unconsumed columns are written as zeros; the output re-parses to an
    equal GridCase.
    """
    lines = [
        f"function mpc = {case.name}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {case.base_mva!r};",
        "",
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm",
        "mpc.bus = [",
    ]
    for bus in case.buses:
        lines.append(f"\t{bus.id}\t{int(bus.bus_type)}\t0\t0\t0\t0\t1\t{bus.voltage_magnitude!r};")
    lines += ["];", "", "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus", "mpc.branch = ["]
    for br in case.branches:
        lines.append(f"\t{br.from_bus}\t{br.to_bus}\t0\t{br.reactance_x!r}\t0\t0\t0\t0\t0\t0\t{br.status};")
    lines += ["];", ""]
    return "\n".join(lines)
