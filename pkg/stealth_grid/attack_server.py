#!/usr/bin/env python3
"""
Grid attack tool server.

Serves the attack and detection computations as JSON-RPC tools over
stdio, one request per line. Bundled case files are exposed as resources.
"""

import asyncio
import logging
import sys
from typing import Any, Dict, List, Tuple, Type

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .attack_engine import no_attack_mi, optimal_attack
from .detector import bound_exponent, build_spectrum, design_lambda, exact_lambda, prob_detection
from .gaussian_model import StateModel
from .grid_jacobian import MeasurementMatrix, dc_jacobian
from .matpower_ingest import BUNDLED_CASES, GridCase, bundled_case_text, case_summary, resolve_case
from .utils.base_server import METHOD_NOT_FOUND, BaseToolServer
from .utils.errors import INVALID_PARAMS, StealthError
from .weighted_chisq import tail_moment_match

logger = logging.getLogger(__name__)

RESOURCE_PREFIX = "grid://cases/"


class CaseRequest(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    case: str = Field(..., description="Bundled case name (case14, case30, case118) or path to a .m file")


class ModelRequest(CaseRequest):
    rho: float = Field(0.1, ge=0.0, lt=1.0, description="Toeplitz correlation of the state angles")
    snr_db: float = Field(10.0, description="Measurement SNR in dB")


class AttackRequest(ModelRequest):
    lam: float = Field(2.0, ge=1.0, alias="lambda", description="Weight of the detection term")


class DetectionRequest(AttackRequest):
    tau: float = Field(2.0, gt=0.0, description="LRT threshold")


class DesignRequest(ModelRequest):
    tau: float = Field(2.0, gt=1.0, description="LRT threshold")
    target_pd: float = Field(..., gt=0.0, lt=1.0, description="Largest acceptable detection probability")


TOOLS: Dict[str, Tuple[str, Type[BaseModel]]] = {
    "case_info": ("Bus/branch counts, slack bus and measurement matrix size and rank", CaseRequest),
    "optimal_attack": ("Information leakage and detectability of the closed-form attack", AttackRequest),
    "detection_probability": ("Exact, moment-matched and bounded probability of detection", DetectionRequest),
    "design_lambda": ("Smallest lambda meeting a detection-probability target", DesignRequest),
}


class GridAttackServer(BaseToolServer):
    """Tool server for stealth attack analysis on MATPOWER cases."""

    def __init__(self):
        super().__init__("stealth-grid-server", __version__)
        self._cases: Dict[str, Tuple[GridCase, MeasurementMatrix]] = {}

    def get_server_info(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "version": self.version,
            "description": "Generalized stealth data injection attacks on DC state estimation",
        }

    async def list_tools(self) -> List[Dict[str, Any]]:
        return [
            {"name": name, "description": description, "inputSchema": model.model_json_schema(by_alias=True)}
            for name, (description, model) in TOOLS.items()
        ]

    def _grid(self, name: str) -> Tuple[GridCase, MeasurementMatrix]:
        if name not in self._cases:
            case = resolve_case(name)
            self._cases[name] = (case, dc_jacobian(case))
            logger.info(f"Loaded {case.name} for tool calls")
        return self._cases[name]

    def _model(self, request: ModelRequest) -> Tuple[MeasurementMatrix, StateModel]:
        _, h = self._grid(request.case)
        return h, StateModel.from_snr(h, request.rho, request.snr_db)

    async def call_tool(self, name: str, arguments: Dict[str, Any]) -> Any:
        if name not in TOOLS:
            raise StealthError(f"Unknown tool: {name}", code=METHOD_NOT_FOUND)
        try:
            request = TOOLS[name][1].model_validate(arguments)
        except ValidationError as e:
            messages = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
            raise StealthError("Invalid arguments: " + "; ".join(messages), data=messages, code=INVALID_PARAMS) from e

        if name == "case_info":
            case, h = self._grid(request.case)
            n_bus, n_branch, slack = case_summary(case)
            return {"n_bus": n_bus, "n_branch": n_branch, "slack": slack, "m": h.m, "n": h.n, "rank": h.rank()}

        h, model = self._model(request)
        if name == "optimal_attack":
            attack = optimal_attack(h, model, request.lam)
            return {
                "mi_nats": attack.mi_under_attack,
                "kl_nats": attack.kl_attack,
                "no_attack_mi_nats": no_attack_mi(h, model),
                "attack_trace": attack.trace,
                "rank": attack.rank,
            }

        if name == "detection_probability":
            spectrum = build_spectrum(h, model, request.lam, request.tau)
            _, tr2, top = spectrum.moments
            t, bound = bound_exponent(tr2, top, request.tau, request.lam) if request.tau > 1 else (0.0, 1.0)
            return {
                "pd_imhof": prob_detection(spectrum),
                "pd_moment_match": tail_moment_match(spectrum.distribution(), spectrum.threshold_rhs),
                "pd_upper_bound": bound,
                "bound_t": t,
                "p": spectrum.p,
            }

        return {
            "lambda_bound": design_lambda(h, model, request.tau, request.target_pd),
            "lambda_exact": exact_lambda(h, model, request.tau, request.target_pd),
        }

    async def list_resources(self) -> List[Dict[str, Any]]:
        return [
            {
                "uri": f"{RESOURCE_PREFIX}{name}",
                "name": f"IEEE {name[4:]}-bus case",
                "description": f"MATPOWER case file {name}.m",
                "mimeType": "text/plain",
            }
            for name in BUNDLED_CASES
        ]

    async def read_resource(self, uri: str) -> Dict[str, Any]:
        name = uri[len(RESOURCE_PREFIX):] if uri.startswith(RESOURCE_PREFIX) else None
        if name not in BUNDLED_CASES:
            raise StealthError(f"Resource not found: {uri}", code=METHOD_NOT_FOUND)
        return {"contents": [{"uri": uri, "mimeType": "text/plain", "text": bundled_case_text(name)}]}


def main():
    """Entry point for the tool server; logs go to stderr since stdout carries responses."""
    logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    server = GridAttackServer()
    asyncio.run(server.run())


if __name__ == "__main__":
    main()
