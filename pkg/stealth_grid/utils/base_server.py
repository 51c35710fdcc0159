"""
Line-delimited JSON-RPC 2.0 tool server.

Provides the protocol plumbing shared by tool servers:
- initialize / tools/list / tools/call / resources/list / resources/read
- error responses built from StealthError codes
- JSON encoding of numpy scalars and arrays
- a stdin/stdout loop (one request per line)
"""

import asyncio
import json
import logging
import sys
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, TextIO, Union

import numpy as np

from .errors import INTERNAL_ERROR, INVALID_PARAMS, StealthError

logger = logging.getLogger(__name__)

RequestId = Optional[Union[str, int]]

METHOD_NOT_FOUND = -32601
PARSE_ERROR = -32700
NOT_INITIALIZED = -32002


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(payload: Any, **kwargs: Any) -> str:
    """json.dumps that understands numpy values."""
    return json.dumps(payload, default=_to_jsonable, **kwargs)


class BaseToolServer(ABC):
    """
    Base class for tool servers.

    Subclasses describe their tools and resources; this class owns the
    request routing and the error envelope.
    """

    protocol_version = "2024-11-05"

    def __init__(self, name: str, version: str = "1.0.0"):
        self.name = name
        self.version = version
        self._initialized = False
        self._routes = {
            "initialize": self.handle_initialize,
            "tools/list": self.handle_tools_list,
            "tools/call": self.handle_tools_call,
            "resources/list": self.handle_resources_list,
            "resources/read": self.handle_resources_read,
        }

    @abstractmethod
    def get_server_info(self) -> Dict[str, Any]:
        """Return server information for the initialize response."""

    @abstractmethod
    async def list_tools(self) -> List[Dict[str, Any]]:
        """Return tool descriptors with JSON input schemas."""

    @abstractmethod
    async def call_tool(self, name: str, arguments: Dict[str, Any]) -> Any:
        """Execute a tool with given arguments."""

    def get_capabilities(self) -> Dict[str, Any]:
        return {
            "tools": {"listChanged": False},
            "resources": {"subscribe": False, "listChanged": False},
        }

    async def list_resources(self) -> List[Dict[str, Any]]:
        return []

    async def read_resource(self, uri: str) -> Dict[str, Any]:
        raise StealthError(f"Resource not found: {uri}", code=METHOD_NOT_FOUND)

    def create_response(self, request_id: RequestId, result: Any) -> Dict[str, Any]:
        return {"jsonrpc": "2.0", "id": request_id, "result": result}

    def create_error_response(
        self, request_id: RequestId, code: int, message: str, data: Optional[Any] = None
    ) -> Dict[str, Any]:
        error: Dict[str, Any] = {"code": code, "message": message}
        if data is not None:
            error["data"] = data
        return {"jsonrpc": "2.0", "id": request_id, "error": error}

    async def handle_initialize(self, request_id: RequestId, params: Dict[str, Any]) -> Dict[str, Any]:
        self._initialized = True
        return self.create_response(
            request_id,
            {
                "protocolVersion": self.protocol_version,
                "capabilities": self.get_capabilities(),
                "serverInfo": self.get_server_info(),
            },
        )

    async def handle_tools_list(self, request_id: RequestId, params: Dict[str, Any]) -> Dict[str, Any]:
        tools = await self.list_tools()
        return self.create_response(request_id, {"tools": tools})

    async def handle_tools_call(self, request_id: RequestId, params: Dict[str, Any]) -> Dict[str, Any]:
        name = params.get("name")
        arguments = params.get("arguments", {})
        if not name:
            return self.create_error_response(request_id, INVALID_PARAMS, "Missing tool name")
        if isinstance(arguments, str):
            try:
                arguments = json.loads(arguments)
            except json.JSONDecodeError:
                return self.create_error_response(request_id, INVALID_PARAMS, "Invalid arguments format")

        result = await self.call_tool(name, arguments)
        text = result if isinstance(result, str) else dumps(result, indent=2)
        return self.create_response(request_id, {"content": [{"type": "text", "text": text}]})

    async def handle_resources_list(self, request_id: RequestId, params: Dict[str, Any]) -> Dict[str, Any]:
        resources = await self.list_resources()
        return self.create_response(request_id, {"resources": resources})

    async def handle_resources_read(self, request_id: RequestId, params: Dict[str, Any]) -> Dict[str, Any]:
        uri = params.get("uri")
        if not uri:
            return self.create_error_response(request_id, INVALID_PARAMS, "Missing resource URI")
        return self.create_response(request_id, await self.read_resource(uri))

    async def handle_request(self, request: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        """Route one JSON-RPC request; notifications (no id) get no response."""
        method = request.get("method")
        params = request.get("params") or {}
        request_id = request.get("id")
        is_notification = "id" not in request

        handler = self._routes.get(method or "")
        if handler is None:
            if is_notification:
                logger.debug(f"Ignoring notification {method}")
                return None
            return self.create_error_response(request_id, METHOD_NOT_FOUND, f"Method not found: {method}")
        if method != "initialize" and not self._initialized:
            return self.create_error_response(request_id, NOT_INITIALIZED, "Server not initialized")

        try:
            return await handler(request_id, params)
        except StealthError as e:
            return self.create_error_response(request_id, e.code, e.message, e.data)
        except KeyError as e:
            return self.create_error_response(request_id, INVALID_PARAMS, f"Missing required parameter: {e}")
        except Exception as e:
            logger.exception(f"Error handling {method}")
            return self.create_error_response(request_id, INTERNAL_ERROR, f"Internal error: {e}")

    async def handle_line(self, line: str) -> Optional[str]:
        """Decode one input line and return the encoded response, if any."""
        line = line.strip()
        if not line:
            return None
        try:
            request = json.loads(line)
        except json.JSONDecodeError as e:
            return dumps(self.create_error_response(None, PARSE_ERROR, f"Parse error: {e}"))
        response = await self.handle_request(request)
        return None if response is None else dumps(response)

    async def run(self, stdin: Optional[TextIO] = None, stdout: Optional[TextIO] = None) -> None:
        """Serve requests from stdin until EOF."""
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        loop = asyncio.get_running_loop()
        logger.info(f"Starting {self.name} tool server")

        while True:
            line = await loop.run_in_executor(None, stdin.readline)
            if not line:
                break
            reply = await self.handle_line(line)
            if reply is not None:
                stdout.write(reply + "\n")
                stdout.flush()

        logger.info(f"{self.name} tool server stopped")
