"""Fetch deployed bytecode from a node over JSON-RPC, with a disk cache."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import requests

from .bytecode import Bytecode, Source, SourceKind, parse_hex

RPC_URL_ENV = "PONZILENS_RPC_URL"

_ADDRESS_LEN = 42  # 0x + 20 bytes


class RpcFetchError(RuntimeError):
    pass


class NetworkError(RpcFetchError):
    pass


class RpcError(RpcFetchError):
    def __init__(self, code: int, message: str):
        self.code = code
        self.message = message
        super().__init__(f"RPC error {code}: {message}")


class EmptyCodeError(RpcFetchError):
    def __init__(self, address: str):
        self.address = address
        super().__init__(f"address {address} has no contract code")


def default_endpoint() -> str | None:
    return os.environ.get(RPC_URL_ENV)


def _validate_address(address: str) -> str:
    addr = address.strip()
    if not addr.lower().startswith("0x") or len(addr) != _ADDRESS_LEN:
        raise ValueError(f"malformed address {address!r}: expected 0x + 40 hex digits")
    try:
        int(addr[2:], 16)
    except ValueError:
        raise ValueError(f"malformed address {address!r}: non-hex digits") from None
    return addr.lower()


def fetch_bytecode(address: str, endpoint: str, *,
                   cache_dir: Path | None = None, use_cache: bool = True,
                   timeout: float = 15.0) -> Bytecode:
    """``eth_getCode`` at the latest block, cached by (endpoint, address)."""
    addr = _validate_address(address)
    cache_file = None
    if use_cache:
        if cache_dir is None:
            from .pipeline import default_cache_dir

            cache_dir = default_cache_dir()
        key = hashlib.sha256(f"{endpoint}|{addr}".encode()).hexdigest()
        cache_file = cache_dir / "rpc" / f"{key}.hex"
        if cache_file.exists():
            return _to_bytecode(cache_file.read_text().strip(), addr, endpoint)

    payload = {
        "jsonrpc": "2.0",
        "method": "eth_getCode",
        "params": [addr, "latest"],
        "id": 1,
    }
    try:
        resp = requests.post(endpoint, json=payload, timeout=timeout)
        resp.raise_for_status()
        body = resp.json()
    except (requests.RequestException, json.JSONDecodeError) as exc:
        raise NetworkError(f"eth_getCode against {endpoint} failed: {exc}") from exc
    if "error" in body:
        err = body["error"]
        raise RpcError(err.get("code", -1), err.get("message", "unknown error"))
    result = body.get("result", "0x")

    code = _to_bytecode(result, addr, endpoint)
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        cache_file.write_text(result)
    return code


def _to_bytecode(hex_text: str, address: str, endpoint: str) -> Bytecode:
    code = parse_hex(hex_text, Source(SourceKind.RPC, address=address, endpoint=endpoint))
    if len(code.data) == 0:
        raise EmptyCodeError(address)
    return code
