"""Simple key=value config files shared by the CLI commands.

One flat namespace covers both the service and the device policy. Unknown
keys are rejected so typos surface immediately. Precedence, applied by the
CLI: command-line flag, then environment variable, then config file, then
the built-in default.
"""

from __future__ import annotations

import dataclasses

from .device import DevicePolicy
from .server import ApiConfig

POLICY_KEYS = {f.name for f in dataclasses.fields(DevicePolicy)}
API_KEYS = {
    "bind_addr",
    "snapshot_path",
    "audit_log_path",
    "max_body_bytes",
    "max_radius_m",
}
KNOWN_KEYS = POLICY_KEYS | API_KEYS


def load_kv_config(path: str) -> dict[str, str]:
    """Read a key=value file; '#' lines and blanks are ignored."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in KNOWN_KEYS:
                raise ValueError(f"{path}:{line_no}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def policy_from_values(values: dict[str, str]) -> DevicePolicy:
    """Build a device policy from defaults plus any overriding values."""
    overrides = {}
    for key in POLICY_KEYS & values.keys():
        try:
            overrides[key] = float(values[key])
        except ValueError:
            raise ValueError(f"config key {key!r} must be a number, got {values[key]!r}") from None
    return DevicePolicy(**overrides)


def parse_bind_addr(text: str) -> tuple[str, int]:
    """Split 'host:port' (host may be empty, meaning all interfaces)."""
    host, sep, port_text = text.rpartition(":")
    if not sep:
        raise ValueError(f"bind address must look like host:port, got {text!r}")
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"invalid port in bind address {text!r}") from None
    return (host or "0.0.0.0", port)


def api_config_from_values(values: dict[str, str]) -> ApiConfig:
    """Build service settings from defaults plus any overriding values."""
    kwargs: dict = {}
    if "bind_addr" in values:
        kwargs["host"], kwargs["port"] = parse_bind_addr(values["bind_addr"])
    if "snapshot_path" in values:
        kwargs["snapshot_path"] = values["snapshot_path"]
    if "audit_log_path" in values:
        kwargs["audit_log_path"] = values["audit_log_path"]
    if "max_body_bytes" in values:
        try:
            kwargs["max_body_bytes"] = int(values["max_body_bytes"])
        except ValueError:
            raise ValueError("config key 'max_body_bytes' must be an integer") from None
    if "max_radius_m" in values:
        try:
            kwargs["max_radius_m"] = float(values["max_radius_m"])
        except ValueError:
            raise ValueError("config key 'max_radius_m' must be a number") from None
    return ApiConfig(**kwargs)
