"""Plain key=value configuration for the servers."""

from __future__ import annotations


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "model_host": "127.0.0.1",
    "model_port": "0",
    "verify_host": "127.0.0.1",
    "verify_port": "0",
    "tokens": "",
    "max_v": "10",
}


def parse_config(text: str) -> dict[str, str]:
    """key=value lines; '#' starts a comment; later keys win."""
    out = dict(DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str) -> dict[str, str]:
    with open(path) as fh:
        return parse_config(fh.read())


def token_list(config: dict[str, str]) -> list[str]:
    return [t for t in (s.strip() for s in config["tokens"].split(","))
            if t]
