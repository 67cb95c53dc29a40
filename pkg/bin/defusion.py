#!/usr/bin/env python3
"""`defusion <command>`: loads bin/defusion_cli.py in-process and runs it."""
import importlib.util
import sys
from pathlib import Path

CLI_PATH = Path(__file__).resolve().with_name("defusion_cli.py")


def _load_cli():
    if not CLI_PATH.is_file():
        raise SystemExit(f"defusion: CLI module not found at {CLI_PATH}")
    spec = importlib.util.spec_from_file_location("defusion_cli", str(CLI_PATH))
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


if __name__ == "__main__":
    sys.exit(_load_cli().main(sys.argv[1:]))
