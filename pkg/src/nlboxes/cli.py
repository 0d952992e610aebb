"""Command-line driver (stub, filled in after the core modules)."""


def main(argv=None) -> int:
    raise SystemExit("not yet implemented")
