"""Shared store for the one-line acceptance verdicts printed after the session."""
LINES: dict = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    LINES[number] = f"AC{number:02d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
