"""Collects one result line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def report(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    print(line)
    LINES.append(line)
    assert ok, line
