"""Collects one verdict line per acceptance criterion for the terminal summary."""

_RESULTS: dict[int, str] = {}


def record(number: int, passed: bool | None, detail: str) -> str:
    verdict = {True: "PASS", False: "FAIL", None: "N/A "}[passed]
    line = f"criterion {number}: {verdict}  {detail}"
    _RESULTS[number] = line
    print(line)
    return line


def lines() -> list[str]:
    return [_RESULTS[k] for k in sorted(_RESULTS)]
