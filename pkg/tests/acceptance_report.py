"""Collects one line per acceptance criterion for the terminal summary."""

RESULTS: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> bool:
    RESULTS[criterion] = (bool(passed), detail)
    return bool(passed)


def _order(key: str):
    head = key.rstrip("*")
    return (int(head) if head.isdigit() else 99, key)


def lines():
    for key in sorted(RESULTS, key=_order):
        passed, detail = RESULTS[key]
        yield f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}"
