"""One PASS/FAIL line per acceptance criterion, echoed at the end of the run."""

LINES = []


def verdict(number, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number} {name}: {detail}"
    LINES.append(line)
    print(line)
    return ok
