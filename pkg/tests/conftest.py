CRITERIA = {
    1: "communication cost: 2 messages, 544 + 512 = 1056 bits per MAKE",
    2: "computation cost: 2 PUF + 9 hash (D2D), 2 PUF + 7 hash (D2G) per party",
    3: "storage accounting: D2D 864 / 608 bits",
    4: "mutual authentication and key agreement over 1000 sessions",
    5: "attack battery: replay, single-bit MITM, impersonation",
    6: "forward secrecy after capture at session 10",
    7: "no repeated one-time pad over 1000 sessions",
    8: "DoS cost bound at the RFFI gate and the credential check",
    9: "PUF uniqueness and reliability",
    10: "RFFI rogue detection AUC and false rejection",
    11: "determinism across process invocations",
}

_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        _outcomes.setdefault(marker.args[0], []).append(call.excinfo is None)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        res = _outcomes.get(n)
        status = "NOT RUN" if res is None else ("PASS" if all(res) else "FAIL")
        tr.write_line(f"criterion {n:>2}: {status:<7} {title}")
