import pytest

_RESULTS: dict = {}
TITLES = {
    1: "metric self-consistency of reference score triples",
    2: "oracle end-to-end on subset M",
    3: "canonical vs 4D-centroid target geometry",
    4: "analytic gradients vs finite differences",
    5: "Lovasz-Softmax vs exhaustive binary IoU",
    6: "FPS vs exhaustive greedy oracle",
    7: "trajectory and kinematics unit examples",
    8: "desk-scale learning smoke test",
    9: "determinism of end-to-end runs",
}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    entry = _RESULTS.setdefault(mark.args[0], {"ok": True, "detail": []})
    if not rep.passed:
        entry["ok"] = False
        entry["detail"].append(f"{item.name} {rep.when} {rep.outcome}")
    elif rep.when == "call":
        entry["detail"].extend(getattr(item, "criterion_notes", []))


@pytest.fixture
def note(request):
    """Attach a measured value to the criterion summary line."""
    request.node.criterion_notes = []
    return request.node.criterion_notes.append


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        r = _RESULTS[n]
        status = "PASS" if r["ok"] else "FAIL"
        extra = "; ".join(r["detail"])
        terminalreporter.write_line(f"CRITERION {n}: {status}  {TITLES.get(n, '')}" + (f"  [{extra}]" if extra else ""))
