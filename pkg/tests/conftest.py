import numpy as np
import pytest

from tetcorr import box_mesh, init_from_landmarks
from tetcorr.synthetic import corner_vertex_ids

# Registry of acceptance-criterion outcomes, printed after the run so each
# criterion gets exactly one visible pass/fail line even under output capture.
ACCEPTANCE_RESULTS = {}


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} [{status}] {title}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)


def vertex_landmark(mesh, v):
    """Express vertex v as a ('tet', id, bary4) landmark reference."""
    offsets, incident = mesh.vertex_tets
    tid = int(incident[offsets[v]])
    w = np.zeros(4)
    w[np.nonzero(mesh.tets[tid] == v)[0][0]] = 1.0
    return ("tet", tid, w)


def corner_landmark_pairs(m1, m2, corner_source):
    """Eight corner landmarks for two meshes sharing box connectivity."""
    corners = corner_vertex_ids(corner_source)
    return [
        (vertex_landmark(m1, int(v)), vertex_landmark(m2, int(v)))
        for v in corners
    ]


@pytest.fixture(scope="session")
def small_pair():
    """Two unit-volume boxes of identical connectivity, ~160 tets each."""
    m1 = box_mesh(3, 3, 3, size=(1.0, 1.0, 1.0)).normalized()
    m2 = box_mesh(3, 3, 3, size=(1.15, 0.92, 1.0)).normalized()
    return m1, m2


@pytest.fixture(scope="session")
def desk_pair_solved():
    """Straight-vs-bent box pair (~2k tets each) solved with defaults.

    Shared by the nonrigid-quality, order-invariance and monotonicity
    checks; returns (m1, m2, init, pair, report, wall_seconds).
    """
    import time

    from tetcorr import SolverConfig, bent_box_mesh, solve

    base = box_mesh(10, 6, 6, size=(2.0, 0.8, 0.8))
    m1 = base.normalized()
    m2 = bent_box_mesh(10, 6, 6, size=(2.0, 0.8, 0.8), angle=1.0).normalized()
    init = init_from_landmarks(m1, m2, corner_landmark_pairs(m1, m2, base))
    t0 = time.perf_counter()
    pair, report = solve(m1, m2, init, SolverConfig())
    elapsed = time.perf_counter() - t0
    return m1, m2, init, pair, report, elapsed
