import math

import pytest

from feeddrive.motion import plan, reciprocate
from feeddrive.plant import MechanicalParams

K = 612.0
JL_KGCM2 = 45.5
B = 0.0288
R = 10.0 / (2.0 * math.pi)


def axis(torque=28.75, rotor_kgcm2=25.5, load_kgcm2=JL_KGCM2, damping=B):
    return MechanicalParams.from_catalog(screw_stiffness=K, load_inertia_kgcm2=load_kgcm2,
                                         damping=damping, drive_coeff=R, max_torque=torque,
                                         rotor_inertia_kgcm2=rotor_kgcm2)


@pytest.fixture
def motor1():
    return axis(71.1, 88.9)


@pytest.fixture
def motor3():
    return axis(28.75, 25.5)


@pytest.fixture(scope="session")
def short_traj():
    # 20 mm stroke keeps closed-loop runs around 0.1 s
    return reciprocate(plan(20.0, 100.0, 2000.0), cycles=1, dwell=0.02, dt=1e-4)


_CRITERIA = {}


def pytest_runtest_logreport(report):
    marker = dict(report.user_properties).get("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker
    detail = dict(report.user_properties).get("detail", "")
    verdict = "PASS" if report.passed else "FAIL"
    if report.skipped:
        verdict = "SKIP"
    if number not in _CRITERIA or verdict != "PASS":
        _CRITERIA[number] = (title, verdict, detail)


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", tuple(marker.args)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict, detail = _CRITERIA[number]
        line = f"criterion {number:2d} {verdict}  {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
