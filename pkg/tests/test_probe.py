import numpy as np
import pytest

from riesz_condenser.solver import ProbeTemplate, ball_ratio_multiple, short_circuit_probe
from riesz_condenser.solver.probe import ProbeLevel, ProbeReport, evaluate_checks

LEVELS = [6, 8]


def fake_report(objectives, fractions, upper, constrained=False):
    levels = [ProbeLevel(6 + 2 * i, 2.0 / (6 + 2 * i), (10, 10), obj, (fr, fr), ua, "optimal", 0.0)
              for i, (obj, fr, ua) in enumerate(zip(objectives, fractions, upper))]
    return ProbeReport(levels, 0.5, constrained)


def test_checks_unconstrained_contract():
    good = evaluate_checks(fake_report([1.0, 0.9, 0.85], [0.5, 0.6, 0.6], [0, 0, 0]))
    assert good["objective_strictly_decreasing"] and good["contract"]
    flat = evaluate_checks(fake_report([1.0, 1.0, 0.9], [0.5, 0.6, 0.7], [0, 0, 0]))
    assert flat["objective_nonincreasing"] and not flat["contract"]
    up = evaluate_checks(fake_report([1.0, 1.1, 0.9], [0.5, 0.6, 0.7], [0, 0, 0]))
    assert not up["objective_nonincreasing"]
    drop = evaluate_checks(fake_report([1.0, 0.9, 0.8], [0.6, 0.5, 0.7], [0, 0, 0]))
    assert not drop["near_fraction_nondecreasing"] and not drop["contract"]


def test_checks_constrained_contract():
    good = evaluate_checks(fake_report([1.0, 1.2, 1.25], [0.5] * 3, [3, 5, 9], constrained=True))
    assert good["differences_decreasing"] and good["contract"]
    empty = evaluate_checks(fake_report([1.0, 1.2, 1.25], [0.5] * 3, [3, 0, 9], constrained=True))
    assert not empty["contract"]
    wobble = evaluate_checks(fake_report([1.0, 1.1, 1.3], [0.5] * 3, [1, 1, 1], constrained=True))
    assert not wobble["differences_decreasing"]


def test_template_geometry_excludes_pole():
    t = ProbeTemplate()
    geom = t.geometry(8)
    for c in geom.plates:
        d = np.linalg.norm(c.points - geom.touch_point, axis=1)
        assert d.min() >= 0.25
    assert t.kernel_for(0.25).mode == "exact"
    reg = ProbeTemplate(mode="regularized", eps_cells=0.5)
    assert reg.kernel_for(0.25).eps == pytest.approx(0.125)


def test_ratio_multiple_matches_ball_volume():
    c = ball_ratio_multiple((1.0, 2.0))
    assert c[1] == pytest.approx(2 * c[0])
    assert c[0] * 4.0 / 3.0 * np.pi == pytest.approx(2.0)


def test_unconstrained_probe_runs_and_concentrates():
    rep = short_circuit_probe(LEVELS, ProbeTemplate())
    assert not rep.constrained
    assert [lv.level for lv in rep.levels] == LEVELS
    assert rep.rho == pytest.approx(5 * 2.0 / 6)
    assert all(lv.status == "optimal" for lv in rep.levels)
    assert all(lv.upper_active_near == 0 for lv in rep.levels)
    for lv in rep.levels:
        # the rho-ball holds a small share of each plate's volume but most of the charge
        assert min(lv.near_fraction) > 0.5
        assert lv.near_fraction[0] == pytest.approx(lv.near_fraction[1], rel=1e-12)
    assert set(rep.checks) >= {"contract", "objective_strictly_decreasing"}
    assert len(list(rep.rows())) == len(LEVELS)


def test_constrained_probe_saturates_near_pole():
    t = ProbeTemplate(sigma_multiple=ball_ratio_multiple((1.0, 1.0)))
    rep = short_circuit_probe(LEVELS, t)
    assert rep.constrained
    assert all(lv.status == "optimal" for lv in rep.levels)
    assert rep.checks["upper_active_near_nonempty"]
    free = short_circuit_probe(LEVELS, t, constrained=False)
    # the constraint can only raise the minimum
    for a, b in zip(rep.objectives, free.objectives):
        assert a >= b - 1e-12


def test_constrained_probe_needs_sigma():
    with pytest.raises(ValueError):
        short_circuit_probe(LEVELS, ProbeTemplate(), constrained=True)
    with pytest.raises(ValueError):
        short_circuit_probe([], ProbeTemplate())


def test_separated_control_stays_above_touching():
    from riesz_condenser.geometry import separated_balls
    from riesz_condenser.kernel import KernelSpec
    from riesz_condenser.measure import ProblemData
    from riesz_condenser.solver import solve_unconstrained

    touching = short_circuit_probe(LEVELS, ProbeTemplate())
    sep = [solve_unconstrained(ProblemData(separated_balls(L, 0.5), KernelSpec(2.0, 3),
                                           (1.0, 1.0), (1.0, 1.0))) for L in LEVELS]
    assert all(r.status == "optimal" for r in sep)
    # the grid constant makes the control wobble by a few percent between levels
    objs = [r.objective for r in sep]
    assert max(objs) / min(objs) < 1.1
    for t, s in zip(touching.objectives, objs):
        assert t < s
