import math
from pathlib import Path

import pytest

from tsvfsim.circuit import Circuit, Mixer, evolve
from tsvfsim.dsl import load
from tsvfsim.scenarios import (
    CANONICAL,
    Expectation,
    Scenario,
    ScenarioError,
    canonical,
    conditional_probe,
    d5_state,
    ifm,
    nested_mzi,
    run_checks,
    shutter_probe,
    single_bs_split,
    three_box_cycle,
    verified,
)
from tsvfsim.state import StateVector, inner
from tsvfsim.tsvf import postselection_probability, projector_weak_values, two_state_at

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"
S2 = math.sqrt(1 / 2)


@pytest.mark.parametrize("name", list(CANONICAL))
def test_shipped_file_equals_constructor(name):
    assert load(SCENARIO_DIR / f"{name}.tsv") == canonical(name)


@pytest.mark.parametrize("name", list(CANONICAL))
def test_expectation_tables_pass(name):
    results = run_checks(canonical(name))
    assert results and all(r.passed for r in results)


def test_nested_has_seven_expectation_groups():
    assert len(run_checks(nested_mzi())) == 7


def test_broken_table_is_rejected():
    s = nested_mzi()
    bad = Scenario(s.name, s.circuit, s.labels, s.expected + (Expectation("oops", "weak", "B@4", 1),))
    with pytest.raises(ScenarioError, match="oops"):
        verified(bad)


def test_single_bs():
    s = single_bs_split()
    tr = evolve(s.circuit)
    assert postselection_probability(tr) == pytest.approx(0.5, abs=1e-12)
    wv = projector_weak_values(two_state_at(tr, 1))
    assert wv["A"].value + wv["B"].value == pytest.approx(1, abs=1e-12)


def test_balanced_mzi_pre_equals_post():
    # second mixer undoes the first, so pre = post = |A>
    rails = ("A", "B")
    a = StateVector.basis_state(rails, "A")
    c = Circuit(rails, [[Mixer("A", "B", S2)], [Mixer("B", "A", S2)]], a, a)
    tr = evolve(c)
    assert tr.forward[-1].allclose(a)
    wv = projector_weak_values(two_state_at(tr, 1))
    assert wv["A"].value == pytest.approx(0.5, abs=1e-12)
    assert wv["B"].value == pytest.approx(0.5, abs=1e-12)


def test_nested_labels_resolve():
    s = nested_mzi()
    assert s.resolve("B") == ("B", 4)
    assert s.resolve("t2") == (None, 4)
    assert s.resolve("F@6") == ("F", 6)
    assert s.resolve("3") == (None, 3)


def test_three_box_overlap_constant():
    tr = evolve(three_box_cycle().circuit)
    for k in range(4):
        assert two_state_at(tr, k).overlap == pytest.approx(1 / 3, abs=1e-12)


def test_blocking_f_changes_statistics():
    open_ = evolve(nested_mzi().circuit)
    blocked = evolve(nested_mzi(obstruct_f=True).circuit)
    # F carries no forward amplitude, so dropping it leaves |t4 * C|^2 = (1/3)^2
    without_f = (math.sqrt(1 / 3) * math.sqrt(1 / 3)) ** 2
    assert postselection_probability(blocked) == pytest.approx(without_f, abs=1e-12)
    # ...but the backward state no longer reaches the inner arms
    wv_open = projector_weak_values(two_state_at(open_, 4))
    wv_blocked = projector_weak_values(two_state_at(blocked, 4))
    assert wv_open["B"].value == pytest.approx(-1)
    assert wv_blocked["B"].value == pytest.approx(0, abs=1e-12)
    assert wv_blocked["A"].value == pytest.approx(0, abs=1e-12)
    assert wv_blocked["C"].value == pytest.approx(1, abs=1e-12)


def test_shutter_probe_state():
    s = shutter_probe()
    cond = conditional_probe(s.circuit)
    want = StateVector.from_mapping(cond.basis, {"p1T": 0.5, "p2R": 0.5, "p3R": 0.5, "p4T": 0.5})
    assert abs(inner(want, cond.normalized())) ** 2 >= 1 - 1e-9
    # unnormalized amplitudes carry the shutter's overlap 1/3
    assert cond.norm() == pytest.approx(1 / 3, abs=1e-12)


@pytest.mark.parametrize("alphas", [(0.1, 0.7, 0.5, math.sqrt(1 - 0.01 - 0.49 - 0.25)), (0.5j, -0.5, 0.5, 0.5)])
def test_shutter_probe_other_amplitudes(alphas):
    s = shutter_probe(alphas)
    cond = conditional_probe(s.circuit).normalized()
    assert abs(inner(d5_state(s), cond)) ** 2 == pytest.approx(1, abs=1e-9)


def test_shutter_reflection_amplitudes_are_weak_values():
    s = shutter_probe()
    tr = evolve(s.circuit)
    cond = conditional_probe(s.circuit)
    overlap = inner(s.circuit.postselect, tr.forward[-1])
    for k, (rail, sl) in enumerate([("E", 2), ("A", 5), ("C", 5), ("F", 8)], 1):
        wv = projector_weak_values(two_state_at(tr, sl))[rail].value
        assert cond[f"p{k}R"] / (overlap * 0.5) == pytest.approx(wv, abs=1e-12)


def test_ifm():
    s = ifm()
    tr = evolve(s.circuit)
    assert postselection_probability(tr) == pytest.approx(0.25, abs=1e-12)
    open_ = evolve(ifm(with_absorber=False).circuit)
    assert abs(open_.forward[-1]["U"]) ** 2 == pytest.approx(0, abs=1e-15)
