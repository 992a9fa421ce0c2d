import io
import math

import numpy as np
import pytest

from tsvfsim.circuit import evolve
from tsvfsim.pointer import (
    CSV_HEADER,
    Grid,
    PointerConfig,
    analytic_weak_limit,
    numeric_moments,
    sample_trials,
    strong_measure,
    weak_pointer_state,
    write_samples_csv,
)
from tsvfsim.scenarios import CANONICAL, canonical, nested_mzi, three_box_cycle
from tsvfsim.state import identity, projector_onto
from tsvfsim.tsvf import NullPostSelection, two_state_at

SIGMA = 1.0


def nested(rail):
    tr = evolve(nested_mzi().circuit)
    return two_state_at(tr, 4), projector_onto(rail, tr.circuit.rails)


def grid_oracle(ts, p, g, sigma=SIGMA, n=2**14):
    """Mean and variance by direct quadrature of the displaced-pointer superposition."""
    x = np.linspace(-8 * sigma + min(0, g), 8 * sigma + max(0, g), n)
    gauss = lambda y: (2 * math.pi * sigma**2) ** -0.25 * np.exp(-(y**2) / (4 * sigma**2))
    c1 = np.vdot(ts.bra.amps, p.matrix @ ts.ket.amps)
    c0 = np.vdot(ts.bra.amps, ts.ket.amps) - c1
    d = np.abs(c0 * gauss(x) + c1 * gauss(x - g)) ** 2
    norm = np.trapezoid(d, x)
    mean = np.trapezoid(x * d, x) / norm
    return norm, mean, np.trapezoid((x - mean) ** 2 * d, x) / norm


def test_arm_b_pulls():
    ts, p = nested("B")
    g = 0.01 * SIGMA
    out = weak_pointer_state(ts, p, PointerConfig(g, SIGMA))
    assert out.mean < 0
    assert abs(out.mean - (-g)) <= 1e-3 * g
    _, oracle_mean, _ = grid_oracle(ts, p, g)
    assert abs(out.mean - oracle_mean) <= 1e-8 * SIGMA


def test_arm_c_pushes():
    ts, p = nested("C")
    g = 0.01 * SIGMA
    out = weak_pointer_state(ts, p, PointerConfig(g, SIGMA))
    assert abs(out.mean - g) <= 1e-3 * g
    assert abs(out.mean - grid_oracle(ts, p, g)[1]) <= 1e-8 * SIGMA


def test_no_coupling():
    ts, p = nested("B")
    out = weak_pointer_state(ts, p, PointerConfig(0.0, 2.0))
    assert out.mean == 0
    assert out.variance == pytest.approx(4.0, abs=1e-12)
    assert out.success_probability == pytest.approx(1 / 9, abs=1e-12)


@pytest.mark.parametrize("g", [0.01, 0.1, 0.5, 1.0, 2.5])
@pytest.mark.parametrize("rail", ["A", "B", "C", "E"])
def test_closed_form_matches_grid_oracle(g, rail):
    ts, p = nested(rail)
    out = weak_pointer_state(ts, p, PointerConfig(g, SIGMA))
    norm, mean, var = grid_oracle(ts, p, g)
    assert abs(out.mean - mean) <= 1e-8 * SIGMA
    assert abs(out.variance - var) <= 1e-8 * SIGMA**2
    assert abs(out.success_probability - norm) <= 1e-10
    # the module's own quadrature agrees as well
    assert numeric_moments(out, PointerConfig(g, SIGMA).resolved_grid())[1] == pytest.approx(mean, abs=1e-12)


def test_negative_mean_for_all_couplings_up_to_sigma():
    ts, p = nested("B")
    for g in np.linspace(1e-4, 1.0, 200):
        assert weak_pointer_state(ts, p, PointerConfig(float(g), SIGMA)).mean < 0


def test_weak_limit():
    ts, p = nested("B")
    assert analytic_weak_limit(ts, p) == pytest.approx(-1, abs=1e-12)
    assert analytic_weak_limit(ts, identity(ts.ket.basis)) == pytest.approx(1, abs=1e-12)
    tr = evolve(three_box_cycle().circuit)
    assert analytic_weak_limit(two_state_at(tr, 1), projector_onto("A", tr.circuit.rails)) == pytest.approx(0, abs=1e-12)


def _canonical_cases():
    for name in CANONICAL:
        tr = evolve(canonical(name).circuit)
        for k in range(tr.n_slices + 1):
            try:
                ts = two_state_at(tr, k)
            except NullPostSelection:
                continue
            for r in tr.circuit.rails:
                yield name, ts, projector_onto(r, tr.circuit.rails)


def test_second_order_convergence_on_canonical_scenarios():
    checked = 0
    for name, ts, p in _canonical_cases():
        wv = analytic_weak_limit(ts, p)
        res = [abs(weak_pointer_state(ts, p, PointerConfig(g, SIGMA)).mean / g - wv) for g in (0.1, 0.05, 0.025)]
        if res[0] < 1e-12:
            assert max(res) < 1e-12
            continue
        assert res[0] / res[1] >= 3, (name, p.name, res)
        assert res[1] / res[2] >= 3, (name, p.name, res)
        checked += 1
    # the remaining cases have c0 = 0 or c1 = 0 and an exact pointer mean
    assert checked >= 8


def test_config_validation():
    with pytest.raises(ValueError):
        PointerConfig(0.1, 0.0)
    with pytest.raises(ValueError):
        PointerConfig(0.1, 1.0, Grid(-5, 5, 100))
    assert PointerConfig(0.1, 1.0).resolved_grid() == Grid(-8.0, 8.1, 2**14)


def test_monte_carlo_converges():
    ts, p = nested("B")
    cfg = PointerConfig(0.1, SIGMA)
    out = weak_pointer_state(ts, p, cfg)
    mc = sample_trials(ts, p, cfg, 100_000, seed=11)
    assert abs(mc.sample_mean - out.mean) <= 5 * mc.std_error
    assert mc.sample_mean < 0
    q = out.success_probability
    binom_se = math.sqrt(q * (1 - q) / mc.n_attempted)
    assert abs(mc.acceptance_rate - q) <= 5 * binom_se


def test_single_trial_reproducible():
    ts, p = nested("B")
    cfg = PointerConfig(0.1, SIGMA)
    runs = [sample_trials(ts, p, cfg, 1, seed=3).readings for _ in range(3)]
    assert all(np.array_equal(r, runs[0], equal_nan=True) for r in runs)


def test_independent_of_workers_and_chunking():
    ts, p = nested("A")
    cfg = PointerConfig(0.2, SIGMA)
    one = sample_trials(ts, p, cfg, 20_000, seed=5)
    four = sample_trials(ts, p, cfg, 20_000, seed=5, workers=4)
    assert np.array_equal(one.readings, four.readings, equal_nan=True)
    assert (one.sample_mean, one.std_error) == (four.sample_mean, four.std_error)
    # a prefix run reproduces the first trials exactly
    short = sample_trials(ts, p, cfg, 5000, seed=5)
    assert np.array_equal(short.readings, one.readings[:5000], equal_nan=True)


def test_sample_trials_rejects_zero():
    ts, p = nested("B")
    with pytest.raises(ValueError):
        sample_trials(ts, p, PointerConfig(0.1, SIGMA), 0, seed=1)


def test_samples_csv():
    ts, p = nested("B")
    mc = sample_trials(ts, p, PointerConfig(0.1, SIGMA), 50, seed=2)
    buf = io.StringIO()
    write_samples_csv(mc, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) == "trial,reading,postselected"
    assert len(lines) == 51
    kept = [l for l in lines[1:] if l.endswith(",1")]
    assert len(kept) == mc.n_postselected


def test_strong_measure_nested():
    tr = evolve(nested_mzi().circuit)
    rails = tr.circuit.rails
    assert strong_measure(tr, 4, projector_onto("A", rails)).p_found_given_post == pytest.approx(1, abs=1e-12)
    assert strong_measure(tr, 4, projector_onto("B", rails)).p_found_given_post == pytest.approx(0.2, abs=1e-12)
    assert strong_measure(tr, 4, identity(rails)).p_found_given_post == pytest.approx(1, abs=1e-12)
    sm = strong_measure(tr, 4, projector_onto("A", rails))
    # by hand: P(A) = 1/3, |<phi|A>|^2 / P(A) = 1/3, and (B + C) interferes to zero at D3
    assert sm.p_found == pytest.approx(1 / 3, abs=1e-12)
    assert sm.p_post_given_found == pytest.approx(1 / 3, abs=1e-12)
    assert sm.p_post_given_not_found == pytest.approx(0, abs=1e-12)
