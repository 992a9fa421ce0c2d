import math

import pytest
from hypothesis import given, settings, strategies as st

from tsvfsim.circuit import Router, validate
from tsvfsim.dsl import ERROR_KINDS, ParseFailure, fmt_amp, fmt_real, parse, parse_amp, parse_real, serialize
from tsvfsim.scenarios import CANONICAL, Scenario, canonical

import fuzz
from conftest import random_circuit

SELECT = "preselect A=1\npostselect A=1\n"


def errors_of(text):
    with pytest.raises(ParseFailure) as info:
        parse(text)
    return info.value.errors


def assert_spans_name_tokens(errors):
    for e in errors:
        assert e.kind in ERROR_KINDS
        if e.kind != "missing-section":
            assert e.span.token
            assert e.span.token in e.message


@pytest.mark.parametrize("name", list(CANONICAL))
def test_round_trip_canonical(name):
    s = canonical(name)
    text = serialize(s)
    assert parse(text) == s
    assert serialize(parse(text)) == text


@pytest.mark.parametrize("name", list(CANONICAL))
def test_amplitudes_bit_equal(name):
    s = canonical(name)
    back = parse(serialize(s)).circuit
    assert back.preselect.amps.tobytes() == s.circuit.preselect.amps.tobytes()
    assert back.postselect.amps.tobytes() == s.circuit.postselect.amps.tobytes()
    assert [e for st_ in back.steps for e in st_] == [e for st_ in s.circuit.steps for e in st_]


def test_round_trip_random_circuits(rng):
    for _ in range(300):
        c = random_circuit(rng, n_rails=int(rng.integers(1, 9)), n_steps=int(rng.integers(0, 11)), allow_absorb=True)
        s = Scenario("random", c, (), ())
        assert parse(serialize(s)) == s


@settings(max_examples=300, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False), st.floats(allow_nan=False, allow_infinity=False))
def test_amplitude_formatting_is_lossless(re_, im):
    z = complex(re_, im)
    back = parse_amp(fmt_amp(z))
    assert (back.real, back.imag) == (z.real, z.imag)
    assert math.copysign(1, back.real) == math.copysign(1, z.real)


def test_number_sugar():
    assert parse_real("sqrt(1/3)") == math.sqrt(1 / 3)
    assert parse_real("-sqrt(2)") == -math.sqrt(2)
    assert parse_real("1/4") == 0.25
    assert parse_amp("0.5-0.5i") == complex(0.5, -0.5)
    assert parse_amp("-1i") == -1j
    for bad in ("1/0", "sqrt(1/0)", "1e999", "nan", "", "sqrt(-1)", "0x10"):
        with pytest.raises(ValueError):
            parse_real(bad)
    assert fmt_real(0.1) == "0.10000000000000001"


def test_minimal_circuit_validates():
    s = parse("rails A B\nstep 1: bs A B t=0.7071\n" + SELECT)
    assert s.circuit.rails == ("A", "B")
    # 0.7071 is close enough to a balanced mixer; t only needs to lie in [0, 1]
    assert validate(s.circuit) == []


def test_comments_crlf_bom_and_bytes():
    text = "# header\r\nrails A B   # trailing\r\nstep 1: swap A B\r\n" + SELECT.replace("\n", "\r\n")
    a = parse(text)
    b = parse(("﻿" + text).encode())
    c = parse(text.replace("\r\n", "\n"))
    assert a == b == c
    assert "\r" not in serialize(a)


def test_duplicate_rail_in_mixer():
    errs = errors_of("rails A B\nstep 1: bs A A t=0.5\n" + SELECT)
    assert [e.kind for e in errs] == ["duplicate"]
    assert errs[0].span.line == 2
    assert errs[0].span.token == "A"
    assert_spans_name_tokens(errs)


def test_non_normalized_mixer():
    errs = errors_of("rails A B\nstep 1: bs A B t=1.2\n" + SELECT)
    assert [e.kind for e in errs] == ["non-normalized"]
    assert errs[0].span.token == "t=1.2"
    assert_spans_name_tokens(errs)


def test_non_normalized_selection():
    errs = errors_of("rails A B\npreselect A=1 B=1\npostselect A=1\n")
    assert [e.kind for e in errs] == ["non-normalized"]
    assert errs[0].span.line == 2


def test_unknown_keyword_and_rail_collected_together():
    errs = errors_of("rails A B\nfrobnicate 3\nstep 1: swap A Q\nstep 2: phase Z 0.1\n" + SELECT)
    kinds = sorted(e.kind for e in errs)
    assert kinds == ["unknown-keyword", "unknown-rail", "unknown-rail"]
    assert {e.span.token for e in errs} == {"frobnicate", "Q", "Z"}
    assert_spans_name_tokens(errs)


def test_arity():
    errs = errors_of("rails A B\nstep 1: swap A\n" + SELECT)
    assert [e.kind for e in errs] == ["arity"]


def test_duplicate_directive_and_rail():
    errs = errors_of("rails A B A\nrails C\n" + SELECT)
    assert sorted(e.kind for e in errs) == ["duplicate", "duplicate"]
    assert_spans_name_tokens(errs)


@pytest.mark.parametrize("text", ["", "\n\n", "# only a comment\n", b"", b"\xff\xfe"])
def test_empty_input_is_missing_section(text):
    errs = errors_of(text)
    assert "missing-section" in {e.kind for e in errs}


def test_missing_selection():
    errs = errors_of("rails A B\n")
    assert sorted(e.message for e in errs) == ["no 'postselect' directive", "no 'preselect' directive"]


def test_router_requires_probe():
    errs = errors_of("rails A B\nstep 1: route A probe=1 at=1\n" + SELECT)
    assert errs[0].kind == "missing-section"
    s = parse("rails A B\nprobe branches 1 amps 1\nstep 1: route A probe=1 at=1\n" + SELECT)
    assert tuple(s.circuit.steps[0]) == (Router("A", 1, 1),)


def test_spans_point_at_their_lines():
    text = "rails A B\n\n# gap\nstep 1: bs A C t=0.5\nstep 2: bs A B t=7\nbogus\n" + SELECT
    lines = text.split("\n")
    for e in errors_of(text):
        assert lines[e.span.line - 1] == e.span.text
        assert e.span.token in e.span.text


def test_label_without_rail():
    s = parse("rails A\nlabel t1 = @0\nlabel x = A@0\n" + SELECT)
    assert s.resolve("t1") == (None, 0)
    assert s.resolve("x") == ("A", 0)


def test_fuzz_smoke():
    counts = fuzz.run(20_000, seed=99)
    assert counts["rejected"] > 0
    assert sum(counts.values()) == 20_000


@settings(max_examples=500, deadline=None)
@given(st.text(alphabet=st.sampled_from(list("railspbqt=0123456789.@:/()#-+i ABCDEF\n\r\t")), max_size=120))
def test_parse_never_crashes_on_text(text):
    try:
        s = parse(text)
    except ParseFailure as e:
        assert_spans_ok(e.errors, text)
    else:
        assert isinstance(s, Scenario)


def assert_spans_ok(errors, text):
    assert errors
    for e in errors:
        assert 0 <= e.span.col_start <= e.span.col_end <= len(e.span.text)
        assert e.span.line >= 1
