"""Line-oriented netlist format for scenarios (``.tsv`` files).

One directive per line; ``#`` starts a comment::

    name nested_mzi
    rails S C E A B F D1 D2 D3
    probe branches 4 amps 0.5 0.5 0.5 0.5
    steps 8
    step 1: bs C S t=sqrt(2/3)
    step 2: swap S E
    step 3: phase A 3.14159
    step 4: absorb F
    step 5: route A probe=2 at=2
    preselect S=1
    postselect D3=1
    detector D3 D3
    label B = B@4
    label t2 = @4
    expect inner_arm_weak_values weak B@4 -1 from=reported

Numbers are decimals, ``p/q`` fractions or ``sqrt(p/q)``, optionally
signed; complex amplitudes are written ``re+imi`` (``0.5-0.25i``).
``parse`` collects every error it finds before giving up.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

from .circuit import Absorber, Circuit, Mixer, Phase, Router, Swap, probe_rails
from .scenarios import KINDS, SOURCES, Expectation, Label, Scenario
from .state import ATOL, StateVector

ERROR_KINDS = ("unknown-keyword", "unknown-rail", "arity", "non-normalized", "duplicate", "missing-section", "bad-value")

_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_UREAL = rf"(?:sqrt\({_NUM}(?:/{_NUM})?\)|{_NUM}/{_NUM}|{_NUM})"
_REAL_RE = re.compile(rf"([+-]?)({_UREAL})")
_AMP_RE = re.compile(rf"(?P<re>[+-]?{_UREAL})(?:(?P<im>[+-]{_UREAL})i)?|(?P<imonly>[+-]?{_UREAL})i")
_NAME_RE = re.compile(r"[A-Za-z_][\w.\-']*")
_INT_RE = re.compile(r"\d{1,6}")

MAX_STEPS = 100_000
MAX_BRANCHES = 1024


@dataclass(frozen=True)
class SourceSpan:
    line: int  # 1-based
    col_start: int
    col_end: int
    text: str  # the full source line

    @property
    def token(self) -> str:
        return self.text[self.col_start:self.col_end]


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    kind: str
    message: str

    def __str__(self):
        return f"line {self.span.line}:{self.span.col_start + 1}: {self.kind}: {self.message}"


class ParseFailure(ValueError):
    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        super().__init__("\n".join(str(e) for e in errors))


@dataclass(frozen=True)
class _Tok:
    text: str
    span: SourceSpan


def parse_real(s: str) -> float:
    m = _REAL_RE.fullmatch(s)
    if not m:
        raise ValueError(s)
    sign, body = m.groups()
    sqrt = body.startswith("sqrt(")
    p, _, q = (body[5:-1] if sqrt else body).partition("/")
    if q and float(q) == 0:
        raise ValueError(s)
    v = float(p) / float(q) if q else float(p)
    if sqrt:
        v = math.sqrt(v)
    if not math.isfinite(v):
        raise ValueError(s)
    return -v if sign == "-" else v


def parse_amp(s: str) -> complex:
    m = _AMP_RE.fullmatch(s)
    if not m:
        raise ValueError(s)
    if m.group("imonly"):
        return complex(0.0, parse_real(m.group("imonly")))
    re_ = parse_real(m.group("re"))
    im = parse_real(m.group("im")) if m.group("im") else 0.0
    return complex(re_, im)


def fmt_real(x: float) -> str:
    return format(float(x), ".17g")


def fmt_amp(z: complex) -> str:
    z = complex(z)
    s = fmt_real(z.real)
    if z.imag != 0 or math.copysign(1.0, z.imag) < 0:
        s += ("-" if math.copysign(1.0, z.imag) < 0 else "+") + fmt_real(abs(z.imag)) + "i"
    return s


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.errors: list[ParseError] = []
        self.name: Optional[str] = None
        self.rails: Optional[list[_Tok]] = None
        self.n_steps: Optional[int] = None
        self.steps: dict[int, list[tuple[object, list[_Tok]]]] = {}
        self.pre: Optional[list[tuple[_Tok, complex]]] = None
        self.post: Optional[list[tuple[_Tok, complex]]] = None
        self.detectors: dict[str, _Tok] = {}
        self.labels: dict[str, tuple[Optional[_Tok], int]] = {}
        self.probe: Optional[tuple[list[complex], _Tok]] = None
        self.expects: list[tuple[Expectation, list[_Tok]]] = []
        self.seen: dict[str, _Tok] = {}
        self.last_line = SourceSpan(1, 0, 0, "")

    def err(self, tok: _Tok, kind: str, message: str):
        self.errors.append(ParseError(tok.span, kind, message))

    # -- value helpers --------------------------------------------------
    def real(self, tok: _Tok, text: Optional[str] = None) -> Optional[float]:
        try:
            return parse_real(tok.text if text is None else text)
        except ValueError:
            self.err(tok, "bad-value", f"malformed number {tok.text!r}")
            return None

    def amp(self, tok: _Tok, text: str) -> Optional[complex]:
        try:
            return parse_amp(text)
        except ValueError:
            self.err(tok, "bad-value", f"malformed amplitude {tok.text!r}")
            return None

    def integer(self, tok: _Tok, text: Optional[str] = None, lo: int = 0, hi: int = MAX_STEPS) -> Optional[int]:
        text = tok.text if text is None else text
        if not _INT_RE.fullmatch(text) or not lo <= int(text) <= hi:
            self.err(tok, "bad-value", f"expected an integer in [{lo}, {hi}], got {tok.text!r}")
            return None
        return int(text)

    def name_tok(self, tok: _Tok, what: str) -> bool:
        if not _NAME_RE.fullmatch(tok.text):
            self.err(tok, "bad-value", f"invalid {what} {tok.text!r}")
            return False
        return True

    def keyval(self, tok: _Tok, key: str) -> Optional[str]:
        if not tok.text.startswith(key + "="):
            self.err(tok, "arity", f"expected {key}=..., got {tok.text!r}")
            return None
        return tok.text[len(key) + 1:]

    def once(self, key: str, tok: _Tok) -> bool:
        if key in self.seen:
            self.err(tok, "duplicate", f"second {tok.text!r} directive (first on line {self.seen[key].span.line})")
            return False
        self.seen[key] = tok
        return True

    # -- directives -----------------------------------------------------
    def run(self):
        for lineno, raw in enumerate(self.text.split("\n"), 1):
            line = raw[:-1] if raw.endswith("\r") else raw
            code = line.split("#", 1)[0]
            toks = [_Tok(m.group(), SourceSpan(lineno, m.start(), m.end(), line)) for m in re.finditer(r"\S+", code)]
            if not toks:
                continue
            self.last_line = SourceSpan(lineno, 0, len(line), line)
            handler = getattr(self, "d_" + toks[0].text, None) if toks[0].text.isidentifier() else None
            if handler is None:
                self.err(toks[0], "unknown-keyword", f"unknown directive {toks[0].text!r}")
                continue
            handler(toks[0], toks[1:])

    def d_name(self, kw, args):
        if len(args) != 1:
            return self.err(kw, "arity", f"{kw.text!r} takes one argument")
        if self.once("name", kw) and self.name_tok(args[0], "scenario name"):
            self.name = args[0].text

    def d_rails(self, kw, args):
        if not args:
            return self.err(kw, "arity", f"{kw.text!r} needs at least one rail label")
        if not self.once("rails", kw):
            return
        seen = set()
        rails = []
        for t in args:
            if not self.name_tok(t, "rail label"):
                continue
            if t.text in seen:
                self.err(t, "duplicate", f"rail {t.text!r} declared twice")
                continue
            seen.add(t.text)
            rails.append(t)
        self.rails = rails

    def d_steps(self, kw, args):
        if len(args) != 1:
            return self.err(kw, "arity", f"{kw.text!r} takes one argument")
        if self.once("steps", kw):
            self.n_steps = self.integer(args[0])

    def d_probe(self, kw, args):
        if len(args) < 4 or args[0].text != "branches" or args[2].text != "amps":
            return self.err(kw, "arity", "expected 'probe branches <k> amps <a1..ak>'")
        if not self.once("probe", kw):
            return
        k = self.integer(args[1], lo=1, hi=MAX_BRANCHES)
        amps = [self.amp(t, t.text) for t in args[3:]]
        if k is None or None in amps:
            return
        if len(amps) != k:
            return self.err(args[1], "arity", f"probe declares {args[1].text!r} branches but lists {len(amps)} amplitudes")
        n2 = sum(abs(a) ** 2 for a in amps)
        if abs(n2 - 1) > ATOL:
            return self.err(args[3], "non-normalized", f"probe amplitudes starting {args[3].text!r} have norm^2 {n2:.17g}")
        self.probe = (amps, kw)

    def d_step(self, kw, args):
        if len(args) < 2 or not args[0].text.endswith(":"):
            return self.err(kw, "arity", "expected 'step <n>: <element> ...'")
        n = self.integer(args[0], args[0].text[:-1], lo=1)
        el, rest = args[1], args[2:]
        handler = getattr(self, "e_" + el.text, None) if el.text.isidentifier() else None
        if handler is None:
            return self.err(el, "unknown-keyword", f"unknown element {el.text!r}")
        built = handler(el, rest)
        if n is not None and built is not None:
            self.steps.setdefault(n, []).append(built)

    def _arity(self, el, rest, lo, hi=None):
        hi = lo if hi is None else hi
        if not lo <= len(rest) <= hi:
            self.err(el, "arity", f"{el.text!r} takes {lo if lo == hi else f'{lo}-{hi}'} arguments, got {len(rest)}")
            return False
        return True

    def _distinct(self, a: _Tok, b: _Tok) -> bool:
        if a.text == b.text:
            self.err(b, "duplicate", f"rail {b.text!r} used twice by one element")
            return False
        return True

    def e_bs(self, el, rest):
        if not self._arity(el, rest, 3, 4):
            return None
        a, b = rest[0], rest[1]
        t_s = self.keyval(rest[2], "t")
        phase = 0.0
        if len(rest) == 4:
            ph_s = self.keyval(rest[3], "phase")
            phase = None if ph_s is None else self.real(rest[3], ph_s)
        t = None if t_s is None else self.real(rest[2], t_s)
        if t is not None and not 0.0 <= t <= 1.0:
            self.err(rest[2], "non-normalized", f"mixer transmission {rest[2].text!r} outside [0, 1]")
            t = None
        if t is None or phase is None or not self._distinct(a, b):
            return None
        return Mixer(a.text, b.text, t, phase), [a, b]

    def e_phase(self, el, rest):
        if not self._arity(el, rest, 2):
            return None
        angle = self.real(rest[1])
        return None if angle is None else (Phase(rest[0].text, angle), [rest[0]])

    def e_swap(self, el, rest):
        if not self._arity(el, rest, 2) or not self._distinct(rest[0], rest[1]):
            return None
        return Swap(rest[0].text, rest[1].text), [rest[0], rest[1]]

    def e_absorb(self, el, rest):
        if not self._arity(el, rest, 1):
            return None
        return Absorber(rest[0].text), [rest[0]]

    def e_route(self, el, rest):
        if not self._arity(el, rest, 3):
            return None
        b_s, at_s = self.keyval(rest[1], "probe"), self.keyval(rest[2], "at")
        branch = None if b_s is None else self.integer(rest[1], b_s, lo=1, hi=MAX_BRANCHES)
        at = None if at_s is None else self.integer(rest[2], at_s)
        if branch is None or at is None:
            return None
        return Router(rest[0].text, branch, at), [rest[0], rest[1]]

    def _selection(self, kw, args):
        if not args:
            self.err(kw, "arity", f"{kw.text!r} needs at least one <rail>=<amplitude>")
            return None
        out, seen = [], set()
        for t in args:
            rail, eq, val = t.text.partition("=")
            if not eq:
                self.err(t, "arity", f"expected <rail>=<amplitude>, got {t.text!r}")
                continue
            if rail in seen:
                self.err(t, "duplicate", f"rail {rail!r} given twice in {t.text!r}")
                continue
            seen.add(rail)
            a = self.amp(t, val)
            if a is not None:
                out.append((t, a))
        return out

    def d_preselect(self, kw, args):
        if self.once("preselect", kw):
            self.pre = self._selection(kw, args)

    def d_postselect(self, kw, args):
        if self.once("postselect", kw):
            self.post = self._selection(kw, args)

    def d_detector(self, kw, args):
        if len(args) != 2:
            return self.err(kw, "arity", "expected 'detector <name> <rail>'")
        name, rail = args
        if not self.name_tok(name, "detector name"):
            return
        if name.text in self.detectors:
            return self.err(name, "duplicate", f"detector {name.text!r} declared twice")
        self.detectors[name.text] = rail

    def d_label(self, kw, args):
        if len(args) != 3 or args[1].text != "=" or "@" not in args[2].text:
            return self.err(kw, "arity", "expected 'label <symbol> = <rail>@<slice>'")
        sym, _, ref = args
        if not self.name_tok(sym, "label symbol"):
            return
        if sym.text in self.labels:
            return self.err(sym, "duplicate", f"label {sym.text!r} defined twice")
        rail, _, s = ref.text.rpartition("@")
        k = self.integer(ref, s)
        if k is None:
            return
        self.labels[sym.text] = (ref if rail else None, k)

    def d_expect(self, kw, args):
        if len(args) < 3:
            return self.err(kw, "arity", "expected 'expect <group> <kind> [target] <value...> [from=<source>]'")
        group, kind = args[0], args[1]
        if not self.name_tok(group, "expectation group"):
            return
        if kind.text not in KINDS:
            return self.err(kind, "unknown-keyword", f"unknown expectation kind {kind.text!r}")
        rest = list(args[2:])
        source = "derived"
        if rest and rest[-1].text.startswith("from="):
            source = rest[-1].text[5:]
            if source not in SOURCES:
                return self.err(rest[-1], "bad-value", f"unknown source {rest[-1].text!r}")
            rest.pop()
        ttype, vtype = KINDS[kind.text]
        target, refs = "", []
        if ttype is not None:
            if not rest:
                return self.err(kind, "arity", f"{kind.text!r} needs a target")
            tt = rest.pop(0)
            target = tt.text
            if ttype == "slice" and self.integer(tt) is None:
                return
            if ttype in ("railslice",):
                rail, at, s = tt.text.rpartition("@")
                if not at or not rail or self.integer(tt, s) is None:
                    return self.err(tt, "bad-value", f"expected <rail>@<n>, got {tt.text!r}")
                refs.append(_Tok(rail, tt.span))
            if ttype == "branch" and self.integer(tt, lo=1, hi=MAX_BRANCHES) is None:
                return
            if ttype == "detector":
                refs.append(_Tok("detector:" + tt.text, tt.span))
        if vtype == "scalar":
            if len(rest) != 1:
                return self.err(kind, "arity", f"{kind.text!r} takes exactly one value")
            v = self.amp(rest[0], rest[0].text)
            if v is None:
                return
            value: Union[complex, tuple] = v
        else:
            sel = self._selection(kind, rest)
            if sel is None or len(sel) != len(rest):
                return
            value = tuple((t.text.partition("=")[0], a) for t, a in sel)
            prefix = "probe:" if kind.text == "probe" else ""
            refs += [_Tok(prefix + t.text.partition("=")[0], t.span) for t, _ in sel]
        self.expects.append((Expectation(group.text, kind.text, target, value, source), refs))

    # -- assembly -------------------------------------------------------
    def missing(self, what: str):
        sp = self.last_line
        self.errors.append(ParseError(SourceSpan(sp.line, 0, 0, sp.text), "missing-section", f"no {what!r} directive"))

    def build(self) -> Optional[Scenario]:
        for key, present in (("rails", self.rails), ("preselect", self.pre), ("postselect", self.post)):
            if key not in self.seen:
                self.missing(key)
        if self.rails is None:
            return None
        rails = tuple(t.text for t in self.rails)
        rail_set = set(rails)
        probe = probe_rails(len(self.probe[0])) if self.probe else ()

        def known(t: _Tok, rail: str):
            if rail not in rail_set:
                self.err(t, "unknown-rail", f"unknown rail {rail!r}")
                return False
            return True

        max_step = max(self.steps, default=0)
        n_steps = self.n_steps if self.n_steps is not None else max_step
        if max_step > n_steps:
            self.err(self.seen["steps"], "bad-value", f"step {max_step} beyond declared 'steps {n_steps}'")
        steps: list[list] = [[] for _ in range(max(n_steps, max_step))]
        for n in sorted(self.steps):
            used: dict[str, _Tok] = {}
            branches: set[int] = set()
            for element, toks in self.steps[n]:
                for t in toks:
                    name = t.text
                    if isinstance(element, Router) and t is toks[-1]:
                        if self.probe is None:
                            self.err(t, "missing-section", f"{t.text!r} refers to a probe but no 'probe' directive")
                        elif element.branch > len(self.probe[0]):
                            self.err(t, "bad-value", f"{t.text!r}: only {len(self.probe[0])} probe branches")
                        if element.branch in branches:
                            self.err(t, "duplicate", f"{t.text!r}: branch routed twice in step {n}")
                        branches.add(element.branch)
                        continue
                    if not known(t, name):
                        continue
                    if name in used:
                        self.err(t, "duplicate", f"rail {name!r} already used in step {n} (line {used[name].span.line})")
                    used[name] = t
                steps[n - 1].append(element)

        def selection(items, what) -> Optional[StateVector]:
            if items is None:
                return None
            ok = all([known(t, t.text.partition("=")[0]) for t, _ in items])
            if not ok or not items:
                return None
            s = StateVector.from_mapping(rails, {t.text.partition("=")[0]: a for t, a in items})
            if not s.is_unit():
                self.err(items[0][0], "non-normalized", f"{what} state starting {items[0][0].text!r} has norm^2 {s.norm() ** 2:.17g}")
                return None
            return s

        pre = selection(self.pre, "preselect")
        post = selection(self.post, "postselect")
        for name, t in self.detectors.items():
            known(t, t.text)
        labels = []
        for sym, (ref, k) in self.labels.items():
            rail = None
            if ref is not None:
                rail = ref.text.rpartition("@")[0]
                known(ref, rail)
            labels.append(Label(sym, rail, k))
        expects = []
        for e, refs in self.expects:
            for t in refs:
                if t.text.startswith("detector:"):
                    if t.text[9:] not in self.detectors:
                        self.err(t, "unknown-rail", f"unknown detector {t.span.token!r}")
                elif t.text.startswith("probe:"):
                    if t.text[6:] not in probe:
                        self.err(t, "unknown-rail", f"unknown probe rail {t.text[6:]!r}")
                else:
                    known(t, t.text)
            expects.append(e)
        if self.errors or pre is None or post is None:
            return None
        circuit = Circuit(
            rails,
            steps,
            pre,
            post,
            {k: t.text for k, t in self.detectors.items()},
            probe_amps=self.probe[0] if self.probe else None,
        )
        return Scenario(self.name or "unnamed", circuit, labels, expects)


def parse(text: Union[str, bytes]) -> Scenario:
    """Parse netlist text; raises :class:`ParseFailure` carrying every error."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    if text.startswith("﻿"):
        text = text[1:]
    p = _Parser(text)
    p.run()
    s = p.build()
    if p.errors or s is None:
        if not p.errors:
            p.missing("rails")
        raise ParseFailure(p.errors)
    return s


def load(path) -> Scenario:
    with open(path, "rb") as f:
        return parse(f.read())


def _element(e) -> str:
    if isinstance(e, Mixer):
        s = f"bs {e.r1} {e.r2} t={fmt_real(e.t)}"
        if e.phase != 0 or math.copysign(1.0, e.phase) < 0:
            s += f" phase={fmt_real(e.phase)}"
        return s
    if isinstance(e, Phase):
        return f"phase {e.rail} {fmt_real(e.angle)}"
    if isinstance(e, Swap):
        return f"swap {e.r1} {e.r2}"
    if isinstance(e, Absorber):
        return f"absorb {e.rail}"
    if isinstance(e, Router):
        return f"route {e.rail} probe={e.branch} at={e.at}"
    raise TypeError(e)


def _selection(s: StateVector) -> str:
    return " ".join(f"{r}={fmt_amp(a)}" for r, a in zip(s.basis, s.amps) if a != 0)


def serialize(s: Scenario) -> str:
    c = s.circuit
    out = [f"name {s.name}", "rails " + " ".join(c.rails)]
    if c.probe_amps is not None:
        out.append(f"probe branches {len(c.probe_amps)} amps " + " ".join(fmt_amp(a) for a in c.probe_amps))
    out.append(f"steps {c.n_slices}")
    for n, step in enumerate(c.steps, 1):
        out += [f"step {n}: {_element(e)}" for e in step]
    out.append("preselect " + _selection(c.preselect))
    out.append("postselect " + _selection(c.postselect))
    out += [f"detector {name} {rail}" for name, rail in sorted(c.detectors)]
    out += [f"label {l.symbol} = {l.rail or ''}@{l.slice}" for l in sorted(s.labels, key=lambda l: l.symbol)]
    for e in s.expected:
        parts = ["expect", e.group, e.kind]
        if e.target:
            parts.append(e.target)
        if isinstance(e.value, tuple):
            parts += [f"{r}={fmt_amp(a)}" for r, a in e.value]
        else:
            parts.append(fmt_amp(e.value))
        parts.append(f"from={e.source}")
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"
