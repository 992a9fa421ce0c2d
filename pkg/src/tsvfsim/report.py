"""Machine-readable analysis reports.

Field order is fixed and numbers are rounded to 12 significant digits,
with magnitudes below 1e-10 written as exact zero, so that reports are
stable enough for golden-file comparison.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .circuit import EvolutionTrace
from .pointer import PointerConfig, analytic_weak_limit, sample_trials, weak_pointer_state
from .scenarios import Scenario
from .state import projector_onto
from .tsvf import NullPostSelection, abl_probability, postselection_probability, projector_weak_values, two_state_at

SCHEMA_PATH = Path(__file__).with_name("report.schema.json")
ZERO = 1e-10


def num(x: float) -> Optional[float]:
    x = float(x)
    if math.isnan(x):
        return None
    if abs(x) < ZERO:
        return 0.0
    return float(f"{x:.12g}")


def weak_value_rows(trace: EvolutionTrace, slices: Sequence[int]) -> list[dict]:
    rows = []
    for k in slices:
        for rail, wv in projector_weak_values(two_state_at(trace, k)).items():
            rows.append({"rail": rail, "slice": k, "re": num(wv.real), "im": num(wv.imag)})
    return rows


def defined_slices(trace: EvolutionTrace) -> list[int]:
    """Slices with a usable two-state; raises if there are none."""
    out = []
    for k in range(trace.n_slices + 1):
        try:
            two_state_at(trace, k)
        except NullPostSelection:
            continue
        out.append(k)
    if not out:
        two_state_at(trace, 0)
    return out


def build_report(
    scenario: Scenario,
    trace: EvolutionTrace,
    at: Optional[Sequence[int]] = None,
    abl: Sequence[tuple[str, int]] = (),
    pointer: Optional[tuple[str, int, PointerConfig]] = None,
    trials: Optional[tuple[int, int]] = None,
    workers: int = 1,
):
    """Return (report dict, Monte Carlo report or None)."""
    slices = list(at) if at is not None else defined_slices(trace)
    report = {
        "scenario": scenario.name,
        "weak_values": weak_value_rows(trace, slices),
        "postselection_probability": num(postselection_probability(trace)),
        "abl": [
            {"rail": r, "slice": k, "probability": num(abl_probability(trace, k, projector_onto(r, trace.circuit.rails)))}
            for r, k in abl
        ],
        "pointer": None,
        "montecarlo": None,
        "version": __version__,
    }
    mc = None
    if pointer is not None:
        rail, k, cfg = pointer
        ts = two_state_at(trace, k)
        p = projector_onto(rail, trace.circuit.rails)
        out = weak_pointer_state(ts, p, cfg)
        report["pointer"] = {
            "rail": rail,
            "slice": k,
            "g": num(cfg.g),
            "sigma": num(cfg.sigma),
            "mean": num(out.mean),
            "variance": num(out.variance),
            "success_probability": num(out.success_probability),
            "weak_limit": num(analytic_weak_limit(ts, p)),
        }
        if trials is not None:
            n, seed = trials
            mc = sample_trials(ts, p, cfg, n, seed, workers=workers)
            accepted = (
                mc.n_postselected > 1 and abs(mc.sample_mean - out.mean) <= 5 * mc.std_error
            )
            report["montecarlo"] = {
                "n": n,
                "seed": seed,
                "n_postselected": mc.n_postselected,
                "sample_mean": num(mc.sample_mean),
                "std_error": num(mc.std_error),
                "analytic_mean": num(out.mean),
                "accepted": bool(accepted),
            }
    return report, mc


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text())
