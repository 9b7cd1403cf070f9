"""Tracking-performance metrics and the weighted score W."""

from __future__ import annotations

import functools
from dataclasses import asdict, dataclass

import numpy as np

W_WEIGHTS = (0.5, 0.25, 0.25)


@dataclass(frozen=True)
class PerformanceReport:
    """Following error (mm), speed error (mm/s), speed fluctuation ((mm/s)^2) and W.

    The three terms are summed in their native units without normalization.
    """

    max_err_p: float
    max_err_v: float
    vars_v: float
    W: float

    def to_dict(self) -> dict:
        return asdict(self)


def weighted_score(max_err_p: float, max_err_v: float, vars_v: float) -> float:
    wp, wv, wf = W_WEIGHTS
    return wp * max_err_p + wv * max_err_v + wf * vars_v


def report_from_stats(max_err_p: float, max_err_v: float, vars_v: float) -> PerformanceReport:
    return PerformanceReport(float(max_err_p), float(max_err_v), float(vars_v),
                             float(weighted_score(max_err_p, max_err_v, vars_v)))


def evaluate(trace) -> PerformanceReport:
    """Score a trace over its full length (reversals and settle tail included).

    ``vars_v`` is the population variance of the velocity error.
    """
    if len(trace) == 0:
        raise ValueError("cannot evaluate an empty trace")
    err_p = np.asarray(trace.pos_cmd) - np.asarray(trace.pos_actual)
    err_v = np.asarray(trace.vel_cmd) - np.asarray(trace.vel_actual)
    return report_from_stats(np.max(np.abs(err_p)), np.max(np.abs(err_v)), np.var(err_v))


def compare(report_a: PerformanceReport, report_b: PerformanceReport) -> int:
    """-1 if ``a`` is better, 1 if ``b`` is better, 0 if tied. Lower W wins,
    then lower max following error."""
    key_a = (report_a.W, report_a.max_err_p)
    key_b = (report_b.W, report_b.max_err_p)
    return (key_a > key_b) - (key_a < key_b)


sort_key = functools.cmp_to_key(compare)
