"""Unconditional tails and calls for every method, mixed over the factor.

Semi-analytical methods evaluate one quantity per quadrature node and combine
the nodes with compensated summation. Per-node work that several strikes or
tail points share (coefficients, exact pmfs) is computed once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import modcompound as mcp
from . import modpoisson as mp
from .errors import InputError, NumericError
from .estimators import (
    EstimateWithCI,
    LossDistribution,
    is_tail_onestep,
    is_tail_twostep,
    ld_tail_rows,
    mc_tail,
    recursive_pmf_matrix,
    stein_gaussian_call,
    stein_poisson_call,
)
from .model import ConditionalSlice, Portfolio, conditional_pd_matrix, default_quadrature
from .specfun import Quadrature

__all__ = [
    "Engine",
    "TAIL_METHODS",
    "CALL_METHODS",
    "SIMULATION_METHODS",
    "parse_engine",
    "node_coefficients",
    "mixed_loss_distribution",
    "mixed_tail",
    "mixed_tail_curve",
    "mixed_calls",
    "mixed_call",
    "tail",
]

SIMULATION_METHODS = ("mc", "is1", "is2")
TAIL_METHODS = ("recursive", "modpoisson", "modcompound", "ld") + SIMULATION_METHODS
CALL_METHODS = ("recursive", "modpoisson", "modcompound", "stein-gauss", "stein-poisson")
_ORDERED = ("modpoisson", "modcompound")


@dataclass(frozen=True)
class Engine:
    """A method name plus its order where the method has one."""

    method: str
    order: int | None = None

    def __post_init__(self):
        known = set(TAIL_METHODS) | set(CALL_METHODS)
        if self.method not in known:
            raise InputError(f"unknown method {self.method!r}; expected one of {sorted(known)}")
        if self.method in _ORDERED:
            if self.order is None:
                raise InputError(f"method {self.method!r} needs an order")
            if self.order < 0:
                raise InputError(f"order must be non-negative, got {self.order}")

    def __str__(self):
        return f"{self.method}({self.order})" if self.method in _ORDERED else self.method


def parse_engine(text: str) -> Engine:
    """Parse ``recursive``, ``modpoisson(10)``, ``stein-gauss`` and similar."""
    m = re.fullmatch(r"\s*([a-z0-9-]+)\s*(?:\(\s*(\d+)\s*\))?\s*", text)
    if not m:
        raise InputError(f"cannot parse engine {text!r}")
    order = int(m.group(2)) if m.group(2) is not None else None
    return Engine(m.group(1), order)


def _quad(quad: Quadrature | None) -> Quadrature:
    return quad if quad is not None else default_quadrature()


def _mix(quad: Quadrature, values: np.ndarray) -> float:
    keep = quad.weights > 0
    return math.fsum(quad.weights[keep] * np.asarray(values, dtype=float)[keep])


def _per_node(quad: Quadrature, fn: Callable[[int], object], label: str) -> list:
    out = []
    for m in range(len(quad)):
        if quad.weights[m] == 0.0:
            out.append(None)
            continue
        try:
            out.append(fn(m))
        except InputError:
            raise
        except NumericError as exc:
            if exc.node_index is not None:
                raise
            raise NumericError(f"{label} failed at quadrature node {m}: {exc}", node_index=m) from exc
        except Exception as exc:
            raise NumericError(f"{label} failed at quadrature node {m}: {exc}", node_index=m) from exc
    return out


def _require_unit(port: Portfolio, method: str):
    if port.exposure is not None and not port.exposure.is_unit:
        raise InputError(f"method {method!r} needs unit exposures")


def _severity(port: Portfolio):
    return port.exposure if port.exposure is not None else mcp.Severity.unit()


def node_coefficients(port: Portfolio, order: int, quad: Quadrature | None = None, compound: bool = False):
    """Scheme coefficients at every quadrature node.

    Power sums are taken row by row, the partition (or series) formula is
    then applied to all nodes at once.
    """
    quad = _quad(quad)
    P = conditional_pd_matrix(port, quad.nodes)
    lams = P.sum(axis=1)
    if order >= 2:
        ps = np.array([mp.power_sums(row, order) for row in P])
    else:
        ps = np.zeros((len(P), 1))
    if compound:
        sev = _severity(port)
        b = mcp.cp_coefficients_from_power_sums(ps, sev, order) if order >= 2 else np.zeros((len(P), order))
        return [mcp.CompoundCoefficients(order, lams[m], b[m], sev) for m in range(len(P))]
    b = mp.coefficients_from_power_sums(ps, order) if order >= 2 else np.zeros((len(P), order))
    return [mp.SchemeCoefficients(order, lams[m], b[m]) for m in range(len(P))]


def mixed_loss_distribution(port: Portfolio, quad: Quadrature | None = None) -> LossDistribution:
    """Exact unconditional pmf: recursion at every node, mixed over the factor."""
    quad = _quad(quad)
    keep = quad.weights > 0
    P = conditional_pd_matrix(port, quad.nodes[keep])
    pmfs = recursive_pmf_matrix(P, port.exposure)
    w = quad.weights[keep]
    # column-wise compensated sums keep the deep tail accurate
    mixed = np.array([math.fsum(w * pmfs[:, k]) for k in range(pmfs.shape[1])])
    return LossDistribution(mixed)


def mixed_tail_curve(port: Portfolio, kmax: int, engine: Engine, quad: Quadrature | None = None) -> np.ndarray:
    """Unconditional ``P{L > k}`` for ``k = 0..kmax`` (unclamped)."""
    quad = _quad(quad)
    ks = np.arange(kmax + 1)
    method = engine.method
    if method == "recursive":
        curve = mixed_loss_distribution(port, quad).tail_curve()
        out = np.zeros(kmax + 1)
        out[: min(kmax + 1, len(curve))] = curve[: kmax + 1]
        return out
    if method == "modpoisson":
        _require_unit(port, method)
        coefs = node_coefficients(port, engine.order, quad)
        rows = _per_node(quad, lambda m: mp.tail_curve(coefs[m], ks), "modpoisson tail")
    elif method == "modcompound":
        coefs = node_coefficients(port, engine.order, quad, compound=True)
        rows = _per_node(quad, lambda m: mcp.cp_tail_curve(coefs[m], kmax), "modcompound tail")
    elif method == "ld":
        P = conditional_pd_matrix(port, quad.nodes)
        # all (node, level) pairs in one vectorised tilt solve, in chunks
        live = np.flatnonzero(quad.weights > 0)
        rows = [None] * len(quad)
        step = max(1, 200_000 // max(1, P.shape[1] * len(ks)))
        for s in range(0, len(live), step):
            idx = live[s : s + step]
            stacked = np.repeat(P[idx], len(ks), axis=0)
            vals = ld_tail_rows(stacked, np.tile(ks, len(idx)).astype(float), port.exposure)
            for j, m in enumerate(idx):
                rows[m] = vals[j * len(ks) : (j + 1) * len(ks)]
    else:
        raise InputError(f"method {method!r} has no semi-analytical tail curve")
    mat = np.array([r if r is not None else np.zeros(kmax + 1) for r in rows])
    return np.array([_mix(quad, mat[:, k]) for k in range(kmax + 1)])


def mixed_tail(port: Portfolio, x: float, engine: Engine, quad: Quadrature | None = None) -> float:
    """Unconditional ``P{L > x}`` for a semi-analytical method."""
    quad = _quad(quad)
    method = engine.method
    if method == "recursive":
        return mixed_loss_distribution(port, quad).tail(x)
    if method == "modpoisson":
        _require_unit(port, method)
        coefs = node_coefficients(port, engine.order, quad)
        vals = _per_node(quad, lambda m: mp.tail_estimate(coefs[m], x), "modpoisson tail")
    elif method == "modcompound":
        coefs = node_coefficients(port, engine.order, quad, compound=True)
        vals = _per_node(quad, lambda m: mcp.cp_tail_estimate(coefs[m], x), "modcompound tail")
    elif method == "ld":
        vals = ld_tail_rows(conditional_pd_matrix(port, quad.nodes), x, port.exposure)
    else:
        raise InputError(f"method {method!r} has no semi-analytical tail")
    return _mix(quad, [0.0 if v is None else v for v in vals])


def mixed_calls(port: Portfolio, strikes: Sequence[float], engine: Engine, quad: Quadrature | None = None) -> np.ndarray:
    """Unconditional ``E[(L - K)^+]`` for several strikes."""
    quad = _quad(quad)
    strikes = [float(K) for K in strikes]
    if any(K < 0 for K in strikes):
        raise InputError("strikes must be non-negative")
    method = engine.method
    if method == "recursive":
        dist = mixed_loss_distribution(port, quad)
        return np.array([dist.call(K) for K in strikes])
    P = conditional_pd_matrix(port, quad.nodes)
    if method == "modpoisson":
        _require_unit(port, method)
        coefs = node_coefficients(port, engine.order, quad)
        fn = lambda m: [mp.call_estimate(coefs[m], K) for K in strikes]
    elif method == "modcompound":
        coefs = node_coefficients(port, engine.order, quad, compound=True)
        fn = lambda m: [mcp.cp_call_estimate(coefs[m], K) for K in strikes]
    elif method == "stein-gauss":
        fn = lambda m: [stein_gaussian_call(ConditionalSlice(P[m]), K, port.exposure) for K in strikes]
    elif method == "stein-poisson":
        _require_unit(port, method)
        for K in strikes:
            if not float(K).is_integer():
                raise InputError(f"stein-poisson needs integer strikes in loss units, got {K}")

        def fn(m):
            sl = ConditionalSlice(P[m])
            # a zero strike has no lattice correction: the call is the mean
            return [stein_poisson_call(sl, int(K)) if K >= 1 else sl.mean - K for K in strikes]
    else:
        raise InputError(f"method {method!r} does not price calls")
    rows = _per_node(quad, fn, f"{method} call")
    mat = np.array([r if r is not None else [0.0] * len(strikes) for r in rows], dtype=float)
    return np.array([_mix(quad, mat[:, j]) for j in range(len(strikes))])


def mixed_call(port: Portfolio, K: float, engine: Engine, quad: Quadrature | None = None) -> float:
    return float(mixed_calls(port, [K], engine, quad)[0])


def tail(
    port: Portfolio,
    x: float,
    engine: Engine,
    quad: Quadrature | None = None,
    runs: int = 10_000,
    seed: int = 0,
    batch_size: int | None = None,
    workers: int | None = None,
) -> EstimateWithCI:
    """``P{L > x}`` for any tail method; semi-analytical ones report zero error."""
    method = engine.method
    if method == "mc":
        return mc_tail(port, x, runs, seed, batch_size, workers)
    if method == "is1":
        return is_tail_onestep(port, x, runs, seed, batch_size, workers)
    if method == "is2":
        return is_tail_twostep(port, x, runs, seed, batch_size, workers)
    if method not in TAIL_METHODS:
        raise InputError(f"method {method!r} does not estimate tails")
    return EstimateWithCI(mixed_tail(port, x, engine, quad), 0.0, 1)
