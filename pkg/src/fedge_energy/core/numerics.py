"""
Deterministic numerical kernels

Bisection, golden-section search, a central-cut ellipsoid method for
nonsmooth concave maximization and a spectral projected gradient for smooth
convex problems over boxes. Everything here is problem agnostic; the
solvers supply scaling.
"""
import math
from dataclasses import dataclass
from typing import Callable, Literal, Optional

import numpy as np
from loguru import logger

from .errors import BracketError, InvalidInputError, NumericalDomainError

CutKind = Literal["objective", "feasibility"]
Status = Literal["optimal", "tolerance-not-met"]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def bisect_root(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """
    Root of a monotone scalar function by bisection.

    Stops when the bracket width is at most ``tol * max(1, |t|)`` or an exact
    zero is hit.

    Args:
        g: Monotone function with a sign change on [lo, hi]
        lo: Left end of the bracket
        hi: Right end of the bracket
        tol: Relative bracket width at which to stop
        max_iter: Hard cap on halvings

    Returns:
        Midpoint of the final bracket

    Raises:
        BracketError: If g(lo) and g(hi) have the same strict sign
        InvalidInputError: If lo >= hi or tol <= 0
    """
    if not lo < hi:
        raise InvalidInputError(f"Bisection needs lo < hi, got [{lo}, {hi}]")
    if not tol > 0:
        raise InvalidInputError(f"Bisection tolerance must be positive, got {tol}")

    g_lo = g(lo)
    if g_lo == 0:
        return lo
    g_hi = g(hi)
    if g_hi == 0:
        return hi
    if not (math.isfinite(g_lo) and math.isfinite(g_hi)):
        raise NumericalDomainError(f"Non-finite bracket values g({lo})={g_lo}, g({hi})={g_hi}")
    if (g_lo > 0) == (g_hi > 0):
        raise BracketError(f"No sign change on [{lo}, {hi}]: g(lo)={g_lo}, g(hi)={g_hi}")

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)) or mid in (lo, hi):
            return mid
        g_mid = g(mid)
        if g_mid == 0:
            return mid
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def golden_section_min(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> float:
    """
    Minimizer of a unimodal function on [lo, hi].

    The interval endpoints are compared with the final interior point, so a
    minimum sitting on the boundary is returned exactly.
    """
    if hi < lo:
        raise InvalidInputError(f"Golden-section needs lo <= hi, got [{lo}, {hi}]")
    if hi == lo:
        return lo

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)

    best_x, best_f = (c, fc) if fc <= fd else (d, fd)
    for x in (lo, hi):
        fx = f(x)
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x


@dataclass(frozen=True)
class EllipsoidState:
    """Ellipsoid {x : (x - center)^T P^-1 (x - center) <= 1}."""

    center: np.ndarray
    shape_matrix: np.ndarray
    iteration: int = 0

    @classmethod
    def ball(cls, center: np.ndarray, radius: float) -> "EllipsoidState":
        center = np.asarray(center, dtype=float)
        if center.ndim != 1 or center.size == 0:
            raise InvalidInputError(f"Ellipsoid center must be a non-empty vector, got shape {center.shape}")
        if not radius > 0:
            raise InvalidInputError(f"Ellipsoid radius must be positive, got {radius}")
        return cls(center=center.copy(), shape_matrix=np.eye(center.size) * radius**2)

    @property
    def dimension(self) -> int:
        return int(self.center.size)


@dataclass(frozen=True)
class CutOracleResult:
    """
    Answer of a cut oracle at the current center.

    For an objective cut ``subgradient`` is an ascent direction (supergradient
    of the concave objective). For a feasibility cut it is the gradient of
    the violated constraint ``c(x) <= 0``.
    """

    kind: CutKind
    subgradient: np.ndarray
    value: float = float("nan")


@dataclass(frozen=True)
class EllipsoidResult:
    point: np.ndarray
    value: float
    status: Status
    iterations: int
    bound: float


def ellipsoid_step(state: EllipsoidState, direction: np.ndarray) -> EllipsoidState:
    """
    One central cut keeping the half-space {y : direction^T (y - center) >= 0}.

    Raises:
        NumericalDomainError: If the direction is not finite or the shape matrix degenerated
    """
    direction = np.asarray(direction, dtype=float)
    if direction.shape != state.center.shape:
        raise InvalidInputError(
            f"Cut direction shape {direction.shape} does not match center {state.center.shape}"
        )
    if not np.all(np.isfinite(direction)):
        raise NumericalDomainError("Non-finite cut direction")

    n = state.dimension
    P = state.shape_matrix
    Pg = P @ direction
    gPg = float(direction @ Pg)
    if not gPg > 0:
        raise NumericalDomainError(f"Degenerate ellipsoid cut (g^T P g = {gPg})")
    b = Pg / math.sqrt(gPg)

    if n == 1:
        center = state.center + 0.5 * b
        shape = P / 4.0
    else:
        center = state.center + b / (n + 1)
        shape = (n * n / (n * n - 1.0)) * (P - (2.0 / (n + 1)) * np.outer(b, b))
        shape = 0.5 * (shape + shape.T)
    return EllipsoidState(center=center, shape_matrix=shape, iteration=state.iteration + 1)


def ellipsoid_max(
    oracle: Callable[[np.ndarray], CutOracleResult],
    center0: np.ndarray,
    radius0: float = 1e6,
    tol: float = 1e-6,
    max_iter: Optional[int] = None,
) -> EllipsoidResult:
    """
    Maximize a concave function with the central-cut ellipsoid method.

    Objective cuts move toward the supergradient; feasibility cuts discard
    the half-space where the violated constraint grows. The search stops when
    the bound sqrt(g^T P g) on the remaining improvement drops below
    ``tol * max(1, |best|)``, on a zero supergradient, or after ``max_iter``
    cuts (default 10 n^2) with status ``tolerance-not-met``.

    Args:
        oracle: Maps a point to a CutOracleResult
        center0: Initial center
        radius0: Radius of the initial ball, which must contain the optimum
        tol: Relative stopping tolerance
        max_iter: Maximum number of cuts

    Returns:
        EllipsoidResult with the best objective-cut point seen

    Raises:
        NumericalDomainError: If the oracle misbehaves or no center ever satisfied the constraints
    """
    if not tol > 0:
        raise InvalidInputError(f"Ellipsoid tolerance must be positive, got {tol}")
    state = EllipsoidState.ball(center0, radius0)
    n = state.dimension
    if max_iter is None:
        max_iter = 10 * n * n

    best_point = state.center.copy()
    best_value = -math.inf
    bound = math.inf

    for _ in range(max_iter):
        cut = oracle(state.center)
        g = np.asarray(cut.subgradient, dtype=float)
        if g.shape != state.center.shape or not np.all(np.isfinite(g)):
            raise NumericalDomainError(f"Oracle returned an invalid subgradient at iteration {state.iteration}")

        if cut.kind == "objective":
            if not math.isfinite(cut.value):
                raise NumericalDomainError(f"Oracle returned a non-finite value at iteration {state.iteration}")
            if cut.value > best_value:
                best_value = cut.value
                best_point = state.center.copy()
            if not np.any(g):
                logger.debug(f"Ellipsoid stopped on a zero supergradient after {state.iteration} cuts")
                return EllipsoidResult(best_point, best_value, "optimal", state.iteration, 0.0)
            bound = math.sqrt(max(float(g @ state.shape_matrix @ g), 0.0))
            if bound <= tol * max(1.0, abs(best_value)):
                logger.debug(f"Ellipsoid converged after {state.iteration} cuts (bound {bound:.3e})")
                return EllipsoidResult(best_point, best_value, "optimal", state.iteration, bound)
            direction = g
        else:
            direction = -g

        try:
            state = ellipsoid_step(state, direction)
        except NumericalDomainError as e:
            logger.warning(f"Ellipsoid stopped early: {e}")
            break

    if best_value == -math.inf:
        raise NumericalDomainError(f"Ellipsoid never reached a feasible center in {state.iteration} cuts")
    logger.warning(f"Ellipsoid hit its cap of {max_iter} cuts (bound {bound:.3e}, best {best_value:.6e})")
    return EllipsoidResult(best_point, best_value, "tolerance-not-met", state.iteration, bound)


def minimize_convex_box(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    lower: np.ndarray,
    upper: np.ndarray,
    tol: float = 1e-10,
    x0: Optional[np.ndarray] = None,
    max_iter: int = 10_000,
) -> np.ndarray:
    """
    Minimize a smooth convex function over a box.

    Spectral projected gradient: Barzilai-Borwein step lengths with an
    Armijo backtracking search along the projected direction. Stops when the
    projected-gradient norm ``||x - P(x - grad(x))||_inf`` is at most ``tol``.

    Args:
        f: Objective
        grad: Gradient of the objective
        lower: Lower bounds
        upper: Upper bounds
        tol: Projected-gradient tolerance
        x0: Optional warm start (projected onto the box)
        max_iter: Iteration cap

    Returns:
        Approximate minimizer inside the box

    Raises:
        NumericalDomainError: If f or grad is non-finite at a visited point
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or np.any(lower > upper):
        raise InvalidInputError("Box bounds must have equal shapes with lower <= upper")

    def project(x: np.ndarray) -> np.ndarray:
        return np.clip(x, lower, upper)

    def evaluate(x: np.ndarray) -> float:
        value = float(f(x))
        if not math.isfinite(value):
            raise NumericalDomainError(f"Non-finite objective at {x}")
        return value

    def gradient(x: np.ndarray) -> np.ndarray:
        g = np.asarray(grad(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise NumericalDomainError(f"Non-finite gradient at {x}")
        return g

    x = project(0.5 * (lower + upper) if x0 is None else np.asarray(x0, dtype=float))
    fx = evaluate(x)
    g = gradient(x)
    pg = x - project(x - g)
    pg_norm = float(np.max(np.abs(pg))) if pg.size else 0.0
    alpha = 1.0 / pg_norm if pg_norm > 0 else 1.0

    for _ in range(max_iter):
        if pg_norm <= tol:
            break
        d = project(x - alpha * g) - x
        slope = float(g @ d)
        if slope >= 0:
            # The spectral step lost descent; fall back to the unit projected gradient.
            d = -pg
            slope = float(g @ d)
        step = 1.0
        for _ in range(60):
            x_trial = x + step * d
            f_trial = evaluate(x_trial)
            if f_trial <= fx + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            logger.debug(f"Armijo search failed at {x} (projected gradient {pg_norm:.3e}); returning the current point")
            break

        s = x_trial - x
        g_trial = gradient(x_trial)
        y = g_trial - g
        sy = float(s @ y)
        alpha = float(s @ s) / sy if sy > 0 else 1e10
        alpha = min(max(alpha, 1e-10), 1e10)

        improvement = fx - f_trial
        x, fx, g = x_trial, f_trial, g_trial
        pg = x - project(x - g)
        pg_norm = float(np.max(np.abs(pg)))
        if improvement <= 1e-16 * (1.0 + abs(fx)) and float(np.max(np.abs(s))) <= 1e-15 * (1.0 + float(np.max(np.abs(x)))):
            break
    return x
