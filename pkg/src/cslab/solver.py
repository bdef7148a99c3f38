"""
Weighted quadratically-constrained basis pursuit

    minimize ||z||_{1,omega}  subject to  ||A z - y||_2 <= eta

by the first-order primal-dual (Chambolle-Pock) iteration, and the discrete
finite-dimensional baseline.
"""

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse.linalg

import cslab.log
from cslab.errors import ValidationError
from cslab.grid import GridFunction
from cslab.walsh import sequency_hadamard
from cslab.wavelet import WaveletSystem, dwt_synthesis_matrix

_logger = cslab.log.internal_logger()

Status = Literal["converged", "max_iters", "infeasible_radius"]

POWER_ITERATIONS = 100
CHECK_EVERY = 10
# power iteration approaches ||A|| from below
NORM_SAFETY = 1.01


@dataclass(frozen=True)
class SolveRequest:
    """
    Attributes:
        A (np.ndarray | LinearOperator): m x K operator.
        y (np.ndarray): m measurements.
        eta (float): residual radius, >= 0.
        weights (np.ndarray): the weight of each of the K columns.
        tol_feas (float): relative feasibility tolerance.
        tol_gap (float): relative duality gap tolerance.
        max_iters (int): iteration cap.
    """

    A: object = field(repr=False)
    y: np.ndarray = field(repr=False)
    eta: float
    weights: np.ndarray = field(repr=False)
    tol_feas: float = 1e-6
    tol_gap: float = 1e-6
    max_iters: int = 200_000

    def __post_init__(self):
        op = scipy.sparse.linalg.aslinearoperator(self.A)
        y = np.asarray(self.y, dtype=np.float64).ravel()
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        m, K = op.shape
        if y.shape[0] != m:
            raise ValidationError("%d measurements for an operator with %d rows" % (y.shape[0], m))
        if w.shape[0] != K:
            raise ValidationError("%d weights for an operator with %d columns" % (w.shape[0], K))
        if np.any(w <= 0):
            raise ValidationError("weights must be positive")
        if self.eta < 0 or not math.isfinite(self.eta):
            raise ValidationError("eta must be finite and >= 0, got %g" % (self.eta))
        if self.tol_feas <= 0 or self.tol_gap <= 0:
            raise ValidationError("tolerances must be > 0")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "weights", w)

    @property
    def operator(self) -> scipy.sparse.linalg.LinearOperator:
        return scipy.sparse.linalg.aslinearoperator(self.A)


@dataclass(frozen=True)
class SolveReport:
    """
    Attributes:
        xhat (np.ndarray): the returned iterate.
        residual_norm (float): ||A xhat - y||_2.
        objective (float): ||xhat||_{1,omega}.
        gap_estimate (float): objective minus the best dual value found, inf if none.
        iterations (int): iterations run.
        status (str): converged, max_iters or infeasible_radius.
        eta_effective (float): the radius actually enforced.
    """

    xhat: np.ndarray = field(repr=False)
    residual_norm: float
    objective: float
    gap_estimate: float
    iterations: int
    status: str
    eta_effective: float

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "objective": self.objective,
            "gap_estimate": self.gap_estimate,
            "eta_effective": self.eta_effective,
        }


def operator_norm(op: scipy.sparse.linalg.LinearOperator, iterations: int = POWER_ITERATIONS) -> float:
    """
    ||A||_2 by power iteration on A^T A from a fixed start.
    """
    K = op.shape[1]
    x = np.ones(K) / math.sqrt(K)
    lam = 0.0
    for _ in range(iterations):
        z = op.rmatvec(op.matvec(x))
        lam = float(np.linalg.norm(z))
        if lam == 0:
            return 0.0
        x = z / lam
    return math.sqrt(lam)


def _least_squares_floor(req: SolveRequest) -> float:
    if isinstance(req.A, np.ndarray):
        z = np.linalg.lstsq(req.A, req.y, rcond=None)[0]
        return float(np.linalg.norm(req.A @ z - req.y))
    op = req.operator
    z = scipy.sparse.linalg.lsqr(op, req.y, atol=1e-14, btol=1e-14, iter_lim=10 * op.shape[1])[0]
    return float(np.linalg.norm(op.matvec(z) - req.y))


def solve_wqcbp(req: SolveRequest) -> SolveReport:
    """
    solves the weighted QCBP with the primal-dual iteration.

    The dual step is the proximal map of sigma f*, f the indicator of the ball
    of radius eta around y; the primal step soft-thresholds with tau omega.
    Steps are tau = sigma = 0.99 / ||A||, the iteration starts at zero. Every
    CHECK_EVERY iterations the primal objective is evaluated on feasible
    iterates and the dual iterate, rescaled to dual feasibility, gives a lower
    bound; the best feasible iterate is returned.

    The enforced radius is max(eta, tol_feas ||y||), the feasibility test
    ||A x - y|| <= radius (1 + tol_feas).

    Args:
        req (SolveRequest): the problem.

    Returns:
        SolveReport: the solution and its certificate.
    """
    op = req.operator
    y = req.y
    w = req.weights
    m, K = op.shape
    ynorm = float(np.linalg.norm(y))
    eta = max(req.eta, req.tol_feas * ynorm)
    feas = eta * (1.0 + req.tol_feas)

    if ynorm <= req.eta:
        _logger.info("wqcbp: zero is feasible (||y||=%.3g <= eta=%.3g)" % (ynorm, req.eta))
        return SolveReport(np.zeros(K), ynorm, 0.0, 0.0, 0, "converged", eta)

    floor = _least_squares_floor(req)
    if floor > feas:
        _logger.warning("wqcbp: least-squares residual %.6g exceeds radius %.6g" % (floor, feas))
        return SolveReport(np.zeros(K), ynorm, 0.0, math.inf, 0, "infeasible_radius", eta)

    L = operator_norm(op) * NORM_SAFETY
    tau = sigma = 0.99 / L
    _logger.info("wqcbp: m=%d K=%d ||A||~%.6g eta=%.3g" % (m, K, L, eta))

    x = np.zeros(K)
    xbar = np.zeros(K)
    p = np.zeros(m)
    best_x = None
    best_obj = math.inf
    best_res = math.inf
    best_dual = -math.inf
    gap = math.inf
    it = 0
    status = "max_iters"

    while it < req.max_iters:
        it += 1
        # dual: prox of sigma f*, f* (p) = <p, y> + eta ||p||
        u = p + sigma * op.matvec(xbar) - sigma * y
        un = float(np.linalg.norm(u))
        p = u * max(0.0, 1.0 - sigma * eta / un) if un > 0 else u

        # primal: weighted soft thresholding
        v = x - tau * op.rmatvec(p)
        x_new = np.sign(v) * np.maximum(np.abs(v) - tau * w, 0.0)
        xbar = 2.0 * x_new - x
        x = x_new

        if it % CHECK_EVERY != 0 and it != req.max_iters:
            continue

        res = float(np.linalg.norm(op.matvec(x) - y))
        if res <= feas:
            obj = float(np.sum(w * np.abs(x)))
            if obj < best_obj:
                best_obj, best_x, best_res = obj, x.copy(), res

        atp = np.abs(op.rmatvec(p))
        scale = max(1.0, float(np.max(atp / w)))
        pt = p / scale
        dual = -float(np.dot(pt, y)) - eta * float(np.linalg.norm(pt))
        best_dual = max(best_dual, dual)

        if best_x is not None:
            gap = best_obj - best_dual
            if gap <= req.tol_gap * max(1.0, best_obj):
                status = "converged"
                break

        if it % (CHECK_EVERY * 1000) == 0:
            _logger.debug("wqcbp it=%d res=%.3g obj=%.9g dual=%.9g" % (it, res, best_obj, best_dual))

    if best_x is None:
        best_x = x
        best_res = float(np.linalg.norm(op.matvec(x) - y))
        best_obj = float(np.sum(w * np.abs(x)))

    report = SolveReport(best_x, best_res, best_obj, max(gap, 0.0), it, status, eta)
    _logger.info(
        "wqcbp: %s after %d iterations, residual=%.3g objective=%.9g gap=%.3g"
        % (status, it, best_res, best_obj, report.gap_estimate)
    )
    return report


def findim_operator(sys: WaveletSystem, r: int, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    the discrete model 2^-r P_Omega V Psi^-1 and the synthesis matrix Psi^-1.
    """
    v = sequency_hadamard(r)
    psi_inv = dwt_synthesis_matrix(sys, r)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.shape[0] == 0 or rows.min() < 0 or rows.max() >= (1 << r):
        raise ValidationError("sampled rows must lie in [0, %d)" % (1 << r))
    return (v[rows] @ psi_inv) / (1 << r), psi_inv


def solve_findim_baseline(
    sys: WaveletSystem,
    r: int,
    rows: np.ndarray,
    y: np.ndarray,
    eta: float,
    tol_feas: float = 1e-6,
    tol_gap: float = 1e-6,
    max_iters: int = 200_000,
) -> tuple[GridFunction, SolveReport]:
    """
    unweighted QCBP in the discrete 2^r x 2^r model, the solution read as grid values.

    Args:
        sys (WaveletSystem): the wavelet system of the discrete transform.
        r (int): log2 of the discrete size.
        rows (np.ndarray): sampled Walsh sequencies (0-based, distinct).
        y (np.ndarray): the samples at those rows.
        eta (float): residual radius.

    Returns:
        tuple[GridFunction, SolveReport]: Psi^-1 zhat on the depth-r grid and the solver report.
    """
    rows = np.asarray(rows, dtype=np.int64)
    a, psi_inv = findim_operator(sys, r, rows)
    req = SolveRequest(a, y, eta, np.ones(1 << r), tol_feas, tol_gap, max_iters)
    rep = solve_wqcbp(req)
    return GridFunction(r, psi_inv @ rep.xhat), rep
