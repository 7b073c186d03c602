"""Smooth constrained minimization by an augmented Lagrangian method.

Problem form::

    min f(x)  s.t.  c(x) = 0,  d(x) <= 0,  lb <= x <= ub

Equalities and inequalities enter a Powell-Hestenes-Rockafellar augmented
Lagrangian; simple bounds are kept explicit and handled by the inner solver.
Two inner solvers are available:

``"lbfgsb"``
    limited-memory quasi-Newton with projected search (scipy's L-BFGS-B).
``"gauss_newton"``
    projected Levenberg-Marquardt on the penalty structure: the Hessian of
    the augmented Lagrangian is approximated by ``rho J^T J`` over the
    equalities and the currently active inequalities, plus a limited-memory
    BFGS matrix for the curvature that model misses (objective and
    multiplier terms), plus a damping term. Only first derivatives are used. This suits problems dominated by many
    equality constraints (shooting defects), where L-BFGS converges slowly.

Callbacks return values together with first derivatives; the backend never
differentiates numerically except in :func:`check_derivatives`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize as _scipy_minimize

log = logging.getLogger(__name__)
inner_log = logging.getLogger(__name__ + ".inner")

CONVERGED = "converged"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"
DEGENERATE = "degenerate"


@dataclass
class NlpProblem:
    """Callbacks and bounds of a smooth NLP.

    ``objective(x) -> (f, grad)``; ``eq(x) -> (c, J)`` and
    ``ineq(x) -> (d, J)`` with ``J`` dense or scipy-sparse of shape
    ``(len(c), n)``. ``x_scale`` gives a typical magnitude per variable; the
    solver works on ``x / x_scale``.
    """

    n: int
    objective: Callable
    eq: Callable | None = None
    ineq: Callable | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    eq_labels: Callable[[int], str] | None = None
    ineq_labels: Callable[[int], str] | None = None

    def __post_init__(self):
        self.lb = np.full(self.n, -np.inf) if self.lb is None else np.asarray(self.lb, float)
        self.ub = np.full(self.n, np.inf) if self.ub is None else np.asarray(self.ub, float)
        if self.x_scale is None:
            self.x_scale = np.ones(self.n)
        self.x_scale = np.asarray(self.x_scale, float)
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")

    def eval_eq(self, x):
        if self.eq is None:
            return np.zeros(0), sp.csr_matrix((0, self.n))
        return self.eq(x)

    def eval_ineq(self, x):
        if self.ineq is None:
            return np.zeros(0), sp.csr_matrix((0, self.n))
        return self.ineq(x)


@dataclass(frozen=True)
class NlpOptions:
    tol_feas: float = 1e-6
    tol_opt: float = 1e-5
    max_outer: int = 50
    max_inner: int = 500
    rho_init: float = 10.0
    rho_factor: float = 10.0
    rho_max: float = 1e8
    memory: int = 20
    inner: str = "lbfgsb"

    def __post_init__(self):
        if self.inner not in ("lbfgsb", "gauss_newton"):
            raise ValueError("inner must be 'lbfgsb' or 'gauss_newton'")


@dataclass
class SolveReport:
    status: str
    iterations: int
    inner_iterations: int
    objective: float
    violation: float
    residual: float
    multipliers_eq: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    multipliers_ineq: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    violation_history: list = field(default_factory=list)
    worst_constraint: str | None = None
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "inner_iterations": self.inner_iterations,
            "objective": self.objective,
            "violation": self.violation,
            "residual": self.residual,
            "worst_constraint": self.worst_constraint,
            "message": self.message,
        }


class _Evaluator:
    """Augmented Lagrangian in scaled variables, with non-finite guarding."""

    def __init__(self, problem: NlpProblem):
        self.p = problem
        self.s = problem.x_scale
        self.last_good = None

    def constraints(self, x):
        c, jc = self.p.eval_eq(x)
        d, jd = self.p.eval_ineq(x)
        return np.asarray(c, float), jc, np.asarray(d, float), jd

    def augmented(self, y, lam, mu, rho):
        x = y * self.s
        f, g = self.p.objective(x)
        c, jc, d, jd = self.constraints(x)
        if not (math.isfinite(f) and np.all(np.isfinite(g)) and np.all(np.isfinite(c))
                and np.all(np.isfinite(d))):
            # reject: huge value makes the line search backtrack
            grad = self.last_good if self.last_good is not None else np.zeros_like(y)
            return 1e30, grad
        shifted = np.maximum(0.0, mu + rho * d)
        val = f + lam @ c + 0.5 * rho * (c @ c) + (shifted @ shifted - mu @ mu) / (2.0 * rho)
        grad = np.asarray(g, float) + jc.T @ (lam + rho * c) + jd.T @ shifted
        grad = grad * self.s
        self.last_good = grad
        return float(val), grad


    def pieces(self, y):
        """Objective, constraints and Jacobians in scaled variables (None if not finite)."""
        x = y * self.s
        f, g = self.p.objective(x)
        c, jc, d, jd = self.constraints(x)
        if not (math.isfinite(f) and np.all(np.isfinite(g)) and np.all(np.isfinite(c))
                and np.all(np.isfinite(d))):
            return None
        S = sp.diags(self.s)
        return (float(f), np.asarray(g, float) * self.s, c, sp.csr_matrix(jc) @ S, d,
                sp.csr_matrix(jd) @ S)


def _al_value(f, c, d, lam, mu, rho):
    shifted = np.maximum(0.0, mu + rho * d)
    return f + lam @ c + 0.5 * rho * (c @ c) + (shifted @ shifted - mu @ mu) / (2.0 * rho)


class _StructuredMemory:
    """Compact L-BFGS matrix ``B = delta I - W Q^{-1} W^T`` for the missing curvature.

    Pairs are ``(s, r)`` with ``r`` the change of the gradient not explained
    by the Gauss-Newton part; pairs without positive curvature are skipped.
    """

    def __init__(self, size: int):
        self.size = size
        self.S: list[np.ndarray] = []
        self.R: list[np.ndarray] = []

    def push(self, s, r) -> None:
        sr = float(s @ r)
        if sr <= 1e-10 * float(s @ s) or not math.isfinite(sr):
            return
        self.S.append(s)
        self.R.append(r)
        if len(self.S) > self.size:
            self.S.pop(0)
            self.R.pop(0)

    @property
    def delta(self) -> float:
        if not self.S:
            return 0.0
        # Rayleigh quotient of the newest pair: a mild initial matrix, since the
        # missing curvature usually lives in few directions
        s, r = self.S[-1], self.R[-1]
        return float(s @ r) / float(s @ s)

    def solve(self, A0, rhs, free):
        """Solve ``(A0 + B[free, free]) p = rhs`` with ``A0`` already holding ``delta I``."""
        lu = spla.splu(sp.csc_matrix(A0))
        p0 = lu.solve(rhs)
        if not self.S:
            return p0
        S = np.column_stack(self.S)[free]
        R = np.column_stack(self.R)[free]
        delta = self.delta
        StR = np.column_stack(self.S).T @ np.column_stack(self.R)
        L = np.tril(StR, -1)
        D = np.diag(np.diag(StR))
        Sfull = np.column_stack(self.S)
        Q = np.block([[delta * (Sfull.T @ Sfull), L], [L.T, -D]])
        W = np.hstack([delta * S, R])
        AW = lu.solve(W)
        inner = Q - W.T @ AW
        try:
            corr = np.linalg.solve(inner, W.T @ p0)
        except np.linalg.LinAlgError:
            return p0
        return p0 + AW @ corr


def _gauss_newton_inner(ev, y, lam, mu, rho, lb, ub, gtol, maxit, memory=8):
    """Projected Levenberg-Marquardt on the augmented Lagrangian; returns ``(y, iterations)``."""
    pc = ev.pieces(y)
    if pc is None:
        return y, 0
    damp = 1e-6
    qn = _StructuredMemory(memory)
    n = y.size
    it = 0
    for it in range(1, maxit + 1):
        f, g, c, jc, d, jd = pc
        val = _al_value(f, c, d, lam, mu, rho)
        shifted = np.maximum(0.0, mu + rho * d)
        grad = g + jc.T @ (lam + rho * c) + jd.T @ shifted
        pg = np.clip(y - grad, lb, ub) - y
        if np.max(np.abs(pg), initial=0.0) <= gtol:
            break
        # variables within eps of a bound that the gradient pushes against stay fixed
        # this step (Bertsekas epsilon-active set), so projection does not bend the step
        eps = min(1e-3, np.max(np.abs(pg), initial=0.0))
        at_lb = (y <= lb + eps) & (grad > 0.0)
        at_ub = (y >= ub - eps) & (grad < 0.0)
        free = ~(at_lb | at_ub) & (lb < ub)
        act = shifted > 0.0
        H_full = sp.csr_matrix(rho * (jc.T @ jc + jd[act].T @ jd[act]))
        H = H_full[free][:, free]
        diag = np.asarray(H.diagonal()) if H.shape[0] else np.zeros(0)
        scale = np.maximum(diag, 1.0)
        accepted = False
        while damp < 1e12:
            A = H + sp.diags(damp * scale + qn.delta)
            try:
                step_f = qn.solve(A, -grad[free], free)
            except RuntimeError:
                step_f = np.full(free.sum(), np.nan)
            if not np.all(np.isfinite(step_f)) or grad[free] @ step_f >= 0.0:
                damp *= 10.0
                continue
            step = np.zeros(n)
            step[free] = step_f
            alpha = 1.0
            for _ in range(30):
                y_new = np.clip(y + alpha * step, lb, ub)
                pn = ev.pieces(y_new)
                if pn is not None:
                    new_val = _al_value(pn[0], pn[2], pn[4], lam, mu, rho)
                    if new_val <= val + 1e-4 * grad @ (y_new - y):
                        accepted = True
                        break
                alpha *= 0.5
            if accepted:
                # full steps relax the damping, heavily cut steps mean a poor model
                if alpha == 1.0:
                    damp = max(damp / 3.0, 1e-12)
                elif alpha < 0.1:
                    damp *= 10.0
                break
            damp *= 10.0
        if not accepted:
            break
        inner_log.debug("gn %d: L=%.9g |pg|=%.2e alpha=%.3g damp=%.1e delta=%.1e free=%d active=%d",
                        it, new_val, np.max(np.abs(pg)), alpha, damp, qn.delta, free.sum(),
                        act.sum())
        step = y_new - y
        qn.push(step, _missing_curvature(step, grad, pn, lam, mu, rho, H_full))
        y, pc = y_new, pn
    return y, it


def _missing_curvature(s, grad, pieces, lam, mu, rho, H_full) -> np.ndarray:
    """Gradient change along ``s`` not explained by the Gauss-Newton matrix ``H_full``."""
    f, g, c, jc, d, jd = pieces
    shifted = np.maximum(0.0, mu + rho * d)
    grad_new = g + jc.T @ (lam + rho * c) + jd.T @ shifted
    return grad_new - grad - H_full @ s


def _violation(c, d):
    v = 0.0
    if c.size:
        v = max(v, float(np.max(np.abs(c))))
    if d.size:
        v = max(v, float(np.max(d)))
    return v


def _worst(problem, c, d):
    vc = np.abs(c) if c.size else np.zeros(0)
    vd = np.maximum(d, 0.0) if d.size else np.zeros(0)
    if vc.size and (not vd.size or vc.max() >= vd.max()):
        i = int(np.argmax(vc))
        label = problem.eq_labels(i) if problem.eq_labels else f"eq[{i}]"
        return f"{label} = {c[i]:.3e}"
    if vd.size:
        i = int(np.argmax(vd))
        label = problem.ineq_labels(i) if problem.ineq_labels else f"ineq[{i}]"
        return f"{label} = {d[i]:.3e}"
    return None


def kkt_residual(problem: NlpProblem, x, lam, mu) -> float:
    """Projected-gradient norm of the Lagrangian in scaled variables."""
    s = problem.x_scale
    _, g = problem.objective(x)
    _, jc = problem.eval_eq(x)
    _, jd = problem.eval_ineq(x)
    grad = (np.asarray(g, float) + jc.T @ lam + jd.T @ mu) * s
    y = x / s
    proj = np.clip(y - grad, problem.lb / s, problem.ub / s)
    return float(np.max(np.abs(proj - y))) if y.size else 0.0


def minimize(problem: NlpProblem, x_init, options: NlpOptions | None = None):
    """Solve ``problem`` from ``x_init``; returns ``(x, SolveReport)``."""
    opt = options or NlpOptions()
    s = problem.x_scale
    lb_y, ub_y = problem.lb / s, problem.ub / s
    x = np.clip(np.asarray(x_init, float), problem.lb, problem.ub)
    ev = _Evaluator(problem)

    f0, _ = problem.objective(x)
    c, _, d, _ = ev.constraints(x)
    if not (math.isfinite(f0) and np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
        raise ValueError("objective or constraints are not finite at the initial point")

    lam = np.zeros(c.size)
    mu = np.zeros(d.size)
    rho = opt.rho_init
    viol = _violation(c, d)
    history = [viol]
    omega = 1e-2
    eta = max(0.1, opt.tol_feas)
    inner_total = 0
    status = MAX_ITER
    residual = math.inf
    outer = 0

    for outer in range(1, opt.max_outer + 1):
        if opt.inner == "gauss_newton":
            y_new, nit = _gauss_newton_inner(ev, x / s, lam, mu, rho, lb_y, ub_y, omega,
                                             opt.max_inner)
        else:
            res = _scipy_minimize(
                ev.augmented,
                x / s,
                args=(lam, mu, rho),
                jac=True,
                method="L-BFGS-B",
                bounds=list(zip(lb_y, ub_y)),
                options={
                    "maxiter": opt.max_inner,
                    "maxfun": 4 * opt.max_inner,
                    "maxcor": opt.memory,
                    "gtol": omega,
                    "ftol": 1e-16,
                },
            )
            y_new, nit = res.x, int(res.nit)
        inner_total += nit
        x_new = np.clip(y_new * s, problem.lb, problem.ub)
        c_new, _, d_new, _ = ev.constraints(x_new)
        viol_new = _violation(c_new, d_new)
        if not math.isfinite(viol_new):
            status = DEGENERATE
            break

        if viol > opt.tol_feas and viol_new > viol and rho < opt.rho_max:
            # keep outer feasibility monotone: reject the iterate, retry with a larger penalty
            rho = min(rho * opt.rho_factor, opt.rho_max)
            omega = max(1e-2 / rho, 0.1 * opt.tol_opt)
            log.debug("outer %d: violation grew to %.3e, rejected; rho=%.1e", outer, viol_new, rho)
            continue

        x, c, d = x_new, c_new, d_new
        improved = viol_new <= 0.25 * viol or viol_new <= opt.tol_feas
        viol = viol_new
        history.append(viol)

        if viol <= eta or viol <= opt.tol_feas:
            lam = lam + rho * c
            mu = np.maximum(0.0, mu + rho * d)
            eta = max(eta / rho**0.9, opt.tol_feas)
            omega = max(omega / rho, 0.1 * opt.tol_opt)
        else:
            if not improved:
                rho = min(rho * opt.rho_factor, opt.rho_max)
            eta = max(0.1 / rho**0.1, opt.tol_feas)
            omega = max(1e-2 / rho, 0.1 * opt.tol_opt)

        residual = kkt_residual(problem, x, lam, mu)
        log.debug(
            "outer %d: f=%.6g viol=%.3e res=%.3e rho=%.1e inner=%d",
            outer, problem.objective(x)[0], viol, residual, rho, nit,
        )
        if viol <= opt.tol_feas and residual <= opt.tol_opt:
            status = CONVERGED
            break
        if rho >= opt.rho_max and viol > opt.tol_feas and not improved:
            status = INFEASIBLE
            break

    f_final, _ = problem.objective(x)
    if not math.isfinite(residual):
        residual = kkt_residual(problem, x, lam, mu)
    report = SolveReport(
        status=status,
        iterations=outer,
        inner_iterations=inner_total,
        objective=float(f_final),
        violation=viol,
        residual=residual,
        multipliers_eq=lam,
        multipliers_ineq=mu,
        violation_history=history,
        worst_constraint=_worst(problem, c, d),
    )
    return x, report


def _dense(j):
    return j.toarray() if sp.issparse(j) else np.atleast_2d(np.asarray(j, float))


def check_derivatives(problem: NlpProblem, x, h: float = 1e-6) -> float:
    """Worst row-wise relative mismatch of supplied derivatives vs central differences."""
    x = np.asarray(x, float)
    blocks = [(lambda z: np.atleast_1d(problem.objective(z)[0]),
               np.atleast_2d(np.asarray(problem.objective(x)[1], float)))]
    if problem.eq is not None:
        blocks.append((lambda z: problem.eq(z)[0], _dense(problem.eq(x)[1])))
    if problem.ineq is not None:
        blocks.append((lambda z: problem.ineq(z)[0], _dense(problem.ineq(x)[1])))
    worst = 0.0
    for fun, jac in blocks:
        if jac.size == 0:
            continue
        fd = np.zeros_like(jac)
        for i in range(x.size):
            step = h * max(1.0, abs(x[i]))
            e = np.zeros_like(x)
            e[i] = step
            fd[:, i] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2.0 * step)
        scale = np.max(np.abs(fd), axis=1)
        diff = np.max(np.abs(jac - fd), axis=1)
        mask = scale > 1e-10
        if np.any(mask):
            worst = max(worst, float(np.max(diff[mask] / scale[mask])))
        if np.any(~mask):
            worst = max(worst, float(np.max(diff[~mask])))
    return worst
