"""Bounded damped Gauss-Newton for small nonlinear least-squares problems.

Minimizes mean(r(x)**2) over a box. The step solves the damped normal
equations (J'J + lam*diag(J'J)) dx = -J'r and is projected onto the box;
rejected steps raise the damping, accepted steps lower it.
"""

import typing as _ty

import numpy as _np

ResidualFn = _ty.Callable[[_np.ndarray], _np.ndarray]

REL_STEP = 1e-6
ABS_STEP = 1e-9


class LsqResult(_ty.NamedTuple):
    x: _np.ndarray
    cost: float
    residuals: _np.ndarray
    iterations: int
    converged: bool
    message: str


def _steps(x: _np.ndarray, rel_step: float, abs_step: float) -> _np.ndarray:
    return _np.maximum(rel_step * _np.abs(x), abs_step)


def forward_jacobian(
    fun: ResidualFn,
    x: _np.ndarray,
    r0: _np.ndarray = None,
    *,
    upper: _np.ndarray = None,
    rel_step: float = REL_STEP,
    abs_step: float = ABS_STEP,
) -> _np.ndarray:
    """One sided differences; steps flip sign rather than leave the box."""
    x = _np.asarray(x, dtype=float)
    if r0 is None:
        r0 = fun(x)
    h = _steps(x, rel_step, abs_step)
    if upper is not None:
        h = _np.where(x + h > upper, -h, h)
    jac = _np.empty((r0.size, x.size))
    for j in range(x.size):
        xj = x.copy()
        xj[j] += h[j]
        jac[:, j] = (fun(xj) - r0) / h[j]
    return jac


def central_jacobian(
    fun: ResidualFn,
    x: _np.ndarray,
    *,
    rel_step: float = REL_STEP,
    abs_step: float = ABS_STEP,
) -> _np.ndarray:
    x = _np.asarray(x, dtype=float)
    h = _steps(x, rel_step, abs_step)
    columns = []
    for j in range(x.size):
        up, down = x.copy(), x.copy()
        up[j] += h[j]
        down[j] -= h[j]
        columns.append((fun(up) - fun(down)) / (2 * h[j]))
    return _np.stack(columns, axis=1)


def _projected_gradient(grad, x, lower, upper):
    blocked = ((x <= lower) & (grad > 0)) | ((x >= upper) & (grad < 0))
    return _np.where(blocked, 0.0, grad)


def damped_gauss_newton(
    fun: ResidualFn,
    x0: _ty.Sequence[float],
    lower: _ty.Sequence[float],
    upper: _ty.Sequence[float],
    *,
    max_iter: int = 300,
    ftol: float = 1e-9,
    gtol: float = 1e-14,
    damping: float = 1e-3,
    max_damping: float = 1e12,
) -> LsqResult:
    lower = _np.asarray(lower, dtype=float)
    upper = _np.asarray(upper, dtype=float)
    x = _np.clip(_np.asarray(x0, dtype=float), lower, upper)
    r = fun(x)
    n = r.size
    cost = float(r @ r) / n
    lam = damping

    for iteration in range(1, max_iter + 1):
        if cost == 0.0:
            return LsqResult(x, cost, r, iteration - 1, True, "zero residual")

        jac = forward_jacobian(fun, x, r, upper=upper)
        grad = jac.T @ r
        pgrad = _projected_gradient(grad, x, lower, upper)
        if _np.max(_np.abs(pgrad)) * 2 / n <= gtol:
            return LsqResult(x, cost, r, iteration - 1, True, "gradient tolerance")

        normal = jac.T @ jac
        diag = _np.diag(normal).copy()
        diag[diag == 0] = 1.0
        while True:
            try:
                step = _np.linalg.solve(normal + lam * _np.diag(diag), -grad)
            except _np.linalg.LinAlgError:
                step = None
            if step is not None and _np.all(_np.isfinite(step)):
                x_new = _np.clip(x + step, lower, upper)
                r_new = fun(x_new)
                cost_new = float(r_new @ r_new) / n
                if _np.isfinite(cost_new) and cost_new < cost:
                    break
            lam *= 10
            if lam > max_damping:
                return LsqResult(x, cost, r, iteration, False, "no descent step")

        decrease = (cost - cost_new) / cost
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / 10, 1e-12)
        if decrease < ftol:
            return LsqResult(x, cost, r, iteration, True, "relative decrease")

    return LsqResult(x, cost, r, max_iter, False, "iteration cap")
