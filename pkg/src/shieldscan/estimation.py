"""Maximum likelihood estimation for the spectrum model.

``fit_null_em`` computes the constrained MLE of the intensities with all
mass thicknesses held at zero, using the multiplicative EM update for
Poisson mixtures; its log likelihood is nondecreasing across iterations and
strictly positive initial intensities remain positive.  ``fit_full``
maximizes over both mass thicknesses and intensities under nonnegativity
constraints with a monotone projected ascent (two-metric Newton steps with
backtracking) and reports the projected-gradient KKT residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import NonConvergenceError, UsageError
from .model import (
    AttenuationMatrix,
    DRFMatrix,
    ModelParams,
    Spectrum,
    _check_model_dims,
    attenuation_factors,
)

__all__ = ["FitResult", "log_likelihood", "fit_null_em", "fit_full"]

# invocation counters, used by tests to prove which fits a procedure ran
call_counts = {"fit_null_em": 0, "fit_full": 0}

_EM_MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class FitResult:
    """Outcome of a likelihood fit.

    ``criterion_value`` is the final relative L1 change of the parameter
    vector; ``converged`` implies it is below the requested tolerance.
    ``kkt_residual`` (full fits only) is the sup-norm of the projected
    gradient at the solution.
    """

    params: ModelParams
    log_likelihood: float
    iterations: int
    converged: bool
    criterion_value: float
    kkt_residual: float | None = None


def log_likelihood(
    params: ModelParams, drf: DRFMatrix, atten: AttenuationMatrix, spectrum: Spectrum
) -> float:
    """Poisson log likelihood -tau*sum U_i + sum Y_i log(tau U_i) - sum log(Y_i!).

    Returns -inf when some channel has zero mean but a positive count.
    """
    _check_model_dims(params, drf, atten)
    y = spectrum.counts
    if y.size != drf.n_channels:
        raise UsageError("spectrum length does not match the detector channels")
    mu = _mean_counts(params, drf, atten)
    if np.any((mu == 0) & (y > 0)):
        return float("-inf")
    yf = y.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = xlogy(yf, mu)
    return float(-mu.sum() + terms.sum() - gammaln(yf + 1.0).sum())


def _mean_counts(params, drf, atten):
    w = attenuation_factors(params, atten)
    a = params.b[drf.library.column_nuclide] * params.tau * w
    return drf.response @ a


def default_b_init(drf: DRFMatrix, spectrum: Spectrum, tau: float) -> np.ndarray:
    """Scale-correct moment start: spread the total count over the nuclides."""
    totals = drf.nuclide_totals().sum(axis=0)
    if np.any(totals <= 0):
        raise UsageError("a nuclide has zero total response")
    j = totals.size
    return np.maximum(spectrum.counts.sum(), 1.0) / (j * tau * totals)


def fit_null_em(
    drf: DRFMatrix,
    atten: AttenuationMatrix,
    spectrum: Spectrum,
    tau: float,
    b_init: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> FitResult:
    """Constrained MLE of b with all mass thicknesses fixed at zero.

    Iterates the multiplicative update

        b_k <- b_k * [sum_i Y_i S_ik. / U_i] / [tau * sum_i S_ik.]

    until the relative L1 change of b falls below ``tol``.  The likelihood
    is checked to be nondecreasing on every iteration.  If ``max_iter`` is
    exhausted the partial result is returned with ``converged=False``.
    """
    call_counts["fit_null_em"] += 1
    if tau <= 0:
        raise UsageError("tau must be positive")
    if atten.line_counts != drf.library.line_counts:
        raise UsageError("attenuation rows do not match the library's line layout")
    y = spectrum.counts.astype(float)
    if y.size != drf.n_channels:
        raise UsageError("spectrum length does not match the detector channels")
    s_tot = drf.nuclide_totals()  # (N, J): S_ij.
    colsum = s_tot.sum(axis=0)
    if np.any(colsum <= 0):
        raise UsageError("a nuclide has zero total response; cannot be fitted")

    m = atten.n_materials
    if y.sum() == 0:
        # all-zero spectrum: likelihood is -tau*sum U, maximized at b = 0
        params = ModelParams(x=np.zeros(m), b=np.zeros(colsum.size), tau=tau)
        ll = log_likelihood(params, drf, atten, spectrum)
        return FitResult(params, ll, 0, True, 0.0)

    if b_init is None:
        b = default_b_init(drf, spectrum, tau)
    else:
        b = np.asarray(b_init, dtype=float).copy()
        if b.shape != colsum.shape or np.any(b <= 0):
            raise UsageError("b_init must be strictly positive, one entry per nuclide")

    denom = tau * colsum
    ll_prev = _null_loglik(y, s_tot, b, tau)
    converged = False
    crit = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        u = s_tot @ b
        b_new = b * (s_tot.T @ (y / u)) / denom
        ll_new = _null_loglik(y, s_tot, b_new, tau)
        if not ll_new >= ll_prev - _EM_MONOTONE_SLACK * (abs(ll_prev) + 1.0):
            raise AssertionError(
                f"EM decreased the log likelihood at iteration {it}: "
                f"{ll_prev} -> {ll_new}"
            )
        crit = np.abs(b_new - b).sum() / np.abs(b).sum()
        b = b_new
        ll_prev = ll_new
        if crit < tol:
            converged = True
            break

    params = ModelParams(x=np.zeros(m), b=b, tau=tau)
    return FitResult(params, ll_prev, it, converged, float(crit))


def _null_loglik(y, s_tot, b, tau):
    mu = tau * (s_tot @ b)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = xlogy(y, mu)
    if np.any((mu == 0) & (y > 0)):
        return float("-inf")
    return float(-mu.sum() + terms.sum())  # constant term omitted inside EM


def fit_full(
    drf: DRFMatrix,
    atten: AttenuationMatrix,
    spectrum: Spectrum,
    tau: float,
    init: ModelParams | None = None,
    tol: float = 1e-9,
    max_iter: int = 1000,
) -> FitResult:
    """Unconstrained MLE over x >= 0, b >= 0 by monotone projected ascent.

    Steps are two-metric: Newton directions from the observed information
    on the inactive coordinates, gradient directions on coordinates pinned
    at the boundary, with Armijo backtracking on the projected move.  The
    returned ``kkt_residual`` is ||theta - P(theta + grad)||_inf.
    """
    from .inference import _score_blocks  # deferred to avoid an import cycle

    call_counts["fit_full"] += 1
    if tau <= 0:
        raise UsageError("tau must be positive")
    m = atten.n_materials
    j = drf.library.n_nuclides
    if init is None:
        init = ModelParams(
            x=np.zeros(m), b=default_b_init(drf, spectrum, tau), tau=tau
        )
    if init.x.size != m or init.b.size != j:
        raise UsageError("init has wrong dimensions")
    if np.any(init.b <= 0):
        raise UsageError("init intensities must be strictly positive")

    theta = np.concatenate([init.x, init.b])
    ll = log_likelihood(_params(theta, m, tau), drf, atten, spectrum)
    if not np.isfinite(ll):
        raise UsageError("log likelihood is not finite at the initial point")

    y = spectrum.counts.astype(float)
    converged = False
    crit = np.inf
    kkt = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad, hess = _grad_and_observed_info(theta, m, tau, drf, atten, y)
        kkt = _kkt_residual(theta, grad)
        step = _ascent_direction(theta, grad, hess)
        new_theta, new_ll, moved = _backtrack(
            theta, step, grad, ll, m, tau, drf, atten, spectrum
        )
        if not moved:
            # Newton direction failed to make progress; retry with gradient
            gstep = grad / (np.abs(np.diag(hess)).max() + 1.0)
            new_theta, new_ll, moved = _backtrack(
                theta, gstep, grad, ll, m, tau, drf, atten, spectrum
            )
        if not moved:
            break
        denom = np.abs(theta).sum()
        crit = np.abs(new_theta - theta).sum() / denom if denom > 0 else np.inf
        theta, ll = new_theta, new_ll
        if crit < tol:
            converged = True
            grad, _ = _grad_and_observed_info(theta, m, tau, drf, atten, y)
            kkt = _kkt_residual(theta, grad)
            break

    return FitResult(
        params=_params(theta, m, tau),
        log_likelihood=ll,
        iterations=it,
        converged=converged,
        criterion_value=float(crit),
        kkt_residual=float(kkt),
    )


def _params(theta, m, tau):
    return ModelParams(x=theta[:m], b=theta[m:], tau=tau)


def _kkt_residual(theta, grad):
    return float(np.max(np.abs(theta - np.maximum(theta + grad, 0.0))))


def _grad_and_observed_info(theta, m, tau, drf, atten, y):
    from .inference import _score_blocks, _observed_information

    params = _params(theta, m, tau)
    sx, sb, parts = _score_blocks(params, drf, atten, y)
    grad = np.concatenate([sx, sb])
    hess = _observed_information(params, atten, y, parts)
    return grad, hess


def _ascent_direction(theta, grad, hess):
    """Two-metric direction: Newton on free coordinates, gradient on active."""
    eps = 1e-10 * (1.0 + np.abs(theta).max())
    active = (theta <= eps) & (grad < 0)
    free = ~active
    d = np.where(active, grad, 0.0)
    if free.any():
        h = hess[np.ix_(free, free)]
        g = grad[free]
        scale = np.abs(np.diag(h)).max()
        ridge = 1e-10 * (scale if scale > 0 else 1.0)
        for _ in range(8):
            try:
                sol = np.linalg.solve(h + ridge * np.eye(h.shape[0]), g)
                if sol @ g >= 0:  # ascent direction w.r.t. the gradient
                    d[free] = sol
                    break
            except np.linalg.LinAlgError:
                pass
            ridge *= 100.0
        else:
            d[free] = g / (scale + 1.0)
    return d


def _backtrack(theta, step, grad, ll, m, tau, drf, atten, spectrum, c1=1e-4):
    alpha = 1.0
    for _ in range(40):
        cand = np.maximum(theta + alpha * step, 0.0)
        move = cand - theta
        if not move.any():
            alpha *= 0.5
            continue
        cand_ll = log_likelihood(_params(cand, m, tau), drf, atten, spectrum)
        if np.isfinite(cand_ll) and cand_ll >= ll + c1 * (grad @ move):
            return cand, cand_ll, True
        alpha *= 0.5
    return theta, ll, False
