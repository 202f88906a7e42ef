"""Maximum-likelihood estimation of random-intercept GLMMs.

The marginal likelihood of a random-intercept model factorizes over
clusters,

    L_i(beta, tau2) = integral exp(h_i(g)) dg / sqrt(2 pi tau2),
    h_i(g) = sum_j log f(y_ij | eta_ij = x_ij' beta + g) - g^2 / (2 tau2),

and the Laplace approximation replaces each integral with a second-order
expansion at the cluster mode g_i*:

    log L_i ~= h_i(g_i*) - 0.5 * log(tau2 * (-h_i''(g_i*))).

``fit_glmm`` maximizes the summed Laplace log-likelihood jointly over
(beta, theta) with theta = sqrt(tau2) bounded at zero, which keeps the
boundary fit tau2 = 0 reachable without a log-scale singularity.  The
module also carries three independent checks on that machinery: an
adaptive Gauss-Hermite integrator (brute-force version of the same
integral), a plain IRLS GLM (the tau2 = 0 limit), and a closed-form
profile-likelihood Gaussian LMM (the family for which Laplace is exact).
"""

from __future__ import annotations

import warnings as _pywarnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import expit, gammaln, logsumexp

from .model import DesignMatrices, Family

__all__ = [
    "FitControls",
    "GlmmFit",
    "GlmFit",
    "LmmFit",
    "marginal_loglik_laplace",
    "marginal_loglik_quadrature",
    "fit_glmm",
    "fit_glm",
    "fit_lmm_gaussian",
]

_PENALTY = 1e10  # stand-in objective value where the likelihood is non-finite


@dataclass(frozen=True)
class FitControls:
    """Tolerances and iteration caps for ``fit_glmm``."""

    outer_grad_tol: float = 1e-6
    inner_tol: float = 1e-10
    max_outer_iter: int = 200
    max_inner_iter: int = 50

    def __post_init__(self) -> None:
        for name in (
            "outer_grad_tol",
            "inner_tol",
            "max_outer_iter",
            "max_inner_iter",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class GlmmFit:
    """Result of a random-intercept GLMM fit.

    ``se`` holds Wald standard errors from the inverse negative
    numerical Hessian of the Laplace log-likelihood in beta, with the
    variance parameters held at their estimates.  ``modes`` are the
    per-cluster random-intercept modes at the optimum.  ``sigma2`` is
    the residual variance for the Gaussian family and ``None``
    otherwise.  Non-fatal issues (iteration caps, boundary variance,
    ill-conditioned Hessian) land in ``warnings``; the fit is returned
    regardless.
    """

    beta_hat: np.ndarray
    se: np.ndarray
    tau2_hat: float
    loglik: float
    modes: np.ndarray
    converged: bool
    warnings: tuple[str, ...]
    iterations: int
    sigma2: float | None = None


class GlmFit(NamedTuple):
    """Fixed-effects-only GLM fit (IRLS); ``scale`` is the ML residual
    variance for the Gaussian family and 1.0 otherwise."""

    beta: np.ndarray
    loglik: float
    converged: bool
    scale: float


@dataclass(frozen=True)
class LmmFit:
    """Gaussian random-intercept LMM fit (ML via profile likelihood)."""

    beta: np.ndarray
    tau2: float
    sigma2: float
    loglik: float
    warnings: tuple[str, ...] = field(default=())

    @property
    def icc(self) -> float:
        """tau2 / (tau2 + sigma2), 0.0 when the total variance is zero."""
        total = self.tau2 + self.sigma2
        return self.tau2 / total if total > 0 else 0.0


# ---------------------------------------------------------------------------
# Family math (canonical links throughout, so the eta-score is y - mu up to
# the Gaussian dispersion).
# ---------------------------------------------------------------------------


def _loglik_terms(family: Family, y: np.ndarray, eta: np.ndarray, scale: float) -> np.ndarray:
    if family is Family.BERNOULLI_LOGIT:
        return y * eta - np.logaddexp(0.0, eta)
    if family is Family.POISSON_LOG:
        with np.errstate(over="ignore"):
            mu = np.exp(eta)
        return y * eta - mu - gammaln(y + 1.0)
    return -0.5 * (y - eta) ** 2 / scale - 0.5 * np.log(2.0 * np.pi * scale)


def _mu_and_weight(
    family: Family, eta: np.ndarray, scale: float
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and negative second derivative of log f with respect to eta."""
    if family is Family.BERNOULLI_LOGIT:
        mu = expit(eta)
        return mu, mu * (1.0 - mu)
    if family is Family.POISSON_LOG:
        with np.errstate(over="ignore"):
            mu = np.exp(eta)
        return mu, mu
    return eta, np.full_like(eta, 1.0 / scale)


def _eta_score(family: Family, y: np.ndarray, mu: np.ndarray, scale: float) -> np.ndarray:
    if family is Family.GAUSSIAN_IDENTITY:
        return (y - mu) / scale
    return y - mu


# ---------------------------------------------------------------------------
# Inner problem: per-cluster penalized modes, vectorized across clusters.
# ---------------------------------------------------------------------------


class _Modes(NamedTuple):
    gamma: np.ndarray  # (K,) modes
    h: np.ndarray  # (K,) penalized log-likelihood at the modes
    curvature: np.ndarray  # (K,) -h'' at the modes (always positive)
    ok: bool


def _cluster_h(
    family: Family,
    y: np.ndarray,
    eta_fixed: np.ndarray,
    idx: np.ndarray,
    n_clusters: int,
    gamma: np.ndarray,
    tau2: float,
    scale: float,
) -> np.ndarray:
    eta = eta_fixed + gamma[idx]
    terms = _loglik_terms(family, y, eta, scale)
    with np.errstate(invalid="ignore"):
        h = np.bincount(idx, weights=terms, minlength=n_clusters)
    return h - 0.5 * gamma * gamma / tau2


def _solve_modes(
    family: Family,
    y: np.ndarray,
    eta_fixed: np.ndarray,
    idx: np.ndarray,
    n_clusters: int,
    tau2: float,
    scale: float,
    start: np.ndarray | None,
    tol: float,
    max_iter: int,
) -> _Modes:
    """Safeguarded Newton for all cluster modes simultaneously.

    Each cluster's objective h_i is concave for the canonical families,
    so the Newton step with per-cluster step-halving (at most 30
    halvings) increases h_i monotonically.
    """
    gamma = np.zeros(n_clusters) if start is None else np.array(start, dtype=float)
    h = _cluster_h(family, y, eta_fixed, idx, n_clusters, gamma, tau2, scale)
    if not np.all(np.isfinite(h)):
        # Retry from zero before giving up: a stale warm start can land in
        # an overflow region even when the problem itself is fine.
        gamma = np.zeros(n_clusters)
        h = _cluster_h(family, y, eta_fixed, idx, n_clusters, gamma, tau2, scale)
        if not np.all(np.isfinite(h)):
            return _Modes(gamma, h, np.full(n_clusters, np.nan), False)

    inv_tau2 = 1.0 / tau2
    converged = False
    for _ in range(max_iter):
        eta = eta_fixed + gamma[idx]
        mu, w = _mu_and_weight(family, eta, scale)
        score = (
            np.bincount(idx, weights=_eta_score(family, y, mu, scale), minlength=n_clusters)
            - gamma * inv_tau2
        )
        if float(np.max(np.abs(score))) <= tol:
            converged = True
            break
        curv = np.bincount(idx, weights=w, minlength=n_clusters) + inv_tau2
        step = score / curv
        trial = gamma + step
        h_new = _cluster_h(family, y, eta_fixed, idx, n_clusters, trial, tau2, scale)
        for _halving in range(30):
            bad = ~(h_new >= h - 1e-12)  # catches NaN/-inf as well
            if not np.any(bad):
                break
            step = np.where(bad, 0.5 * step, step)
            trial = gamma + step
            h_new = _cluster_h(family, y, eta_fixed, idx, n_clusters, trial, tau2, scale)
        gamma, h = trial, h_new
        if not np.all(np.isfinite(h)):
            return _Modes(gamma, h, np.full(n_clusters, np.nan), False)

    eta = eta_fixed + gamma[idx]
    _, w = _mu_and_weight(family, eta, scale)
    curv = np.bincount(idx, weights=w, minlength=n_clusters) + inv_tau2
    return _Modes(gamma, h, curv, converged and bool(np.all(np.isfinite(h))))


# ---------------------------------------------------------------------------
# Marginal log-likelihood: Laplace and adaptive Gauss-Hermite.
# ---------------------------------------------------------------------------


def marginal_loglik_laplace(
    design: DesignMatrices,
    y: np.ndarray,
    family: Family,
    beta: np.ndarray,
    tau2: float,
    *,
    scale: float = 1.0,
    inner_tol: float = 1e-10,
    max_inner_iter: int = 50,
    start_modes: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Laplace-approximate marginal log-likelihood and cluster modes.

    For ``tau2 == 0`` the random effect is degenerate and the exact GLM
    log-likelihood is returned with zero modes.  A non-finite likelihood
    (e.g. Poisson mean overflow) yields ``-inf`` rather than raising, so
    optimizers can treat it as an infeasible point.
    """
    if tau2 < 0:
        raise ValueError("tau2 must be non-negative")
    y = np.asarray(y, dtype=float)
    if y.shape[0] != design.n_obs:
        raise ValueError("outcome length does not match design")
    eta_fixed = design.X @ np.asarray(beta, dtype=float)
    n_clusters = design.n_clusters

    if tau2 == 0.0:
        terms = _loglik_terms(family, y, eta_fixed, scale)
        total = float(np.sum(terms))
        if not np.isfinite(total):
            total = -np.inf
        return total, np.zeros(n_clusters)

    modes = _solve_modes(
        family,
        y,
        eta_fixed,
        design.cluster_index,
        n_clusters,
        tau2,
        scale,
        start_modes,
        inner_tol,
        max_inner_iter,
    )
    per_cluster = modes.h - 0.5 * np.log(tau2 * modes.curvature)
    total = float(np.sum(per_cluster))
    if not (np.all(np.isfinite(per_cluster)) and np.isfinite(total)):
        return -np.inf, modes.gamma
    return total, modes.gamma


def marginal_loglik_quadrature(
    design: DesignMatrices,
    y: np.ndarray,
    family: Family,
    beta: np.ndarray,
    tau2: float,
    n_nodes: int,
    *,
    scale: float = 1.0,
    inner_tol: float = 1e-10,
    max_inner_iter: int = 50,
) -> float:
    """Adaptive Gauss-Hermite marginal log-likelihood.

    Nodes are centered at each cluster mode and scaled by the curvature
    there, so ``n_nodes = 1`` reproduces the Laplace value exactly and
    larger node counts converge to the true integral.  Used as the
    brute-force reference for :func:`marginal_loglik_laplace`.
    """
    if tau2 <= 0:
        raise ValueError("quadrature requires tau2 > 0")
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    y = np.asarray(y, dtype=float)
    eta_fixed = design.X @ np.asarray(beta, dtype=float)
    idx = design.cluster_index
    n_clusters = design.n_clusters

    modes = _solve_modes(
        family, y, eta_fixed, idx, n_clusters, tau2, scale, None, inner_tol, max_inner_iter
    )
    if not np.all(np.isfinite(modes.h)):
        return -np.inf
    spread = 1.0 / np.sqrt(modes.curvature)

    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    log_terms = np.empty((n_nodes, n_clusters))
    for k in range(n_nodes):
        gamma_k = modes.gamma + np.sqrt(2.0) * spread * nodes[k]
        h_k = _cluster_h(family, y, eta_fixed, idx, n_clusters, gamma_k, tau2, scale)
        log_terms[k] = np.log(weights[k]) + nodes[k] ** 2 + h_k
    per_cluster = (
        logsumexp(log_terms, axis=0)
        + np.log(np.sqrt(2.0) * spread)
        - 0.5 * np.log(2.0 * np.pi * tau2)
    )
    total = float(np.sum(per_cluster))
    return total if np.isfinite(total) else -np.inf


# ---------------------------------------------------------------------------
# Plain GLM by IRLS: starting values for the GLMM and its tau2 = 0 limit.
# ---------------------------------------------------------------------------


def fit_glm(
    design: DesignMatrices,
    y: np.ndarray,
    family: Family,
    *,
    grad_tol: float = 1e-10,
    max_iter: int = 100,
) -> GlmFit:
    """Iteratively reweighted least squares for the fixed-effects GLM."""
    X = design.X
    y = np.asarray(y, dtype=float)
    n = X.shape[0]

    if family is Family.GAUSSIAN_IDENTITY:
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ beta
        sigma2 = float(resid @ resid) / n
        if sigma2 <= 0.0:
            sigma2 = np.finfo(float).tiny
        loglik = float(np.sum(_loglik_terms(family, y, X @ beta, sigma2)))
        return GlmFit(beta, loglik, True, sigma2)

    beta = np.zeros(X.shape[1])
    loglik = float(np.sum(_loglik_terms(family, y, X @ beta, 1.0)))
    for _ in range(max_iter):
        eta = X @ beta
        mu, w = _mu_and_weight(family, eta, 1.0)
        grad = X.T @ (y - mu)
        if float(np.max(np.abs(grad))) <= grad_tol:
            break
        w = np.maximum(w, 1e-10)  # guard near-separation weights
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        beta_new, *_ = np.linalg.lstsq(X * sw[:, None], sw * z, rcond=None)
        ll_new = float(np.sum(_loglik_terms(family, y, X @ beta_new, 1.0)))
        step = beta_new - beta
        for _halving in range(30):
            if np.isfinite(ll_new) and ll_new >= loglik - 1e-10:
                break
            step *= 0.5
            ll_new = float(np.sum(_loglik_terms(family, y, X @ (beta + step), 1.0)))
        beta = beta + step
        if not np.isfinite(ll_new) or abs(ll_new - loglik) < 1e-14 * (1 + abs(loglik)):
            loglik = ll_new
            break
        loglik = ll_new
    mu, _ = _mu_and_weight(family, X @ beta, 1.0)
    converged = float(np.max(np.abs(X.T @ (y - mu)))) <= grad_tol
    loglik = float(np.sum(_loglik_terms(family, y, X @ beta, 1.0)))
    return GlmFit(beta, loglik, converged, 1.0)


# ---------------------------------------------------------------------------
# Gaussian LMM via profile likelihood over the variance ratio.
# ---------------------------------------------------------------------------


def fit_lmm_gaussian(design: DesignMatrices, y: np.ndarray) -> LmmFit:
    """ML Gaussian random-intercept LMM.

    Profiles beta and sigma2 in closed form given the variance ratio
    lam = tau2 / sigma2 (per-cluster Woodbury inverse), then optimizes
    the 1-D profile log-likelihood over log(lam), comparing against the
    lam = 0 boundary.
    """
    X = design.X
    y = np.asarray(y, dtype=float)
    idx = design.cluster_index
    sizes = design.cluster_sizes.astype(float)
    n, p = X.shape
    n_clusters = design.n_clusters
    if n_clusters < 2:
        raise ValueError("need at least 2 clusters")

    xtx = X.T @ X
    xty = X.T @ y
    sx = np.stack([np.bincount(idx, weights=X[:, j], minlength=n_clusters) for j in range(p)], axis=1)
    sy = np.bincount(idx, weights=y, minlength=n_clusters)

    def profile(lam: float) -> tuple[float, np.ndarray, float]:
        c = lam / (1.0 + lam * sizes)
        a = xtx - sx.T @ (c[:, None] * sx)
        b = xty - sx.T @ (c * sy)
        try:
            beta = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            beta, *_ = np.linalg.lstsq(a, b, rcond=None)
        resid = y - X @ beta
        sr = np.bincount(idx, weights=resid, minlength=n_clusters)
        rvr = float(resid @ resid - c @ (sr * sr))
        sigma2 = rvr / n
        if sigma2 <= 0.0:
            return -np.inf, beta, 0.0
        ll = -0.5 * n * (np.log(2.0 * np.pi * sigma2) + 1.0) - 0.5 * float(
            np.sum(np.log1p(lam * sizes))
        )
        return ll, beta, sigma2

    warn: list[str] = []
    ll0, beta0, sigma20 = profile(0.0)
    if not np.isfinite(ll0) and sigma20 == 0.0:
        # Residuals are exactly zero: boundary fit, ICC left to the caller.
        warn.append("degenerate outcome: zero residual variance")
        return LmmFit(beta0, 0.0, 0.0, np.inf, tuple(warn))

    # Coarse grid in log(lam), then a bounded refine around the best cell.
    grid = np.linspace(-25.0, 8.0, 34)
    ll_grid = np.array([profile(np.exp(u))[0] for u in grid])
    k = int(np.argmax(ll_grid))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(
        lambda u: -profile(np.exp(u))[0],
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    lam = float(np.exp(res.x))
    ll, beta, sigma2 = profile(lam)
    if ll0 >= ll:
        lam, ll, beta, sigma2 = 0.0, ll0, beta0, sigma20
        warn.append("random-intercept variance at boundary (tau2 = 0)")
    tau2 = lam * sigma2
    return LmmFit(beta, tau2, sigma2, float(ll), tuple(warn))


# ---------------------------------------------------------------------------
# Joint Laplace ML fit.
# ---------------------------------------------------------------------------


def _fd_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    f0: float,
    rel_step: float,
    lower: np.ndarray,
) -> np.ndarray:
    """Central-difference gradient, one-sided where a lower bound is near.

    The one-sided branch matters at theta = 0: the objective is even in
    theta, so a central difference across the bound would report a zero
    slope even when increasing theta improves the fit.
    """
    g = np.empty_like(x)
    for k in range(x.size):
        h = rel_step * (1.0 + abs(x[k]))
        if x[k] - h < lower[k]:
            e = np.zeros_like(x)
            e[k] = 1.0
            f1 = f(x + h * e)
            f2 = f(x + 2.0 * h * e)
            g[k] = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
        else:
            e = np.zeros_like(x)
            e[k] = 1.0
            g[k] = (f(x + h * e) - f(x - h * e)) / (2.0 * h)
    return g


def _moment_theta(
    design: DesignMatrices, y: np.ndarray, family: Family, beta: np.ndarray, scale: float
) -> float:
    """Method-of-moments starting value for theta = sqrt(tau2).

    One Newton step from zero gives crude per-cluster offsets; their
    spread, less the average sampling noise, estimates tau2.
    """
    eta = design.X @ beta
    mu, w = _mu_and_weight(family, eta, scale)
    idx = design.cluster_index
    n_clusters = design.n_clusters
    s = np.bincount(idx, weights=_eta_score(family, y, mu, scale), minlength=n_clusters)
    info = np.maximum(np.bincount(idx, weights=w, minlength=n_clusters), 1e-8)
    offsets = s / info
    vhat = float(np.mean(offsets**2) - np.mean(1.0 / info))
    return float(np.sqrt(np.clip(vhat, 1e-4, 100.0)))


def fit_glmm(
    design: DesignMatrices,
    y: np.ndarray,
    family: Family,
    controls: FitControls = FitControls(),
    *,
    compute_se: bool = True,
) -> GlmmFit:
    """Maximize the Laplace marginal log-likelihood over (beta, theta).

    Quasi-Newton (L-BFGS-B) on beta and theta = sqrt(tau2) >= 0, with
    bound-aware central-difference gradients; for the Gaussian family
    log(sigma) joins the parameter vector.  Starting values are the IRLS
    GLM fit and a method-of-moments theta.  Standard errors condition on
    the estimated variance parameters (numerical Hessian in beta only).
    Convergence trouble is reported through ``warnings`` and the
    ``converged`` flag; the fit is always returned.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[0] != design.n_obs:
        raise ValueError("outcome length does not match design")
    if design.n_clusters < 2:
        raise ValueError("need at least 2 clusters")
    family.validate_outcomes(y)

    p = design.n_params
    gaussian = family is Family.GAUSSIAN_IDENTITY
    warn: list[str] = []

    glm = fit_glm(design, y, family)
    if not glm.converged:
        warn.append("starting GLM (IRLS) did not converge")
    theta0 = _moment_theta(design, y, family, glm.beta, glm.scale)

    x0 = np.concatenate([glm.beta, [theta0]])
    lower = np.full(p + 1, -np.inf)
    lower[p] = 0.0
    if gaussian:
        x0 = np.concatenate([x0, [0.5 * np.log(glm.scale)]])
        lower = np.concatenate([lower, [-np.inf]])

    warm: dict[str, np.ndarray | None] = {"modes": None}

    def negll(x: np.ndarray) -> float:
        beta = x[:p]
        tau2 = float(x[p]) ** 2
        scale = float(np.exp(2.0 * x[p + 1])) if gaussian else 1.0
        ll, modes = marginal_loglik_laplace(
            design,
            y,
            family,
            beta,
            tau2,
            scale=scale,
            inner_tol=controls.inner_tol,
            max_inner_iter=controls.max_inner_iter,
            start_modes=warm["modes"],
        )
        if not np.isfinite(ll):
            return _PENALTY
        warm["modes"] = modes
        return -ll

    def negll_grad(x: np.ndarray) -> np.ndarray:
        return _fd_gradient(negll, x, negll(x), 1e-6, lower)

    bounds = [(None, None)] * p + [(0.0, None)]
    if gaussian:
        bounds.append((None, None))
    with _pywarnings.catch_warnings():
        _pywarnings.simplefilter("ignore")  # L-BFGS-B line-search chatter
        result = minimize(
            negll,
            x0,
            jac=negll_grad,
            method="L-BFGS-B",
            bounds=bounds,
            options={
                "maxiter": controls.max_outer_iter,
                "ftol": 1e-13,
                "gtol": 0.1 * controls.outer_grad_tol,
            },
        )
    x_hat = np.asarray(result.x, dtype=float)
    if not result.success:
        message = result.message if isinstance(result.message, str) else str(result.message)
        warn.append(f"outer optimizer: {message.strip()}")

    beta_hat = x_hat[:p]
    theta_hat = float(x_hat[p])
    tau2_hat = theta_hat**2
    sigma2_hat = float(np.exp(2.0 * x_hat[p + 1])) if gaussian else None
    scale_hat = sigma2_hat if gaussian else 1.0
    if theta_hat < 1e-6:
        theta_hat = 0.0
        tau2_hat = 0.0
        x_hat[p] = 0.0
        warn.append("random-intercept variance at boundary (tau2 = 0)")

    # Cold-start final evaluation so the reported fit does not depend on
    # the optimizer's evaluation history.
    loglik, modes = marginal_loglik_laplace(
        design,
        y,
        family,
        beta_hat,
        tau2_hat,
        scale=scale_hat,
        inner_tol=controls.inner_tol,
        max_inner_iter=controls.max_inner_iter,
    )

    # Convergence = small projected gradient at the solution (one-sided at
    # the theta bound, coarser FD step for noise robustness).
    warm["modes"] = None
    f_hat = negll(x_hat)
    if f_hat >= _PENALTY:
        grad_ok = False
        warn.append("non-finite likelihood at the returned estimate")
    else:
        g = _fd_gradient(negll, x_hat, f_hat, 1e-5, lower)
        pg = g.copy()
        at_bound = x_hat <= lower + 1e-8
        pg[at_bound] = np.minimum(g[at_bound], 0.0)
        grad_ok = bool(np.max(np.abs(pg)) <= controls.outer_grad_tol)
    converged = grad_ok and np.isfinite(loglik)
    if not grad_ok:
        warn.append("outer gradient above tolerance at the returned estimate")

    se = np.full(p, np.nan)
    if compute_se and np.isfinite(loglik):
        se, hess_warn = _wald_se(
            design, y, family, beta_hat, tau2_hat, scale_hat, controls
        )
        warn.extend(hess_warn)

    return GlmmFit(
        beta_hat=beta_hat,
        se=se,
        tau2_hat=tau2_hat,
        loglik=float(loglik),
        modes=modes,
        converged=converged,
        warnings=tuple(warn),
        iterations=int(result.nit),
        sigma2=sigma2_hat,
    )


def _wald_se(
    design: DesignMatrices,
    y: np.ndarray,
    family: Family,
    beta: np.ndarray,
    tau2: float,
    scale: float,
    controls: FitControls,
) -> tuple[np.ndarray, list[str]]:
    """Central-difference Hessian of the Laplace log-likelihood in beta."""
    p = beta.size
    warm: dict[str, np.ndarray | None] = {"modes": None}

    def ll(b: np.ndarray) -> float:
        value, modes = marginal_loglik_laplace(
            design,
            y,
            family,
            b,
            tau2,
            scale=scale,
            inner_tol=controls.inner_tol,
            max_inner_iter=controls.max_inner_iter,
            start_modes=warm["modes"],
        )
        if np.isfinite(value):
            warm["modes"] = None if modes is None else modes
        return value

    steps = 1e-4 * (1.0 + np.abs(beta))
    f0 = ll(beta)
    hess = np.empty((p, p))
    warn: list[str] = []
    for j in range(p):
        ej = np.zeros(p)
        ej[j] = steps[j]
        hess[j, j] = (ll(beta + ej) - 2.0 * f0 + ll(beta - ej)) / steps[j] ** 2
    for j in range(p):
        for k in range(j + 1, p):
            ej = np.zeros(p)
            ek = np.zeros(p)
            ej[j] = steps[j]
            ek[k] = steps[k]
            val = (
                ll(beta + ej + ek)
                - ll(beta + ej - ek)
                - ll(beta - ej + ek)
                + ll(beta - ej - ek)
            ) / (4.0 * steps[j] * steps[k])
            hess[j, k] = hess[k, j] = val

    if not np.all(np.isfinite(hess)):
        warn.append("non-finite Hessian; standard errors unavailable")
        return np.full(p, np.nan), warn
    neg_hess = -hess
    try:
        cov = np.linalg.inv(neg_hess)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(neg_hess)
        warn.append("ill-conditioned Hessian; pseudo-inverse standard errors")
    diag = np.diag(cov).copy()
    if np.any(diag <= 0):
        warn.append("ill-conditioned Hessian; non-positive variance estimates")
        diag[diag <= 0] = np.nan
    return np.sqrt(diag), warn
