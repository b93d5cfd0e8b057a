"""Gaussian-process regression over box domains and circular domains.

Two kernels are provided: an anisotropic (ARD) squared-exponential for
vector inputs, and a polar kernel that yields valid covariance matrices
between angles, so that radii sampled around a closed curve can be
interpolated without a seam at 0/2pi.

Models are plain data: construct a :class:`GPModel` directly for fixed
hyper-parameters (e.g. noiseless interpolation), or call
:func:`fit_hyperparameters` to maximise the log marginal likelihood.
Posterior queries are read-only and safe to run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.stats import qmc

ARD_SE = "ard-squared-exponential"
POLAR = "polar"

TWO_PI = 2.0 * np.pi

# Cholesky retry ladder; each value is scaled by the mean covariance diagonal.
_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)

# Default hyper-parameter boxes used by fit_hyperparameters.  Lengthscales are
# expressed relative to the (normalised) unit input range, signal and noise
# variances relative to standardised targets.
LENGTHSCALE_BOUNDS = (1e-2, 1e2)
SIGNAL_BOUNDS = (1e-6, 1e2)
NOISE_BOUNDS = (1e-8, 1e-1)
TAU_BOUNDS = (4.0, 64.0)


class FactorizationError(RuntimeError):
    """Raised when the training covariance cannot be factorised even after
    the full jitter ladder has been applied."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel description.

    ``kind`` is either ``"ard-squared-exponential"`` (requires
    ``lengthscales`` and ``signal_variance``) or ``"polar"`` (requires
    ``tau >= 4``; smaller values do not guarantee positive
    semi-definiteness on the circle).
    """

    kind: str
    lengthscales: tuple[float, ...] | None = None
    signal_variance: float | None = None
    tau: float | None = None

    def __post_init__(self):
        if self.kind == ARD_SE:
            if self.lengthscales is None or self.signal_variance is None:
                raise ValueError("ARD kernel requires lengthscales and signal_variance")
            ls = tuple(float(v) for v in self.lengthscales)
            if any(v <= 0 for v in ls):
                raise ValueError("lengthscales must be strictly positive")
            if self.signal_variance <= 0:
                raise ValueError("signal_variance must be strictly positive")
            object.__setattr__(self, "lengthscales", ls)
        elif self.kind == POLAR:
            if self.tau is None or self.tau < 4.0:
                raise ValueError("polar kernel requires tau >= 4")
        else:
            raise ValueError(f"unknown kernel kind: {self.kind!r}")

    @classmethod
    def ard(cls, lengthscales, signal_variance=1.0) -> "KernelSpec":
        return cls(ARD_SE, lengthscales=tuple(np.atleast_1d(lengthscales).astype(float)),
                   signal_variance=float(signal_variance))

    @classmethod
    def polar(cls, tau=4.0) -> "KernelSpec":
        return cls(POLAR, tau=float(tau))

    @property
    def dim(self) -> int:
        return 1 if self.kind == POLAR else len(self.lengthscales)

    @property
    def prior_variance(self) -> float:
        return 1.0 if self.kind == POLAR else float(self.signal_variance)


def polar_distance(theta, theta_prime):
    """Angular separation |(t - t' + pi) mod 2pi - pi|, in [0, pi].

    Total on all finite inputs; the floored modulus handles wrap-around, so
    arguments need not lie in any particular interval.
    """
    # The distance is even in the difference; folding the sign first makes
    # symmetry bit-exact under floating point.
    delta = np.abs(np.asarray(theta, dtype=float) - np.asarray(theta_prime, dtype=float))
    return np.abs(np.mod(delta + np.pi, TWO_PI) - np.pi)


def polar_kernel(theta, theta_prime, tau=4.0):
    """Correlation |(1 + tau d/pi)(1 - d/pi)^tau| between two angles.

    ``d`` is :func:`polar_distance`.  The value lies in [0, 1] and equals 1
    exactly when the angles coincide on the circle.  ``tau >= 4`` is required
    for a valid covariance; larger values give rougher priors.
    """
    if tau < 4.0:
        raise ValueError("tau must be >= 4 for a valid polar covariance")
    u = polar_distance(theta, theta_prime) / np.pi
    return np.abs((1.0 + tau * u) * (1.0 - u) ** tau)


def ard_se_kernel(x, x_prime, spec: KernelSpec):
    """Squared-exponential covariance with one lengthscale per dimension."""
    if spec.kind != ARD_SE:
        raise ValueError("spec must describe an ARD squared-exponential kernel")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    ls = np.asarray(spec.lengthscales)
    if x.shape[-1] != ls.size or x_prime.shape[-1] != ls.size:
        raise ValueError("input dimension does not match kernel lengthscales")
    r2 = np.sum(((x - x_prime) / ls) ** 2, axis=-1)
    return spec.signal_variance * np.exp(-0.5 * r2)


def kernel_matrix(spec: KernelSpec, a, b=None) -> np.ndarray:
    """Covariance matrix between two point sets (rows are points)."""
    a = _as_inputs(a)
    b = a if b is None else _as_inputs(b)
    if spec.kind == POLAR:
        return polar_kernel(a[:, :1], b[:, :1].T, spec.tau)
    ls = np.asarray(spec.lengthscales)
    if a.shape[1] != ls.size or b.shape[1] != ls.size:
        raise ValueError("input dimension does not match kernel lengthscales")
    an = a / ls
    bn = b / ls
    r2 = (
        np.sum(an**2, axis=1)[:, None]
        + np.sum(bn**2, axis=1)[None, :]
        - 2.0 * an @ bn.T
    )
    np.maximum(r2, 0.0, out=r2)
    return spec.signal_variance * np.exp(-0.5 * r2)


def kernel_correlation(spec: KernelSpec, a, b) -> np.ndarray:
    """Row-wise kernel correlation k(a_i, b_i) / k(x, x), in [0, 1]."""
    a = _as_inputs(a)
    b = _as_inputs(b)
    if spec.kind == POLAR:
        return polar_kernel(a[:, 0], b[:, 0], spec.tau)
    ls = np.asarray(spec.lengthscales)
    r2 = np.sum(((a - b) / ls) ** 2, axis=1)
    return np.exp(-0.5 * r2)


def _as_inputs(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1)
    return x


@dataclass
class GPModel:
    """Gaussian-process regressor with a constant prior mean.

    ``train_inputs`` has one row per observation (angles in radians for the
    polar kernel).  ``noise_variance`` of zero gives exact interpolation,
    subject to the jitter ladder used during factorisation.
    """

    kernel: KernelSpec
    train_inputs: np.ndarray
    train_targets: np.ndarray
    noise_variance: float = 0.0
    prior_mean: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)
    _factor: tuple | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.train_inputs = _as_inputs(self.train_inputs)
        self.train_targets = np.asarray(self.train_targets, dtype=float).ravel()
        if self.train_inputs.shape[0] != self.train_targets.size:
            raise ValueError("train_inputs and train_targets must have the same length")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")

    @property
    def n_train(self) -> int:
        return self.train_targets.size

    def factorization(self):
        """Cholesky factor of K + (noise + jitter) I, cached after first use."""
        if self._factor is None:
            self._factor = _factorize(self)
        return self._factor


def _factorize(model: GPModel):
    k = kernel_matrix(model.kernel, model.train_inputs)
    n = k.shape[0]
    scale = float(np.mean(np.diag(k))) if n else 1.0
    last_err = None
    for jitter in _JITTERS:
        try:
            chol = linalg.cholesky(
                k + (model.noise_variance + jitter * scale) * np.eye(n), lower=True
            )
            resid = model.train_targets - model.prior_mean
            alpha = linalg.cho_solve((chol, True), resid)
            return chol, alpha, jitter * scale
        except linalg.LinAlgError as err:
            last_err = err
    cond = np.linalg.cond(k) if n <= 500 else float("inf")
    raise FactorizationError(
        f"covariance not positive definite after jitter ladder up to "
        f"{_JITTERS[-1] * scale:.1e} (n={n}, cond~{cond:.2e}, "
        f"diag range [{np.min(np.diag(k)):.3e}, {np.max(np.diag(k)):.3e}]): {last_err}"
    )


def gp_posterior(model: GPModel, query) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation at the query points.

    Standard conditioning with a constant prior mean m:

        mu    = m + K(Q, X) [K(X, X) + sn^2 I]^-1 (y - m)
        var   = k(Q, Q) - K(Q, X) [...]^-1 K(X, Q)

    Variances are clamped at zero from below before the square root.

    Parameters
    ----------
    model : GPModel
    query : array_like, shape (m, d) or (m,) for one-dimensional inputs

    Returns
    -------
    (means, stds) : pair of arrays of shape (m,)
    """
    q = _as_inputs(query)
    prior_var = model.kernel.prior_variance
    if model.n_train == 0:
        mean = np.full(q.shape[0], model.prior_mean)
        std = np.full(q.shape[0], math.sqrt(prior_var))
        return mean, std
    chol, alpha, _ = model.factorization()
    k_cross = kernel_matrix(model.kernel, q, model.train_inputs)
    mean = model.prior_mean + k_cross @ alpha
    v = linalg.solve_triangular(chol, k_cross.T, lower=True)
    var = prior_var - np.sum(v**2, axis=0)
    np.maximum(var, 0.0, out=var)
    return mean, np.sqrt(var)


def log_marginal_likelihood(model: GPModel) -> float:
    """Log marginal likelihood of the training targets under the model."""
    if model.n_train == 0:
        return 0.0
    chol, alpha, _ = model.factorization()
    resid = model.train_targets - model.prior_mean
    return float(
        -0.5 * resid @ alpha
        - np.sum(np.log(np.diag(chol)))
        - 0.5 * model.n_train * math.log(2.0 * math.pi)
    )


def fit_hyperparameters(
    inputs,
    targets,
    kernel_kind: str = ARD_SE,
    *,
    noise="fit",
    seed: int = 0,
    n_restarts: int = 4,
    input_bounds=None,
    lengthscale_bounds=LENGTHSCALE_BOUNDS,
    signal_bounds=SIGNAL_BOUNDS,
    noise_bounds=NOISE_BOUNDS,
    tau_bounds=TAU_BOUNDS,
    initial_log_hypers=None,
    max_opt_iter: int = 60,
) -> GPModel:
    """Fit kernel hyper-parameters by maximising the log marginal likelihood.

    Multi-start bounded local search (L-BFGS-B over log hyper-parameters),
    with restarts drawn from a Latin hypercube in the log box; deterministic
    for a given ``seed``.  Inputs are normalised to the unit box (box taken
    from ``input_bounds`` when given, else from the data) and targets are
    standardised before fitting; the returned model is expressed back in the
    original units, with the prior mean set to the target mean.

    Parameters
    ----------
    inputs : array_like, shape (n, d)
    targets : array_like, shape (n,)
    kernel_kind : {"ard-squared-exponential", "polar"}
    noise : "fit" or float
        Fit the noise variance within ``noise_bounds`` (standardised units)
        or pin it to a fixed raw value.
    input_bounds : array_like, shape (d, 2), optional
        Normalisation box; pass the design-space bounds when lengthscales
        must be comparable across refits on growing data.
    initial_log_hypers : array_like, optional
        Warm start in the internal log parameterisation (used as the first
        restart; see ``meta["log_hypers"]`` of a previous fit).

    Returns
    -------
    GPModel
        ``meta`` carries the achieved log marginal likelihood, the value at
        each restart's starting point, and a ``warning`` flag set when every
        restart failed and defaults were returned.
    """
    x = _as_inputs(inputs)
    y = np.asarray(targets, dtype=float).ravel()
    n, d = x.shape
    if n < 2:
        raise ValueError("hyper-parameter fitting requires at least 2 data points")
    if n != y.size:
        raise ValueError("inputs and targets must have the same length")

    if kernel_kind == POLAR and d != 1:
        raise ValueError("polar kernel expects one-dimensional angle inputs")

    # Normalise inputs; the polar kernel keeps raw radians (periodic domain).
    if kernel_kind == POLAR:
        lo = np.zeros(d)
        rng_width = np.ones(d)
    elif input_bounds is not None:
        b = np.asarray(input_bounds, dtype=float).reshape(d, 2)
        lo, hi = b[:, 0], b[:, 1]
        rng_width = np.where(hi - lo > 0, hi - lo, 1.0)
    else:
        lo = x.min(axis=0)
        rng_width = x.max(axis=0) - lo
        rng_width = np.where(rng_width > 0, rng_width, 1.0)
    xn = (x - lo) / rng_width

    y_shift = float(np.mean(y))
    y_scale = float(np.std(y))
    if y_scale < 1e-12:
        y_scale = 1.0
    yn = (y - y_shift) / y_scale

    fit_noise = noise == "fit"
    if not fit_noise:
        fixed_noise_std = float(noise) / y_scale**2

    if kernel_kind == ARD_SE:
        lower = [math.log(lengthscale_bounds[0])] * d + [math.log(signal_bounds[0])]
        upper = [math.log(lengthscale_bounds[1])] * d + [math.log(signal_bounds[1])]
    elif kernel_kind == POLAR:
        lower = [math.log(tau_bounds[0])]
        upper = [math.log(tau_bounds[1])]
    else:
        raise ValueError(f"unknown kernel kind: {kernel_kind!r}")
    if fit_noise:
        lower.append(math.log(noise_bounds[0]))
        upper.append(math.log(noise_bounds[1]))
    lower = np.array(lower)
    upper = np.array(upper)
    n_hyp = lower.size

    if kernel_kind == ARD_SE:
        # Per-dimension squared distances, reused by every likelihood call.
        d2 = np.stack([(xn[:, k][:, None] - xn[:, k][None, :]) ** 2 for k in range(d)])

        def nll_and_grad(theta):
            ls = np.exp(theta[:d])
            sf2 = math.exp(theta[d])
            sn2 = math.exp(theta[d + 1]) if fit_noise else fixed_noise_std
            e = np.exp(-0.5 * np.tensordot(1.0 / ls**2, d2, axes=1))
            k = sf2 * e + (sn2 + 1e-10) * np.eye(n)
            try:
                chol = linalg.cholesky(k, lower=True)
            except linalg.LinAlgError:
                return 1e25, np.zeros(n_hyp)
            alpha = linalg.cho_solve((chol, True), yn)
            nll = (
                0.5 * yn @ alpha
                + np.sum(np.log(np.diag(chol)))
                + 0.5 * n * math.log(2.0 * math.pi)
            )
            kinv = linalg.cho_solve((chol, True), np.eye(n))
            w = np.outer(alpha, alpha) - kinv
            grad = np.empty(n_hyp)
            se = sf2 * e
            for kdim in range(d):
                dk = se * (d2[kdim] / ls[kdim] ** 2)
                grad[kdim] = -0.5 * np.sum(w * dk)
            grad[d] = -0.5 * np.sum(w * se)
            if fit_noise:
                grad[d + 1] = -0.5 * sn2 * np.trace(w)
            return nll, grad

        use_grad = True
    else:

        def nll_and_grad(theta):
            tau = math.exp(theta[0])
            sn2 = math.exp(theta[1]) if fit_noise else fixed_noise_std
            k = polar_kernel(xn[:, :1], xn[:, :1].T, tau) + (sn2 + 1e-10) * np.eye(n)
            try:
                chol = linalg.cholesky(k, lower=True)
            except linalg.LinAlgError:
                return 1e25
            alpha = linalg.cho_solve((chol, True), yn)
            return float(
                0.5 * yn @ alpha
                + np.sum(np.log(np.diag(chol)))
                + 0.5 * n * math.log(2.0 * math.pi)
            )

        use_grad = False

    # Restart set: warm start (or box midpoint), then Latin-hypercube draws.
    starts = [np.asarray(initial_log_hypers, dtype=float)
              if initial_log_hypers is not None else 0.5 * (lower + upper)]
    starts[0] = np.clip(starts[0], lower, upper)
    n_extra = max(0, n_restarts - 1)
    if n_extra:
        sampler = qmc.LatinHypercube(d=n_hyp, seed=np.random.default_rng([seed, 911]))
        unit = sampler.random(n_extra)
        starts.extend(lower + unit * (upper - lower))

    best_theta = None
    best_val = np.inf
    start_lmls = []
    final_lmls = []
    warning = False
    for theta0 in starts:
        try:
            if use_grad:
                v0 = nll_and_grad(theta0)[0]
            else:
                v0 = nll_and_grad(theta0)
            res = optimize.minimize(
                nll_and_grad,
                theta0,
                jac=use_grad if use_grad else None,
                method="L-BFGS-B",
                bounds=list(zip(lower, upper)),
                options={"maxiter": max_opt_iter},
            )
            cand_val, cand_theta = (res.fun, res.x) if res.fun <= v0 else (v0, theta0)
        except Exception:
            start_lmls.append(float("nan"))
            final_lmls.append(float("nan"))
            continue
        start_lmls.append(-v0)
        final_lmls.append(-float(cand_val))
        if cand_val < best_val:
            best_val = cand_val
            best_theta = np.asarray(cand_theta, dtype=float)

    if best_theta is None or not np.isfinite(best_val):
        warning = True
        best_theta = 0.5 * (lower + upper)
        best_val = np.inf

    # Map back to raw units.
    if kernel_kind == ARD_SE:
        ls_norm = np.exp(best_theta[:d])
        sf2 = math.exp(best_theta[d])
        spec = KernelSpec.ard(ls_norm * rng_width, sf2 * y_scale**2)
        sn2 = math.exp(best_theta[d + 1]) if fit_noise else fixed_noise_std
    else:
        spec = KernelSpec.polar(math.exp(best_theta[0]))
        ls_norm = np.array([])
        sn2 = math.exp(best_theta[1]) if fit_noise else fixed_noise_std

    model = GPModel(
        kernel=spec,
        train_inputs=x,
        train_targets=y,
        noise_variance=sn2 * y_scale**2,
        prior_mean=y_shift,
        meta={
            "log_marginal_likelihood": -float(best_val),
            "restart_start_lml": start_lmls,
            "restart_final_lml": final_lmls,
            "warning": warning,
            "log_hypers": best_theta.tolist(),
            "normalized_lengthscales": ls_norm.tolist(),
            "target_scale": y_scale,
        },
    )
    return model
