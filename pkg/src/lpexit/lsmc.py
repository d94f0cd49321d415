"""Regression Monte Carlo (Longstaff-Schwartz) for the optimal exit problem.

The LP may leave the pool at any grid time ``t_i``, i >= 1, and receives the
running performance ``A`` accumulated until then. Working backwards from
``V_n = 0``, the continuation value at ``t_i`` is estimated by regressing the
realised value of holding one more step, ``A_{i+1} - A_i + V_{i+1}``, on a
polynomial basis in ``(S_i, Y_i)``; paths whose fitted continuation is ``<= 0``
stop at ``t_i``.

By default ``A`` is the trade-by-trade gain (``PathBundle.gain_paths``). It has
the same conditional increments as ``R - IL`` but without the zero-mean
``P^Y * dS`` noise, which otherwise dominates the regression targets at high
volatility. ``target="perf"`` regresses on ``R - IL`` itself.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import ConfigError
from .simulation import PathBundle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LsmcConfig:
    """Regression settings.

    basis
        ``"poly"``: all monomials ``s**a * y**b`` with ``a + b <= degree``.
        ``"indicator"``: one dummy per distinct ``(s, y)`` value in the slice,
        which makes the regression an exact conditional mean on lattice models.
    regress_all_paths
        Fit on every path (default). When False, fit only on paths that are
        still holding at ``t_{i+1}`` (falls back to all paths if none are).
    include_step_increment
        Regress ``A_{i+1} - A_i + V_{i+1}`` (default). When False, regress
        ``V_{i+1}`` alone.
    target
        ``"gain"`` (default) or ``"perf"``: which accumulated performance the
        regression and the value estimate use.
    exit_at_start
        Also allow exit at ``t_0``. All paths share the initial state, so the
        decision uses the sample mean of the realised values.
    """

    degree: int = 3
    basis: str = "poly"
    ridge: float = 0.0
    standardize: bool = True
    regress_all_paths: bool = True
    include_step_increment: bool = True
    target: str = "gain"
    exit_at_start: bool = False

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ConfigError("degree must be a positive integer")
        if self.basis not in ("poly", "indicator"):
            raise ConfigError(f"unknown basis {self.basis!r}")
        if self.target not in ("gain", "perf"):
            raise ConfigError(f"unknown regression target {self.target!r}")
        if not self.ridge >= 0:
            raise ConfigError("ridge must be nonnegative")

    @property
    def n_features(self) -> int:
        return n_features(self.degree)


def n_features(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def slice_scaler(s, y) -> tuple:
    """Affine standardisation ``(mean_s, scale_s, mean_y, scale_y)`` for one time slice."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    sd_s, sd_y = s.std(), y.std()
    return (float(s.mean()), float(sd_s) if sd_s > 0 else 1.0,
            float(y.mean()), float(sd_y) if sd_y > 0 else 1.0)


def build_basis(s, y, degree: int, standardize=False) -> np.ndarray:
    """Monomials ``s**a * y**b`` with ``a + b <= degree``.

    Columns are ordered by total degree, and within a degree by decreasing
    power of ``s``: for ``degree=2`` they are ``1, s, y, s^2, s*y, y^2``.
    Scalar inputs give a 1-d feature vector. ``standardize`` is a bool (use
    the slice's own mean and scale) or a tuple from :func:`slice_scaler`.
    """
    if degree < 1:
        raise ConfigError("degree must be at least 1")
    scalar = np.ndim(s) == 0 and np.ndim(y) == 0
    s = np.atleast_1d(np.asarray(s, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if standardize is True:
        standardize = slice_scaler(s, y)
    if standardize:
        mu_s, sd_s, mu_y, sd_y = standardize
        s, y = (s - mu_s) / sd_s, (y - mu_y) / sd_y
    s_pow = [np.ones_like(s)]
    y_pow = [np.ones_like(y)]
    for _ in range(degree):
        s_pow.append(s_pow[-1] * s)
        y_pow.append(y_pow[-1] * y)
    cols = [s_pow[a] * y_pow[k - a] for k in range(degree + 1) for a in range(k, -1, -1)]
    out = np.stack(cols, axis=-1)
    return out[0] if scalar else out


def _cluster(v: np.ndarray) -> np.ndarray:
    # labels equal values up to rounding noise from different summation orders
    order = np.argsort(v, kind="stable")
    sv = v[order]
    tol = 1e-9 * max(1.0, float(np.abs(sv).max(initial=0.0)))
    lab_sorted = np.concatenate([[0], np.cumsum(np.diff(sv) > tol)])
    labels = np.empty_like(lab_sorted)
    labels[order] = lab_sorted
    return labels


def indicator_basis(s, y) -> np.ndarray:
    """One-hot encoding of the distinct ``(s, y)`` states in a slice."""
    ls = _cluster(np.asarray(s, dtype=float))
    ly = _cluster(np.asarray(y, dtype=float))
    _, cell = np.unique(ls * (ly.max() + 1) + ly, return_inverse=True)
    out = np.zeros((cell.size, cell.max() + 1))
    out[np.arange(cell.size), cell] = 1.0
    return out


def _fit(features: np.ndarray, targets: np.ndarray, ridge: float):
    if ridge > 0:
        g = features.T @ features
        reg = ridge * np.eye(g.shape[0])
        reg[0, 0] = 0.0  # intercept is not penalised
        coef = scipy.linalg.solve(g + reg, features.T @ targets, assume_a="sym")
        return coef, features.shape[1]
    coef, _, rank, _ = scipy.linalg.lstsq(features, targets, lapack_driver="gelsy",
                                          check_finite=False)
    return coef, int(rank)


def regress(features, targets, ridge: float = 0.0) -> np.ndarray:
    """Least-squares coefficients of ``targets`` on the columns of ``features``.

    Uses a column-pivoted QR factorisation, so rank-deficient designs give a
    minimum-norm-type solution rather than an error. ``ridge > 0`` solves the
    Tikhonov-regularised normal equations instead (intercept unpenalised).
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.shape[0] != targets.shape[0]:
        raise ValueError("features and targets have different numbers of rows")
    return _fit(features, targets, ridge)[0]


@dataclass
class LsmcResult:
    """Output of :func:`backward_induct`.

    ``values[:, i]`` is the realised value from ``t_i`` onward under the
    estimated rule (zero where the path stops at ``t_i``); ``stopped[:, i]``
    flags the rule's stop decision at ``t_i``. ``exit_index`` is the first
    ``i >= 1`` with a stop decision (``n`` if none).
    """

    values: np.ndarray
    stopped: np.ndarray
    exit_index: np.ndarray
    exit_times: np.ndarray
    v0_estimate: float
    v0_stderr: float
    coefficients: list
    scalers: list = field(default_factory=list)
    rank_deficient_steps: list = field(default_factory=list)
    config: LsmcConfig | None = None

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]


def _features(cfg: LsmcConfig, s, y, scaler=None):
    if cfg.basis == "indicator":
        return indicator_basis(s, y), None
    if not cfg.standardize:
        return build_basis(s, y, cfg.degree), None
    if scaler is None:
        scaler = slice_scaler(s, y)
    return build_basis(s, y, cfg.degree, scaler), scaler


def backward_induct(bundle: PathBundle, cfg: LsmcConfig = LsmcConfig()) -> LsmcResult:
    """Estimate the optimal exit rule and its value on ``bundle``.

    The value estimate is the sample mean of ``A`` at each path's exit time
    under the estimated rule; its standard error is the sample standard
    deviation over ``sqrt(n_paths)``. Out of sample (see :func:`apply_rule`)
    this estimator is biased low; in sample it carries a small foresight bias.
    """
    a = bundle.gain_paths if cfg.target == "gain" else bundle.perf_paths
    s_paths, y_paths = bundle.s_paths, bundle.y_paths
    m, n = bundle.n_paths, bundle.n_steps
    if cfg.basis == "poly" and cfg.n_features > m / 10:
        raise ConfigError(
            f"{cfg.n_features} basis functions need at least {10 * cfg.n_features} paths, got {m}"
        )

    values = np.zeros((m, n + 1))
    stopped = np.zeros((m, n + 1), dtype=bool)
    stopped[:, n] = True
    coefs = [None] * (n + 1)
    scalers = [None] * (n + 1)
    deficient = []

    for i in range(n - 1, 0, -1):
        hold = a[:, i + 1] - a[:, i] + values[:, i + 1]
        target = hold if cfg.include_step_increment else values[:, i + 1]
        feats, scalers[i] = _features(cfg, s_paths[:, i], y_paths[:, i])
        rows = slice(None)
        if not cfg.regress_all_paths:
            alive = ~stopped[:, i + 1]
            if alive.any():
                rows = alive
        coef, rank = _fit(feats[rows], target[rows], cfg.ridge)
        if rank < feats.shape[1]:
            deficient.append(i)
        cont = feats @ coef
        stop = cont <= 0
        stopped[:, i] = stop
        values[:, i] = np.where(stop, 0.0, hold)
        coefs[i] = coef

    values[:, 0] = a[:, 1] - a[:, 0] + values[:, 1]
    exit_index = np.argmax(stopped[:, 1:], axis=1) + 1
    if cfg.exit_at_start and values[:, 0].mean() <= 0:
        stopped[:, 0] = True
        values[:, 0] = 0.0
        exit_index[:] = 0

    realised = a[np.arange(m), exit_index] - a[:, 0]
    v0 = float(realised.mean())
    se = float(realised.std(ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    if deficient:
        log.debug("rank-deficient regressions at %d time steps", len(deficient))
    return LsmcResult(
        values=values, stopped=stopped, exit_index=exit_index,
        exit_times=bundle.times[exit_index], v0_estimate=v0, v0_stderr=se,
        coefficients=coefs, scalers=scalers, rank_deficient_steps=sorted(deficient), config=cfg,
    )


def apply_rule(result: LsmcResult, bundle: PathBundle) -> np.ndarray:
    """Exit indices obtained by running a fitted rule forward on another bundle.

    Evaluating the rule on independent paths gives a value estimate free of
    in-sample foresight bias. Requires a polynomial basis and the same grid.
    """
    cfg = result.config
    if cfg is None or cfg.basis != "poly":
        raise ConfigError("only polynomial-basis rules can be applied out of sample")
    n = bundle.n_steps
    if len(result.coefficients) != n + 1:
        raise ConfigError("bundle grid differs from the one the rule was fitted on")
    exit_index = np.full(bundle.n_paths, n)
    alive = np.ones(bundle.n_paths, dtype=bool)
    for i in range(1, n):
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        feats, _ = _features(cfg, bundle.s_paths[idx, i], bundle.y_paths[idx, i],
                             result.scalers[i])
        stop = feats @ result.coefficients[i] <= 0
        exit_index[idx[stop]] = i
        alive[idx[stop]] = False
    return exit_index


@dataclass(frozen=True)
class ExitStats:
    mean_tau: float
    std_tau: float
    mean_R: float
    std_R: float
    mean_IL: float
    std_IL: float
    mean_perf: float
    std_perf: float
    n_paths: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def exit_statistics(result: LsmcResult, bundle: PathBundle) -> ExitStats:
    """Cross-path mean and standard deviation of the exit time, fees, IL and performance."""
    rows = np.arange(bundle.n_paths)
    idx = result.exit_index
    tau = bundle.times[idx]
    r = bundle.r_paths[rows, idx]
    il = bundle.il_paths[rows, idx]
    perf = bundle.perf_paths[rows, idx]
    ddof = 1 if bundle.n_paths > 1 else 0
    return ExitStats(
        float(tau.mean()), float(tau.std(ddof=ddof)),
        float(r.mean()), float(r.std(ddof=ddof)),
        float(il.mean()), float(il.std(ddof=ddof)),
        float(perf.mean()), float(perf.std(ddof=ddof)),
        int(bundle.n_paths),
    )
