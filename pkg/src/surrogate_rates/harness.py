"""Monte-Carlo validation of the psi-inequality and of ERM consistency.

Synthetic distributions have an analytic regression function ``eta(x)`` and
Bayes risk.  Linear ERM is run under a surrogate loss for a grid of sample
sizes, and the population risks of the trained models are estimated by
Monte-Carlo with ``eta`` plugged in analytically.

Excess risks are estimated from paired differences: on each Monte-Carlo
draw the Bayes classifier's pointwise risk ``min(eta, 1 - eta)`` and the
pointwise optimum ``C*(eta)`` are subtracted, so the per-draw excess terms
are nonnegative and their variance is far below that of the raw risks.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from .errors import DomainError, TrainingDivergenceError
from .losses import SurrogateLoss
from .psi import c_star_function, psi

log = logging.getLogger(__name__)

ITERATIONS = 5000
STEP_SCALE = 1.0
DIVERGENCE_WINDOW = 50
MC_SAMPLES = 100_000
MIN_MC_SAMPLES = 10_000
SLACK_SE = 3.0
QUAD_TOL = 1e-8
CHUNK_ELEMENTS = 1 << 15

# substream tags, so data, Monte-Carlo and anything added later never overlap
_DATA, _MC = 0, 1


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    empirical_phi_risk: float | None = None
    iterations: int = 0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias


@dataclass(eq=False)
class SyntheticDistribution:
    """A distribution of ``(X, Y)`` with known ``eta(x) = P(Y = 1 | X = x)``.

    ``expect_eta(g)`` integrates ``g(eta(X))`` exactly (by quadrature over a
    sufficient coordinate); it is what makes ``R*_phi`` computable.
    """

    name: str
    dim: int
    eta: Callable[[np.ndarray], np.ndarray]
    sample_x: Callable[[np.random.Generator, int], np.ndarray]
    bayes_risk: float
    bayes_classifier: LinearModel
    expect_eta: Callable[[Callable[[float], float]], float]
    _phi_cache: dict = field(default_factory=dict, repr=False)

    def optimal_phi_risk(self, loss: SurrogateLoss) -> float:
        """``R*_phi = E[C*(eta(X))]``, cached per loss specification."""
        if loss.name not in self._phi_cache:
            c_star = c_star_function(loss)
            self._phi_cache[loss.name] = self.expect_eta(lambda e: float(c_star(np.array([e]))[0]))
        return self._phi_cache[loss.name]


def _quad_uniform(g: Callable[[float], float]) -> float:
    # E[g(U)] for U uniform on [0, 1]
    value, _ = integrate.quad(g, 0.0, 1.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200, points=[0.5])
    return float(value)


def tent(dim: int = 2) -> SyntheticDistribution:
    """``X`` uniform on ``[-1, 1]**dim`` and ``eta(x) = (1 + x_1) / 2``.

    The Bayes classifier ``sign(x_1)`` is linear and ``R* = 1/4``.  Since
    ``x_1`` is uniform, so is ``eta(X)`` on ``[0, 1]``.
    """
    if not 1 <= dim <= 4:
        raise DomainError("tent supports 1 <= dim <= 4")
    w = np.zeros(dim)
    w[0] = 1.0
    return SyntheticDistribution(
        name="tent",
        dim=dim,
        eta=lambda X: (1.0 + X[:, 0]) / 2.0,
        sample_x=lambda rng, n: rng.uniform(-1.0, 1.0, size=(n, dim)),
        bayes_risk=0.25,
        bayes_classifier=LinearModel(w, 0.0),
        expect_eta=_quad_uniform,
    )


def constant_eta(value: float, dim: int = 2, name: str | None = None) -> SyntheticDistribution:
    """``eta`` fixed at ``value`` everywhere; ``R* = min(value, 1 - value)``."""
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise DomainError("eta must lie in [0, 1]")
    sign = 1.0 if value >= 0.5 else -1.0
    return SyntheticDistribution(
        name=name or f"constant:{value:g}",
        dim=dim,
        eta=lambda X: np.full(len(X), value),
        sample_x=lambda rng, n: rng.uniform(-1.0, 1.0, size=(n, dim)),
        bayes_risk=min(value, 1.0 - value),
        bayes_classifier=LinearModel(np.zeros(dim), sign),
        expect_eta=lambda g: float(g(value)),
    )


DISTRIBUTIONS: dict[str, Callable[[], SyntheticDistribution]] = {
    "tent": tent,
    "deterministic": lambda: constant_eta(1.0, name="deterministic"),
    "noise": lambda: constant_eta(0.5, name="noise"),
}


def get_distribution(name: str) -> SyntheticDistribution:
    try:
        return DISTRIBUTIONS[name]()
    except KeyError:
        raise DomainError(f"unknown distribution {name!r}; known: {sorted(DISTRIBUTIONS)}") from None


def bayes_risk(dist: SyntheticDistribution) -> float:
    return dist.bayes_risk


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def sample_dataset(dist: SyntheticDistribution, n: int, seed) -> Dataset:
    """Draw ``n`` labelled points; ``y`` is in ``{-1, +1}``."""
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    rng = _rng(seed)
    X = dist.sample_x(rng, n)
    y = np.where(rng.uniform(size=n) < dist.eta(X), 1.0, -1.0)
    return Dataset(X, y)


@dataclass(frozen=True)
class TrainingConfig:
    iterations: int = ITERATIONS
    step_scale: float = STEP_SCALE
    divergence_window: int = DIVERGENCE_WINDOW


def _augment(dataset: Dataset) -> np.ndarray:
    # rows y_i * (x_i, 1), so margins are yX @ theta
    X = np.hstack([dataset.X, np.ones((len(dataset), 1))])
    return dataset.y[:, None] * X


def _descend(loss: SurrogateLoss, yX: np.ndarray, config: TrainingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Subgradient descent on a stack of problems ``yX`` of shape (T, n, k).

    Returns the best parameters (T, k) and their empirical risks (T,).
    """
    T, n, k = yX.shape
    theta = np.zeros((T, k))
    best_theta = theta.copy()
    best_risk = np.full(T, np.inf)
    prev_risk = np.full(T, np.inf)
    rising = np.zeros(T, dtype=int)
    for t in range(1, config.iterations + 2):
        margins = np.matmul(yX, theta[:, :, None])[:, :, 0]
        with np.errstate(over="ignore", invalid="ignore"):
            risk = loss(margins).mean(axis=1)
        better = risk < best_risk
        best_risk = np.where(better, risk, best_risk)
        best_theta[better] = theta[better]
        rising = np.where(risk > prev_risk, rising + 1, 0)
        # an overflowing risk stops rising (inf > inf is False), so catch it directly
        blown = ~np.isfinite(risk)
        if np.any(rising >= config.divergence_window) or np.any(blown):
            bad = int(np.argmax((rising >= config.divergence_window) | blown))
            what = "overflowed" if blown[bad] else f"rose {config.divergence_window} steps in a row"
            raise TrainingDivergenceError(
                f"{loss.name}: empirical risk of problem {bad} {what} (step scale {config.step_scale})",
                bad,
            )
        prev_risk = risk
        if t > config.iterations:
            break
        g = np.matmul(loss.derivative(margins)[:, None, :], yX)[:, 0, :] / n
        theta = theta - (config.step_scale / math.sqrt(t)) * g
    return best_theta, best_risk


def _to_model(theta: np.ndarray, risk: float, config: TrainingConfig) -> LinearModel:
    return LinearModel(theta[:-1].copy(), float(theta[-1]), float(risk), config.iterations)


def train_erm(loss: SurrogateLoss, dataset: Dataset, config: TrainingConfig = TrainingConfig()) -> LinearModel:
    """Full-batch subgradient descent on the empirical phi-risk of ``w.x + b``.

    Step ``c / sqrt(t)`` from a zero start; the best iterate seen is
    returned.  Raises :class:`TrainingDivergenceError` if the empirical risk
    goes up ``divergence_window`` steps in a row.
    """
    if len(dataset) == 0:
        raise DomainError("empty dataset")
    theta, risk = _descend(loss, _augment(dataset)[None], config)
    return _to_model(theta[0], risk[0], config)


def train_erm_many(
    loss: SurrogateLoss, datasets: Sequence[Dataset], config: TrainingConfig = TrainingConfig()
) -> list[LinearModel]:
    """:func:`train_erm` on equally sized datasets, vectorized across them."""
    if not datasets or len({len(d) for d in datasets}) != 1 or len(datasets[0]) == 0:
        raise DomainError("need one or more non-empty datasets of equal size")
    # chunks small enough to keep a stack in cache
    chunk = max(1, CHUNK_ELEMENTS // len(datasets[0]))
    models = []
    for start in range(0, len(datasets), chunk):
        part = datasets[start : start + chunk]
        try:
            theta, risk = _descend(loss, np.stack([_augment(d) for d in part]), config)
        except TrainingDivergenceError as exc:
            raise TrainingDivergenceError(str(exc), start + exc.problem) from exc
        models.extend(_to_model(th, r, config) for th, r in zip(theta, risk))
    return models


@dataclass(frozen=True)
class RiskEstimate:
    risk: float
    risk_se: float
    phi_risk: float
    phi_risk_se: float
    excess_risk: float
    excess_risk_se: float
    excess_phi_risk: float
    excess_phi_risk_se: float
    mc_samples: int


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def estimate_risks(
    model: Callable[[np.ndarray], np.ndarray],
    dist: SyntheticDistribution,
    loss: SurrogateLoss,
    mc_samples: int = MC_SAMPLES,
    seed=0,
) -> RiskEstimate:
    """Monte-Carlo estimates of ``R(f)``, ``R_phi(f)`` and their excesses.

    With ``eta`` known, the 0-1 risk integrand is
    ``eta * 1[f <= 0] + (1 - eta) * 1[f > 0]`` and the phi-risk integrand is
    ``C(eta, f)``.  The excesses average the same draws minus
    ``min(eta, 1 - eta)`` and ``C*(eta)`` respectively, which are unbiased for
    ``R(f) - R*`` and ``R_phi(f) - R*_phi``.
    """
    if mc_samples < MIN_MC_SAMPLES:
        raise DomainError(f"mc_samples must be >= {MIN_MC_SAMPLES}, got {mc_samples}")
    rng = _rng(seed)
    X = dist.sample_x(rng, mc_samples)
    eta = dist.eta(X)
    f = np.asarray(model(X), dtype=float)
    neg = f <= 0
    r = np.where(neg, eta, 1.0 - eta)
    c = eta * loss(f) + (1.0 - eta) * loss(-f)
    r_excess = r - np.minimum(eta, 1.0 - eta)
    c_excess = c - c_star_function(loss)(eta)
    risk, risk_se = _mean_se(r)
    phi_risk, phi_se = _mean_se(c)
    ex, ex_se = _mean_se(r_excess)
    exphi, exphi_se = _mean_se(c_excess)
    return RiskEstimate(risk, risk_se, phi_risk, phi_se, ex, ex_se, exphi, exphi_se, mc_samples)


@dataclass(frozen=True)
class TrialRecord:
    n: int
    trial: int
    train_phi_risk: float
    risk: RiskEstimate
    psi_of_excess: float
    slack: float
    violation: bool


CSV_COLUMNS = (
    "n",
    "trial",
    "train_phi_risk",
    "risk",
    "risk_se",
    "phi_risk",
    "phi_risk_se",
    "excess_risk",
    "excess_risk_se",
    "excess_phi_risk",
    "excess_phi_risk_se",
    "psi_of_excess",
    "slack",
    "violation",
)


@dataclass(frozen=True)
class ExperimentResult:
    loss_name: str
    distribution: str
    n_grid: tuple[int, ...]
    excess_risk: tuple[tuple[float, float], ...]
    excess_phi_risk: tuple[tuple[float, float], ...]
    excess_risk_median: tuple[float, ...]
    fitted_exponent: float
    exponent_halfwidth: float
    psi_inequality_violations: int
    trials_per_n: int
    seed: int
    mc_samples: int
    p_assumed: float
    bound_exponent: float | None
    bayes_risk: float
    optimal_phi_risk: float
    trials: tuple[TrialRecord, ...] = field(repr=False, default=())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in self.trials:
            r = rec.risk
            writer.writerow(
                [rec.n, rec.trial]
                + [
                    repr(float(v))
                    for v in (
                        rec.train_phi_risk,
                        r.risk,
                        r.risk_se,
                        r.phi_risk,
                        r.phi_risk_se,
                        r.excess_risk,
                        r.excess_risk_se,
                        r.excess_phi_risk,
                        r.excess_phi_risk_se,
                        rec.psi_of_excess,
                        rec.slack,
                    )
                ]
                + [int(rec.violation)]
            )
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "loss": self.loss_name,
            "distribution": self.distribution,
            "n_grid": list(self.n_grid),
            "trials": self.trials_per_n,
            "seed": self.seed,
            "mc_samples": self.mc_samples,
            "p_assumed": self.p_assumed,
            "bayes_risk": self.bayes_risk,
            "optimal_phi_risk": self.optimal_phi_risk,
            "excess_risk_mean": [m for m, _ in self.excess_risk],
            "excess_risk_se": [s for _, s in self.excess_risk],
            "excess_risk_median": list(self.excess_risk_median),
            "excess_phi_risk_mean": [m for m, _ in self.excess_phi_risk],
            "excess_phi_risk_se": [s for _, s in self.excess_phi_risk],
            "fitted_exponent": self.fitted_exponent,
            "fitted_exponent_halfwidth": self.exponent_halfwidth,
            "bound_exponent": self.bound_exponent,
            "psi_inequality_violations": self.psi_inequality_violations,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def substream(seed: int, *key: int) -> np.random.SeedSequence:
    """Independent stream addressed by index, not by scheduling order."""
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))


def fit_decay_exponent(n_grid: Sequence[int], means: Sequence[float]) -> tuple[float, float]:
    """Slope of ``-log(mean)`` against ``log n`` with a 95% half-width."""
    x = np.log(np.asarray(n_grid, dtype=float))
    y = np.log(np.asarray(means, dtype=float))
    res = stats.linregress(x, y)
    half = float(stats.t.ppf(0.975, len(x) - 2) * res.stderr) if len(x) > 2 else math.nan
    return -float(res.slope), half


def run_rate_experiment(
    loss: SurrogateLoss,
    dist: SyntheticDistribution,
    n_grid: Sequence[int],
    trials_per_n: int,
    p_assumed: float = 0.5,
    seed: int = 0,
    mc_samples: int = MC_SAMPLES,
    training: TrainingConfig = TrainingConfig(),
    intensity: float | None = None,
) -> ExperimentResult:
    """Train, evaluate and check the psi-inequality for every ``(n, trial)``.

    Trial ``t`` at grid index ``i`` draws its data from substream
    ``(i, t, 0)`` and its Monte-Carlo sample from ``(i, t, 1)``.  The
    inequality ``psi(excess risk) <= excess phi-risk + 3 se`` uses the
    propagated standard error of both sides.  ``intensity`` (if given) is
    used to report the transferred bound exponent ``p * I``.
    """
    n_grid = tuple(int(n) for n in n_grid)
    if len(n_grid) < 5:
        raise DomainError("n_grid needs at least 5 sample sizes")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise DomainError("n_grid must be strictly increasing")
    ratios = np.diff(np.log(n_grid))
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise DomainError("n_grid must be geometric")
    if trials_per_n < 20:
        raise DomainError("trials_per_n must be >= 20")

    records = []
    ex_stats, exphi_stats, medians = [], [], []
    for i, n in enumerate(n_grid):
        ex_vals, exphi_vals = [], []
        datasets = [sample_dataset(dist, n, substream(seed, i, t, _DATA)) for t in range(trials_per_n)]
        try:
            models = train_erm_many(loss, datasets, training)
        except TrainingDivergenceError as exc:
            raise TrainingDivergenceError(f"trial n={n} #{exc.problem}: {exc}", exc.problem) from exc
        for t, model in enumerate(models):
            est = estimate_risks(model, dist, loss, mc_samples, substream(seed, i, t, _MC))
            e = min(max(est.excess_risk, 0.0), 1.0)
            lhs = float(psi(loss, e))
            # first-order propagation of the 0-1 side through psi
            e_up = min(e + est.excess_risk_se, 1.0)
            d_lhs = float(psi(loss, e_up)) - lhs
            slack = SLACK_SE * math.hypot(d_lhs, est.excess_phi_risk_se)
            violation = lhs > est.excess_phi_risk + slack
            records.append(TrialRecord(n, t, model.empirical_phi_risk, est, lhs, slack, violation))
            ex_vals.append(est.excess_risk)
            exphi_vals.append(est.excess_phi_risk)
        ex_arr, exphi_arr = np.array(ex_vals), np.array(exphi_vals)
        ex_stats.append(_mean_se(ex_arr))
        exphi_stats.append(_mean_se(exphi_arr))
        medians.append(float(np.median(ex_arr)))
        log.info("%s n=%d mean excess risk %.3e", loss.name, n, ex_stats[-1][0])

    means = [m for m, _ in ex_stats]
    if min(means) > 0:
        exponent, half = fit_decay_exponent(n_grid, means)
    else:
        exponent, half = math.nan, math.nan
    return ExperimentResult(
        loss_name=loss.name,
        distribution=dist.name,
        n_grid=n_grid,
        excess_risk=tuple(ex_stats),
        excess_phi_risk=tuple(exphi_stats),
        excess_risk_median=tuple(medians),
        fitted_exponent=exponent,
        exponent_halfwidth=half,
        psi_inequality_violations=sum(r.violation for r in records),
        trials_per_n=trials_per_n,
        seed=seed,
        mc_samples=mc_samples,
        p_assumed=float(p_assumed),
        bound_exponent=None if intensity is None else float(p_assumed) * float(intensity),
        bayes_risk=dist.bayes_risk,
        optimal_phi_risk=dist.optimal_phi_risk(loss),
        trials=tuple(records),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    loss: str
    distribution: str = "tent"
    n_grid: tuple[int, ...] = (128, 256, 512, 1024, 2048, 4096, 8192)
    trials: int = 50
    seed: int = 0
    mc_samples: int = MC_SAMPLES
    p: float = 0.5

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        """Parse a config document; ``json.JSONDecodeError`` carries line/column."""
        data = json.loads(text)
        if not isinstance(data, dict) or "loss" not in data:
            raise DomainError("experiment config must be a JSON object with a 'loss' field")
        unknown = set(data) - {"loss", "distribution", "n_grid", "trials", "seed", "mc_samples", "p"}
        if unknown:
            raise DomainError(f"unknown config fields: {sorted(unknown)}")
        if "n_grid" in data:
            data["n_grid"] = tuple(int(n) for n in data["n_grid"])
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "distribution": self.distribution,
            "n_grid": list(self.n_grid),
            "trials": self.trials,
            "seed": self.seed,
            "mc_samples": self.mc_samples,
            "p": self.p,
        }
