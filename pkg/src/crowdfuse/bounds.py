"""Theoretical error-bound quantities and their comparison against runs.

Bounds that exceed the trivial range of the bounded quantity are reported
with a "vacuous" status, never clamped away silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregators import FitResult
from .model import GroundTruth, PriorConfig
from .numerics import kl_divergence
from .synth import CrowdSpec

NEG_INF = float("-inf")

HELD = "held"
HELD_VACUOUSLY = "held-vacuously"
VIOLATED = "violated"
VACUOUS = "vacuous"

THEOREM_FORM = "theorem_form"
LEMMA_FORM = "lemma_form"


def d_pi(pi_star) -> float:
    """Smallest log-ratio between two distinct class-prior entries; equals
    ln(min/max), and is negative unless the prior is uniform."""
    pi = np.asarray(pi_star, dtype=float)
    if np.any(pi <= 0):
        raise ValueError("class priors must be strictly positive")
    return float(math.log(pi.min() / pi.max()))


def d_gamma(gamma_star, mu) -> float:
    """Smallest response-weighted mean KL divergence between two confusion
    rows, minimized over ordered row pairs."""
    gamma = np.asarray(gamma_star, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n_ann, n_classes, _ = gamma.shape
    best = math.inf
    for k in range(n_classes):
        for kp in range(n_classes):
            if k == kp:
                continue
            total = sum(mu[m] * kl_divergence(gamma[m, k], gamma[m, kp])
                        for m in range(n_ann))
            best = min(best, total / n_ann)
    return float(best)


def f_pi(eps: float, rho_pi: float, n_items: int, alpha0_bar: float) -> float:
    """ln((rho - eps)/rho - 1/(2*rho*(N + alpha0_bar))); -inf when the
    argument is nonpositive (vacuous regime)."""
    arg = (rho_pi - eps) / rho_pi - 1.0 / (2.0 * rho_pi * (n_items + alpha0_bar))
    return math.log(arg) if arg > 0 else NEG_INF


def f_gamma(eps: float, rho_gamma: float, beta0_bar: float) -> float:
    """ln((rho - eps)/rho - 1/(2*rho*beta0_bar)); -inf when nonpositive."""
    arg = (rho_gamma - eps) / rho_gamma - 1.0 / (2.0 * rho_gamma * beta0_bar)
    return math.log(arg) if arg > 0 else NEG_INF


@dataclass
class BoundInputs:
    """Everything needed to evaluate the label and parameter error bounds.

    eps_pi, eps_gamma, eps_q are the error levels assumed for the previous
    iterate. Per-item constraint counts are optional; without them only the
    unconstrained bounds are produced.
    """

    spec: CrowdSpec
    priors: PriorConfig
    eps_pi: float
    eps_gamma: float
    eps_q: float
    eta: float = 0.0
    n_ml_per_item: np.ndarray | None = None
    n_cl_per_item: np.ndarray | None = None
    n_cl_by_class: np.ndarray | None = None
    lemma_exponent: str = THEOREM_FORM

    def __post_init__(self):
        if min(self.eps_pi, self.eps_gamma, self.eps_q) < 0:
            raise ValueError("error levels must be nonnegative")
        if self.lemma_exponent not in (THEOREM_FORM, LEMMA_FORM):
            raise ValueError(f"unknown exponent form {self.lemma_exponent}")

    @property
    def alpha0_bar(self) -> float:
        return float(self.priors.alpha0.sum())

    @property
    def beta0_bar_min(self) -> float:
        """Smallest row sum of the confusion priors; the conservative choice
        for the shared f_gamma argument."""
        return float(self.priors.beta0.sum(axis=2).min())


def constraint_counts(cs, truth: GroundTruth,
                      n_items: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-item must-link and cannot-link degrees plus, per item and class,
    the number of cannot-link partners whose true class is that class."""
    n_classes = int(truth.labels.max())
    n_ml, n_cl = cs.per_item_counts(n_items)
    by_class = np.zeros((n_items, n_classes), dtype=np.intp)
    for a, b in cs.cannot_link:
        if truth.labels[b] > 0:
            by_class[a, truth.labels[b] - 1] += 1
        if truth.labels[a] > 0:
            by_class[b, truth.labels[a] - 1] += 1
    return n_ml, n_cl, by_class


def exponent_u(inputs: BoundInputs) -> float:
    """The exponent controlling the per-item label error.

    theorem_form: D_pi + M*D_gamma/2 + f_pi + M*f_gamma.
    lemma_form:   D_pi + 2*f_pi + M*(D_gamma/2 + 2*f_gamma).
    The two differ by factors of 2 on the f terms; both are exposed.
    """
    spec = inputs.spec
    dp = d_pi(spec.pi_star)
    dg = d_gamma(spec.gamma_star, spec.mu)
    fp = f_pi(inputs.eps_pi, spec.rho_pi, spec.n_items, inputs.alpha0_bar)
    fg = f_gamma(inputs.eps_gamma, spec.rho_gamma, inputs.beta0_bar_min)
    m = spec.n_annotators
    if inputs.lemma_exponent == THEOREM_FORM:
        return dp + m * dg / 2.0 + fp + m * fg
    return dp + 2.0 * fp + m * (dg / 2.0 + 2.0 * fg)


def label_error_bound(inputs: BoundInputs) -> dict:
    """K*exp(-U) for every item, tightened to K*exp(-U - eta*W_n) for items
    with constraints. Probability bounds above 1 are flagged vacuous."""
    spec = inputs.spec
    u = exponent_u(inputs)
    eps_q = spec.n_classes * math.exp(-u) if math.isfinite(u) else math.inf

    n = spec.n_items
    if inputs.n_ml_per_item is None or inputs.eta == 0.0:
        w_n = np.zeros(n)
        tilde = np.full(n, eps_q)
    else:
        n_ml = np.asarray(inputs.n_ml_per_item, dtype=float)
        n_cl = np.asarray(inputs.n_cl_per_item, dtype=float)
        if inputs.n_cl_by_class is not None:
            by_class = np.asarray(inputs.n_cl_by_class, dtype=float)
            cl_min = by_class.min(axis=1)
        else:
            cl_min = np.zeros(n)
        w_n = n_ml * (1.0 - 2.0 * inputs.eps_q) \
            - 2.0 * n_cl * inputs.eps_q + cl_min
        constrained = (n_ml + n_cl) > 0
        with np.errstate(over="ignore"):
            tightened = spec.n_classes * np.exp(-u - inputs.eta * w_n)
        tilde = np.where(constrained, tightened, eps_q)
    return {
        "U": u,
        "eps_q": eps_q,
        "W_n": w_n,
        "tilde_eps_q": tilde,
        "eps_q_vacuous": not (eps_q < 1.0),
    }


def parameter_error_bounds(inputs: BoundInputs, g_pi: float, g_gamma: float,
                           counts: dict, tilde_eps_q: float | None = None,
                           beta_bar: np.ndarray | None = None) -> dict:
    """Error bounds on the expected class priors and confusion entries.

    `counts` holds n_tilde_c (items with at least one constraint) and
    n_bar_c (the rest); the unconstrained case is n_tilde_c = 0. g_pi and
    g_gamma have no closed form and are explicit inputs. `beta_bar` (M, K)
    defaults to the expected posterior row sums N*mu_m*pi_k + prior sums.
    """
    spec = inputs.spec
    priors = inputs.priors
    n = spec.n_items
    n_tilde = float(counts.get("n_tilde_c", 0))
    n_bar = float(counts.get("n_bar_c", n - n_tilde))
    if tilde_eps_q is None:
        tilde_eps_q = inputs.eps_q
    mixed = n_tilde * tilde_eps_q + n_bar * inputs.eps_q

    alpha0_bar = inputs.alpha0_bar
    eps_pi_bound = (mixed + n * g_pi + priors.alpha0
                    + spec.rho_pi * alpha0_bar) / (n + alpha0_bar)

    beta0_bar = priors.beta0.sum(axis=2)
    if beta_bar is None:
        beta_bar = n * spec.mu[:, None] * spec.pi_star[None, :] + beta0_bar
    numer = 2.0 * n * g_gamma + 2.0 * mixed + priors.beta0 + beta0_bar[:, :, None]
    denom = (n * spec.mu[:, None, None] * spec.pi_star[None, :, None]
             - n * g_gamma / spec.gamma_star
             - mixed + beta_bar[:, :, None])
    eps_gamma_bound = np.where(denom > 0, numer / np.where(denom > 0, denom, 1.0),
                               math.inf)
    return {
        "eps_pi_bound": eps_pi_bound,
        "eps_gamma_bound": eps_gamma_bound,
        "eps_pi_vacuous": bool(np.any(eps_pi_bound >= 1.0)),
        "eps_gamma_vacuous": bool(np.any(~np.isfinite(eps_gamma_bound))
                                  or np.any(eps_gamma_bound >= 1.0)),
    }


def nu_probability(spec: CrowdSpec, t_params, r_params) -> dict:
    """Failure probability of the concentration events, as a three-term sum.

    The first term divides by ln(rho_gamma), which is negative for
    rho_gamma < 1; it is evaluated verbatim and the resulting anomaly left
    for the caller to inspect. The middle term is summed over every
    (annotator, true class, response class) triple.
    """
    t = np.asarray(t_params, dtype=float)
    r = np.asarray(r_params, dtype=float)
    m, k = spec.n_annotators, spec.n_classes
    if t.shape != (m, k, k):
        raise ValueError("t_params must be (M, K, K)")
    if r.shape != (k,):
        raise ValueError("r_params must be length K")
    caps = spec.mu[:, None, None] * spec.pi_star[None, :, None] * spec.gamma_star
    bad = np.argwhere(t > caps + 1e-15)
    if bad.size:
        i = tuple(int(x) for x in bad[0])
        raise ValueError(f"t exceeds mu*pi*gamma at (m, k, k') = {i}")
    bad_r = np.argwhere(r > spec.pi_star + 1e-15)
    if bad_r.size:
        raise ValueError(f"r exceeds pi at class index {int(bad_r[0][0])}")

    n = spec.n_items
    dg = d_gamma(spec.gamma_star, spec.mu)
    term1 = k * n * math.exp(-m * dg / (33.0 * math.log(spec.rho_gamma)))
    with np.errstate(divide="ignore"):
        exponents = -n * t ** 2 / (3.0 * spec.pi_star[None, :, None]
                                   * spec.mu[:, None, None] * spec.gamma_star)
    term2 = float(np.sum(4.0 * np.exp(exponents)))
    term3 = float(np.sum(2.0 * np.exp(-n * r ** 2 / (3.0 * spec.pi_star))))
    nu = term1 + term2 + term3
    return {"nu": nu, "terms": (term1, term2, term3),
            "vacuous": not (nu < 1.0)}


@dataclass
class BoundReport:
    """Theoretical quantities alongside the empirical errors of a run."""

    d_pi: float
    d_gamma: float
    f_pi: float
    f_gamma: float
    u: float
    eps_q: float
    w_n: np.ndarray
    tilde_eps_q: np.ndarray
    eps_pi_bound: np.ndarray | None = None
    eps_gamma_bound: np.ndarray | None = None
    nu: float | None = None
    nu_terms: tuple | None = None
    empirical_label_error: float | None = None
    empirical_pi_error: float | None = None
    empirical_gamma_error: float | None = None
    statuses: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, float) and not math.isfinite(x):
                return str(x)
            return x

        out = {
            "D_pi": clean(self.d_pi),
            "D_gamma": clean(self.d_gamma),
            "f_pi": clean(self.f_pi),
            "f_gamma": clean(self.f_gamma),
            "U": clean(self.u),
            "eps_q": clean(self.eps_q),
            "W_n": clean(self.w_n),
            "tilde_eps_q": clean(self.tilde_eps_q),
            "eps_pi_bound": clean(self.eps_pi_bound),
            "eps_gamma_bound": clean(self.eps_gamma_bound),
            "nu": clean(self.nu),
            "nu_terms": [clean(t) for t in self.nu_terms]
            if self.nu_terms is not None else None,
            "empirical": {
                "max_label_error": clean(self.empirical_label_error),
                "max_pi_error": clean(self.empirical_pi_error),
                "max_gamma_error": clean(self.empirical_gamma_error),
            },
            "statuses": dict(self.statuses),
            "notes": list(self.notes),
        }
        return out


def build_report(inputs: BoundInputs, g_pi: float = 0.0, g_gamma: float = 0.0,
                 counts: dict | None = None,
                 nu_inputs: tuple | None = None) -> BoundReport:
    """Evaluate all bound quantities for the given inputs."""
    spec = inputs.spec
    label = label_error_bound(inputs)
    if counts is None:
        n_tilde = 0
        if inputs.n_ml_per_item is not None:
            degrees = (np.asarray(inputs.n_ml_per_item)
                       + np.asarray(inputs.n_cl_per_item))
            n_tilde = int(np.sum(degrees > 0))
        counts = {"n_tilde_c": n_tilde, "n_bar_c": spec.n_items - n_tilde}
    tilde_max = float(np.max(label["tilde_eps_q"])) \
        if np.size(label["tilde_eps_q"]) else inputs.eps_q
    params = parameter_error_bounds(inputs, g_pi, g_gamma, counts,
                                    tilde_eps_q=min(tilde_max, label["eps_q"])
                                    if math.isfinite(label["eps_q"]) else None)
    report = BoundReport(
        d_pi=d_pi(spec.pi_star),
        d_gamma=d_gamma(spec.gamma_star, spec.mu),
        f_pi=f_pi(inputs.eps_pi, spec.rho_pi, spec.n_items, inputs.alpha0_bar),
        f_gamma=f_gamma(inputs.eps_gamma, spec.rho_gamma,
                        inputs.beta0_bar_min),
        u=label["U"],
        eps_q=label["eps_q"],
        w_n=label["W_n"],
        tilde_eps_q=label["tilde_eps_q"],
        eps_pi_bound=params["eps_pi_bound"],
        eps_gamma_bound=params["eps_gamma_bound"],
    )
    report.statuses["eps_q"] = VACUOUS if label["eps_q_vacuous"] else "finite"
    report.statuses["eps_pi"] = VACUOUS if params["eps_pi_vacuous"] else "finite"
    report.statuses["eps_gamma"] = VACUOUS if params["eps_gamma_vacuous"] \
        else "finite"
    if nu_inputs is not None:
        nu = nu_probability(spec, *nu_inputs)
        report.nu = nu["nu"]
        report.nu_terms = nu["terms"]
        report.statuses["nu"] = VACUOUS if nu["vacuous"] else "finite"
        report.notes.append(
            "first nu term divides by ln(rho_gamma) < 0, making its exponent "
            "positive; evaluated verbatim")
    return report


def empirical_vs_bound(fit: FitResult, truth: GroundTruth, spec: CrowdSpec,
                       report: BoundReport) -> BoundReport:
    """Fill in the empirical errors of a fit and mark each bound as held,
    held-vacuously, or violated."""
    mask = truth.known_mask
    onehot = np.zeros_like(fit.posterior)
    known = np.flatnonzero(mask)
    onehot[known, truth.labels[known] - 1] = 1.0
    label_err = float(np.max(np.abs(fit.posterior[mask] - onehot[mask])))
    report.empirical_label_error = label_err

    if fit.params is not None:
        pi_err = float(np.max(np.abs(fit.params.expected_pi() - spec.pi_star)))
        gamma_err = float(np.max(np.abs(fit.params.expected_gamma()
                                        - spec.gamma_star)))
        report.empirical_pi_error = pi_err
        report.empirical_gamma_error = gamma_err

    def verdict(bound, observed):
        if observed is None:
            return None
        if not (bound < 1.0):
            return HELD_VACUOUSLY
        return HELD if observed <= bound else VIOLATED

    report.statuses["eps_q_vs_empirical"] = verdict(report.eps_q, label_err)
    if report.eps_pi_bound is not None and report.empirical_pi_error is not None:
        report.statuses["eps_pi_vs_empirical"] = verdict(
            float(np.max(report.eps_pi_bound)), report.empirical_pi_error)
    if report.eps_gamma_bound is not None and \
            report.empirical_gamma_error is not None:
        report.statuses["eps_gamma_vs_empirical"] = verdict(
            float(np.max(report.eps_gamma_bound)),
            report.empirical_gamma_error)
    return report
