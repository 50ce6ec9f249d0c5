"""Sufficient-condition checks, regime classification, and sweep maps.

Everything here reports *margins* of the sufficient conditions rather than
certified thresholds: the underlying constants have no closed form, so
thresholds are bracketed empirically (see ``bracket_threshold``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import (
    CompositeParams,
    ModelParams,
    SolverOptions,
    composite_params,
    fixed_point_solve,
    subset_geography,
    variant_transform,
)
from .errors import HinterlandError, NonMetricTradeCosts
from .fields import Geography
from .geometry import assign_labels, lambda_feasibility, pairwise_metrics
from .integrals import aggregate_amenities, semielasticity_sup

KNIFE_EDGE_TOL = 1e-12


# ---------------------------------------------------------------------------
# regime classification

@dataclass(frozen=True)
class RegimeReport:
    """Where a parameter point sits in the location/labor regime diagram."""

    alpha: float
    beta: float
    sigma: float
    alpha_cutoff: float
    location_multiplicity: str   # "multiple" | "spread" | "knife_edge"
    gamma_ratio: float           # |gamma2 / gamma1|
    labor_uniqueness: bool
    reconciliation: bool


def classify_point(alpha: float, beta: float, sigma: float) -> RegimeReport:
    """Regime trichotomy from raw exponents (no parameter validation).

    ``beta`` is the congestion weight entering the composite constants; for
    the two-sector variant pass the variant-resolved value.
    """
    cutoff = 1.0 / (sigma - 1.0)
    if abs(alpha - cutoff) <= KNIFE_EDGE_TOL:
        multiplicity = "knife_edge"
    elif alpha > cutoff:
        multiplicity = "multiple"
    else:
        multiplicity = "spread"
    gamma1 = 1.0 - (sigma - 1.0) * alpha - sigma * beta
    gamma2 = 1.0 + sigma * alpha + (sigma - 1.0) * beta
    ratio = abs(gamma2 / gamma1) if gamma1 != 0.0 else math.inf
    unique = ratio < 1.0
    return RegimeReport(
        alpha=alpha, beta=beta, sigma=sigma, alpha_cutoff=cutoff,
        location_multiplicity=multiplicity, gamma_ratio=ratio,
        labor_uniqueness=unique,
        reconciliation=(multiplicity == "multiple") and unique)


def regime_classify(params: ModelParams) -> RegimeReport:
    """Classify a validated parameter point (variant-aware)."""
    eff = variant_transform(params)
    return classify_point(params.alpha, eff.congestion_weight, params.sigma)


# ---------------------------------------------------------------------------
# uniqueness condition

@dataclass(frozen=True)
class UniquenessCondition:
    lhs: float
    holds: bool
    eta_hat: float
    n_star: int


def uniqueness_condition(comp: CompositeParams, n_star: int,
                         eta_hat: float) -> UniquenessCondition:
    """Contraction bound for the weight map on an n_star-site active set.

    lhs combines the pure exponent ratio with the tessellation's sampled
    amenity semielasticity; lhs < 1 certifies (up to the sampling of
    eta_hat) a unique labor distribution on the active set.
    """
    if n_star < 1:
        raise ValueError(f"n_star must be >= 1, got {n_star}")
    if eta_hat < 0:
        raise ValueError(f"eta_hat must be >= 0, got {eta_hat}")
    lhs = abs(comp.gamma_ratio) + comp.sigma_tilde * (
        2.0 * (n_star - 1) * abs(comp.phi1)
        + (2.0 * n_star - 1) * abs(comp.phi2)) * eta_hat
    return UniquenessCondition(lhs=lhs, holds=lhs < 1.0,
                               eta_hat=eta_hat, n_star=n_star)


# ---------------------------------------------------------------------------
# existence margins

@dataclass(frozen=True)
class ExistenceReport:
    """Per-pair margins of the feasible-set self-mapping condition.

    margin[i, j] = rhs_ij - lhs_ij; the condition passes when all ordered
    pairs have nonnegative margins. ``precondition_holds`` is the necessary
    weight-decay vs trade-creep inequality: when it fails, margins cannot
    pass at any distance.
    """

    margins: np.ndarray
    min_margin: float
    passes: bool
    precondition_value: float
    precondition_holds: bool
    eta_hat: float
    interaction_radius: float
    trade_decay_rate: float


def _environment_trade_decay(geography: Geography) -> float:
    """Per-distance log trade-cost rate; exact for metric costs.

    For explicit matrices it is the max of log T_ij / d_i(y_j) — a
    conservative stand-in for the metric's tau (it bounds trade-access
    differences the same way the metric rate would).
    """
    trade = geography.trade
    if trade.origin == "from_metric":
        return trade.tau
    d, _, _ = pairwise_metrics(geography.sites, geography.system)
    n = len(geography.sites)
    best = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                best = max(best, math.log(trade.values[i, j]) / d[i, j])
    return best


def existence_margins(geography: Geography, params: ModelParams,
                      k_shrink: float = 0.5, eta_hat: float | None = None,
                      use_sharper_trade_bound: bool = False,
                      n_samples: int = 16, seed: int = 0) -> ExistenceReport:
    """Margins of the condition keeping the weight map inside the band.

    lhs stacks the fundamental asymmetries (productivity and unweighted
    amenity-aggregate log ratios) plus the semielasticity spillover term;
    rhs is the net per-distance decay times the pair distance.
    """
    comp = composite_params(params, geography.productivities, geography.trade)
    eff = comp.effective
    if use_sharper_trade_bound and geography.trade.origin != "from_metric":
        raise NonMetricTradeCosts(
            "the sharper trade-access bound needs metric-generated costs")
    tau_rate = (geography.trade.tau if use_sharper_trade_bound
                else _environment_trade_decay(geography))

    if eta_hat is None:
        eta_hat = semielasticity_sup(geography, eff.kernel, k_shrink=k_shrink,
                                     n_samples=n_samples, seed=seed).value
    d, d_min, radius = pairwise_metrics(geography.sites, geography.system)

    tess0 = assign_labels(geography.grid, geography.sites, geography.system,
                          np.zeros(geography.n_sites))
    agg0 = aggregate_amenities(tess0, geography.amenity, eff.kernel)
    log_abar = np.log(geography.productivities)
    log_B0 = agg0.log_B

    st = comp.sigma_tilde
    sigma = params.sigma
    decay = comp.weight_scale * abs(comp.gamma1)
    creep = tau_rate * (sigma - 1.0)

    n = geography.n_sites
    margins = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            lhs = (st * (sigma - 1.0) * abs(log_abar[i] - log_abar[j])
                   + st * abs(comp.phi1) * abs(log_B0[i] - log_B0[j])
                   - 2.0 * eff.beta_eff * eta_hat * radius)
            rhs = (decay - creep) * d[i, j]
            margins[i, j] = rhs - lhs
    finite = margins[~np.isnan(margins)]
    min_margin = float(finite.min()) if finite.size else math.inf
    return ExistenceReport(
        margins=margins, min_margin=min_margin,
        passes=bool((finite >= 0).all()) if finite.size else True,
        precondition_value=decay - creep, precondition_holds=decay > creep,
        eta_hat=eta_hat, interaction_radius=radius, trade_decay_rate=tau_rate)


@dataclass(frozen=True)
class SeparationReport:
    """Existence prospects as a function of how far apart the sites sit."""

    hypothesis_value: float      # net decay rate; must be positive
    hypothesis_holds: bool
    never_satisfiable: bool      # decay too weak: no spacing can help
    d_min: float
    existence: ExistenceReport


def separation_report(geography: Geography, params: ModelParams,
                      **kwargs) -> SeparationReport:
    """Check the net-decay hypothesis and report margins at current spacing."""
    if geography.n_sites < 2:
        raise ValueError("separation analysis needs at least 2 sites")
    report = existence_margins(geography, params, **kwargs)
    _, d_min, _ = pairwise_metrics(geography.sites, geography.system)
    return SeparationReport(
        hypothesis_value=report.precondition_value,
        hypothesis_holds=report.precondition_holds,
        never_satisfiable=not report.precondition_holds,
        d_min=d_min, existence=report)


def bracket_threshold(fn, lo: float, hi: float, tol: float = 1e-6,
                      max_iter: int = 200) -> float:
    """Bisect a sign change of a scalar margin function on [lo, hi]."""
    flo, fhi = fn(lo), fn(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValueError(f"no sign change on [{lo}, {hi}]: f={flo:.3g},{fhi:.3g}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0 or (hi - lo) < tol:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# parameter sweeps

SWEEP_CATEGORIES = (
    "spread+unique", "spread+nonunique",
    "knife_edge+unique", "knife_edge+nonunique",
    "multiple+unique", "multiple+nonunique",
)


@dataclass(frozen=True)
class SweepResult:
    """Regime categories over a rectangular parameter grid.

    ``kind`` is "alpha_beta" (y axis = beta, fixed sigma) or "alpha_sigma"
    (y axis = sigma, fixed beta). ``category[iy, ix]`` indexes into
    SWEEP_CATEGORIES; ``reports`` holds the full per-cell classification
    row-major. For alpha_sigma sweeps, ``boundary`` lists the exact
    (alpha, sigma) vertices of the knife-edge curve alpha = 1/(sigma-1).
    """

    kind: str
    x_values: np.ndarray         # alpha axis
    y_values: np.ndarray         # beta or sigma axis
    fixed: dict
    category: np.ndarray         # (ny, nx) int
    reports: tuple
    boundary: tuple


def _category_index(report: RegimeReport) -> int:
    base = {"spread": 0, "knife_edge": 2, "multiple": 4}[report.location_multiplicity]
    return base + (0 if report.labor_uniqueness else 1)


def parameter_sweep(kind: str = "alpha_beta",
                    alphas=None, betas=None, sigmas=None,
                    sigma: float = 9.0, beta: float = -0.3) -> SweepResult:
    """Classify every cell of a 2-parameter grid.

    Defaults follow the desk-scale ranges documented in the README:
    alpha in [0, 0.6], beta in [-0.6, 0], sigma in [2, 12].
    """
    alphas = np.asarray(alphas if alphas is not None
                        else np.linspace(0.0, 0.6, 61), dtype=float)
    if kind == "alpha_beta":
        ys = np.asarray(betas if betas is not None
                        else np.linspace(-0.6, 0.0, 61), dtype=float)
        fixed = {"sigma": float(sigma)}
        points = [(a, b, sigma) for b in ys for a in alphas]
    elif kind == "alpha_sigma":
        ys = np.asarray(sigmas if sigmas is not None
                        else np.linspace(2.0, 12.0, 51), dtype=float)
        fixed = {"beta": float(beta)}
        points = [(a, beta, s) for s in ys for a in alphas]
    else:
        raise ValueError(f"unknown sweep kind {kind!r}")
    if alphas.size < 2 or ys.size < 2:
        raise ValueError("sweep needs at least 2 points per axis")

    reports = tuple(classify_point(a, b, s) for (a, b, s) in points)
    category = np.array([_category_index(r) for r in reports],
                        dtype=np.int8).reshape(ys.size, alphas.size)
    if kind == "alpha_sigma":
        boundary = tuple((1.0 / (s - 1.0), float(s)) for s in ys if s > 1.0)
    else:
        boundary = ((1.0 / (sigma - 1.0), float(sigma)),)
    return SweepResult(kind=kind, x_values=alphas, y_values=ys, fixed=fixed,
                       category=category, reports=reports, boundary=boundary)


def sweep_rows(result: SweepResult):
    """Flatten a sweep into CSV-ready dict rows (row-major over the grid)."""
    rows = []
    for r in result.reports:
        rows.append({
            "alpha": r.alpha, "beta": r.beta, "sigma": r.sigma,
            "multiplicity": r.location_multiplicity,
            "labor_unique": r.labor_uniqueness,
            "reconciliation": r.reconciliation,
            "gamma_ratio": r.gamma_ratio,
        })
    return rows


# ---------------------------------------------------------------------------
# multistart probe

@dataclass(frozen=True)
class SolutionCluster:
    representative: np.ndarray   # weight differences vs the first site
    count: int
    residual: float
    welfare: float


@dataclass(frozen=True)
class ProbeReport:
    clusters: tuple[SolutionCluster, ...]
    n_starts: int
    n_converged: int
    failures: tuple[tuple[int, str], ...]
    seed: int

    @property
    def unique_up_to_normalization(self) -> bool:
        return len(self.clusters) == 1 and self.n_converged > 0


def multistart_probe(geography: Geography, params: ModelParams, y_star=None,
                     n_starts: int = 16, seed: int = 0,
                     k_shrink: float = 0.5,
                     options: SolverOptions = SolverOptions(),
                     cluster_tol: float = 1e-6) -> ProbeReport:
    """Solve from seeded random feasible starts and cluster the fixed points.

    Clustering compares anchored weight differences in sup norm at
    ``cluster_tol``; a single cluster is evidence (not proof) of uniqueness.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    ids = tuple(y_star) if y_star is not None else tuple(s.id for s in geography.sites)
    sub = subset_geography(geography, ids)
    n = len(ids)
    _, d_min, _ = pairwise_metrics(sub.sites, sub.system) if n > 1 else (None, 0.0, None)

    rng = np.random.default_rng(seed)
    starts = []
    while len(starts) < n_starts:
        if n == 1:
            starts.append(np.zeros(1))
            continue
        w = rng.uniform(-0.5 * k_shrink * d_min, 0.5 * k_shrink * d_min, size=n)
        if lambda_feasibility(sub.sites, sub.system, w, k_shrink).verdict \
                == "interior":
            starts.append(w)

    clusters: list[dict] = []
    failures = []
    n_converged = 0
    for idx, w0 in enumerate(starts):
        opts = SolverOptions(
            damping=options.damping, tol=options.tol, max_iter=options.max_iter,
            k_shrink=options.k_shrink, weights_init=w0, anchor=options.anchor,
            market_tol=options.market_tol, market_max_iter=options.market_max_iter,
            market_damping=options.market_damping)
        try:
            sol = fixed_point_solve(geography, params, y_star=ids, options=opts)
        except HinterlandError as e:
            failures.append((idx, f"{type(e).__name__}: {e}"))
            continue
        n_converged += 1
        diff = sol.weights - sol.weights[0]
        for c in clusters:
            if np.abs(c["rep"] - diff).max() < cluster_tol:
                c["count"] += 1
                break
        else:
            clusters.append({"rep": diff, "count": 1,
                             "residual": sol.residuals["weights"],
                             "welfare": sol.welfare})
    return ProbeReport(
        clusters=tuple(SolutionCluster(representative=c["rep"], count=c["count"],
                                       residual=c["residual"], welfare=c["welfare"])
                       for c in clusters),
        n_starts=n_starts, n_converged=n_converged,
        failures=tuple(failures), seed=seed)
