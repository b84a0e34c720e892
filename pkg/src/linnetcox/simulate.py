"""Simulation of Poisson and thinned-Cox point processes on networks.

The Cox simulator follows the model's construction directly: draw the
driving Poisson process, evaluate ``k`` independent Gaussian fields with
exponential correlation in the network metric, form the retention field
``exp(-sigma2/2 * sum_j Z_j**2)``, and keep each driving point ``u`` whose
retention value is at least an independent uniform mark.

Two evaluation modes are available. ``"exact"`` samples the fields jointly
at the driving points themselves (no discretisation error). ``"grid"``
samples the fields once on a lattice and assigns each driving point the
value at its nearest lattice site — useful when the same field realisation
must be reported or reused, and the classical approach when the field is
expensive. Distances decide nearest sites; exact ties go to the site with
the lowest edge id, then the lowest offset.

All functions are deterministic given a seed: the same seed yields
bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .models import CoxModel, IntensityModel
from .network import (
    LinearNetwork,
    PointPattern,
    _point_arrays,
    distance_matrix,
    lattice,
    pairwise_distances,
)

__all__ = [
    "GRFSample",
    "CoxSample",
    "as_generator",
    "spawn_generators",
    "simulate_poisson",
    "sample_grf",
    "retention_field",
    "simulate_cox",
    "matern_thin",
]


def as_generator(seed) -> np.random.Generator:
    """Coerce ``None`` / int / SeedSequence / Generator to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_generators(seed, n: int) -> list[np.random.Generator]:
    """Independent replicate streams from one master seed.

    Streams are spawned from a single ``SeedSequence``, so replicate ``i``
    is reproducible independently of how many replicates run or in which
    order they are consumed.
    """
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(c) for c in ss.spawn(n)]


@dataclass(frozen=True)
class GRFSample:
    """Joint draw of ``k`` Gaussian fields at a finite set of sites.

    ``values[j, i]`` is field ``j`` at ``sites[i]``. Coincident sites get
    exactly equal values.
    """

    sites: PointPattern
    values: np.ndarray
    beta: float


@dataclass(frozen=True)
class CoxSample:
    """Result of one thinned-Cox simulation.

    ``pattern`` is the observed (thinned) process. ``driving`` is the
    underlying Poisson realisation and ``retention`` its per-point
    retention probabilities. In grid mode, ``sites``/``site_retention``
    hold the lattice and the retention field on it.
    """

    pattern: PointPattern
    driving: PointPattern
    retention: np.ndarray
    mode: str
    sites: PointPattern | None = None
    site_retention: np.ndarray | None = None
    spacing: float | None = None


def simulate_poisson(net: LinearNetwork, intensity, seed=None) -> PointPattern:
    """Draw an inhomogeneous Poisson process with branch-wise intensity.

    ``intensity`` is an :class:`IntensityModel` or a single float (used on
    both branch types). The total count is Poisson with mean
    ``rho_m * |L_m| + rho_s * |L_s|``; locations are independent and
    uniform within edges chosen proportionally to ``rho * length``.
    """
    if isinstance(intensity, (int, float)):
        intensity = IntensityModel(float(intensity), float(intensity))
    rng = as_generator(seed)
    rho_e = np.where(net.edge_side, intensity.side, intensity.main)
    w = rho_e * net.edge_length
    mu = float(w.sum())
    if mu <= 0.0:
        return PointPattern(net, [])
    n = int(rng.poisson(mu))
    eidx = rng.choice(net.n_edges, size=n, p=w / mu)
    off = rng.random(n) * net.edge_length[eidx]
    return PointPattern.from_indices(net, eidx, off)


def _cholesky_with_jitter(corr: np.ndarray) -> np.ndarray:
    mean_diag = float(np.mean(np.diag(corr))) if corr.shape[0] else 1.0
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * mean_diag
    limit = 1e-4 * mean_diag
    eye = np.eye(corr.shape[0])
    while jitter <= limit * (1.0 + 1e-12):
        try:
            return np.linalg.cholesky(corr + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(
        "correlation matrix is not positive definite even with jitter "
        f"up to {limit:g}"
    )


def _grf_values(net, eidx, off, beta, k, rng) -> np.ndarray:
    """Joint field values, shape (k, n). Coincident sites share values."""
    n = eidx.size
    if n == 0:
        return np.empty((k, 0))
    # Exactly coincident canonical sites must receive exactly equal values,
    # so factor the correlation on unique sites only.
    stacked = np.stack([eidx.astype(np.float64), off])
    uniq, inverse = np.unique(stacked, axis=1, return_inverse=True)
    ue = uniq[0].astype(np.intp)
    uo = uniq[1]
    dist = pairwise_distances(net, (ue, uo))
    chol = _cholesky_with_jitter(np.exp(-beta * dist))
    z = rng.standard_normal((ue.size, k))
    unique_vals = chol @ z                      # (n_unique, k)
    return unique_vals[np.asarray(inverse).ravel(), :].T


def sample_grf(net: LinearNetwork, sites, beta: float, k: int = 1, seed=None) -> GRFSample:
    """Sample ``k`` independent unit-variance Gaussian fields at ``sites``.

    The fields have correlation ``exp(-beta * d(u, v))`` in the
    shortest-path metric, which is a valid correlation on trees. The joint
    draw uses a Cholesky factor of the correlation matrix; if that factor
    fails numerically, a diagonal jitter is escalated from ``1e-10`` to
    ``1e-4`` times the mean diagonal before giving up.
    """
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    if not (isinstance(k, int) and k >= 1):
        raise ValidationError(f"k must be an integer >= 1, got {k}")
    pat = sites if isinstance(sites, PointPattern) else PointPattern(net, sites)
    rng = as_generator(seed)
    values = _grf_values(net, pat.edge_indices, pat.offsets, beta, k, rng)
    return GRFSample(pat, values, float(beta))


def retention_field(grf, sigma2: float) -> np.ndarray:
    """Retention probabilities ``exp(-sigma2/2 * sum_j Z_j(u)**2)``.

    ``grf`` is a :class:`GRFSample` or a raw ``(k, n)`` value array. The
    result lies in ``(0, 1]`` with mean ``(1 + sigma2) ** (-k/2)``.
    """
    if not sigma2 > 0:
        raise ValidationError(f"sigma2 must be positive, got {sigma2}")
    values = grf.values if isinstance(grf, GRFSample) else np.asarray(grf)
    return np.exp(-0.5 * sigma2 * (values**2).sum(axis=0))


def _sorted_lattice_arrays(net, spacing):
    """Lattice sites sorted by (edge id, offset) for deterministic ties."""
    pts = lattice(net, spacing)
    e = np.array([net.edge_index(p.edge_id) for p in pts], dtype=np.intp)
    o = np.array([p.offset for p in pts])
    id_rank = {eid: r for r, eid in enumerate(sorted(net._edge_index))}
    ranks = np.array([id_rank[net.edges[i].id] for i in e])
    order = np.lexsort((o, ranks))
    return e[order], o[order]


def simulate_cox(
    net: LinearNetwork,
    model: CoxModel,
    mode: str = "exact",
    spacing: float = 1.0,
    seed=None,
) -> CoxSample:
    """Simulate the thinned-Cox process.

    A point ``u`` of the driving Poisson process is retained when
    ``retention(u) >= U`` for an independent uniform ``U``. With
    ``mode="exact"`` the Gaussian fields are evaluated jointly at the
    driving points; with ``mode="grid"`` they are evaluated on a lattice
    with the given ``spacing`` and each driving point uses its nearest
    site's value (ties: lowest edge id, then lowest offset).
    """
    if mode not in ("exact", "grid"):
        raise ValidationError(f"mode must be 'exact' or 'grid', got {mode!r}")
    rng = as_generator(seed)
    driving = simulate_poisson(net, model.driving_intensity(), rng)
    e, o = driving.edge_indices, driving.offsets

    if mode == "exact":
        values = _grf_values(net, e, o, model.beta, model.k, rng)
        pi = retention_field(values, model.sigma2)
        sites = None
        site_pi = None
    else:
        if not spacing > 0:
            raise ValidationError(f"grid spacing must be positive, got {spacing}")
        se, so = _sorted_lattice_arrays(net, spacing)
        values = _grf_values(net, se, so, model.beta, model.k, rng)
        site_pi = retention_field(values, model.sigma2)
        sites = PointPattern.from_indices(net, se, so)
        if driving.n:
            nearest = pairwise_distances(net, (e, o), (se, so)).argmin(axis=1)
            pi = site_pi[nearest]
        else:
            pi = np.empty(0)

    keep = pi >= rng.random(driving.n)
    pattern = PointPattern.from_indices(net, e[keep], o[keep])
    return CoxSample(
        pattern=pattern,
        driving=driving,
        retention=pi,
        mode=mode,
        sites=sites,
        site_retention=site_pi,
        spacing=spacing if mode == "grid" else None,
    )


def matern_thin(pattern: PointPattern, h: float) -> PointPattern:
    """Type-I hard-core thinning: drop *both* members of any pair closer
    than ``h``. Points at distance exactly ``h`` survive."""
    if not h >= 0:
        raise ValidationError(f"hard-core distance must be nonnegative, got {h}")
    if pattern.n <= 1:
        return PointPattern.from_indices(pattern.network, pattern.edge_indices, pattern.offsets)
    dist = distance_matrix(pattern)
    np.fill_diagonal(dist, np.inf)
    keep = dist.min(axis=1) >= h
    return PointPattern.from_indices(
        pattern.network, pattern.edge_indices[keep], pattern.offsets[keep]
    )
