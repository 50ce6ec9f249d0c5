"""Run-configuration loading and schema validation.

A run configuration is a single YAML document (nested sections, ``#``
comments allowed).  Every key is validated against the schema below before
any computation starts; unknown keys are rejected, and every schema error
carries the ``file:line`` of the offending entry.

Schema (defaults in parentheses; [r] = required when the block is present)::

    geography:                  # needed by solve / enumerate / render
      bbox: [x0, y0, x1, y1]    # ([0, 0, 1, 1])
      resolution: [nx, ny]      # ([128, 128])
      domain:                   # (whole bbox)
        kind: all | disk | mask
        center: [x, y]          # disk (bbox center)
        radius: r               # disk [r]
        file: mask.pgm          # mask [r]; 255 = outside
      amenity:                  # (uniform 1.0)
        kind: uniform | bumps | raster
        value: a                # uniform (1.0)
        base: a                 # bumps (1.0)
        bumps:                  # bumps [r]
          - {center: [x, y], height: h, width: w}
        file: field.fld         # raster [r]
      metric: euclidean | scaled_euclidean   # (euclidean)
      scales: [s_1, ..., s_n]   # scaled_euclidean [r]; one per site
      sites:                    # [r]
        - {position: [x, y], productivity: a}   # productivity (1.0)
      trade:                    # [r]
        kind: from_metric | explicit
        tau: t                  # from_metric [r]
        file: trade.csv         # explicit [r]; square, headerless
    params:                     # needed by solve / classify / enumerate
      sigma: s                  # [r] > 1
      alpha: a                  # [r]
      beta: b                   # [r] < 0 unless two_sector
      delta: d                  # [r] > 0
      tau: t                    # (0.0)
      total_labor: L            # (1.0)
      variant:                  # (baseline)
        kind: baseline | home_consumption | two_sector
        mu: m                   # two_sector [r]
        beta_tilde: b           # two_sector [r]
    solver:
      damping: v                # (0.5)
      tol: v                    # (1e-12)
      max_iter: n               # (2000)
      k_shrink: v               # (0.5)
      seed: n                   # (0)
      anchor: site_id | null    # (first active site)
    solve:
      active_sites: [ids] | null   # (null = all sites)
    sweep:
      kind: alpha_beta | alpha_sigma   # (alpha_beta)
      alphas: {start, stop, count} | [values]   # (0..0.6, 61)
      betas:  {start, stop, count} | [values]   # (-0.6..0, 61)
      sigmas: {start, stop, count} | [values]   # (2..12, 51)
      sigma: s                  # fixed sigma for alpha_beta (9.0)
      beta: b                   # fixed beta for alpha_sigma (-0.3)
    enumerate:
      sizes: [k, ...]           # ([2])
      max_subsets: n            # (256)
    threads: n                  # (0 = all cores; results invariant)

Relative file paths resolve against the directory of the config file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from yaml.constructor import SafeConstructor

from .equilibrium import (
    Baseline,
    HomeConsumption,
    ModelParams,
    SolverOptions,
    TwoSector,
)
from .errors import ConfigError, HinterlandError
from .fields import (
    Geography,
    amenity_from_function,
    explicit_trade_costs,
    trade_costs_from_metric,
)
from .geometry import DistanceSystem, Site, build_grid
from .io_formats import read_field_raster, read_label_raster, read_matrix_csv

_MISSING = object()


# ---------------------------------------------------------------------------
# YAML -> (data, line map)

def _walk(node, path, lines, source, constructor):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = str(constructor.construct_object(key_node, deep=True))
            if key in out:
                raise ConfigError(f"{source}:{key_node.start_mark.line + 1}",
                                  f"duplicate key {key!r}")
            lines[path + (key,)] = key_node.start_mark.line + 1
            out[key] = _walk(value_node, path + (key,), lines, source,
                             constructor)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_walk(item, path + (i,), lines, source, constructor)
                for i, item in enumerate(node.value)]
    return constructor.construct_object(node, deep=True)


class _Section:
    """A mapping under validation: typed take(), then finish() rejects leftovers."""

    def __init__(self, data, path, lines, source):
        if not isinstance(data, dict):
            raise ConfigError(f"{source}:{lines.get(path, 1)}",
                              f"'{_name(path)}' must be a mapping")
        self._data = dict(data)
        self._path = path
        self._lines = lines
        self._source = source

    def error(self, message, key=None):
        path = self._path + (key,) if key is not None else self._path
        line = self._lines.get(path, self._lines.get(self._path, 1))
        raise ConfigError(f"{self._source}:{line}", message)

    def _take(self, key, default):
        if key not in self._data:
            if default is _MISSING:
                self.error(f"missing required key '{_name(self._path + (key,))}'")
            return default
        return self._data.pop(key)

    def has(self, key) -> bool:
        return key in self._data

    def take_float(self, key, default=_MISSING, minimum=None, maximum=None,
                   exclusive=False):
        value = self._take(key, default)
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.error(f"'{key}' must be a number, got {value!r}", key)
        value = float(value)
        if minimum is not None and (value <= minimum if exclusive
                                    else value < minimum):
            bound = "> " if exclusive else ">= "
            self.error(f"'{key}' must be {bound}{minimum}, got {value}", key)
        if maximum is not None and value > maximum:
            self.error(f"'{key}' must be <= {maximum}, got {value}", key)
        return value

    def take_int(self, key, default=_MISSING, minimum=None):
        value = self._take(key, default)
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self.error(f"'{key}' must be an integer, got {value!r}", key)
        if minimum is not None and value < minimum:
            self.error(f"'{key}' must be >= {minimum}, got {value}", key)
        return value

    def take_str(self, key, default=_MISSING, choices=None):
        value = self._take(key, default)
        if value is None and default is None:
            return None
        if not isinstance(value, str):
            self.error(f"'{key}' must be a string, got {value!r}", key)
        if choices is not None and value not in choices:
            self.error(f"'{key}' must be one of {', '.join(choices)}; "
                       f"got {value!r}", key)
        return value

    def take_floats(self, key, default=_MISSING, length=None):
        value = self._take(key, default)
        if value is None and default is None:
            return None
        if (not isinstance(value, list)
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in value)):
            self.error(f"'{key}' must be a list of numbers, got {value!r}", key)
        if length is not None and len(value) != length:
            self.error(f"'{key}' must have {length} entries, "
                       f"got {len(value)}", key)
        return [float(v) for v in value]

    def take_value(self, key, default=_MISSING):
        return self._take(key, default)

    def take_section(self, key):
        """Pop a sub-mapping; returns None when absent."""
        if key not in self._data:
            return None
        return _Section(self._data.pop(key), self._path + (key,),
                        self._lines, self._source)

    def take_sections(self, key, required=False):
        """Pop a list of sub-mappings; [] when absent unless required."""
        value = self._take(key, _MISSING if required else None)
        if value is None:
            if required:
                self.error(f"'{key}' must be a non-empty list", key)
            return []
        if not isinstance(value, list):
            self.error(f"'{key}' must be a list", key)
        return [_Section(item, self._path + (key, i), self._lines,
                         self._source)
                for i, item in enumerate(value)]

    def finish(self):
        for key in self._data:
            self.error(f"unknown key '{_name(self._path + (key,))}'", key)


def _name(path) -> str:
    return ".".join(str(p) for p in path if not isinstance(p, int)) or "<root>"


# ---------------------------------------------------------------------------
# config objects

@dataclass(frozen=True)
class SolverConfig:
    options: SolverOptions
    seed: int


@dataclass(frozen=True)
class SweepConfig:
    kind: str
    alphas: np.ndarray | None
    betas: np.ndarray | None
    sigmas: np.ndarray | None
    sigma: float
    beta: float


@dataclass(frozen=True)
class EnumerateConfig:
    sizes: tuple[int, ...]
    max_subsets: int


@dataclass(frozen=True)
class RunConfig:
    source: str
    geography: Geography | None
    params: ModelParams | None
    solver: SolverConfig
    active_sites: tuple[int, ...] | None
    sweep: SweepConfig
    enumerate: EnumerateConfig
    threads: int

    def require_geography(self) -> Geography:
        if self.geography is None:
            raise ConfigError(self.source, "a 'geography' block is required "
                              "for this command")
        return self.geography

    def require_params(self) -> ModelParams:
        if self.params is None:
            raise ConfigError(self.source, "a 'params' block is required "
                              "for this command")
        return self.params


# ---------------------------------------------------------------------------
# block builders

def _build_domain_predicate(section, resolution, base_dir, bbox):
    if section is None:
        return None
    kind = section.take_str("kind", "all",
                            choices=("all", "disk", "mask"))
    x0, y0, x1, y1 = bbox
    if kind == "all":
        section.finish()
        return None
    if kind == "disk":
        center = section.take_floats(
            "center", [0.5 * (x0 + x1), 0.5 * (y0 + y1)], length=2)
        radius = section.take_float("radius", minimum=0.0, exclusive=True)
        section.finish()
        return lambda X, Y: (X - center[0]) ** 2 + (Y - center[1]) ** 2 \
            <= radius ** 2
    name = section.take_str("file")
    try:
        labels, file_bbox = read_label_raster(base_dir / name)
    except (OSError, ValueError) as exc:
        section.error(f"cannot read mask raster: {exc}", "file")
    if labels.shape != (resolution[1], resolution[0]):
        section.error(f"mask raster is {labels.shape[1]}x{labels.shape[0]}, "
                      f"resolution says {resolution[0]}x{resolution[1]}",
                      "file")
    if not np.allclose(file_bbox, bbox, rtol=1e-9, atol=1e-12):
        section.error(f"mask raster bbox {file_bbox} does not match "
                      f"geography bbox {tuple(bbox)}", "file")
    inside = labels >= 0
    section.finish()
    return lambda X, Y: inside


def _build_amenity(section, grid, base_dir):
    if section is None:
        return amenity_from_function(grid, lambda X, Y: np.ones_like(X))
    kind = section.take_str("kind", "uniform",
                            choices=("uniform", "bumps", "raster"))
    if kind == "uniform":
        value = section.take_float("value", 1.0, minimum=0.0, exclusive=True)
        section.finish()
        return amenity_from_function(grid, lambda X, Y: np.full_like(X, value))
    if kind == "bumps":
        base = section.take_float("base", 1.0)
        bumps = []
        for bump in section.take_sections("bumps", required=True):
            center = bump.take_floats("center", length=2)
            height = bump.take_float("height")
            width = bump.take_float("width", minimum=0.0, exclusive=True)
            bumps.append((center, height, width))
            bump.finish()
        section.finish()

        def source(X, Y):
            values = np.full_like(X, base)
            for (cx, cy), height, width in bumps:
                values += height * np.exp(
                    -((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * width ** 2))
            return values

        return amenity_from_function(grid, source)
    name = section.take_str("file")
    try:
        values, file_bbox = read_field_raster(base_dir / name)
    except (OSError, ValueError) as exc:
        section.error(f"cannot read amenity raster: {exc}", "file")
    if values.shape != (grid.ny, grid.nx):
        section.error(f"amenity raster is {values.shape[1]}x{values.shape[0]}, "
                      f"resolution says {grid.nx}x{grid.ny}", "file")
    if not np.allclose(file_bbox, grid.bbox, rtol=1e-9, atol=1e-12):
        section.error(f"amenity raster bbox {file_bbox} does not match "
                      f"geography bbox {tuple(grid.bbox)}", "file")
    section.finish()
    return amenity_from_function(grid, values)


def _build_geography(section, base_dir):
    bbox = section.take_floats("bbox", [0.0, 0.0, 1.0, 1.0], length=4)
    if not (bbox[0] < bbox[2] and bbox[1] < bbox[3]):
        section.error(f"bbox must satisfy x0 < x1 and y0 < y1, got {bbox}",
                      "bbox")
    resolution = section.take_value("resolution", [128, 128])
    reso_sec_ok = (isinstance(resolution, list) and len(resolution) == 2
                   and all(isinstance(v, int) and not isinstance(v, bool)
                           and v >= 2 for v in resolution))
    if not reso_sec_ok:
        section.error(f"'resolution' must be [nx, ny] with integers >= 2, "
                      f"got {resolution!r}", "resolution")

    site_sections = section.take_sections("sites", required=True)
    if not site_sections:
        section.error("'sites' must list at least one site", "sites")
    sites = []
    for i, site_sec in enumerate(site_sections):
        position = site_sec.take_floats("position", length=2)
        if not (bbox[0] <= position[0] <= bbox[2]
                and bbox[1] <= position[1] <= bbox[3]):
            site_sec.error(f"site {i} position {tuple(position)} lies "
                           f"outside bbox {tuple(bbox)}", "position")
        productivity = site_sec.take_float("productivity", 1.0,
                                           minimum=0.0, exclusive=True)
        site_sec.finish()
        sites.append(Site(i, (position[0], position[1]), productivity))
    sites = tuple(sites)

    metric = section.take_str("metric", "euclidean",
                              choices=("euclidean", "scaled_euclidean"))
    scales = section.take_floats("scales", None, length=len(sites))
    if metric == "scaled_euclidean":
        if scales is None:
            section.error("'scales' is required when metric is "
                          "'scaled_euclidean'")
        if any(s <= 0 for s in scales):
            section.error("'scales' entries must be > 0", "scales")
        system = DistanceSystem(kind="scaled_euclidean",
                                scales=tuple(scales))
    else:
        if scales is not None:
            section.error("'scales' only applies to the scaled_euclidean "
                          "metric", "scales")
        system = DistanceSystem()

    domain_sec = section.take_section("domain")
    predicate = _build_domain_predicate(domain_sec, resolution, base_dir,
                                        bbox)
    grid = build_grid(tuple(bbox), (resolution[0], resolution[1]), predicate)

    amenity = _build_amenity(section.take_section("amenity"), grid, base_dir)

    trade_sec = section.take_section("trade")
    if trade_sec is None:
        section.error("a 'trade' block is required (kind: from_metric "
                      "with tau, or kind: explicit with file)")
    trade_kind = trade_sec.take_str("kind",
                                    choices=("from_metric", "explicit"))
    if trade_kind == "from_metric":
        tau = trade_sec.take_float("tau", minimum=0.0)
        trade_sec.finish()
        trade = trade_costs_from_metric(sites, system, tau=tau)
    else:
        name = trade_sec.take_str("file")
        try:
            values = read_matrix_csv(base_dir / name)
        except (OSError, ValueError) as exc:
            trade_sec.error(f"cannot read trade matrix: {exc}", "file")
        if values.shape != (len(sites), len(sites)):
            trade_sec.error(f"trade matrix is {values.shape[0]}x"
                            f"{values.shape[1]} but there are "
                            f"{len(sites)} sites", "file")
        trade_sec.finish()
        trade = explicit_trade_costs(values)

    section.finish()
    return Geography(grid=grid, sites=sites, system=system, amenity=amenity,
                     trade=trade)


def _build_params(section):
    sigma = section.take_float("sigma")
    alpha = section.take_float("alpha")
    beta = section.take_float("beta")
    delta = section.take_float("delta")
    tau = section.take_float("tau", 0.0)
    total_labor = section.take_float("total_labor", 1.0)
    variant_sec = section.take_section("variant")
    if variant_sec is None:
        variant = Baseline()
    else:
        kind = variant_sec.take_str(
            "kind", "baseline",
            choices=("baseline", "home_consumption", "two_sector"))
        if kind == "two_sector":
            mu = variant_sec.take_float("mu")
            beta_tilde = variant_sec.take_float("beta_tilde")
            variant = TwoSector(mu=mu, beta=beta_tilde)
        else:
            variant = Baseline() if kind == "baseline" else HomeConsumption()
        variant_sec.finish()
    try:
        params = ModelParams(sigma=sigma, alpha=alpha, beta=beta, delta=delta,
                             tau=tau, total_labor=total_labor,
                             variant=variant)
    except (ValueError, HinterlandError) as exc:
        section.error(str(exc))
    section.finish()
    return params


def _build_solver(section):
    if section is None:
        return SolverConfig(options=SolverOptions(), seed=0)
    damping = section.take_float("damping", 0.5, minimum=0.0, exclusive=True,
                                 maximum=1.0)
    tol = section.take_float("tol", 1e-12, minimum=0.0, exclusive=True)
    max_iter = section.take_int("max_iter", 2000, minimum=1)
    k_shrink = section.take_float("k_shrink", 0.5, minimum=0.0,
                                  exclusive=True, maximum=1.0)
    seed = section.take_int("seed", 0, minimum=0)
    anchor = section.take_value("anchor", None)
    if anchor is not None and (not isinstance(anchor, int)
                               or isinstance(anchor, bool)):
        section.error(f"'anchor' must be a site id or null, got {anchor!r}",
                      "anchor")
    section.finish()
    options = SolverOptions(damping=damping, tol=tol, max_iter=max_iter,
                            k_shrink=k_shrink, anchor=anchor)
    return SolverConfig(options=options, seed=seed)


def _axis(section, key):
    """An axis is either a list of values or a {start, stop, count} range."""
    if not section.has(key):
        return None
    if isinstance(section._data[key], list):
        values = section.take_floats(key)
        if len(values) < 2:
            section.error(f"'{key}' needs at least 2 values", key)
        return np.asarray(values)
    sub = section.take_section(key)
    start = sub.take_float("start")
    stop = sub.take_float("stop")
    count = sub.take_int("count", minimum=2)
    sub.finish()
    return np.linspace(start, stop, count)


def _build_sweep(section):
    if section is None:
        return SweepConfig(kind="alpha_beta", alphas=None, betas=None,
                           sigmas=None, sigma=9.0, beta=-0.3)
    kind = section.take_str("kind", "alpha_beta",
                            choices=("alpha_beta", "alpha_sigma"))
    alphas = _axis(section, "alphas")
    betas = _axis(section, "betas")
    sigmas = _axis(section, "sigmas")
    sigma = section.take_float("sigma", 9.0, minimum=1.0, exclusive=True)
    beta = section.take_float("beta", -0.3)
    section.finish()
    return SweepConfig(kind=kind, alphas=alphas, betas=betas, sigmas=sigmas,
                       sigma=sigma, beta=beta)


def _build_enumerate(section):
    if section is None:
        return EnumerateConfig(sizes=(2,), max_subsets=256)
    sizes_raw = section.take_value("sizes", [2])
    if (not isinstance(sizes_raw, list) or not sizes_raw
            or any(isinstance(v, bool) or not isinstance(v, int) or v < 1
                   for v in sizes_raw)):
        section.error(f"'sizes' must be a list of integers >= 1, "
                      f"got {sizes_raw!r}", "sizes")
    max_subsets = section.take_int("max_subsets", 256, minimum=1)
    section.finish()
    return EnumerateConfig(sizes=tuple(sizes_raw), max_subsets=max_subsets)


def _build_active_sites(section, geography):
    if section is None:
        return None
    ids = section.take_value("active_sites", None)
    section.finish()
    if ids is None:
        return None
    if (not isinstance(ids, list) or not ids
            or any(isinstance(v, bool) or not isinstance(v, int)
                   for v in ids)):
        section.error(f"'active_sites' must be a non-empty list of site ids "
                      f"or null, got {ids!r}", "active_sites")
    if geography is not None:
        known = {site.id for site in geography.sites}
        for v in ids:
            if v not in known:
                section.error(f"'active_sites' references unknown site {v}",
                              "active_sites")
    if len(set(ids)) != len(ids):
        section.error("'active_sites' has duplicate ids", "active_sites")
    return tuple(ids)


# ---------------------------------------------------------------------------
# entry points

def parse_config(text: str, source: str = "<config>",
                 base_dir: Path | str = ".") -> RunConfig:
    """Validate a config document against the schema; build the objects."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigError(where, f"invalid YAML: {exc}") from exc
    if node is None:
        raise ConfigError(source, "empty config document")
    lines: dict = {}
    constructor = SafeConstructor()
    data = _walk(node, (), lines, source, constructor)
    root = _Section(data, (), lines, source)
    base_dir = Path(base_dir)

    geo_sec = root.take_section("geography")
    geography = None
    if geo_sec is not None:
        try:
            geography = _build_geography(geo_sec, base_dir)
        except ConfigError:
            raise
        except HinterlandError as exc:
            geo_sec.error(str(exc))

    params_sec = root.take_section("params")
    params = _build_params(params_sec) if params_sec is not None else None

    solver = _build_solver(root.take_section("solver"))
    active = _build_active_sites(root.take_section("solve"), geography)
    sweep = _build_sweep(root.take_section("sweep"))
    enum_cfg = _build_enumerate(root.take_section("enumerate"))
    threads = root.take_int("threads", 0, minimum=0)
    root.finish()

    if active is not None and solver.options.anchor is not None \
            and solver.options.anchor not in active:
        raise ConfigError(source, f"solver.anchor {solver.options.anchor} "
                          "is not in solve.active_sites")

    return RunConfig(source=source, geography=geography, params=params,
                     solver=solver, active_sites=active, sweep=sweep,
                     enumerate=enum_cfg, threads=threads)


def load_config(path) -> RunConfig:
    """Read and validate a config file; relative paths resolve beside it."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    return parse_config(text, source=str(path), base_dir=path.parent)
