"""Command-line interface.

Every subcommand writes its outputs atomically and drops a
``manifest.json`` (inside output directories, or ``<stem>.manifest.json``
next to single files) recording the exact argument vector, seed, and
package version; re-running the recorded argv reproduces the outputs
bitwise. Any flag can also be supplied through an environment variable
named ``LINNETCOX_<DEST>`` (for example ``LINNETCOX_SEED=7``); explicit
flags win over the environment.

Exit status: 0 on success, 2 on validation problems (bad flags, missing
or malformed files), 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ._version import __version__
from .envelopes import envelope_pipeline
from .errors import NumericalError, ValidationError
from .estimation import (
    Cl2Config,
    FitResult,
    MinContrastConfig,
    StudyRun,
    cl2_fit,
    simulation_study,
    two_step_fit,
)
from .io import (
    atomic_write,
    load_fit,
    load_network,
    load_pattern,
    save_curves,
    save_envelope,
    save_fit,
    save_network,
    save_pattern,
    save_study,
    write_manifest,
)
from .models import CoxModel, IntensityModel
from .simulate import simulate_cox, simulate_poisson, spawn_generators
from .summaries import (
    FgjConfig,
    fgj_estimates,
    fit_intensity_mle,
    g_estimate,
    k_estimate,
    kernel_intensity,
)
from .templates import TEMPLATES, make_network

log = logging.getLogger(__name__)

ENV_PREFIX = "LINNETCOX_"


def _bool_env(raw: str) -> bool:
    return raw.strip().lower() in ("1", "true", "yes", "on")


def _add(parser, *flags, **kw):
    """``add_argument`` with an ``LINNETCOX_<DEST>`` environment fallback."""
    dest = kw.get("dest") or max(flags, key=len).lstrip("-").replace("-", "_")
    raw = os.environ.get(ENV_PREFIX + dest.upper())
    if raw is not None:
        if kw.get("action") == "store_true":
            kw["default"] = _bool_env(raw)
        else:
            kw["default"] = kw.get("type", str)(raw)
        kw.pop("required", None)
    parser.add_argument(*flags, **kw)


def _parse_rgrid(text: str) -> np.ndarray:
    """Parse an ``"a:b:n"`` grid specification."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"r grid must look like 'start:stop:count', got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ValidationError(f"bad r grid {text!r}: {exc}") from None
    if not (n >= 2 and b > a >= 0):
        raise ValidationError(f"r grid needs 0 <= start < stop and count >= 2, got {text!r}")
    return np.linspace(a, b, n)


def _parse_knob(text: str) -> tuple[str, object]:
    name, sep, raw = text.partition("=")
    if not sep or not name:
        raise ValidationError(f"knob must look like name=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    if isinstance(value, list):
        value = tuple(value)
    return name.replace("-", "_"), value


def _config_dict(args) -> dict:
    drop = {"func", "command"}
    out = {}
    for key, value in vars(args).items():
        if key in drop:
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _manifest(args, argv, target) -> None:
    write_manifest(target, args.command, argv, _config_dict(args), getattr(args, "seed", None))


# -- subcommands --------------------------------------------------------------


def _cmd_make_network(args, argv) -> None:
    knobs = dict(_parse_knob(k) for k in args.knob)
    try:
        net = make_network(args.template, seed=args.seed, **knobs)
    except TypeError as exc:  # unknown knob name for this template
        raise ValidationError(str(exc)) from None
    save_network(net, args.out)
    _manifest(args, argv, args.out)
    log.info(
        "wrote %s: %d edges, total length %.1f", args.out, len(net.edges), net.total_length
    )


def _replicate_patterns(args, argv, simulate_one, extra=None) -> None:
    """Shared replicate loop of the simulate-* commands."""
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gens = spawn_generators(args.seed, args.reps)
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(simulate_one, gens))
    else:
        results = [simulate_one(g) for g in gens]
    for rep, result in enumerate(results):
        save_pattern(result[0], out_dir / f"pattern_{rep:04d}.csv")
        if extra is not None:
            extra(rep, result, out_dir)
    _manifest(args, argv, out_dir)


def _cmd_simulate_poisson(args, argv) -> None:
    net = load_network(args.net)
    rho_s = args.rho_m if args.rho_s is None else args.rho_s
    intensity = IntensityModel(args.rho_m, rho_s)
    _replicate_patterns(args, argv, lambda gen: (simulate_poisson(net, intensity, gen),))


def _cmd_simulate_cox(args, argv) -> None:
    net = load_network(args.net)
    rho_ys = args.rho_ym if args.rho_ys is None else args.rho_ys
    model = CoxModel(args.rho_ym, rho_ys, args.sigma2, args.beta, args.k)

    def simulate_one(gen):
        sample = simulate_cox(net, model, mode=args.mode, spacing=args.spacing, seed=gen)
        return (sample.pattern, sample)

    def extra(rep, result, out_dir):
        sample = result[1]
        if not (args.save_pi and sample.sites is not None):
            return
        with atomic_write(out_dir / f"pi_{rep:04d}.csv") as f:
            f.write("edge,offset,pi\n")
            sites = sample.sites
            for ei, off, pi in zip(sites.edge_indices, sites.offsets, sample.site_retention):
                f.write(f"{net.edges[ei].id},{float(off)!r},{float(pi)!r}\n")

    if args.save_pi and args.mode != "grid":
        raise ValidationError("--save-pi requires --mode grid (the field is site-based)")
    _replicate_patterns(args, argv, simulate_one, extra)


def _fit_config(args):
    if args.method in ("mce-g", "mce-k"):
        return MinContrastConfig(
            target="g" if args.method == "mce-g" else "K",
            r_min=args.rl,
            r_max=args.ru,
            power=args.p,
            bandwidth=args.bandwidth,
        )
    return Cl2Config(
        weight=args.weight,
        r0=args.r0,
        epsilon=args.epsilon,
        samples_per_pair=args.samples,
        search=args.search,
        mc_seed=args.mc_seed,
    )


def _cmd_fit(args, argv) -> None:
    net = load_network(args.net)
    pattern = load_pattern(args.pattern, net)
    config = _fit_config(args)
    if args.method in ("mce-g", "mce-k"):
        fit = two_step_fit(pattern, k=args.k, config=config)
    else:
        intensity = fit_intensity_mle(pattern)
        res = cl2_fit(pattern, k=args.k, config=config)
        scale = (1.0 + res.sigma2) ** (args.k / 2.0)
        fit = FitResult(
            rho_main=intensity.main,
            rho_side=intensity.side,
            sigma2=res.sigma2,
            beta=res.beta,
            k=args.k,
            rho_y_main=intensity.main * scale,
            rho_y_side=intensity.side * scale,
            objective=res.score_norm,
            converged=res.converged and not bool(res.on_boundary),
            method="cl2",
        )
    save_fit(fit, args.out)
    _manifest(args, argv, args.out)
    if not fit.converged:
        log.warning("fit did not converge; estimates written anyway")
    log.info("sigma2=%g beta=%g", fit.sigma2, fit.beta)


def _cmd_summaries(args, argv) -> None:
    net = load_network(args.net)
    pattern = load_pattern(args.pattern, net)
    which = [w.strip() for w in args.which.split(",") if w.strip()]
    known = {"K", "g", "F", "G", "J"}
    bad = [w for w in which if w not in known]
    if bad or not which:
        raise ValidationError(f"--which takes a comma list from {sorted(known)}, got {args.which!r}")
    r = _parse_rgrid(args.rgrid) if args.rgrid else None
    intensity = fit_intensity_mle(pattern)
    curves = []
    for w in which:
        if w == "K":
            curves.append(k_estimate(pattern, intensity, r))
        elif w == "g":
            curves.append(g_estimate(pattern, intensity, r, bandwidth=args.bandwidth))
    if {"F", "G", "J"} & set(which):
        fgj = fgj_estimates(pattern, FgjConfig(lattice_spacing=args.spacing), r)
        for w in which:
            if w in ("F", "G", "J"):
                curves.append(getattr(fgj, w))
    save_curves(curves, args.out)
    _manifest(args, argv, args.out)


def _cmd_kernel_intensity(args, argv) -> None:
    net = load_network(args.net)
    pattern = load_pattern(args.pattern, net)
    est = kernel_intensity(net, pattern, args.bandwidth, spacing=args.spacing)
    with atomic_write(args.out) as f:
        f.write("edge,offset,value\n")
        for ei, (offs, vals) in enumerate(zip(est.edge_offsets, est.edge_values)):
            for off, val in zip(offs, vals):
                f.write(f"{net.edges[ei].id},{float(off)!r},{float(val)!r}\n")
    _manifest(args, argv, args.out)


def _cmd_envelope(args, argv) -> None:
    net = load_network(args.net)
    pattern = load_pattern(args.pattern, net)
    if args.model == "poisson":
        model = fit_intensity_mle(pattern)
    else:
        model = load_fit(args.model).model()
    r = _parse_rgrid(args.rgrid) if args.rgrid else None
    result = envelope_pipeline(
        net,
        pattern,
        model,
        test=args.test,
        n_sims=args.sims,
        alpha=args.alpha,
        seed=args.seed,
        r=r,
        r_min=args.rmin,
    )
    save_envelope(result.envelope, result.curve_set.data, args.out)
    _manifest(args, argv, args.out)
    lo, hi = result.envelope.p_interval
    log.info("p-interval (%g, %g)", lo, hi)


def _study_network(entry, base: Path):
    if isinstance(entry, str):
        return load_network(base / entry if not Path(entry).is_absolute() else entry)
    if isinstance(entry, dict):
        entry = dict(entry)
        template = entry.pop("template", None)
        if template is None:
            raise ValidationError("network object in a design needs a 'template' key")
        seed = entry.pop("seed", 0)
        return make_network(template, seed=seed, **entry)
    raise ValidationError("design 'network' must be a file path or a template object")


def _study_method_config(method: str, cfg: dict):
    if method in ("mce-g", "mce-k"):
        cfg.setdefault("target", "g" if method == "mce-g" else "K")
        return MinContrastConfig(**cfg)
    if method == "cl2":
        return Cl2Config(**cfg)
    raise ValidationError(f"unknown method {method!r} in design")


def _cmd_simstudy(args, argv) -> None:
    design_path = Path(args.design)
    if not design_path.exists():
        raise ValidationError(f"design file not found: {design_path}")
    try:
        design = json.loads(design_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"design file {design_path} is not valid JSON: {exc}") from None
    if not isinstance(design, list) or not design:
        raise ValidationError("design file must hold a non-empty list of runs")
    runs = []
    for entry in design:
        try:
            methods = {
                name: _study_method_config(name, dict(cfg))
                for name, cfg in entry.get("methods", {"mce-g": {}}).items()
            }
            runs.append(
                StudyRun(
                    name=entry["name"],
                    network=_study_network(entry["network"], design_path.parent),
                    model=CoxModel(**entry["model"]),
                    methods=methods,
                    mode=entry.get("mode", "exact"),
                    spacing=entry.get("spacing", 1.0),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad design entry {entry.get('name', '?')!r}: {exc}") from None
    result = simulation_study(runs, replicates=args.reps, seed=args.seed)
    save_study(result, args.out)
    _manifest(args, argv, args.out)
    for key, counts in result.truncation.items():
        if any(counts.values()):
            log.info("run %s method %s: %s", key[0], key[1], counts)


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linnetcox",
        description="Point processes on tree networks: simulation, fitting, model checks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add(parser, "--threads", type=int, default=1, help="worker threads for replicate loops")
    _add(
        parser,
        "--log-level",
        default="warning",
        choices=["debug", "info", "warning", "error"],
        help="logging verbosity",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-network", help="generate a synthetic network file")
    _add(p, "--template", required=True, choices=list(TEMPLATES))
    _add(p, "--seed", type=int, default=0)
    _add(p, "--knob", action="append", default=[], metavar="NAME=VALUE",
         help="template knob, repeatable (e.g. --knob side_target=250)")
    _add(p, "--out", type=Path, default=Path("network.json"))
    p.set_defaults(func=_cmd_make_network)

    p = sub.add_parser("simulate-poisson", help="simulate Poisson patterns")
    _add(p, "--net", type=Path, required=True)
    _add(p, "--rho-m", type=float, required=True, help="intensity on main branches")
    _add(p, "--rho-s", type=float, default=None, help="intensity on side branches (default: rho-m)")
    _add(p, "--reps", type=int, default=1)
    _add(p, "--seed", type=int, default=0)
    _add(p, "--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate_poisson)

    p = sub.add_parser("simulate-cox", help="simulate thinned-Cox patterns")
    _add(p, "--net", type=Path, required=True)
    _add(p, "--rho-ym", type=float, required=True, help="driving intensity, main branches")
    _add(p, "--rho-ys", type=float, default=None, help="driving intensity, side (default: rho-ym)")
    _add(p, "--sigma2", type=float, required=True)
    _add(p, "--beta", type=float, required=True)
    _add(p, "--k", type=int, default=1)
    _add(p, "--mode", choices=["exact", "grid"], default="exact")
    _add(p, "--spacing", type=float, default=1.0, help="lattice spacing in grid mode")
    _add(p, "--save-pi", action="store_true", help="also write per-replicate retention grids")
    _add(p, "--reps", type=int, default=1)
    _add(p, "--seed", type=int, default=0)
    _add(p, "--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate_cox)

    p = sub.add_parser("fit", help="fit the thinned-Cox model to a pattern")
    _add(p, "--net", type=Path, required=True)
    _add(p, "--pattern", type=Path, required=True)
    _add(p, "--method", choices=["mce-g", "mce-k", "cl2"], default="mce-g")
    _add(p, "--k", type=int, default=1)
    _add(p, "--rl", type=float, default=0.0, help="lower contrast limit")
    _add(p, "--ru", type=float, default=None, help="upper contrast limit (default 0.1|L|)")
    _add(p, "--p", type=float, default=1.0, help="contrast exponent")
    _add(p, "--bandwidth", type=float, default=None, help="pair-correlation bandwidth")
    _add(p, "--weight", choices=["fixed", "indicator", "smooth"], default="smooth")
    _add(p, "--r0", type=float, default=None, help="range of the fixed weight")
    _add(p, "--epsilon", type=float, default=0.01)
    _add(p, "--samples", type=int, default=200, help="Monte Carlo samples per segment pair")
    _add(p, "--search", choices=["nelder-mead", "grid"], default="nelder-mead")
    _add(p, "--mc-seed", type=int, default=0)
    _add(p, "--out", type=Path, default=Path("fit.json"))
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("summaries", help="empirical summary curves")
    _add(p, "--net", type=Path, required=True)
    _add(p, "--pattern", type=Path, required=True)
    _add(p, "--which", default="K,g,F,G,J", help="comma list from K,g,F,G,J")
    _add(p, "--rgrid", default=None, metavar="A:B:N", help="r grid, e.g. 0:50:512")
    _add(p, "--bandwidth", type=float, default=None, help="pair-correlation bandwidth")
    _add(p, "--spacing", type=float, default=0.5, help="lattice spacing for F/G/J")
    _add(p, "--out", type=Path, default=Path("curves.csv"))
    p.set_defaults(func=_cmd_summaries)

    p = sub.add_parser("kernel-intensity", help="heat-kernel intensity estimate")
    _add(p, "--net", type=Path, required=True)
    _add(p, "--pattern", type=Path, required=True)
    _add(p, "--bandwidth", type=float, required=True)
    _add(p, "--spacing", type=float, default=None, help="grid spacing (default bandwidth/10)")
    _add(p, "--out", type=Path, default=Path("intensity.csv"))
    p.set_defaults(func=_cmd_kernel_intensity)

    p = sub.add_parser("envelope", help="global rank envelope test")
    _add(p, "--net", type=Path, required=True)
    _add(p, "--pattern", type=Path, required=True)
    _add(p, "--model", required=True,
         help="fit file (JSON) for the Cox model, or 'poisson' for a plug-in Poisson fit")
    _add(p, "--test", choices=["K", "FGJ"], default="K")
    _add(p, "--sims", type=int, default=2499)
    _add(p, "--alpha", type=float, default=0.05)
    _add(p, "--rmin", type=float, default=1.0, help="drop cells below this r")
    _add(p, "--rgrid", default=None, metavar="A:B:N")
    _add(p, "--seed", type=int, default=0)
    _add(p, "--out", type=Path, default=Path("envelope.csv"))
    p.set_defaults(func=_cmd_envelope)

    p = sub.add_parser("simstudy", help="simulate-and-refit study from a design file")
    _add(p, "--design", type=Path, required=True, help="JSON list of runs")
    _add(p, "--reps", type=int, default=500)
    _add(p, "--seed", type=int, default=0)
    _add(p, "--out", type=Path, default=Path("results.csv"))
    p.set_defaults(func=_cmd_simstudy)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args, argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
