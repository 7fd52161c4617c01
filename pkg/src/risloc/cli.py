"""Command-line entry point: ``risloc <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(singular FIM or failed line search), 4 I/O error.
"""
import argparse
import json
import logging
import sys

import numpy as np

from . import experiments as ex
from .beamforming import AltOptConfig, alternating_optimize
from .channel import NoiseModel
from .errors import ConfigError, LineSearchFailed, SingularFim
from .estimator import KINDS, EstimatorSpec
from .fim import crlb_of_phases, kappa_from_geometry
from .geometry import ScenarioGeometry
from .scenario import Scenario
from .validation import gradient_check

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("risloc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="risloc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON config; omitted keys take the subcommand defaults")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", help="output path (default: stdout)")
        return sp

    for name, helptext in (("convergence", "GDM convergence traces"),
                           ("sweep", "optimised CRLB over slots, RIS size and SNR"),
                           ("position-sweep", "optimised CRLB along MS x and y sweeps")):
        sp = common(sub.add_parser(name, help=helptext))
        sp.add_argument("--seeds", type=int, help="number of channel realisations")
        sp.add_argument("--workers", type=int, help="worker processes")
        sp.add_argument("--plot-script", action="store_true",
                        help="also write <out>.plot.py (requires --out)")
        sp.add_argument("--timing", action="store_true",
                        help="append a wall_ms column (breaks byte-identical output)")

    common(sub.add_parser("crlb", help="initial and optimised CRLB of one realisation"))

    sp = sub.add_parser("grad-check", help="closed-form gradients vs finite differences")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--instances", type=int, default=100)
    sp.add_argument("--out")

    sp = common(sub.add_parser("alternating", help="estimation / phase-design loop"))
    sp.add_argument("--estimator", choices=KINDS, default="oracle")
    sp.add_argument("--perturbation", type=float, default=0.0,
                    help="perturbed_oracle error scale")
    sp.add_argument("--decay", type=float, default=1.0,
                    help="per-iteration decay of the perturbation")
    sp.add_argument("--grid-resolution", type=float, default=1e-2)
    sp.add_argument("--snr", type=float, help="SNR in dB (default: first config entry)")
    sp.add_argument("--max-outer", type=int, default=20)
    sp.add_argument("--no-noise", action="store_true", help="noiseless observations")
    return p


def load_config(args):
    base = ex.default_config(args.command)
    cfg = ex.ScenarioConfig.load(args.config, base) if args.config else base
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "seeds", None) is not None:
        overrides["n_seeds"] = args.seeds
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if overrides:
        cfg = ex.ScenarioConfig.from_dict({**cfg.to_dict(), **overrides})
    return cfg


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


_RUNNERS = {"convergence": ex.run_convergence, "sweep": ex.run_sweep,
            "position-sweep": ex.run_position_sweep}


def cmd_experiment(args):
    if args.plot_script and not args.out:
        raise ConfigError("--plot-script needs --out")
    cfg = load_config(args)
    rows = _RUNNERS[args.command](cfg, timing=args.timing)
    _write(ex.rows_to_csv(rows), args.out)
    if args.plot_script:
        log.info("wrote %s", ex.emit_plot_script(args.out))
    return EXIT_OK


def cmd_crlb(args):
    cfg = load_config(args)
    results = ex.evaluate_crlb(cfg)
    _write("".join(json.dumps(r) + "\n" for r in results), args.out)
    if any(r["status"] == "singular" for r in results):
        raise SingularFim("position FIM singular at the initial phases")
    if any(r["status"] == "line_search_failed" for r in results):
        raise LineSearchFailed("line search failed")
    return EXIT_OK


def cmd_grad_check(args):
    res = gradient_check(n_instances=args.instances, seed=args.seed)
    text = (f"instances: {res['instances']} (crlb defined on {res['crlb_instances']})\n"
            f"max relative error, FIM entry gradients: {res['max_entry_rel_error']:.3e}\n"
            f"max relative error, CRLB gradient:       {res['max_crlb_rel_error']:.3e}\n")
    _write(text, args.out)
    return EXIT_OK


def cmd_alternating(args):
    cfg = load_config(args)
    snr = args.snr if args.snr is not None else cfg.snr_db[0]
    geometry = ScenarioGeometry.from_layout(cfg.bs_pos, cfg.ms_pos, cfg.layout())
    real = ex.realization(cfg, 0, geometry.n_paths)
    scenario = Scenario(geometry, real.gains, cfg.array)
    pilot = ex.build_pilot(cfg, geometry.ris_elements, cfg.slots[0], snr, real.pilot_seed)
    spec = EstimatorSpec(kind=args.estimator, perturbation_scale=args.perturbation,
                         decay=args.decay, grid_resolution=args.grid_resolution, seed=cfg.seed)
    noise = NoiseModel(ex.NOISE_VARIANCE, seed=cfg.seed)
    res = alternating_optimize(scenario, spec, pilot, noise,
                               AltOptConfig(max_outer_iterations=args.max_outer), cfg.gdm,
                               initial_phases=real.initial_phases, noiseless=args.no_noise)
    true_kappa = kappa_from_geometry(geometry, real.gains, pilot, cfg.array)
    truth = scenario.true_params()
    lines = ["outer,crlb_true,angle_rmse,gdm_status"]
    for k, (trace, eta) in enumerate(zip(res.traces, res.estimates)):
        err = np.concatenate([eta.elevation - truth.elevation, eta.azimuth - truth.azimuth])
        try:
            f = crlb_of_phases(true_kappa, trace.phases, ex.NOISE_VARIANCE)
        except SingularFim:
            f = float("nan")
        lines.append(f"{k},{f:.17g},{np.sqrt(np.mean(err ** 2)):.17g},{trace.status}")
    lines.append(f"# {res.status} after {res.n_outer} outer iterations")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


_COMMANDS = {"crlb": cmd_crlb, "grad-check": cmd_grad_check, "alternating": cmd_alternating,
             **{name: cmd_experiment for name in _RUNNERS}}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularFim, LineSearchFailed) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        # bad estimator knobs and similar invalid settings
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
