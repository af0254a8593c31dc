"""Command-line surface: train / verify / plot / bench subcommands.

Exit codes for `verify`: 0 certified, 2 inconclusive, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from importlib import resources

from . import certify, network as nn, plant, simulate as sim, svgplot, train
from . import symexpr as sx


def _load_system(args):
    """System config + controller from --system JSON and/or flags."""
    cfg = {"speed": 1.0, "path_angle": math.pi / 4, "gain": 1.0}
    if getattr(args, "system", None):
        with open(args.system) as fh:
            cfg.update(json.load(fh))
    if getattr(args, "nn", None):
        cfg["controller"] = args.nn
    if "controller" not in cfg:
        raise SystemExit("error: no controller given (--nn or system.json)")
    base = os.path.dirname(os.path.abspath(args.system)) if getattr(
        args, "system", None) else os.getcwd()
    path = cfg["controller"]
    if not os.path.isabs(path):
        path = os.path.join(base, path)
    net = nn.load(path)
    params = plant.DubinsParams(cfg["speed"], cfg["path_angle"])
    field = plant.dubins_closed_loop(params, net, gain=cfg.get("gain", 1.0))
    spec_cfg = cfg.get("spec", {})
    if spec_cfg:
        spec = certify.SafetySpec(sx.box(*spec_cfg["x0"]),
                                  sx.box(*spec_cfg["safe_rect"]))
    else:
        spec = certify.default_spec()
    return net, field, spec


def bundled_controller_path(n_hidden):
    """Path to a pre-trained controller shipped with the package."""
    ref = resources.files("barricade").joinpath("data/nn%d.json" % n_hidden)
    if not ref.is_file():
        raise FileNotFoundError("no bundled controller for %d neurons"
                                % n_hidden)
    return str(ref)


def cmd_train(args):
    cmaes_cfg = train.CmaesConfig(population=args.popsize,
                                  iterations=args.iters, seed=args.seed)
    net, history = train.train_controller(args.neurons,
                                          cmaes_cfg=cmaes_cfg)
    nn.save(net, args.out)
    hist_path = os.path.splitext(args.out)[0] + "_history.csv"
    with open(hist_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "best_cost"])
        for i, c in enumerate(history, 1):
            w.writerow([i, repr(c)])
    print("wrote %s (%d parameters) and %s"
          % (args.out, nn.parameter_count(net), hist_path))
    return 0


def _run_verify(field, spec, net, args):
    config = certify.CertifyConfig(gamma=args.gamma, delta=args.delta,
                                   seed=args.seed,
                                   max_iterations=args.max_iters)
    return certify.verify(spec, field, config,
                          controller_hash=nn.controller_hash(net))


def cmd_verify(args):
    net, field, spec = _load_system(args)
    result = _run_verify(field, spec, net, args)
    if isinstance(result, certify.Certificate):
        result.save(args.out)
        print("certified: level=%g iterations=%d -> %s"
              % (result.level, result.iterations, args.out))
        return 0
    print("inconclusive at stage %r: %s" % (result.stage, result.detail))
    return 2


def cmd_plot(args):
    net, field, spec = _load_system(args)
    if args.traces:
        traces = [sim.read_trace_csv(args.traces)]
    else:
        traces = sim.seed_traces(field, spec.safe_rect, args.count,
                                 10.0, 0.01, args.seed, exclude=spec.x0)
    candidate = level = None
    if args.certificate:
        cert = certify.load_certificate(args.certificate)
        if cert.candidate.arity != spec.arity:
            raise SystemExit("error: certificate arity does not match system")
        candidate, level = cert.candidate, cert.level
    svg = svgplot.render(spec, traces, candidate, level)
    with open(args.out, "w") as fh:
        fh.write(svg)
    print("wrote %s" % args.out)
    return 0


def cmd_bench(args):
    sizes = [int(s) for s in args.neurons.split(",")]
    rows = []
    failures = 0
    for size in sizes:
        try:
            ctrl = args.controller_dir and os.path.join(
                args.controller_dir, "nn%d.json" % size)
            if not ctrl or not os.path.exists(ctrl):
                ctrl = bundled_controller_path(size)
            net = nn.load(ctrl)
        except FileNotFoundError as exc:
            print("bench: %s" % exc, file=sys.stderr)
            failures += 1
            continue
        params = plant.DubinsParams()
        field = plant.dubins_closed_loop(params, net)
        spec = certify.default_spec()
        iters, lp_times, q_times, totals = [], [], [], []
        for trial in range(args.trials):
            config = certify.CertifyConfig(seed=args.seed + trial)
            t0 = time.perf_counter()
            try:
                result = certify.verify(spec, field, config,
                                        nn.controller_hash(net))
            except Exception as exc:  # recorded, not fatal
                print("bench: trial failed for %d neurons: %s" % (size, exc),
                      file=sys.stderr)
                failures += 1
                continue
            total = time.perf_counter() - t0
            if not isinstance(result, certify.Certificate):
                print("bench: inconclusive for %d neurons (%s)"
                      % (size, result.stage), file=sys.stderr)
                failures += 1
                continue
            q_time = sum(t.wall_time for t in result.transcripts.values())
            iters.append(result.iterations)
            q_times.append(q_time)
            lp_times.append(max(total - q_time, 0.0))
            totals.append(total)
        if iters:
            rows.append([size, sum(iters) / len(iters),
                         sum(lp_times) / len(lp_times),
                         sum(q_times) / len(q_times),
                         max(sum(totals) / len(totals)
                             - sum(lp_times) / len(lp_times)
                             - sum(q_times) / len(q_times), 0.0),
                         sum(totals) / len(totals)])
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["neurons", "avg_iterations", "avg_lp_time_s",
                    "avg_query_time_s", "avg_other_time_s", "avg_total_time_s"])
        for row in rows:
            w.writerow([row[0]] + ["%.6g" % v for v in row[1:]])
    print("wrote %s (%d rows, %d failed trials)"
          % (args.out, len(rows), failures))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="barricade",
        description="Barrier-certificate synthesis and checking for "
                    "neural-network-controlled path following.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="CMA-ES policy search for a controller")
    p.add_argument("--neurons", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--popsize", type=int, default=152)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="synthesize and check a certificate")
    p.add_argument("--system", help="system config JSON")
    p.add_argument("--nn", help="controller JSON (overrides system config)")
    p.add_argument("--out", default="certificate.json")
    p.add_argument("--gamma", type=float, default=certify.GAMMA_DEFAULT)
    p.add_argument("--delta", type=float, default=certify.DELTA_DEFAULT)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=20, dest="max_iters")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="emit a phase-portrait SVG")
    p.add_argument("--system")
    p.add_argument("--nn")
    p.add_argument("--certificate")
    p.add_argument("--traces", help="trace CSV to draw instead of simulating")
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="plot.svg")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("bench", help="verification timing sweep")
    p.add_argument("--neurons", default="10,50,100",
                   help="comma-separated hidden-layer sizes")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--controller-dir", dest="controller_dir",
                   help="directory with nn<N>.json files")
    p.add_argument("--out", default="bench.csv")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except SystemExit as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (OSError, ValueError, nn.NetworkFormatError,
            json.JSONDecodeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
