"""Command-line surface: single simulations and Monte Carlo studies.

Flags override config-file values (flat key/value JSON, keys named like the
long flags with dashes); the effective configuration is echoed into the
output directory so any run can be reproduced from its artifacts.  With
--threads 1 every output is byte-reproducible.

Exit codes: 0 success, 1 invalid configuration or usage, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments, laguerre, limiting, rescaled, riccati, scalefn
from .paths import BrownianPath
from .riccati import BracketFailureError, ModelParams, NumericalFailureError, SolverConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _env_seed() -> int:
    return int(os.environ.get("BESSEL_SEED", "0"))


def _add_common(p: _Parser) -> None:
    p.add_argument("--seed", type=int, default=None, help="base seed (fallback: BESSEL_SEED)")
    p.add_argument("--out", type=str, default=None, help="output directory (default ./out)")
    p.add_argument("--config", type=str, default=None, help="flat JSON config file")
    p.add_argument("--threads", type=int, default=None, help="worker processes (default 1)")
    p.add_argument("--verbose", action="store_true")


_SPECS: dict[str, dict[str, tuple]] = {
    # name: {option: (type, default)}
    "simulate-p": {"beta": (float, 2.0), "a": (float, 1.0), "lam": (float, 1.0),
                   "horizon": (float, 15.0), "base-dt": (float, 1e-3),
                   "record-stride": (int, 1)},
    "simulate-q": {"beta": (float, 0.1), "a": (float, 1.0), "mu": (float, 1.0),
                   "horizon": (float, 20.0), "base-dt": (float, 1e-3),
                   "record-stride": (int, 1)},
    "simulate-r": {"a": (float, 1.0), "mu": (float, 1.0), "horizon": (float, 20.0),
                   "mesh": (float, 1e-3), "bridge-correction": (int, 0),
                   "record-stride": (int, 1)},
    "eigenvalues": {"beta": (float, 2.0), "a": (float, 0.0), "k": (int, 1),
                    "horizon": (float, 60.0), "tol": (float, 1e-3),
                    "base-dt": (float, 1e-3)},
    "laguerre": {"n": (int, 400), "beta": (float, 2.0), "a": (float, 0.0),
                 "k": (int, 1), "replicas": (int, 1)},
    "scalefn": {"beta": (float, 0.0), "a": (float, 1.0), "x-min": (float, -2.0),
                "x-max": (float, 0.5), "x-num": (int, 101), "gamma": (float, 0.0),
                "l2": (float, 0.0)},
    "study-convergence": {"a": (float, 1.0), "mu": (float, 1.0),
                          "beta-list": (str, "0.4,0.2,0.1,0.05"),
                          "replicas": (int, 200), "horizon": (float, 20.0),
                          "base-dt": (float, 1e-3)},
    "study-hardedge": {"beta": (float, 2.0), "a": (float, 0.0),
                       "n-list": (str, "100,400"), "k": (int, 1),
                       "replicas": (int, 200), "horizon": (float, 240.0),
                       "tol": (float, 1e-3), "base-dt": (float, 1e-3)},
    "study-marginals": {"a": (float, 1.0), "mu-list": (str, "0.5,1.0,2.0"),
                        "beta-list": (str, "0.2,0.1,0.05"), "replicas": (int, 200),
                        "horizon": (float, 20.0), "base-dt": (float, 1e-3)},
    "study-prop41": {"a": (float, 1.0), "mu": (float, 1.0),
                     "beta-list": (str, "0.4,0.2,0.1,0.05"), "replicas": (int, 200),
                     "T": (float, 10.0), "base-dt": (float, 1e-3)},
    "study-tightness": {"a": (float, 1.0), "mu": (float, 1.0),
                        "beta-list": (str, "0.2,0.1,0.05"), "T": (float, 10.0),
                        "alpha": (float, 2.0), "N": (int, 6), "replicas": (int, 200),
                        "base-dt": (float, 1e-3)},
}


def _build_parser() -> _Parser:
    p = _Parser(prog="besselsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, opts in _SPECS.items():
        sp = sub.add_parser(name)
        _add_common(sp)
        for opt, (typ, _default) in opts.items():
            sp.add_argument(f"--{opt}", type=typ, default=None)
    return p


def _effective(args: argparse.Namespace, name: str) -> dict:
    """flags > config file > defaults; returns the effective option dict."""
    file_cfg = {}
    if args.config:
        with open(args.config) as f:
            file_cfg = json.load(f)
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a flat JSON object")
    eff = {}
    for opt, (typ, default) in _SPECS[name].items():
        key = opt.replace("-", "_")
        cli_val = getattr(args, key)
        if cli_val is not None:
            eff[opt] = cli_val
        elif opt in file_cfg:
            eff[opt] = typ(file_cfg[opt])
        else:
            eff[opt] = default
    for opt, default in (("seed", _env_seed()), ("threads", 1), ("out", "out")):
        val = getattr(args, opt)
        if val is None:
            val = type(default)(file_cfg.get(opt, default))
        eff[opt] = val
    return eff


def _echo_config(eff: dict, name: str) -> str:
    out = eff["out"]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "effective_config.json")
    with open(path, "w", newline="") as f:
        json.dump({"command": name, **eff}, f, sort_keys=True, indent=2)
        f.write("\n")
    return out


def _floats(csv: str) -> list[float]:
    return [float(x) for x in csv.split(",") if x.strip()]


def _ints(csv: str) -> list[int]:
    return [int(x) for x in csv.split(",") if x.strip()]


def _write_json(out: str, name: str, payload: dict) -> None:
    with open(os.path.join(out, name), "w", newline="") as f:
        json.dump(payload, f, sort_keys=True, indent=2, default=repr)
        f.write("\n")


def _cmd_simulate_p(eff: dict, out: str) -> int:
    params = ModelParams(beta=eff["beta"], a=eff["a"])
    cfg = SolverConfig.for_beta(eff["beta"], base_dt=eff["base-dt"])
    path = BrownianPath(eff["seed"], eff["horizon"])
    traj, rec = riccati.simulate_p(params, eff["lam"], path, eff["horizon"], cfg,
                                   record_stride=eff["record-stride"])
    traj.write_csv(os.path.join(out, "p_trajectory.csv"))
    _write_json(out, "events.json", {
        "zero_crossings": list(traj.explosions_plus),
        "explosions": list(rec.times),
        "count": int(rec.times.size)})
    return 0


def _cmd_simulate_q(eff: dict, out: str) -> int:
    params = ModelParams(beta=eff["beta"], a=eff["a"])
    cfg = SolverConfig.for_beta(eff["beta"], base_dt=eff["base-dt"])
    path = BrownianPath(eff["seed"], eff["horizon"])
    traj = rescaled.simulate_q(params, eff["mu"], path, eff["horizon"], cfg,
                               record_stride=eff["record-stride"])
    traj.write_csv(os.path.join(out, "q_trajectory.csv"), mu=eff["mu"])
    _write_json(out, "events.json", {
        "xi_plus": list(traj.explosions_plus),
        "xi_minus": list(traj.explosions_minus)})
    return 0


def _cmd_simulate_r(eff: dict, out: str) -> int:
    path = BrownianPath(eff["seed"], eff["horizon"])
    traj = limiting.simulate_r(eff["a"], eff["mu"], path, eff["horizon"],
                               mesh=eff["mesh"],
                               bridge_correction=bool(eff["bridge-correction"]),
                               record_stride=eff["record-stride"])
    traj.write_csv(os.path.join(out, "r_trajectory.csv"), mu=eff["mu"])
    _write_json(out, "hits.json", {
        "hits_plus": list(traj.hits_plus),
        "hits_minus": list(traj.hits_minus)})
    return 0


def _cmd_eigenvalues(eff: dict, out: str) -> int:
    params = ModelParams(beta=eff["beta"], a=eff["a"])
    cfg = SolverConfig.for_beta(eff["beta"], base_dt=eff["base-dt"])
    path = BrownianPath(eff["seed"], eff["horizon"])
    vals = []
    lo = 1e-3
    for j in range(eff["k"]):
        lam = riccati.eigenvalue(params, j, path, eff["horizon"], cfg,
                                 bracket=(lo, max(4.0 * lo, 30.0)), tol=eff["tol"])
        vals.append(lam)
        lo = lam
    mus = [riccati.rescale_eigenvalue(v, eff["beta"]) for v in vals]
    with open(os.path.join(out, "eigenvalues.csv"), "w", newline="") as f:
        f.write("index,lambda,mu_rescaled\n")
        for j, (v, m) in enumerate(zip(vals, mus)):
            f.write(f"{j},{v!r},{m!r}\n")
    for j, v in enumerate(vals):
        print(f"lambda({j}) = {v!r}")
    return 0


def _cmd_laguerre(eff: dict, out: str) -> int:
    params = ModelParams(beta=eff["beta"], a=eff["a"])
    rows = []
    for r in range(eff["replicas"]):
        s = laguerre.spectrum_sample(eff["n"], params, eff["seed"] + r, k=eff["k"])
        rows.append(list(s.eigenvalues))
    with open(os.path.join(out, "spectra.csv"), "w", newline="") as f:
        f.write("replica," + ",".join(f"lambda_{j}" for j in range(eff["k"])) + "\n")
        for r, row in enumerate(rows):
            f.write(str(r) + "," + ",".join(repr(v) for v in row) + "\n")
    _write_json(out, "summary.json", {
        "n": eff["n"], "beta": eff["beta"], "a": eff["a"], "k": eff["k"],
        "smallest": rows[0],
        "hard_edge_rescaled": [eff["n"] * v for v in rows[0]]})
    return 0


def _cmd_scalefn(eff: dict, out: str) -> int:
    beta = eff["beta"] if eff["beta"] > 0 else None
    sf = scalefn.ScaleFunction(beta=beta, a=eff["a"])
    xs = np.linspace(eff["x-min"], eff["x-max"], eff["x-num"])
    with open(os.path.join(out, "scalefn.csv"), "w", newline="") as f:
        f.write("x,s,log_s_prime\n")
        for x in xs:
            ls = (scalefn.log_scale_derivative(x, beta, eff["a"])
                  if beta else -0.5 * eff["a"] * x)
            f.write(f"{x!r},{scalefn.scale_fn(float(x), sf)!r},{ls!r}\n")
    if eff["gamma"] < 0.0 < eff["l2"]:
        if beta is None:
            raise ValueError("hitting probability needs --beta > 0")
        det = scalefn.hitting_probability_detail(eff["gamma"], eff["l2"], beta, eff["a"])
        _write_json(out, "hitting_probability.json", {
            "gamma": eff["gamma"], "l2": eff["l2"], "beta": beta, "a": eff["a"],
            "value": det.value, "underflow": det.underflow})
        print(f"P(hit l2 before gamma) = {det.value!r}")
    return 0


def _cmd_study(eff: dict, out: str, name: str) -> int:
    kw = dict(threads=eff["threads"], out_dir=out, base_dt=eff["base-dt"])
    if name == "study-convergence":
        rep = experiments.convergence_study(eff["a"], eff["mu"], _floats(eff["beta-list"]),
                                            eff["replicas"], eff["seed"], eff["horizon"], **kw)
    elif name == "study-hardedge":
        rep = experiments.hard_edge_study(eff["beta"], eff["a"], _ints(eff["n-list"]),
                                          eff["k"], eff["replicas"], eff["seed"],
                                          horizon=eff["horizon"], tol=eff["tol"], **kw)
    elif name == "study-marginals":
        rep = experiments.marginal_count_study(eff["a"], _floats(eff["mu-list"]),
                                               _floats(eff["beta-list"]), eff["replicas"],
                                               eff["seed"], eff["horizon"], **kw)
    elif name == "study-prop41":
        rep = experiments.prop41_study(eff["a"], eff["mu"], _floats(eff["beta-list"]),
                                       eff["replicas"], eff["seed"], eff["T"], **kw)
    elif name == "study-tightness":
        rep = experiments.tightness_study(eff["a"], eff["mu"], _floats(eff["beta-list"]),
                                          eff["T"], eff["alpha"], eff["N"],
                                          eff["replicas"], eff["seed"], **kw)
    else:  # pragma: no cover
        raise ValueError(name)
    print(json.dumps(rep.summary, sort_keys=True, default=repr))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    name = args.command
    try:
        eff = _effective(args, name)
        out = _echo_config(eff, name)
        if args.verbose:
            print(f"effective config: {json.dumps(eff, sort_keys=True)}", file=sys.stderr)
        if name == "simulate-p":
            return _cmd_simulate_p(eff, out)
        if name == "simulate-q":
            return _cmd_simulate_q(eff, out)
        if name == "simulate-r":
            return _cmd_simulate_r(eff, out)
        if name == "eigenvalues":
            return _cmd_eigenvalues(eff, out)
        if name == "laguerre":
            return _cmd_laguerre(eff, out)
        if name == "scalefn":
            return _cmd_scalefn(eff, out)
        return _cmd_study(eff, out, name)
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, BracketFailureError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
