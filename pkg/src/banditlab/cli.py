"""Command-line interface: config parsing, dispatch, and tabular output.

Four subcommands: ``kinf`` (one divergence evaluation), ``bcp`` (boundary
crossing probability profile as CSV), ``simulate`` (regret curves as CSV),
and ``verify`` (property suites).  Configuration is a flat ``key = value``
text file; ``--set key=value`` flags override file values (flags > file >
defaults), while the dedicated convenience flags conflict with a file that
sets the same key.  Unknown keys are hard errors.

Every emitted file starts with a provenance header (package and library
versions, a hash of the resolved configuration, and the seed) and contains
nothing time-dependent, so identical configs produce byte-identical outputs.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 property-suite failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from . import __version__
from .bcp import (bcp_rate_profile, chernoff_joint_upper, simple_truncation_lower)
from .core import (BernoulliArm, BoundedDiscreteArm, EmpiricalDistribution,
                   GaussianArm, GaussianKnownVarArm, HeavyTailArm, MomentSpec,
                   PoissonArm)
from .divergence import (DivergenceSpec, d_pi_gaussian, kinf_bounded,
                         kinf_hmoment, kl_spef)
from .errors import BanditLabError, ConfigError
from .policies import PolicyConfig
from .sim import BanditEnv, lower_bound_reference, run_replications
from .verify import available_suites, run_suites

__all__ = ["main", "parse_config", "run_subcommand"]


# ---------------------------------------------------------------------------
# Schema machinery
# ---------------------------------------------------------------------------


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> Tuple[float, ...]:
    return tuple(float(tok) for tok in s.split(",") if tok.strip() != "")


def _parse_ints(s: str) -> Tuple[int, ...]:
    return tuple(int(tok) for tok in s.split(",") if tok.strip() != "")


_SCHEMAS: Dict[str, Dict[str, tuple]] = {
    # key: (parser, default-as-string or None for required)
    "kinf": {
        "family": (str, None),
        "data": (_parse_floats, ""),
        "mu": (float, None),
        "B": (float, "1.0"),
        "var0": (float, "1.0"),
        "h": (str, "power:2"),
        "centered": (_parse_bool, "true"),
        "gamma": (float, "0.0"),
        "mu_minus": (float, "-inf"),
        "mean": (float, "nan"),
    },
    "bcp": {
        "template": (_parse_floats, None),
        "mu_star": (float, None),
        "h": (str, "power:2"),
        "B": (float, None),
        "gamma": (float, "-1"),
        "centered": (_parse_bool, "true"),
        "n_list": (_parse_ints, "50,100,200,400"),
        "m": (int, "100000"),
        "seed": (int, "0"),
        "mode": (str, "free"),
        "out": (str, ""),
    },
    "simulate": {
        "arms": (str, None),
        "policies": (str, None),
        "T": (int, None),
        "R": (int, "1"),
        "seed": (int, "0"),
        "workers": (int, "0"),
        "B": (float, "1.0"),
        "h": (str, "power:2"),
        "hB": (float, "1.0"),
        "gamma": (float, "-1"),
        "centered": (_parse_bool, "true"),
        "mu_minus": (float, "-inf"),
        "alpha": (float, "-1.0"),
        "clip": (_parse_floats, "0,1"),
        "var0": (float, "1.0"),
        "spef": (str, "bernoulli"),
        "estimator": (str, "mean"),
        "lb": (str, "auto"),
        "out": (str, ""),
    },
    "verify": {
        "suites": (str, "all"),
        "seed": (int, "0"),
        "out": (str, ""),
    },
}


def _read_config_file(path: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                key = key.strip()
                if key in out:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                out[key] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return out


def parse_config(subcommand: str, path: Optional[str], overrides: Dict[str, str],
                 dedicated: Optional[Dict[str, str]] = None) -> Dict[str, object]:
    """Resolve the configuration for one subcommand.

    Precedence is flags > file > defaults.  Dedicated convenience flags
    (e.g. ``--arms``) conflict with a file that sets the same key; unknown
    keys are hard errors naming the key.
    """
    schema = _SCHEMAS[subcommand]
    raw: Dict[str, str] = {}
    file_values = _read_config_file(path) if path else {}
    for key in file_values:
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r} for subcommand {subcommand}")
    raw.update(file_values)
    dedicated = dedicated or {}
    for key, value in dedicated.items():
        if key in file_values:
            raise ConfigError(
                f"{key!r} is set both in the config file and as a dedicated flag")
        raw[key] = value
    for key, value in overrides.items():
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r} for subcommand {subcommand}")
        raw[key] = value
    resolved: Dict[str, object] = {}
    for key, (parser, default) in schema.items():
        if key in raw:
            text = raw[key]
        elif default is None:
            raise ConfigError(f"missing required key {key!r} for subcommand {subcommand}")
        else:
            text = default
        try:
            resolved[key] = parser(text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key!r}: {text!r} ({exc})") from exc
    return resolved


_NON_SEMANTIC_KEYS = ("out", "workers")  # do not change what gets computed


def _config_hash(cfg: Dict[str, object]) -> str:
    canon = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg)
                      if k not in _NON_SEMANTIC_KEYS)
    return hashlib.sha256(canon.encode("utf8")).hexdigest()[:16]


def _provenance(cfg: Dict[str, object], seed: int) -> str:
    return (f"# banditlab {__version__} (numpy {np.__version__}, scipy {scipy.__version__})\n"
            f"# config {_config_hash(cfg)} seed {seed}\n")


# ---------------------------------------------------------------------------
# Building blocks from config values
# ---------------------------------------------------------------------------


def _moment_from(cfg, b_key: str = "B") -> MomentSpec:
    spec_str = cfg["h"]
    kind, _, param = str(spec_str).partition(":")
    B = float(cfg[b_key])
    gamma = float(cfg["gamma"])
    if gamma < 0:
        gamma = 0.05 * B
    try:
        if kind == "power":
            return MomentSpec.power(float(param or 2.0), B, centered=bool(cfg["centered"]),
                                    gamma=gamma, mu_minus=float(cfg.get("mu_minus", -math.inf)))
        if kind == "subgauss":
            return MomentSpec.subgauss(float(param or 1.0), B, centered=bool(cfg["centered"]),
                                       gamma=gamma, mu_minus=float(cfg.get("mu_minus", -math.inf)))
    except BanditLabError as exc:
        raise ConfigError(f"bad h spec {spec_str!r}: {exc}") from exc
    raise ConfigError(f"unknown h spec {spec_str!r} (use power:<p> or subgauss:<s>)")


def _parse_arm(token: str):
    kind, _, rest = token.strip().partition(":")
    args = [a for a in rest.split(":") if a != ""]
    try:
        if kind == "bernoulli":
            return BernoulliArm(float(args[0]))
        if kind == "gaussian":
            return GaussianArm(float(args[0]), float(args[1]))
        if kind == "gaussian-known":
            return GaussianKnownVarArm(float(args[0]), float(args[1]))
        if kind == "poisson":
            return PoissonArm(float(args[0]))
        if kind == "heavytail":
            return HeavyTailArm(float(args[0]), float(args[1]),
                                float(args[2]) if len(args) > 2 else 1.0)
        if kind == "discrete":
            support = [float(v) for v in args[0].split("|")]
            probs = [float(v) for v in args[1].split("|")]
            return BoundedDiscreteArm(tuple(support), tuple(probs), float(args[2]))
    except (IndexError, ValueError, BanditLabError) as exc:
        raise ConfigError(f"bad arm spec {token!r}: {exc}") from exc
    raise ConfigError(f"unknown arm kind {kind!r}")


def _parse_env(cfg) -> BanditEnv:
    arms = tuple(_parse_arm(tok) for tok in str(cfg["arms"]).split(",") if tok.strip())
    return BanditEnv(arms)


_MED_FAMILIES = ("bernoulli", "poisson", "gaussian-known", "gaussian", "bounded",
                 "hmoment", "maillard")


def _parse_policy(token: str, cfg, env: BanditEnv) -> PolicyConfig:
    token = token.strip()
    trunc = cfg["estimator"] == "truncated"
    if token.startswith("med-"):
        fam = token[4:]
        if fam == "kl":  # convenience alias: kl of the declared SPEF kind
            fam = cfg["spef"]
        if fam not in _MED_FAMILIES:
            raise ConfigError(f"unknown MED divergence family {fam!r}")
        dspec = DivergenceSpec(
            family=fam,
            B=float(cfg["B"]) if fam == "bounded" else None,
            var0=float(cfg["var0"]),
            moment=_moment_from(cfg, "hB") if fam == "hmoment" else None,
        )
        return PolicyConfig(kind="med", divergence=dspec, use_truncated_mean=trunc,
                            label=token)
    if token == "ts-spef":
        return PolicyConfig(kind="ts-spef", spef_kind=str(cfg["spef"]),
                            clip=tuple(cfg["clip"]), var0=float(cfg["var0"]),
                            use_truncated_mean=trunc)
    if token == "ts-gaussian-ig":
        return PolicyConfig(kind="ts-gaussian-ig", alpha=float(cfg["alpha"]),
                            use_truncated_mean=trunc)
    if token == "ts-npts":
        return PolicyConfig(kind="ts-npts", B=float(cfg["B"]), use_truncated_mean=trunc)
    if token == "hnpts":
        return PolicyConfig(kind="hnpts", moment=_moment_from(cfg, "hB"),
                            use_truncated_mean=trunc)
    if token == "ts-classic":
        return PolicyConfig(kind="ts-classic", spef_kind=str(cfg["spef"]),
                            clip=tuple(cfg["clip"]), var0=float(cfg["var0"]))
    if token == "uniform":
        return PolicyConfig(kind="uniform")
    if token == "oracle":
        return PolicyConfig(kind="oracle", oracle_arm=env.best_arm)
    raise ConfigError(f"unknown policy {token!r}")


def _lb_spec(cfg, env: BanditEnv) -> Optional[DivergenceSpec]:
    mode = str(cfg["lb"])
    if mode == "none":
        return None
    if mode == "auto":
        if all(isinstance(a, BernoulliArm) for a in env.arms):
            return DivergenceSpec("bernoulli")
        if all(isinstance(a, (GaussianArm, GaussianKnownVarArm)) for a in env.arms):
            return DivergenceSpec("gaussian")
        return None
    if mode == "bounded":
        return DivergenceSpec("bounded", B=float(cfg["B"]))
    if mode == "hmoment":
        return DivergenceSpec("hmoment", moment=_moment_from(cfg, "hB"))
    if mode in ("bernoulli", "poisson", "gaussian", "gaussian-known"):
        return DivergenceSpec(mode, var0=float(cfg["var0"]))
    raise ConfigError(f"unknown lower-bound reference family {mode!r}")


# ---------------------------------------------------------------------------
# Subcommand runners
# ---------------------------------------------------------------------------


def _emit(text: str, out_path: str) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_kinf(cfg) -> int:
    family = str(cfg["family"])
    mu = float(cfg["mu"])
    data = cfg["data"]
    lines: List[str] = []
    lam1 = lam2 = 0.0
    feasible = True
    if family in ("bernoulli", "poisson", "gaussian-known"):
        mean = float(cfg["mean"])
        if math.isnan(mean):
            if not data:
                raise ConfigError("spef families need data or an explicit mean")
            mean = float(np.mean(data))
        kind = "gaussian" if family == "gaussian-known" else family
        value = kl_spef(kind, mean, mu, var0=float(cfg["var0"]))
    elif family == "gaussian":
        if data:
            res = d_pi_gaussian(EmpiricalDistribution(data), mu)
            value = res.value
            lines.append(f"indicator {str(res.indicator).lower()}")
        else:
            raise ConfigError("gaussian family needs data")
    elif family == "bounded":
        if not data:
            raise ConfigError("bounded family needs data")
        point = kinf_bounded(EmpiricalDistribution(data), mu, float(cfg["B"]))
        value, lam1, lam2, feasible = point.value, point.lambda1, point.lambda2, point.feasible
    elif family == "hmoment":
        if not data:
            raise ConfigError("hmoment family needs data")
        spec = _moment_from(cfg)
        point = kinf_hmoment(EmpiricalDistribution(data), mu, spec)
        value, lam1, lam2, feasible = point.value, point.lambda1, point.lambda2, point.feasible
        lines.append(f"in_family {str(point.in_family).lower()}")
    else:
        raise ConfigError(f"unknown divergence family {family!r}")
    print(f"kinf {value:.6f}")
    print(f"lambda1 {lam1:.9g}")
    print(f"lambda2 {lam2:.9g}")
    print(f"feasible {str(feasible).lower()}")
    for line in lines:
        print(line)
    return 0


def _run_bcp(cfg) -> int:
    spec = _moment_from(cfg)
    mode = str(cfg["mode"])
    bonus: object
    if mode in ("free", "none", "conditional"):
        bonus = mode
    elif mode.startswith("fixed:"):
        bonus = float(mode.split(":", 1)[1])
    else:
        raise ConfigError(f"unknown bcp mode {mode!r} (free, none, conditional, or fixed:<x>)")
    template = list(cfg["template"])
    mu_star = float(cfg["mu_star"])
    seed = int(cfg["seed"])
    profile = bcp_rate_profile(template, mu_star, spec, list(cfg["n_list"]),
                               int(cfg["m"]), seed, bonus=bonus)
    buf = io.StringIO()
    buf.write(_provenance(cfg, seed))
    buf.write("n,m,p_hat,ci,rate,bound_upper,bound_lower,lambda_star\n")
    for pt in profile:
        values = np.resize(np.asarray(template, dtype=float), pt.n)
        F = EmpiricalDistribution(values)
        upper = chernoff_joint_upper(F, mu_star, spec)
        x_extra = (mu_star if spec.centered else 0.0) + float(spec.h_inv(spec.B + spec.gamma))
        lower = (simple_truncation_lower(values, x_extra, mu_star)
                 if x_extra > mu_star else float("nan"))
        rate = "" if pt.estimate.rate is None else f"{pt.estimate.rate:.9g}"
        buf.write(f"{pt.n},{pt.estimate.m},{pt.estimate.p_hat:.9g},"
                  f"{pt.estimate.ci_half_width:.9g},{rate},{upper:.9g},{lower:.9g},"
                  f"{pt.lambda_star:.9g}\n")
    _emit(buf.getvalue(), str(cfg["out"]))
    return 0


def _run_simulate(cfg) -> int:
    env = _parse_env(cfg)
    policies = [tok for tok in str(cfg["policies"]).split(",") if tok.strip()]
    if not policies:
        raise ConfigError("no policies requested")
    T = int(cfg["T"])
    R = int(cfg["R"])
    seed = int(cfg["seed"])
    workers = int(cfg["workers"]) or None
    lb = _lb_spec(cfg, env)
    buf = io.StringIO()
    buf.write(_provenance(cfg, seed))
    K = len(env.arms)
    arm_cols = ",".join(f"n_arm{k}" for k in range(K))
    buf.write(f"policy,t,regret_mean,regret_stderr,lb_reference,{arm_cols}\n")
    for token in policies:
        pconf = _parse_policy(token, cfg, env)
        stats = run_replications(env, pconf, T, R, seed, workers=workers)
        ref = (lower_bound_reference(env, lb, stats.ts) if lb is not None
               else np.full(len(stats.ts), float("nan")))
        for i, t in enumerate(stats.ts):
            pulls = ",".join(f"{stats.pulls_mean[i, k]:.9g}" for k in range(K))
            buf.write(f"{stats.policy_id},{t},{stats.regret_mean[i]:.9g},"
                      f"{stats.regret_stderr[i]:.9g},{ref[i]:.9g},{pulls}\n")
    _emit(buf.getvalue(), str(cfg["out"]))
    return 0


def _run_verify(cfg) -> int:
    names = str(cfg["suites"])
    wanted = available_suites() if names in ("all", "") else [s.strip() for s in names.split(",")]
    try:
        results = run_suites(wanted, int(cfg["seed"]))
    except KeyError as exc:
        raise ConfigError(f"unknown suite {exc.args[0]!r}; "
                          f"available: {', '.join(available_suites())}") from exc
    buf = io.StringIO()
    buf.write(_provenance(cfg, int(cfg["seed"])))
    width = max(len(r.name) for r in results)
    all_ok = True
    for r in results:
        status = "pass" if r.ok else "FAIL"
        all_ok &= r.ok
        buf.write(f"{r.name:<{width}}  {r.passed}/{r.total}  {status}\n")
    _emit(buf.getvalue(), str(cfg["out"]))
    return 0 if all_ok else 4


_RUNNERS = {"kinf": _run_kinf, "bcp": _run_bcp, "simulate": _run_simulate,
            "verify": _run_verify}


def run_subcommand(subcommand: str, cfg: Dict[str, object]) -> int:
    return _RUNNERS[subcommand](cfg)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banditlab",
        description="Randomized bandit policies built on minimum-divergence "
                    "exploration, with numeric verification tooling.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (flags > file > defaults)")

    p_kinf = sub.add_parser("kinf", help="evaluate one divergence")
    common(p_kinf)
    for flag in ("family", "mu", "B", "var0", "h", "gamma", "mu_minus", "mean", "data",
                 "centered"):
        p_kinf.add_argument(f"--{flag.replace('_', '-')}", dest=f"flag_{flag}")

    p_bcp = sub.add_parser("bcp", help="boundary-crossing probability profile (CSV)")
    common(p_bcp)
    p_bcp.add_argument("--out", dest="flag_out")

    p_sim = sub.add_parser("simulate", help="regret curves over replications (CSV)")
    common(p_sim)
    p_sim.add_argument("--arms", dest="flag_arms")
    p_sim.add_argument("--out", dest="flag_out")

    p_ver = sub.add_parser("verify", help="run numeric property suites")
    common(p_ver)
    p_ver.add_argument("--suite", dest="flag_suites")
    p_ver.add_argument("--seed", dest="flag_seed")
    p_ver.add_argument("--out", dest="flag_out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        overrides: Dict[str, str] = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set needs KEY=VALUE, got {item!r}")
            key, _, value = item.partition("=")
            overrides[key.strip()] = value.strip()
        dedicated = {name[5:]: val for name, val in vars(args).items()
                     if name.startswith("flag_") and val is not None}
        cfg = parse_config(args.subcommand, args.config, overrides, dedicated)
        return run_subcommand(args.subcommand, cfg)
    except ConfigError as exc:
        _error_record(exc)
        return 2
    except BanditLabError as exc:
        _error_record(exc)
        return 3


def _error_record(exc: Exception) -> None:
    record = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
