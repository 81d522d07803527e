"""Command-line experiment runner.

Configuration files are INI-style::

    [experiment]
    kind = return-series
    seed = 7

    [environment]
    family = two-point
    p = 0.3

    [params]
    n_max = 100

``validate`` prints the canonical form (sections in fixed order, keys sorted,
defaults filled in); its sha256 is the config hash. ``workers`` and ``out``
are run options and never enter the canonical text, so results do not depend
on them.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigInvalid, SinaiLabError
from .parallel import default_workers

KINDS = ("return-series", "valley-scan", "prop1", "bm-events", "model2d", "meeting", "classify")
NEEDS_ENV = {"return-series", "valley-scan", "prop1", "model2d", "meeting"}
NEEDS_LAW = {"model2d"}
DEFAULT_SEED = 0


# -- value parsers ------------------------------------------------------------


def _int(text):
    return int(str(text).strip())


def _float(text):
    v = float(str(text).strip())
    if not math.isfinite(v):
        raise ValueError(f"not a finite number: {text!r}")
    return v


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text):
    vals = [_float(c) for c in str(text).split(",") if c.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _int_range(text):
    """``a:b`` (half-open) or a comma list of integers."""
    t = str(text).strip()
    if ":" in t:
        a, b = (int(x) for x in t.split(":"))
        if b <= a:
            raise ValueError(f"empty range {t!r}")
        return list(range(a, b))
    return [int(c) for c in t.split(",") if c.strip()]


def _window(text):
    a, b = (int(x) for x in str(text).split(":"))
    if b < a:
        raise ValueError("window must satisfy lo <= hi")
    return (a, b)


def _choice(*options):
    def parse(text):
        t = str(text).strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return t

    return parse


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return f"{v[0]}:{v[1]}"
    if isinstance(v, list):
        if v and all(isinstance(x, int) for x in v) and v == list(range(v[0], v[-1] + 1)) and len(v) > 2:
            return f"{v[0]}:{v[-1] + 1}"
        return ", ".join(_fmt(x) for x in v)
    return str(v)


# -- parameter schemas ----------------------------------------------------------
# key -> (parser, default or REQUIRED, check or None)

REQUIRED = object()


def _pos(v):
    return None if v >= 1 else "must be >= 1"


def _open01(v):
    return None if 0.0 < v < 1.0 else "must lie in (0, 1)"


def _open_half(v):
    return None if 0.0 < v < 0.5 else "must lie in (0, 1/2)"


def _positive(v):
    return None if v > 0 else "must be > 0"


def _beta_list(vs):
    return None if all(1.0 < b <= 2.0 for b in vs) else "every beta must lie in (1, 2]"


def _increasing(vs):
    if any(b <= a for a, b in zip(vs, vs[1:])):
        return "must be strictly increasing"
    return None if vs[0] > 0 else "must be positive"


SCHEMAS = {
    "return-series": {
        "n_max": (_int, REQUIRED, _pos),
        "mode": (_choice("exact", "absorbing"), "exact", None),
        "window": (_window, None, None),
        "alpha": (_float, 0.5, None),
        "power": (_float, 1.0, _positive),
    },
    "valley-scan": {
        "delta": (_float, REQUIRED, _open01),
        "L_grid": (_float_list, REQUIRED, _increasing),
        "env_seeds": (_int_range, REQUIRED, lambda v: None if v else "no seeds"),
    },
    "prop1": {
        "L": (_float, REQUIRED, _positive),
        "delta": (_float, REQUIRED, _open01),
        "points": (_int, 16, _pos),
    },
    "bm-events": {
        "delta": (_float, REQUIRED, _open_half),
        "L": (_float, REQUIRED, _positive),
        "trials": (_int, REQUIRED, _pos),
        "sigma": (_float, 1.0, _positive),
        "dt": (_float, None, _positive),
        "confidence": (_float, 0.99, _open01),
    },
    "model2d": {
        "model": (_choice("I", "II", "III"), REQUIRED, None),
        "delta": (_float, 0.5, _open01),
        "steps": (_int, REQUIRED, _pos),
        "tau_records": (_int, 0, lambda v: None if v >= 0 else "must be >= 0"),
    },
    "meeting": {
        "d": (_int, REQUIRED, _pos),
        "same_env": (_bool, True, None),
        "steps": (_int, REQUIRED, _pos),
        "trials": (_int, 1, _pos),
    },
    "classify": {
        "beta": (_float_list, REQUIRED, _beta_list),
    },
}

LAW_KEYS = {"kind", "z0", "table", "beta", "cutoff"}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    params: dict
    env: dict | None = None
    law: dict | None = None
    notes: list = field(default_factory=list)
    workers: int = 1
    out: str = "results"

    def canonical(self) -> str:
        lines = ["[experiment]", f"kind = {self.kind}", f"seed = {self.seed}", ""]
        if self.env is not None:
            lines.append("[environment]")
            lines += [f"{k} = {v}" for k, v in sorted(self.env.items())]
            lines.append("")
        if self.law is not None:
            lines.append("[step-law]")
            lines += [f"{k} = {v}" for k, v in sorted(self.law.items())]
            lines.append("")
        lines.append("[params]")
        lines += [f"{k} = {_fmt(v)}" for k, v in sorted(self.params.items()) if v is not None]
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def env_spec(self):
        from .env import EnvironmentSpec

        return EnvironmentSpec.from_config(self.env)

    def step_law(self):
        from .models import step_law_from_config

        return step_law_from_config(self.law)


def parse_config(text: str, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and fully validate config text; all problems are reported together."""
    from .env import EnvironmentSpec
    from .models import step_law_from_config

    problems = []
    notes = []
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigInvalid([("<file>", str(exc).splitlines()[0])]) from None

    allowed = {"experiment", "environment", "step-law", "params"}
    for sec in cp.sections():
        if sec not in allowed:
            problems.append((sec, f"unknown section; expected one of {sorted(allowed)}"))

    exp = cp["experiment"] if cp.has_section("experiment") else {}
    kind = str(exp.get("kind", "")).strip()
    if not kind:
        problems.append(("experiment.kind", f"missing; valid kinds: {', '.join(KINDS)}"))
    elif kind not in KINDS:
        problems.append(("experiment.kind", f"unknown kind {kind!r}; valid kinds: {', '.join(KINDS)}"))
    for key in exp:
        if key not in ("kind", "seed"):
            problems.append((f"experiment.{key}", "unknown key"))

    seed = DEFAULT_SEED
    if seed_override is not None:
        seed = int(seed_override)
        notes.append(f"experiment.seed overridden to {seed}")
    elif "seed" in exp:
        try:
            seed = _int(exp["seed"])
            if seed < 0:
                raise ValueError("must be >= 0")
        except ValueError as exc:
            problems.append(("experiment.seed", str(exc)))
    else:
        notes.append(f"experiment.seed missing; defaulted to {DEFAULT_SEED}")

    env_block = None
    if kind in NEEDS_ENV:
        if not cp.has_section("environment"):
            problems.append(("environment", "section required for this kind"))
        else:
            block = dict(cp["environment"])
            if "seed" not in block:
                block["seed"] = str(seed)
                notes.append(f"environment.seed missing; defaulted to experiment seed {seed}")
            try:
                env_block = EnvironmentSpec.from_config(block).to_config()
            except SinaiLabError as exc:
                problems.append(("environment", str(exc)))
            except (ValueError, TypeError, KeyError) as exc:
                problems.append(("environment", str(exc)))

    law_block = None
    if kind in NEEDS_LAW:
        block = dict(cp["step-law"]) if cp.has_section("step-law") else {"kind": "rademacher"}
        if not cp.has_section("step-law"):
            notes.append("step-law missing; defaulted to rademacher")
        bad = set(block) - LAW_KEYS
        for key in sorted(bad):
            problems.append((f"step-law.{key}", "unknown key"))
        if not bad:
            try:
                step_law_from_config(block)
                law_block = {k: str(v).strip() for k, v in block.items()}
            except (SinaiLabError, ValueError, KeyError) as exc:
                problems.append(("step-law", str(exc)))

    params = {}
    if kind in SCHEMAS:
        raw = dict(cp["params"]) if cp.has_section("params") else {}
        schema = SCHEMAS[kind]
        for key in sorted(set(raw) - set(schema)):
            problems.append((f"params.{key}", f"unknown key for {kind}; expected {sorted(schema)}"))
        for key, (parse, default, check) in schema.items():
            if key not in raw:
                if default is REQUIRED:
                    problems.append((f"params.{key}", "missing"))
                else:
                    params[key] = default
                continue
            try:
                v = parse(raw[key])
            except ValueError as exc:
                problems.append((f"params.{key}", str(exc)))
                continue
            msg = check(v) if check else None
            if msg:
                problems.append((f"params.{key}", f"{msg} (got {raw[key].strip()})"))
            params[key] = v
        if kind == "model2d" and law_block is not None and "model" in params and not problems:
            from .models import Model2DConfig

            try:
                Model2DConfig(params["model"], EnvironmentSpec.from_config(env_block),
                              step_law_from_config(law_block), params["delta"], seed).validate()
            except SinaiLabError as exc:
                problems.append(("step-law", str(exc)))

    if problems:
        raise ConfigInvalid(problems)
    return ExperimentConfig(kind, seed, params, env_block, law_block, notes)


def validate(text: str, seed_override: int | None = None) -> str:
    """Canonical config text, or ``ConfigInvalid`` listing every problem."""
    return parse_config(text, seed_override).canonical()


# -- runners ----------------------------------------------------------------------
# each returns (files: {name: csv text}, metrics: dict)


def _run_return_series(cfg: ExperimentConfig):
    from .env import make_environment
    from .valley import partial_sums, return_series

    p = cfg.params
    env = make_environment(cfg.env_spec())
    series = return_series(env, p["n_max"], p["mode"], p["window"])
    sums = partial_sums(series, p["alpha"], p["power"])
    metrics = {
        "n_max": p["n_max"],
        "p_last": float(series.probs[-1]),
        "partial_sum_last": float(sums.weighted[-1]),
        "power_sum_last": float(sums.power[-1]),
    }
    return {"series.csv": series.to_csv(), "partial_sums.csv": sums.to_csv()}, metrics


def _scan_one(env_block, env_seed, delta, grid):
    from .env import EnvironmentSpec, make_environment
    from .valley import gamma_search

    spec = EnvironmentSpec.from_config({**env_block, "seed": str(env_seed)})
    rows = []
    for h in gamma_search(make_environment(spec), delta, grid):
        d = h.descriptor
        vals = (d.t_minus, d.t_plus, d.b_minus, d.b_plus) if d is not None else ("", "", "", "")
        rows.append((env_seed, h.L, int(h.member), int(h.exhausted)) + vals)
    return rows


def _run_valley_scan(cfg: ExperimentConfig, workers: int):
    from .parallel import map_tasks

    p = cfg.params
    tasks = [(cfg.env, s, p["delta"], p["L_grid"]) for s in p["env_seeds"]]
    parts = map_tasks(_scan_one, tasks, workers)
    lines = ["env_seed,L,member,exhausted,t_minus,t_plus,b_minus,b_plus"]
    with_member = 0
    members = 0
    for rows in parts:
        m = sum(r[2] for r in rows)
        members += m
        with_member += m > 0
        lines += [",".join(_fmt(v) if isinstance(v, float) else str(v) for v in r) for r in rows]
    metrics = {
        "environments": len(parts),
        "memberships": members,
        "fraction_with_member": with_member / len(parts),
    }
    return {"gamma.csv": "\n".join(lines) + "\n"}, metrics


def _run_prop1(cfg: ExperimentConfig):
    from .env import make_environment
    from .valley import prop1_check, prop1_n_grid

    p = cfg.params
    env = make_environment(cfg.env_spec())
    ns = prop1_n_grid(p["L"], p["delta"], p["points"])
    rep = prop1_check(env, p["L"], p["delta"], ns)
    lines = ["n,lower_bound,threshold,pass"]
    lines += [f"{int(n)},{float(v)!r},{rep.threshold!r},{int(ok)}" for n, v, ok in zip(rep.ns, rep.lhs, rep.passed)]
    metrics = {
        "pass_fraction": float(np.mean(rep.passed)),
        "observed_C": rep.observed_c,
        "threshold": rep.threshold,
        "t_minus": rep.descriptor.t_minus,
        "t_plus": rep.descriptor.t_plus,
    }
    return {"prop1.csv": "\n".join(lines) + "\n"}, metrics


def _run_bm_events(cfg: ExperimentConfig, workers: int):
    from .brownian import event_probability

    p = cfg.params
    est = event_probability(p["delta"], p["L"], p["trials"], cfg.seed, p["sigma"], p["dt"], p["confidence"], workers)
    csv = "delta,L,trials,hits,ci_low,ci_high\n"
    csv += f"{est.delta!r},{est.L!r},{est.trials},{est.hits},{est.ci_low!r},{est.ci_high!r}\n"
    return {"events.csv": csv}, json.loads(est.to_json())


def _run_model2d(cfg: ExperimentConfig):
    from .models import Model2DConfig, simulate_model

    p = cfg.params
    mc = Model2DConfig(p["model"], cfg.env_spec(), cfg.step_law(), p["delta"], cfg.seed)
    st = simulate_model(mc, p["steps"], max_tau_records=p["tau_records"] if p["model"] != "I" else 0)
    files = {"sites.csv": st.to_csv()}
    if len(st.tau):
        lines = ["k,tau,x,y"] + [",".join(str(int(v)) for v in row) for row in st.tau]
        files["embedded.csv"] = "\n".join(lines) + "\n"
    return files, st.as_dict()


def _run_meeting(cfg: ExperimentConfig, workers: int):
    from .models import meeting_experiment

    p = cfg.params
    rep = meeting_experiment([cfg.env_spec()], p["d"], p["same_env"], p["steps"], cfg.seed, p["trials"], workers)
    metrics = {"d": rep.d, "same_env": rep.same_env, "total": rep.total, "trials": rep.trials}
    return {"meeting.csv": rep.to_csv()}, metrics


def _run_classify(cfg: ExperimentConfig):
    from .models import srw_recurrence_classifier

    lines = ["beta,verdict"]
    verdicts = {}
    for b in cfg.params["beta"]:
        v = srw_recurrence_classifier(b)
        verdicts[repr(b)] = v
        lines.append(f"{b!r},{v}")
    return {"classify.csv": "\n".join(lines) + "\n"}, {"verdicts": verdicts}


def run(cfg: ExperimentConfig, out_dir: str, workers: int = 1) -> dict:
    """Execute ``cfg`` and write its CSV files plus ``summary.json`` into ``out_dir``."""
    t0 = time.perf_counter()
    k = cfg.kind
    if k == "return-series":
        files, metrics = _run_return_series(cfg)
    elif k == "valley-scan":
        files, metrics = _run_valley_scan(cfg, workers)
    elif k == "prop1":
        files, metrics = _run_prop1(cfg)
    elif k == "bm-events":
        files, metrics = _run_bm_events(cfg, workers)
    elif k == "model2d":
        files, metrics = _run_model2d(cfg)
    elif k == "meeting":
        files, metrics = _run_meeting(cfg, workers)
    else:
        files, metrics = _run_classify(cfg)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, text in sorted(files.items()):
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(path)
    summary = {
        "experiment": k,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "notes": cfg.notes,
        "metrics": metrics,
        "files": {os.path.basename(p): hashlib.sha256(files[os.path.basename(p)].encode()).hexdigest() for p in written},
        "wall_time_s": time.perf_counter() - t0,
        "versions": {
            "sinai_lab": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    written.append(path)
    return summary


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sinai-lab", description="Quenched RWRE experiments")
    ap.add_argument("command", choices=("run", "validate"))
    ap.add_argument("config", help="path to an INI config file")
    ap.add_argument("--workers", type=int, default=None, help="worker processes (default: $SINAI_LAB_WORKERS or 1)")
    ap.add_argument("--out", default="results", help="output directory for run")
    ap.add_argument("--seed", type=int, default=None, help="override the master seed")
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    say = (lambda *a, **k: None) if args.quiet else print
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, args.seed)
    except ConfigInvalid as exc:
        for path, msg in exc.problems:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return 2
    for note in cfg.notes:
        print(f"note: {note}", file=sys.stderr)
    if args.command == "validate":
        say(cfg.canonical(), end="")
        say(f"# config_hash = {cfg.config_hash}")
        return 0
    workers = default_workers() if args.workers is None else max(1, args.workers)
    try:
        summary = run(cfg, args.out, workers)
    except (SinaiLabError, OSError, ArithmeticError, ValueError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    say(json.dumps({"config_hash": summary["config_hash"], "metrics": summary["metrics"]}, sort_keys=True, default=_json_default))
    return 0


if __name__ == "__main__":
    sys.exit(main())
