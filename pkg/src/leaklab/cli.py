"""``leaklab`` command line: one subcommand per experiment.

Exit status is 0 when the outcome is within its bound, 2 when a bound is
violated or a counterexample turns up, and 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from leaklab import __version__
from leaklab._parallel import resolve_jobs, trial_rng
from leaklab.leakage import DistanceFunctionKind, Holds, Sampled, check_bisection

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATED = 2

KINDS = ("floorlog", "exact", "orderonly")
LEARNERS = ("lencthr", "halving", "constant", "largest_positive", "expmech")
ADVERSARIES = ("adaptive", "random", "ore")
FORMATS = ("json", "csv")


class ConfigError(ValueError):
    pass


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    experiment: Optional[str] = None
    d: Optional[int] = None
    n: Optional[int] = None
    rounds: Optional[int] = None
    trials: Optional[int] = None
    seed: Optional[int] = None
    kind: Optional[str] = None
    learner: Optional[str] = None
    adversary: Optional[str] = None
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    output: Optional[str] = None
    format: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


CONFIG_FIELDS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))


def _check_names(cfg: ExperimentConfig) -> None:
    for value, allowed, what in (
        (cfg.kind, KINDS, "kind"),
        (cfg.learner, LEARNERS, "learner"),
        (cfg.adversary, ADVERSARIES, "adversary"),
        (cfg.format, FORMATS, "format"),
    ):
        if value is not None and value not in allowed:
            raise ConfigError(f"unknown {what} {value!r} (choose from {', '.join(allowed)})")


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a single JSON object")
    unknown = sorted(set(data) - set(CONFIG_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    if data.get("seed") is None:
        raise ConfigError(f"config {path} has no seed")
    cfg = ExperimentConfig(**data)
    _check_names(cfg)
    return cfg


# ---------------------------------------------------------------------------
# output


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, cfg: ExperimentConfig, argv: Sequence[str]) -> None:
    if cfg.output:
        Path(cfg.output).write_text(text)
        meta = {
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "argv": list(argv),
            "version": __version__,
        }
        Path(cfg.output + ".meta.json").write_text(_dump(meta))
    else:
        sys.stdout.write(text)


def _report(result: Dict[str, Any], cfg: ExperimentConfig, argv: Sequence[str]) -> None:
    result = dict(result)
    result["config"] = cfg.to_dict()
    _emit(_dump(result), cfg, argv)


def _r12(x: float) -> float:
    return float(f"{x:.12g}")


# ---------------------------------------------------------------------------
# subcommands


def _need(cfg: ExperimentConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise ConfigError(f"--{name} is required for {cfg.experiment}")


def cmd_verify_bisection(cfg: ExperimentConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], int]:
    kind = DistanceFunctionKind.parse(cfg.kind)
    if args.mode == "exhaustive":
        res = check_bisection(kind, cfg.d, "exhaustive")
    else:
        _need(cfg, "seed")
        res = check_bisection(kind, cfg.d, Sampled(args.samples, cfg.seed))
    if isinstance(res, Holds):
        return {"verdict": "Holds", "triples_checked": res.triples_checked}, EXIT_OK
    out = {"verdict": "Counterexample", "x": res.x, "y": res.y, "z": res.z, "reason": res.reason}
    return out, EXIT_VIOLATED


def _lemma(fn: Callable[..., Any], cfg: ExperimentConfig, **kw: Any) -> Tuple[Dict[str, Any], int]:
    _need(cfg, "seed")
    rep = fn(cfg.n, cfg.d, cfg.trials, seed=cfg.seed, jobs=resolve_jobs(kw.pop("jobs")), **kw)
    return rep.to_dict(), EXIT_VIOLATED if rep.verdict == "Violated" else EXIT_OK


def cmd_verify_regularity(cfg, args):
    from leaklab.lemma_lab import verify_regularity

    return _lemma(verify_regularity, cfg, claimed=args.claimed, jobs=args.jobs)


def cmd_verify_buckets(cfg, args):
    from leaklab.lemma_lab import verify_bucket_sizes

    return _lemma(verify_bucket_sizes, cfg, claimed=args.claimed, jobs=args.jobs)


def cmd_verify_fldspread(cfg, args):
    from leaklab.lemma_lab import verify_fldspread

    return _lemma(verify_fldspread, cfg, claimed=args.claimed, g=args.guard, jobs=args.jobs)


def cmd_verify_loginv(cfg, args):
    from leaklab.lemma_lab import verify_log_invariance

    return _lemma(verify_log_invariance, cfg, claimed=args.claimed, probe_pairs=args.probe_pairs, jobs=args.jobs)


def _game_bound(learner: str, d: int) -> Optional[int]:
    return {"lencthr": d + 4, "halving": d}.get(learner)


def cmd_online_game(cfg: ExperimentConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], int]:
    from leaklab import online_game as og
    from leaklab.concepts import ThresholdConcept

    _need(cfg, "seed", "d", "rounds")
    rng = np.random.default_rng(cfg.seed)
    t = args.t if args.t is not None else int(rng.integers(1, (1 << cfg.d) + 1))
    kind = DistanceFunctionKind.parse(cfg.kind)
    if cfg.learner == "halving":
        concept = ThresholdConcept(t, cfg.d)
        learner = og.halving_learner(cfg.d)
    elif cfg.learner in ("lencthr", "constant"):
        concept = og.new_encrypted_concept(cfg.d, t, kind, key_seed=cfg.seed)
        learner = og.lencthr_learner(concept.registry.view(), kind) if cfg.learner == "lencthr" else og.ConstantLearner(0)
    else:
        raise ConfigError(f"learner {cfg.learner!r} is not an online learner")
    if cfg.adversary == "adaptive":
        adversary = og.adaptive_worstcase_adversary()
    elif cfg.adversary == "random":
        adversary = og.RandomAdversary()
    else:
        adversary = og.ore_breaker_adversary()
    transcript = og.run_game(learner, adversary, concept, cfg.rounds, cfg.seed)
    summary = og.summarize(transcript, t)
    bound = _game_bound(cfg.learner, cfg.d)
    out = dataclasses.asdict(summary)
    out["bound"] = bound
    out["halted_early"] = transcript.halted_early
    ok = summary.potential_ok and summary.safety_ok and (bound is None or summary.mistakes <= bound)
    if args.transcript:
        with open(args.transcript, "w", newline="") as fh:
            transcript.to_csv(fh)
    if cfg.format == "csv":
        out["__csv__"] = transcript.to_csv()
    return out, EXIT_OK if ok else EXIT_VIOLATED


class _OreTrial:
    def __init__(self, d: int, rounds: int) -> None:
        self.d, self.rounds = d, rounds

    def __call__(self, k: int, rng: np.random.Generator) -> Tuple[int, int, bool]:
        from leaklab import online_game as og

        kind = DistanceFunctionKind.ORDER_ONLY
        concept = og.new_encrypted_concept(self.d, 1 << (self.d - 1), kind, key_seed=int(rng.integers(2**63)))
        adversary = og.ore_breaker_adversary()
        tr = og.run_game(og.lencthr_learner(concept.registry.view(), kind), adversary, concept, self.rounds, int(rng.integers(2**63)))
        return tr.total_mistakes, len(tr.rounds), all(adversary.projection_equal)


def cmd_ore_stress(cfg: ExperimentConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], int]:
    from leaklab._parallel import run_trials

    _need(cfg, "seed", "d", "rounds", "trials")
    out = run_trials(_OreTrial(cfg.d, cfg.rounds), cfg.trials, cfg.seed, resolve_jobs(args.jobs))
    rates = [m / cfg.rounds for m, _, _ in out]
    in_band = sum(args.low <= r <= args.high for r in rates)
    projection = all(p for _, _, p in out)
    result = {
        "runs": cfg.trials,
        "rounds": cfg.rounds,
        "in_band": in_band,
        "band": [args.low, args.high],
        "required_fraction": args.fraction,
        "mistake_rates": [_r12(r) for r in rates],
        "projection_equal": projection,
        "short_runs": sum(n < cfg.rounds for _, n, _ in out),
    }
    ok = in_band >= args.fraction * cfg.trials and projection
    return result, EXIT_OK if ok else EXIT_VIOLATED


class _ConstantBatch:
    name = "constant"

    def learn(self, samples, oracle, d, rng):
        return lambda x, p=None: 0


def _batch_learner(name: str, epsilon: Optional[float]):
    from leaklab import dp_toolkit as dp

    if name == "largest_positive":
        return dp.LargestPositiveLearner()
    if name == "constant":
        return _ConstantBatch()
    if name == "expmech":
        return dp.ExpMechThresholdLearner(1.0 if epsilon is None else epsilon)
    raise ConfigError(f"learner {name!r} is not a batch learner")


def cmd_attack(cfg: ExperimentConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], int]:
    from leaklab.attack import Algorithm3Adversary, run_attack

    _need(cfg, "seed", "n", "d", "trials")
    learner = _batch_learner(cfg.learner, cfg.epsilon)
    kind = DistanceFunctionKind.parse(cfg.kind)
    adv = Algorithm3Adversary(learner, cfg.n, cfg.d, focused=args.focused, construction=args.construction, kind=kind)
    res = run_attack(adv, cfg.trials, cfg.seed, resolve_jobs(args.jobs))
    if args.log:
        with open(args.log, "w") as fh:
            res.write_jsonl(fh)
    out = res.summary()
    out["focused"] = args.focused
    out["construction"] = args.construction
    return out, EXIT_VIOLATED if res.game.invalid_count else EXIT_OK


def cmd_advantage_id(cfg: ExperimentConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], int]:
    from leaklab.attack import advantage_identity_check

    _need(cfg, "seed", "trials")
    if args.grid:
        vals = np.linspace(0, 1, args.grid)
        cells = [(float(a), float(b)) for a in vals for b in vals]
    else:
        cells = [(args.p_i, args.p_next)]
    rows = []
    worst = 0.0
    for k, (a, b) in enumerate(cells):
        chk = advantage_identity_check(a, b, cfg.trials, int(trial_rng(cfg.seed, k).integers(2**63)))
        worst = max(worst, chk.error)
        rows.append({"p_i": _r12(a), "p_next": _r12(b), "empirical": _r12(chk.empirical), "analytic": _r12(chk.analytic), "error": _r12(chk.error)})
    out = {"cells": rows, "max_error": _r12(worst), "tolerance": args.tolerance}
    return out, EXIT_OK if worst <= args.tolerance else EXIT_VIOLATED


def cmd_jump_core(cfg: ExperimentConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], int]:
    from leaklab.attack import jump_core_search

    _need(cfg, "seed", "n", "trials")
    res = jump_core_search(cfg.n, cfg.trials, cfg.seed)
    out = dataclasses.asdict(res)
    out["min_gap_over_bound"] = _r12(res.min_gap_over_bound)
    return out, EXIT_VIOLATED if res.counterexamples else EXIT_OK


def cmd_dp_calc(cfg: ExperimentConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], int]:
    from leaklab import dp_toolkit as dp

    _need(cfg, "epsilon", "delta")
    p = dp.PrivacyParams(cfg.epsilon, cfg.delta)
    if args.op == "group":
        if args.k is None:
            raise ConfigError("--k is required for dp-calc group")
        res = dp.group_privacy(p, args.k)
    elif args.op == "compose":
        if args.epsilon2 is None or args.delta2 is None:
            raise ConfigError("--epsilon2 and --delta2 are required for dp-calc compose")
        res = dp.compose(p, dp.PrivacyParams(args.epsilon2, args.delta2))
    else:
        if args.m is None or cfg.n is None:
            raise ConfigError("--m and --n are required for dp-calc subsample")
        res = dp.subsample_amplify(p, args.m, cfg.n)
    out = res.to_dict()
    out["op"] = args.op
    return out, EXIT_OK


def cmd_report(cfg: ExperimentConfig, args: argparse.Namespace) -> Tuple[Dict[str, Any], int]:
    rows = []
    bad = False
    for path in args.inputs:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from None
        verdict = data.get("verdict")
        rows.append({"file": os.path.basename(path), "experiment": (data.get("config") or {}).get("experiment"), "verdict": verdict})
        bad |= verdict in ("Violated", "Counterexample")
    return {"reports": rows, "all_consistent": not bad}, EXIT_VIOLATED if bad else EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, **defaults: Any) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (default: $LEAKLAB_JOBS or all cores)")
    p.add_argument("--output", "--out", dest="output", help="write the result here instead of stdout")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--kind", help=f"one of {', '.join(KINDS)}")
    p.add_argument("--learner", help=f"one of {', '.join(LEARNERS)}")
    p.add_argument("--adversary", help=f"one of {', '.join(ADVERSARIES)}")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.set_defaults(_defaults=defaults)


COMMANDS: Dict[str, Callable[[ExperimentConfig, argparse.Namespace], Tuple[Dict[str, Any], int]]] = {
    "verify-bisection": cmd_verify_bisection,
    "verify-regularity": cmd_verify_regularity,
    "verify-buckets": cmd_verify_buckets,
    "verify-fldspread": cmd_verify_fldspread,
    "verify-loginv": cmd_verify_loginv,
    "online-game": cmd_online_game,
    "ore-stress": cmd_ore_stress,
    "attack": cmd_attack,
    "advantage-id": cmd_advantage_id,
    "jump-core": cmd_jump_core,
    "dp-calc": cmd_dp_calc,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="leaklab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"leaklab {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("verify-bisection", help="check the bisection property")
    _common(p, kind="floorlog", d=8)
    p.add_argument("--mode", choices=("exhaustive", "sampled"), default="exhaustive")
    p.add_argument("--samples", type=int, default=100_000)

    for name, lemma_defaults in (
        ("verify-regularity", dict(n=128, d=40, trials=1000)),
        ("verify-buckets", dict(n=128, d=40, trials=1000)),
        ("verify-fldspread", dict(n=256, d=40, trials=500)),
        ("verify-loginv", dict(n=256, d=40, trials=100)),
    ):
        p = sub.add_parser(name, help=f"Monte Carlo lemma check ({name[7:]})")
        _common(p, **lemma_defaults)
        p.add_argument("--claimed", type=float, help="override the claimed success probability")
        if name == "verify-fldspread":
            p.add_argument("--guard", type=float, help="override the guard band G (0 = negative control)")
        if name == "verify-loginv":
            p.add_argument("--probe-pairs", type=int, default=8)

    p = sub.add_parser("online-game", help="play one mistake-bounded game")
    _common(p, learner="lencthr", adversary="adaptive", kind="floorlog", d=16, rounds=10_000)
    p.add_argument("--t", type=int, help="threshold (default: drawn from the seed)")
    p.add_argument("--transcript", help="also write the per-round CSV transcript here")

    p = sub.add_parser("ore-stress", help="order-only leakage against the order-breaking adversary")
    _common(p, d=32, rounds=2000, trials=100, kind="orderonly", learner="lencthr", adversary="ore")
    p.add_argument("--low", type=float, default=0.45)
    p.add_argument("--high", type=float, default=0.55)
    p.add_argument("--fraction", type=float, default=0.9)

    p = sub.add_parser("attack", help="learner-based distinguisher in the static security game")
    _common(p, learner="largest_positive", kind="floorlog", n=16, d=24, trials=10_000)
    p.add_argument("--focused", action="store_true", help="pin i to the learner's boundary")
    p.add_argument("--construction", choices=("direct", "Ai"), default="direct")
    p.add_argument("--log", help="per-trial JSONL log")

    p = sub.add_parser("advantage-id", help="simulate the agree/disagree guessing rule")
    _common(p, trials=1_000_000)
    p.add_argument("--p-i", type=float, default=0.75)
    p.add_argument("--p-next", type=float, default=0.25)
    p.add_argument("--grid", type=int, help="sweep a GRID x GRID grid over [0, 1]^2 instead")
    p.add_argument("--tolerance", type=float, default=0.005)

    p = sub.add_parser("jump-core", help="random search for counterexamples to the adjacent-gap step")
    _common(p, n=16, trials=100_000)

    p = sub.add_parser("dp-calc", help="privacy calculus")
    p.add_argument("op", choices=("group", "compose", "subsample"))
    _common(p)
    p.add_argument("--k", type=int)
    p.add_argument("--epsilon2", type=float)
    p.add_argument("--delta2", type=float)
    p.add_argument("--m", type=int)

    p = sub.add_parser("report", help="collect JSON results into one summary")
    _common(p)
    p.add_argument("inputs", nargs="+")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    merged: Dict[str, Any] = dict(getattr(args, "_defaults", {}))
    if args.config:
        file_cfg = load_config(args.config)
        merged.update({k: v for k, v in file_cfg.to_dict().items() if v is not None})
    for name in CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    merged["experiment"] = args.command
    merged.setdefault("format", "json")
    cfg = ExperimentConfig(**merged)
    _check_names(cfg)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        cfg = resolve_config(args)
        if args.jobs is not None:
            resolve_jobs(args.jobs)
        result, code = COMMANDS[args.command](cfg, args)
    except (UsageError, ValueError) as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        sys.stderr.write(f"leaklab: error: {msg}\n")
        return EXIT_USAGE
    csv_text = result.pop("__csv__", None)
    if csv_text is not None:
        _emit(csv_text, cfg, argv)
        sys.stderr.write(json.dumps(result, sort_keys=True) + "\n")
    else:
        _report(result, cfg, argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
