"""Command-line entry point: ``banditmf <command> [options]``.

Every run writes its outputs plus ``manifest.cfg`` (the fully resolved
options, flat ``key = value``) into ``--out``. Passing that manifest back via
``--config`` reproduces the run; flags given on the command line override
config values.

Exit codes: 0 success, 1 computation error, 2 usage error or missing file.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from banditmf import __version__, mf
from banditmf.bandit import AlphaSchedule, LinUCB, POLICIES, replay_ctr
from banditmf.dataset import (
    ItemCatalog,
    load_dense_matrix,
    load_movies_csv,
    load_ratings_csv,
    load_replay_log,
    load_target_csv,
    split_holdout,
    write_id_maps,
    write_ratings_csv,
)
from banditmf.errors import BanditMFError
from banditmf.neighborhood import recommend_hybrid, recommend_user_based
from banditmf.pipeline import (
    SimulationConfig,
    holdout_users,
    offline_fit,
    planted_setup,
    simulate,
)
from banditmf.seeding import derive_seed, stage_rng
from banditmf.synthetic import planted_population

MANIFEST = "manifest.cfg"
PATH_KEYS = ("ratings", "dense", "movies", "target", "log", "summary", "model")
_NOT_RECORDED = {"command", "config", "func"}


class UsageError(Exception):
    pass


def _num(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- config -------------------------------------------------------------------


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def write_manifest(args: argparse.Namespace, out: Path) -> Path:
    lines = [f"# banditmf {__version__}", f"command = {args.command}"]
    for key in sorted(vars(args)):
        value = getattr(args, key)
        if key in _NOT_RECORDED or value is None:
            continue
        if key in PATH_KEYS or key == "out":
            value = Path(value).resolve()
        lines.append(f"{key} = {value}")
    path = out / MANIFEST
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _apply_config(sub: argparse.ArgumentParser, command: str, config: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}
    defaults = {}
    for key, value in config.items():
        if key == "command":
            if value != command:
                raise UsageError(f"config is for command {value!r}, not {command!r}")
            continue
        if key not in actions or key == "config":
            raise UsageError(f"unknown config key {key!r} for {command}")
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in ("true", "false"):
                raise UsageError(f"config key {key!r} expects true or false")
            defaults[key] = value.lower() == "true"
        else:
            defaults[key] = value
    sub.set_defaults(**defaults)


# -- argument parser ------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file with option defaults")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")


def _data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ratings", help="ratings CSV (userId,movieId,rating[,timestamp])")
    p.add_argument("--dense", help="whitespace-separated dense rating grid, 0 = missing")
    p.add_argument("--rating-max", type=float, help="rating scale maximum (default: largest rating)")


def _sgd(p: argparse.ArgumentParser, epochs: int = 1000, lr: float = 0.001) -> None:
    p.add_argument("--k", type=int, default=2, help="latent dimension")
    p.add_argument("--lr", type=float, default=lr, help="SGD learning rate")
    p.add_argument("--reg", type=float, default=0.1, help="regularization weight")
    p.add_argument("--epochs", type=int, default=epochs, help="passes over the training ratings")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="banditmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"banditmf {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="command")
    subs.required = True
    table = {}

    def add(name, func, help_text):
        p = subs.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        _common(p)
        table[name] = p
        return p

    p = add("ingest", cmd_ingest, "validate a ratings file and write the densified copy with id maps")
    _data(p)
    p.add_argument("--movies", help="movies CSV (movieId,title,...) to check titles against")

    p = add("train-mf", cmd_train_mf, "fit a latent factor model and save it")
    _data(p)
    _sgd(p)
    p.add_argument("--variant", choices=(mf.BASE, mf.BIAS), default=mf.BIAS)

    p = add("eval-mf", cmd_eval_mf, "holdout MSE of the MF variants over several seeds")
    _data(p)
    _sgd(p)
    p.add_argument("--variant", choices=(mf.BASE, mf.BIAS, "both"), default="both")
    p.add_argument("--holdout", type=float, default=0.2, help="held-out fraction")
    p.add_argument("--seeds", type=int, default=10, help="number of replicate splits")

    p = add("recommend", cmd_recommend, "user-based CF recommendations for a target user")
    _data(p)
    p.add_argument("--movies", help="movies CSV for titles")
    p.add_argument("--target", help="target CSV: title or movieId column plus rating")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--top-groups", type=int, default=100, help="similar users kept by overlap")

    p = add("hybrid", cmd_hybrid, "items similar to a user's best predicted unseen item")
    _data(p)
    _sgd(p)
    p.add_argument("--movies", help="movies CSV for titles")
    p.add_argument("--user", help="external user id")
    p.add_argument("--top-n", type=int, default=10)

    p = add("cluster", cmd_cluster, "MF then k-means over predicted rows; inertia per iteration")
    _data(p)
    _sgd(p)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--n-init", type=int, default=20)
    p.add_argument("--max-iter", type=int, default=300)

    p = add("replay-linucb", cmd_replay_linucb, "replay CTR of disjoint LinUCB on a logged-bandit file")
    p.add_argument("--log", help="replay log: action reward x_1 ... x_d per line")
    p.add_argument("--alpha", default="adaptive:0.001,0.1", help="const:C | inv-sqrt-t | adaptive:C,S | number")
    p.add_argument("--arms", type=int, help="number of arms (default: from the log)")
    p.add_argument("--action-base", type=int, default=0, help="index of the first action in the log")

    p = add("simulate-banditmf", cmd_simulate, "cold-start sessions for held-out users")
    _data(p)
    _sgd(p, epochs=200, lr=0.01)
    p.add_argument("--policy", default="ts,ucb,egreedy", help="comma list from ts, ucb, egreedy")
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--n-init", type=int, default=20)
    p.add_argument("--tau", type=int, default=5, help="ratings collected per new user")
    p.add_argument("--rounds", type=int, help="recommendation attempts per user (default: item count)")
    p.add_argument("--users", type=int, default=2, help="new users per replicate")
    p.add_argument("--seeds", type=int, default=1, help="replicates")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--ucb-c", type=float, default=1.0)
    p.add_argument("--missing", choices=("skip", "impute"), default="skip")
    p.add_argument("--planted-users", type=int, default=100, help="training users when no data file is given")
    p.add_argument("--planted-items", type=int, default=150)
    p.add_argument("--planted-weights", default="0.8,0.1,0.1", help="cluster proportions")
    p.add_argument("--planted-density", type=float, default=0.3)

    p = add("report", cmd_report, "fixed-width table from a summary CSV")
    p.add_argument("--summary", help="summary CSV written by simulate-banditmf")
    return parser, table


# -- helpers ----------------------------------------------------------------------


def _need(args, *names) -> None:
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _load_matrix(args):
    if (args.ratings is None) == (args.dense is None):
        raise UsageError("give exactly one of --ratings or --dense")
    if args.ratings is not None:
        return load_ratings_csv(_existing(args.ratings), rating_max=args.rating_max)
    return load_dense_matrix(_existing(args.dense), rating_max=args.rating_max)


def _catalog(args, matrix):
    titles = load_movies_csv(_existing(args.movies)) if getattr(args, "movies", None) else None
    return ItemCatalog.for_matrix(matrix, titles)


def _sgd_config(args, seed: int) -> mf.SgdConfig:
    return mf.SgdConfig(k=args.k, learning_rate=args.lr, regularization=args.reg, iterations=args.epochs, seed=seed)


def _item_label(matrix, catalog, item: int) -> tuple[str, str]:
    ext = matrix.item_ids[item] if matrix.item_ids else str(item)
    return ext, catalog.titles[item] if catalog.titles else ""


# -- commands -----------------------------------------------------------------------


def cmd_ingest(args, out: Path) -> str:
    matrix = _load_matrix(args)
    catalog = _catalog(args, matrix)
    write_ratings_csv(matrix, out / "ratings.csv")
    write_id_maps(matrix, out)
    missing_titles = sum(1 for t in catalog.titles if not t) if args.movies else 0
    density = len(matrix) / (matrix.num_users * matrix.num_items)
    _write_csv(
        out / "stats.csv",
        ["users", "items", "ratings", "density", "mean", "rating_max", "untitled_items"],
        [[matrix.num_users, matrix.num_items, len(matrix), _num(density), _num(matrix.mean()), _num(matrix.rating_max), missing_titles]],
    )
    return f"ingested {len(matrix)} ratings: {matrix.num_users} users x {matrix.num_items} items"


def cmd_train_mf(args, out: Path) -> str:
    matrix = _load_matrix(args)
    model = mf.train(matrix, _sgd_config(args, derive_seed(args.seed, "mf")), args.variant)
    mf.save_model(model, out / "model.txt")
    _write_csv(out / "loss.csv", ["epoch", "loss"], [[e, _num(v)] for e, v in enumerate(model.loss_history, start=1)])
    return f"trained {args.variant} model k={args.k}: final loss {model.loss_history[-1]:.6g}"


def cmd_eval_mf(args, out: Path) -> str:
    matrix = _load_matrix(args)
    variants = (mf.BASE, mf.BIAS) if args.variant == "both" else (args.variant,)
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    rows = []
    results = {v: [] for v in variants}
    for r in range(args.seeds):
        train, test = split_holdout(matrix, args.holdout, derive_seed(args.seed, "split", r))
        cfg = _sgd_config(args, derive_seed(args.seed, "mf", r))
        for v in variants:
            value = mf.mse(mf.train(train, cfg, v), test)
            results[v].append(value)
            rows.append([r, v, _num(value)])
    for v in variants:
        rows.append(["mean", v, _num(np.mean(results[v]))])
    _write_csv(out / "mse.csv", ["replicate", "variant", "mse"], rows)
    return "holdout MSE " + ", ".join(f"{v}={np.mean(results[v]):.6g}" for v in variants)


def cmd_recommend(args, out: Path) -> str:
    _need(args, "target")
    matrix = _load_matrix(args)
    catalog = _catalog(args, matrix)
    target = load_target_csv(_existing(args.target)).resolve(catalog, matrix.rating_max)
    recs = recommend_user_based(matrix, target, args.top_n, args.top_groups)
    rows = [[r.rank, *_item_label(matrix, catalog, r.item), _num(r.score)] for r in recs]
    _write_csv(out / "recommendations.csv", ["rank", "item_external_id", "title", "score"], rows)
    return f"{len(recs)} recommendations for a target with {len(target)} ratings"


def cmd_hybrid(args, out: Path) -> str:
    _need(args, "user")
    matrix = _load_matrix(args)
    catalog = _catalog(args, matrix)
    try:
        user = matrix.user_ids.index(str(args.user)) if matrix.user_ids else int(args.user)
    except ValueError:
        raise BanditMFError(f"unknown user {args.user!r}") from None
    model = mf.train_bias(matrix, _sgd_config(args, derive_seed(args.seed, "mf")))
    seed_item, recs = recommend_hybrid(model, matrix, user, args.top_n)
    _write_csv(
        out / "seed_item.csv",
        ["item_external_id", "title", "predicted_rating"],
        [[*_item_label(matrix, catalog, seed_item), _num(mf.predict(model, user, seed_item))]],
    )
    rows = [[r.rank, *_item_label(matrix, catalog, r.item), _num(r.score)] for r in recs]
    _write_csv(out / "recommendations.csv", ["rank", "item_external_id", "title", "score"], rows)
    return f"seed item {_item_label(matrix, catalog, seed_item)[0]}; {len(recs)} similar items"


def cmd_cluster(args, out: Path) -> str:
    matrix = _load_matrix(args)
    offline = offline_fit(matrix, _sgd_config(args, 0), args.clusters, args.n_init, args.seed, args.max_iter)
    clusters = offline.clusters
    rows = [[r, i, _num(v)] for r, hist in enumerate(clusters.history) for i, v in enumerate(hist, start=1)]
    _write_csv(out / "inertia.csv", ["restart", "iteration", "inertia"], rows)
    users = matrix.user_ids or tuple(str(u) for u in range(matrix.num_users))
    _write_csv(out / "assignment.csv", ["user_external_id", "cluster"], zip(users, clusters.assignment.tolist()))
    items = matrix.item_ids or tuple(str(i) for i in range(matrix.num_items))
    _write_csv(
        out / "unified.csv",
        ["item_external_id", *(f"cluster_{c}" for c in range(clusters.k_clusters))],
        [[ext, *(_num(v) for v in offline.unified[:, i])] for i, ext in enumerate(items)],
    )
    sizes = ",".join(str(s) for s in clusters.sizes())
    return f"{clusters.k_clusters} clusters (sizes {sizes}), inertia {clusters.inertia:.6g}, best restart {clusters.best_restart}"


def cmd_replay_linucb(args, out: Path) -> str:
    _need(args, "log")
    try:
        schedule = AlphaSchedule.parse(args.alpha)
    except BanditMFError as exc:
        raise UsageError(str(exc)) from None
    log = load_replay_log(_existing(args.log), args.action_base)
    n_arms = args.arms if args.arms is not None else log.num_actions
    result = replay_ctr(log, LinUCB(n_arms, log.dim, schedule), n_arms)
    ctr = result.ctr_series
    _write_csv(
        out / "replay.csv",
        ["round", "matches", "correct", "ctr"],
        [[t, int(m), int(c), _num(v) if not math.isnan(v) else ""] for t, (m, c, v) in enumerate(zip(result.matches_series, result.correct_series, ctr), start=1)],
    )
    _write_csv(
        out / "arms.csv",
        ["arm", "total", "correct", "matches", "mean_ucb"],
        [[a, int(result.arm_predictions[a]), int(result.arm_correct[a]), int(result.arm_matches[a]), _num(result.mean_ucb[a])] for a in range(n_arms)],
    )
    return f"alpha {schedule}: CTR {result.ctr:.6g} over {result.matches} matched of {len(log)} rows"


def cmd_simulate(args, out: Path) -> str:
    policies = tuple(p.strip() for p in args.policy.split(",") if p.strip())
    unknown = [p for p in policies if p not in POLICIES]
    if not policies or unknown:
        raise UsageError(f"--policy must list names from {', '.join(POLICIES)}")
    if args.seeds < 1 or args.users < 1:
        raise UsageError("--seeds and --users must be >= 1")
    data = None
    if args.ratings is not None or args.dense is not None:
        data = _load_matrix(args)
    else:
        try:
            weights = tuple(float(w) for w in args.planted_weights.split(","))
        except ValueError:
            raise UsageError("--planted-weights must be a comma list of numbers") from None
        if len(weights) < 1 or min(weights) < 0 or sum(weights) <= 0:
            raise UsageError("--planted-weights must be non-negative and not all zero")

    cfg = SimulationConfig(
        policies=policies,
        k_clusters=args.clusters,
        n_init=args.n_init,
        tau=args.tau,
        max_rounds=args.rounds,
        epsilon=args.epsilon,
        ucb_c=args.ucb_c,
        missing=args.missing,
        sgd=_sgd_config(args, 0),
    )
    round_rows = []
    sessions = []
    for r in range(args.seeds):
        rseed = derive_seed(args.seed, "replicate", r)
        if data is not None:
            train, envs, labels = holdout_users(data, args.users, stage_rng(rseed, "holdout"), min_ratings=args.tau)
        else:
            population = planted_population(
                stage_rng(rseed, "population"), args.planted_users + args.users, args.planted_items, weights
            )
            train, envs, labels = planted_setup(population, args.users, args.planted_density, stage_rng(rseed, "holdout"))
        result = simulate(train, envs, cfg, rseed, labels)
        for s in result.sessions:
            sessions.append(s)
            cum = s.session.trace.cumulative_regret
            for rec, c in zip(s.session.trace.records, cum):
                round_rows.append([r, s.policy, s.user, rec.t, rec.arm, rec.item, _num(rec.reward), _num(c)])

    _write_csv(out / "rounds.csv", ["replicate", "policy", "user", "round", "cluster", "item", "reward", "cum_regret"], round_rows)
    summary = []
    for name in policies:
        rows = [s for s in sessions if s.policy == name]
        summary.append([name, args.tau, args.users, _num(np.mean([s.cumulative_regret for s in rows])), _num(np.mean([s.ndcg for s in rows]))])
    _write_csv(out / "summary.csv", ["policy", "T", "N", "cumulative_regret", "ndcg"], summary)
    best = min(summary, key=lambda row: float(row[3]))
    return f"simulated {len(sessions)} sessions; lowest regret: {best[0]} ({float(best[3]):.6g})"


def format_table(header, rows) -> str:
    """Left-aligned text columns, right-aligned numbers, two-space gutters."""

    def numeric(value: str) -> bool:
        try:
            float(value)
        except ValueError:
            return False
        return True

    widths = [max(len(str(h)), *(len(row[c]) for row in rows)) if rows else len(str(h)) for c, h in enumerate(header)]
    right = [bool(rows) and all(numeric(row[c]) for row in rows) for c in range(len(header))]

    def line(cells):
        return "  ".join(c.rjust(w) if r else c.ljust(w) for c, w, r in zip(cells, widths, right)).rstrip()

    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), rule, *(line(row) for row in rows)]) + "\n"


def cmd_report(args, out: Path) -> str:
    _need(args, "summary")
    with open(_existing(args.summary), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise BanditMFError(f"{args.summary} is empty") from None
        rows = list(reader)
    if any(len(row) != len(header) for row in rows):
        raise BanditMFError(f"{args.summary}: rows do not match the header width")
    table = format_table(header, rows)
    (out / "report.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return f"report: {len(rows)} rows"


# -- entry point ---------------------------------------------------------------------


def _find_command(argv, commands) -> str | None:
    for token in argv:
        if token in commands:
            return token
    return None


def _find_config(argv) -> str | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if token.startswith("--config="):
            return token.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, table = build_parser()
    try:
        command = _find_command(argv, table)
        config_path = _find_config(argv)
        if command is not None and config_path is not None:
            _apply_config(table[command], command, read_config(config_path))
    except UsageError as exc:
        (table[command] if command else parser).print_usage(sys.stderr)
        print(f"banditmf: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    sub = table[args.command]
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        message = args.func(args, out)
        write_manifest(args, out)
    except UsageError as exc:
        sub.print_usage(sys.stderr)
        print(f"banditmf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"banditmf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except BanditMFError as exc:
        print(f"banditmf {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
