"""Command-line interface.

Every subcommand writes plain CSV (``,`` separator, ``.`` decimal, LF line
endings) or JSON.  Errors map to exit codes: 2 for parameters and
configuration, 3 for data, 4 for numerical degeneracy.
"""

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from . import bound as bound_mod
from . import de as de_mod
from . import em as em_mod
from . import evaluation as ev
from . import imp as imp_mod
from .errors import DataError, FgcfError, ParameterError
from .model import (DEFAULT_RATINGS, GroupModel, ObservationSet, load_model, read_dataset,
                    sample_synthetic, save_model, write_dataset)
from .posteriors import check_pairs
from .vdvq import DEFAULT_BETA, DEFAULT_EPSILON, DEFAULT_NOISE_SD, DEFAULT_SWEEPS, vdvq_model

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUTPUT_ENV = "FGCF_OUTPUT_DIR"
MANIFEST = "manifest.json"


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _out_dir(arg):
    path = Path(arg or os.environ.get(OUTPUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _alphabet(text):
    if text is None:
        return DEFAULT_RATINGS
    try:
        values = tuple(int(x) for x in str(text).split(","))
    except ValueError as exc:
        raise ParameterError(f"bad rating alphabet {text!r}") from exc
    return values


def _num_list(text, kind=float):
    try:
        return [kind(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ParameterError(f"bad list {text!r}") from exc


def _seed_list(text):
    """``"0-9"`` or ``"0,3,7"``."""
    text = str(text)
    try:
        if "-" in text and "," not in text:
            lo, hi = (int(x) for x in text.split("-"))
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise ParameterError(f"bad seed list {text!r}") from exc


# ---------------------------------------------------------------------------
# ingest


def ingest_file(path, alphabet=DEFAULT_RATINGS):
    """Read ``user,movie,rating`` triples with arbitrary ids and compact them.

    Ids are numbered in order of first appearance.  Returns
    ``(obs, user_ids, movie_ids)`` where ``user_ids[k]`` is the original id
    of dense user ``k``.
    """
    users, movies, ratings = [], [], []
    user_ids, movie_ids = {}, {}
    seen = {}
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["user", "movie", "rating"]:
            raise DataError(f"{path}: line 1: expected header user,movie,rating")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}: line {line}: expected 3 fields, got {len(row)}")
            n, m, r = (x.strip() for x in row)
            try:
                r = int(r)
            except ValueError as exc:
                raise DataError(f"{path}: line {line}: rating {r!r} is not an integer") from exc
            if r not in alphabet:
                raise DataError(f"{path}: line {line}: rating {r} outside alphabet {tuple(alphabet)}")
            if (n, m) in seen:
                raise DataError(f"{path}: line {line}: duplicate pair ({n},{m}), "
                                f"first seen on line {seen[(n, m)]}")
            seen[(n, m)] = line
            users.append(user_ids.setdefault(n, len(user_ids)))
            movies.append(movie_ids.setdefault(m, len(movie_ids)))
            ratings.append(r)
    obs = ObservationSet(len(user_ids), len(movie_ids), users, movies, ratings, alphabet)
    return obs, list(user_ids), list(movie_ids)


def write_id_map(ids, path):
    _write_rows(path, ("index", "id"), enumerate(ids))


def read_id_map(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [row[1] for row in reader]


def restore_ids(obs, user_ids, movie_ids):
    return [(user_ids[n], movie_ids[m], r) for n, m, r in obs.triples()]


# ---------------------------------------------------------------------------
# shared pieces


def _load_source_model(args):
    if getattr(args, "preset", None):
        if args.preset != "reference":
            raise ParameterError(f"unknown preset {args.preset!r}")
        return ev.reference_model()
    if not getattr(args, "model", None):
        raise ParameterError("need --model or --preset")
    return load_model(args.model)


def _write_posteriors(path, beliefs, label):
    header = (label,) + tuple(f"g{k}" for k in range(beliefs.shape[1]))
    _write_rows(path, header, ([i] + list(row) for i, row in enumerate(beliefs)))


def _read_pairs(path, n_users, n_movies):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["user", "movie"]:
            raise DataError(f"{path}: line 1: expected header starting with user,movie")
        try:
            pairs = [(int(r[0]), int(r[1])) for r in reader if r]
        except (ValueError, IndexError) as exc:
            raise DataError(f"{path}: line {reader.line_num}: {exc}") from exc
    try:
        return check_pairs(pairs, n_users, n_movies)
    except ParameterError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _save_state(path, alg, state):
    if alg == "imp":
        np.savez(path, alg="imp", y=state.y, x=state.x, iteration=state.iteration)
    else:
        np.savez(path, alg="em", f=state.f, h=state.h, w=state.w, iteration=state.iteration)


def _load_state(path, model):
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read state: {exc}") from exc
    alg = str(data["alg"])
    if alg == "imp":
        return alg, imp_mod.MessageState(data["y"], data["x"], int(data["iteration"]))
    return alg, em_mod.EmState(data["f"], data["h"], data["w"], model.ratings, int(data["iteration"]))


def _train(alg, model, obs, *, tol, max_iters, refits=0, beliefs=(None, None), form="em",
           query_pairs=None):
    """Returns ``(learned model, state, posteriors, trace header, trace rows)``."""
    if alg == "imp":
        res = imp_mod.imp_run(model, obs, max_iters, tol, query_pairs=query_pairs, refits=refits)
        trace = [(i + 1, c) for i, c in enumerate(res.report.trace)]
        return res.model, res.state, res.posteriors, ("iteration", "max_change"), trace
    if alg == "em":
        res = em_mod.em_run(model, obs, max_iters, tol, user_beliefs=beliefs[0],
                            movie_beliefs=beliefs[1], form=form, query_pairs=query_pairs)
        trace = list(enumerate(res.trace))
        return em_mod.em_model(res.state, model), res.state, res.posteriors, ("iteration", "nll"), trace
    raise ParameterError(f"unknown algorithm {alg!r}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args):
    out = _out_dir(args.out)
    obs, user_ids, movie_ids = ingest_file(args.path, _alphabet(args.ratings))
    write_dataset(obs, out / "data.csv")
    write_id_map(user_ids, out / "user_ids.csv")
    write_id_map(movie_ids, out / "movie_ids.csv")
    print(f"{obs.size} triples, {obs.n_users} users, {obs.n_movies} movies -> {out}")
    return 0


def cmd_sample(args):
    model = _load_source_model(args)
    obs, truth = sample_synthetic(model, args.users, args.movies, density=args.density, seed=args.seed)
    out = _out_dir(args.out)
    write_dataset(obs, out / "data.csv")
    _write_rows(out / "user_groups.csv", ("user", "group"), enumerate(truth.user_groups.tolist()))
    _write_rows(out / "movie_groups.csv", ("movie", "group"), enumerate(truth.movie_groups.tolist()))
    print(f"{obs.size} triples -> {out / 'data.csv'}")
    return 0


def cmd_init(args):
    obs = read_dataset(args.data, _alphabet(args.ratings), args.users, args.movies)
    out = _out_dir(args.out)
    g_v = args.groups_v or args.groups
    if args.method == "uniform":
        model = GroupModel.uniform(args.groups, g_v, obs.alphabet)
        save_model(model, out / "model.json")
        print(f"uniform model -> {out / 'model.json'}")
        return 0
    res = vdvq_model(obs, args.groups, g_v, args.beta, args.sweeps, args.noise_sd, args.epsilon,
                     seed=args.seed)
    save_model(res.model, out / "model.json")
    np.savez(out / "beliefs.npz", f=res.user_beliefs, h=res.movie_beliefs)
    if res.empty_cells:
        print(f"warning: empty kernel cells set uniform: {res.empty_cells}", file=sys.stderr)
    print(f"vdvq model -> {out / 'model.json'}")
    return 0


def cmd_train(args):
    model = load_model(args.model)
    obs = read_dataset(args.data, model.ratings, args.users, args.movies)
    beliefs = (None, None)
    if args.beliefs:
        b = np.load(args.beliefs)
        beliefs = (b["f"], b["h"])
    tol = args.tol if args.tol is not None else (imp_mod.DEFAULT_TOL if args.alg == "imp" else em_mod.DEFAULT_TOL)
    iters = args.max_iters or (imp_mod.DEFAULT_MAX_ITERS if args.alg == "imp" else em_mod.DEFAULT_MAX_ITERS)
    learned, state, post, header, trace = _train(args.alg, model, obs, tol=tol, max_iters=iters,
                                                 refits=args.refits, beliefs=beliefs, form=args.form)
    out = _out_dir(args.out)
    save_model(learned, out / "model.json")
    _save_state(out / "state.npz", args.alg, state)
    _write_rows(out / "trace.csv", header, trace)
    _write_posteriors(out / "user_posteriors.csv", post.users, "user")
    _write_posteriors(out / "movie_posteriors.csv", post.movies, "movie")
    print(f"{args.alg}: {len(trace)} trace rows -> {out}")
    return 0


def cmd_predict(args):
    model = load_model(args.model)
    obs = read_dataset(args.data, model.ratings, args.users, args.movies)
    alg, state = _load_state(args.state, model)
    pairs = _read_pairs(args.pairs, obs.n_users, obs.n_movies)
    if alg == "imp":
        post = imp_mod.imp_posteriors(state, model, obs, pairs)
        w = model.w
    else:
        post = em_mod.em_posteriors(state, obs, pairs)
        w = state.w
    pred = ev._predict(args.estimator, post, w, model.ratings, pairs)
    out = Path(args.out) if args.out else _out_dir(None) / "predictions.csv"
    _write_rows(out, ("user", "movie", "prediction"),
                ((int(n), int(m), float(v)) for (n, m), v in zip(pred.pairs, pred.values)))
    print(f"{len(pred)} predictions -> {out}")
    return 0


def cmd_bound(args):
    rows = bound_mod.bound_grid(_num_list(args.g_u, int), _num_list(args.g_v, int),
                                _num_list(args.users, int), _num_list(args.movies, int),
                                _num_list(args.obs, int), _num_list(args.delta, float))
    if args.out:
        bound_mod.write_bound_csv(rows, args.out)
    if len(rows) == 1:
        print(repr(rows[0][1]))
    else:
        print(f"{len(rows)} bound values" + (f" -> {args.out}" if args.out else ""))
    return 0


def cmd_tree(args):
    tc = de_mod.tree_condition(args.users, args.movies, args.d_max, args.depth, args.delta)
    print(f"lhs={tc.lhs!r} holds={tc.holds} beta={tc.beta!r}")
    return 0


def _load_degrees(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return de_mod.GraphDegrees(de_mod.DegreeDistribution.from_dict(data["user"]),
                                   de_mod.DegreeDistribution.from_dict(data["movie"]))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FgcfError):
            raise
        raise DataError(f"{path}: bad degree file: {exc}") from exc


def cmd_de(args):
    model = load_model(args.model)
    if args.degrees:
        degrees = _load_degrees(args.degrees)
    elif args.data:
        degrees = de_mod.GraphDegrees.from_observations(read_dataset(args.data, model.ratings))
    else:
        raise ParameterError("need --degrees or --data")
    infer = load_model(args.inference_model) if args.inference_model else None
    res = de_mod.de_run(model, degrees, args.iters, args.pop, args.seed, infer, args.literal)
    out = Path(args.out) if args.out else _out_dir(None) / "de.csv"
    de_mod.write_de_csv(res, out)
    last = [r for r in res.rows if r[0] == args.iters and r[1] == "user" and r[2] == "node"][0]
    print(f"iteration {args.iters}: mean true-group belief {last[3]:.6f} (se {last[4]:.2g}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# sweeps and reproducible runs

SWEEP_KEYS = {f.name for f in fields(ev.SweepConfig)}
RUN_KEYS = {"mode", "seed", "data", "model", "preset", "n_users", "n_movies", "ratings", "alg",
            "density"} | (SWEEP_KEYS - {"master_seed"})
TUPLE_KEYS = ("algorithms", "estimators", "densities", "seeds")


def _sweep_config(cfg):
    kw = {k: (tuple(v) if k in TUPLE_KEYS else v) for k, v in cfg.items() if k in SWEEP_KEYS}
    kw["master_seed"] = int(cfg.get("seed", 0))
    try:
        return ev.SweepConfig(**kw).check()
    except TypeError as exc:
        raise ParameterError(str(exc)) from exc


def _source(cfg):
    alphabet = tuple(cfg.get("ratings", DEFAULT_RATINGS))
    if cfg.get("data"):
        return read_dataset(cfg["data"], alphabet, cfg.get("n_users"), cfg.get("n_movies")), None
    if cfg.get("preset"):
        if cfg["preset"] != "reference":
            raise ParameterError(f"unknown preset {cfg['preset']!r}")
        model = ev.reference_model()
    elif cfg.get("model"):
        model = load_model(cfg["model"])
    else:
        raise ParameterError("config needs one of data, model or preset")
    if "n_users" not in cfg or "n_movies" not in cfg:
        raise ParameterError("synthetic runs need n_users and n_movies")
    return ev.SyntheticSource(model, int(cfg["n_users"]), int(cfg["n_movies"])), model


def run_sweep(cfg, out, threads=1):
    source, model = _source(cfg)
    config = _sweep_config(cfg)
    result = ev.cold_start_sweep(source, config, threads=threads)
    ev.write_sweep_csv(result, out / "sweep.csv")
    ev.write_pivot_csv(result, out / "pivot.csv")
    ev.write_cells_csv(result, out / "cells.csv")
    files = ["sweep.csv", "pivot.csv", "cells.csv"]
    if model is not None:
        save_model(model, out / "model.json")
        files.append("model.json")
    return files


def run_train(cfg, out):
    """Train one learner on a validation split and write model, traces and predictions."""
    source, _ = _source(cfg)
    config = _sweep_config(cfg)
    key = (config.master_seed, 0)
    if isinstance(source, ev.SyntheticSource):
        if "density" not in cfg:
            raise ParameterError("synthetic train runs need density")
        data, _ = source.draw(key, float(cfg["density"]))
    else:
        data = source
    train, validation = ev.hide_validation(data, config.validation, key)
    model, f0, h0 = ev._init_model(config, train, key)
    alg = cfg.get("alg", "imp")
    is_imp = alg == "imp"
    pairs = validation.pairs()
    learned, _, post, header, trace = _train(
        alg, model, train, tol=config.imp_tol if is_imp else config.em_tol,
        max_iters=config.imp_max_iters if is_imp else config.em_max_iters,
        refits=config.imp_refits, beliefs=(f0, h0), form=config.em_form, query_pairs=pairs)
    save_model(learned, out / "model.json")
    _write_rows(out / "trace.csv", header, trace)
    pred = ev.predict_r1(post, pairs)
    _write_rows(out / "predictions.csv", ("user", "movie", "rating", "prediction"),
                ((int(n), int(m), int(r), float(v))
                 for (n, m, r), v in zip(validation.triples(), pred.values)))
    _write_posteriors(out / "user_posteriors.csv", post.users, "user")
    _write_posteriors(out / "movie_posteriors.csv", post.movies, "movie")
    score = ev.rmse(pred, validation)
    _write_rows(out / "metrics.csv", ("alg", "train_size", "validation_size", "rmse"),
                [(alg, train.size, validation.size, score)])
    return ["model.json", "trace.csv", "predictions.csv", "user_posteriors.csv",
            "movie_posteriors.csv", "metrics.csv"]


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path):
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise ParameterError(f"{path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParameterError(f"{path}: {exc}") from exc
    base = Path(path).resolve().parent
    for key in ("data", "model"):
        if cfg.get(key):
            cfg[key] = str((base / cfg[key]).resolve())
    return cfg


def parse_override(text):
    """``key=value`` with a TOML value; a bare word is read as a string."""
    if "=" not in text:
        raise ParameterError(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    key = key.strip()
    try:
        parsed = tomllib.loads(f"v = {value.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value.strip()
    return key, parsed


def check_run_config(cfg):
    unknown = set(cfg) - RUN_KEYS
    if unknown:
        raise ParameterError(f"unknown config keys {sorted(unknown)}")
    if cfg.get("mode", "sweep") not in ("sweep", "train"):
        raise ParameterError(f"unknown mode {cfg.get('mode')!r}")
    for key in ("data", "model"):
        if cfg.get(key) and not Path(cfg[key]).exists():
            raise DataError(f"{key} file {cfg[key]} does not exist")
    return cfg


def execute(cfg, out, threads=1):
    """Run a resolved config into ``out`` and write its manifest."""
    check_run_config(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = run_sweep(cfg, out, threads) if cfg.get("mode", "sweep") == "sweep" else run_train(cfg, out)
    inputs = {cfg[k]: _sha256(cfg[k]) for k in ("data", "model") if cfg.get(k)}
    manifest = dict(
        config=cfg, seed=int(cfg.get("seed", 0)), threads=threads,
        versions=dict(fgcf=__version__, numpy=np.__version__, python=platform.python_version()),
        inputs=inputs, outputs={name: _sha256(out / name) for name in files})
    with open(out / MANIFEST, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def cmd_run(args):
    cfg = load_config(args.config)
    for text in args.set or ():
        k, v = parse_override(text)
        cfg[k] = v
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = _out_dir(args.out)
    manifest = execute(cfg, out, args.threads)
    print(f"{len(manifest['outputs'])} outputs -> {out}")
    return 0


def cmd_sweep(args):
    cfg = {"mode": "sweep", "seed": args.seed, "densities": _num_list(args.densities),
           "seeds": _seed_list(args.seeds), "algorithms": args.algs.split(","),
           "estimators": args.estimators.split(","), "g_u": args.groups, "g_v": args.groups_v or args.groups,
           "validation": args.validation, "imp_refits": args.refits}
    if args.data:
        cfg["data"] = str(Path(args.data).resolve())
        cfg["ratings"] = list(_alphabet(args.ratings))
    else:
        if args.model:
            cfg["model"] = str(Path(args.model).resolve())
        else:
            cfg["preset"] = args.preset or "reference"
        cfg["n_users"], cfg["n_movies"] = args.users, args.movies
    if args.em_max_iters:
        cfg["em_max_iters"] = args.em_max_iters
    if args.em_tol:
        cfg["em_tol"] = args.em_tol
    out = _out_dir(args.out)
    execute(cfg, out, args.threads)
    print(f"sweep -> {out}")
    return 0


def cmd_replay(args):
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    out = _out_dir(args.out)
    threads = args.threads if args.threads is not None else manifest.get("threads", 1)
    for path, digest in manifest.get("inputs", {}).items():
        if not Path(path).exists() or _sha256(path) != digest:
            raise DataError(f"input {path} is missing or changed since the recorded run")
    new = execute(manifest["config"], out, threads)
    diffs = [k for k, v in manifest["outputs"].items() if new["outputs"].get(k) != v]
    if diffs:
        print("outputs differ: " + ", ".join(diffs))
        return 1
    print(f"identical: {len(manifest['outputs'])} outputs")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    p = argparse.ArgumentParser(prog="fgcf", description="Factor-graph collaborative filtering.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def dims(sp):
        sp.add_argument("--users", type=int, default=None, help="user count (default: max index + 1)")
        sp.add_argument("--movies", type=int, default=None)

    s = sub.add_parser("ingest", help="compact raw triples to dense indices")
    s.add_argument("path")
    s.add_argument("--ratings", help="comma-separated alphabet (default 1..5)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("sample", help="draw a synthetic dataset from a model")
    s.add_argument("--model")
    s.add_argument("--preset", choices=["reference"])
    s.add_argument("--users", type=int, required=True)
    s.add_argument("--movies", type=int, required=True)
    s.add_argument("--density", type=float, required=True, help="average observations per user")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("init", help="build an initial model (VDVQ or uniform)")
    s.add_argument("--data", required=True)
    s.add_argument("--groups", type=int, required=True)
    s.add_argument("--groups-v", type=int, default=None, help="movie groups (default: --groups)")
    s.add_argument("--method", choices=["vdvq", "uniform"], default="vdvq")
    s.add_argument("--beta", type=float, default=DEFAULT_BETA)
    s.add_argument("--sweeps", type=int, default=DEFAULT_SWEEPS)
    s.add_argument("--noise-sd", type=float, default=DEFAULT_NOISE_SD)
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--ratings")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    dims(s)
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("train", help="run IMP or EM")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--alg", choices=["imp", "em"], default="imp")
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--max-iters", type=int, default=None)
    s.add_argument("--refits", type=int, default=0, help="IMP kernel refit rounds")
    s.add_argument("--beliefs", help="initial EM beliefs (npz from init)")
    s.add_argument("--form", choices=list(em_mod.FORMS), default="em")
    s.add_argument("--out")
    dims(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict ratings from a trained state")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--state", required=True)
    s.add_argument("--pairs", required=True, help="CSV with header user,movie[,...]")
    s.add_argument("--estimator", choices=list(ev.ESTIMATORS), default="r1")
    s.add_argument("--out")
    dims(s)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("bound", help="evaluate the generalization bound")
    for name in ("--g-u", "--g-v", "--users", "--movies", "--obs"):
        s.add_argument(name, required=True, help="value or comma-separated list")
    s.add_argument("--delta", default="0.05")
    s.add_argument("--out", help="CSV for the whole grid")
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("tree", help="check the local tree-likeness condition")
    s.add_argument("--users", type=int, required=True)
    s.add_argument("--movies", type=int, required=True)
    s.add_argument("--d-max", type=int, required=True)
    s.add_argument("--depth", type=int, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.set_defaults(func=cmd_tree)

    s = sub.add_parser("de", help="density evolution by population dynamics")
    s.add_argument("--model", required=True)
    s.add_argument("--degrees", help='JSON {"user": {deg: prob}, "movie": {...}}')
    s.add_argument("--data", help="take the degree laws from a dataset instead")
    s.add_argument("--inference-model", help="run inference with a different model")
    s.add_argument("--iters", type=int, default=5)
    s.add_argument("--pop", type=int, default=de_mod.DEFAULT_POPULATION)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--literal", action="store_true", help="combine d incoming messages, not d-1")
    s.add_argument("--out")
    s.set_defaults(func=cmd_de)

    s = sub.add_parser("sweep", help="cold-start RMSE sweep")
    s.add_argument("--data")
    s.add_argument("--model")
    s.add_argument("--preset", choices=["reference"])
    s.add_argument("--users", type=int, default=2000)
    s.add_argument("--movies", type=int, default=2000)
    s.add_argument("--ratings")
    s.add_argument("--groups", type=int, default=4)
    s.add_argument("--groups-v", type=int, default=None)
    s.add_argument("--densities", default="1,3,5,10,20,30")
    s.add_argument("--seeds", default="0-9")
    s.add_argument("--algs", default="baseline,imp,em",
                   help="comma list from baseline,imp,em,known-groups (known-groups needs a model)")
    s.add_argument("--estimators", default="r1")
    s.add_argument("--validation", type=int, default=ev.VALIDATION_SIZE)
    s.add_argument("--refits", type=int, default=ev.SweepConfig.imp_refits)
    s.add_argument("--em-max-iters", type=int, default=None)
    s.add_argument("--em-tol", type=float, default=None)
    s.add_argument("--seed", type=int, default=0, help="master seed")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("run", help="run a TOML experiment config and write a manifest")
    s.add_argument("config")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("replay", help="re-run a manifest and compare output hashes")
    s.add_argument("manifest")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except FgcfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
