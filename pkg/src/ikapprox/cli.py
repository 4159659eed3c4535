"""Command line interface.

Subcommands: ``gen-data``, ``preprocess``, ``fit``, ``eval`` and ``sweep``.
Machine-readable results go to stdout (one JSON line) or to files; logs go to
stderr. Exit codes: 0 success, 1 I/O or runtime failure, 2 bad usage.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .dataio import (
    generate_gaussian_mixture,
    generate_synthetic_images,
    random_mixture_components,
    read_feature_map,
    read_image_set,
    read_patches,
    write_feature_map,
    write_image_set,
    write_patches,
)
from .estimators import IKA, MAX_SAMPLE_SIZE, Nystrom, PCAWhitening
from .evaluation import DEFAULT_PAIR_COUNT, compare_methods, empirical_error, mean_reduction, write_csv
from .exceptions import FormatError
from .kernels import GaussianKernel
from .preprocess import (
    global_contrast_normalize_images,
    percentile_sigma2,
    sample_patches,
    unit_normalize_rows,
)
from .rng import RNG_ALGORITHM, stream

log = logging.getLogger("ikapprox")

PERCENTILE_RULE = "nearest-rank: ceil(q/100 * N)-th smallest of squared pair distances"
SIGMA2_STAGE = "computed on the data fed to the kernel (after GCN, whitening and unit normalization)"


class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time."""

    def __init__(self):
        super().__init__()
        self.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _configure_logging(verbose):
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    if not any(isinstance(h, _StderrHandler) for h in log.handlers):
        log.addHandler(_StderrHandler())


class UsageError(Exception):
    """Bad flag values or config contents; exit code 2."""


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _seed_stream_summary(seed):
    return {"seed": seed, "rng": RNG_ALGORITHM}


# --- gen-data ---------------------------------------------------------------

def cmd_gen_data(args):
    if args.kind == "mixture":
        if args.count is None or args.dim is None:
            raise UsageError("--kind mixture needs --count and --dim")
        comps = random_mixture_components(args.components, args.dim, args.seed,
                                          spread=args.spread, scale=args.scale)
        X = generate_gaussian_mixture(comps, args.count, args.seed)
        write_patches(args.out, X)
        _emit({"kind": "mixture", "out": args.out, "rows": X.shape[0], "cols": X.shape[1],
               **_seed_stream_summary(args.seed)})
    else:
        if args.count is None:
            raise UsageError("--kind images needs --count")
        images = generate_synthetic_images(args.count, args.h, args.w, args.c, args.seed)
        write_image_set(args.out, images)
        _emit({"kind": "images", "out": args.out, "count": args.count, "h": args.h,
               "w": args.w, "c": args.c, **_seed_stream_summary(args.seed)})


# --- preprocess -------------------------------------------------------------

def cmd_preprocess(args):
    images = read_image_set(args.images)
    if args.patch > min(images.shape[1:3]):
        raise UsageError(f"--patch {args.patch} does not fit in {images.shape[1]}x{images.shape[2]} images")
    normalized = global_contrast_normalize_images(images)
    patches = sample_patches(normalized, (args.patch, args.patch), args.count, args.seed)
    whitener = PCAWhitening(epsilon=args.epsilon).fit(patches)
    white = whitener.transform(patches)
    out, zero_rows = unit_normalize_rows(white)
    if zero_rows:
        log.warning("%d of %d patches are zero after preprocessing (constant image regions?)",
                    zero_rows, out.shape[0])
    write_patches(args.out, out)
    with open(args.out + ".whitening.json", "w") as fh:
        json.dump({"mean": whitener.mean_.tolist(), "projection": whitener.projection_.tolist(),
                   "eigenvalues": whitener.eigenvalues_.tolist(), "epsilon": whitener.epsilon_},
                  fh)
    sigma2 = None
    if out.shape[0] >= 2:
        sigma2 = percentile_sigma2(out, args.percentile, args.sigma_pairs, args.seed)
    meta = {"out": args.out, "rows": out.shape[0], "cols": out.shape[1], "zero_rows": zero_rows,
            "epsilon_absolute": whitener.epsilon_, "sigma2_percentile": args.percentile,
            "sigma2": sigma2, "sigma2_stage": SIGMA2_STAGE, "percentile_rule": PERCENTILE_RULE,
            **_seed_stream_summary(args.seed)}
    with open(args.out + ".json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
    _emit(meta)


# --- fit --------------------------------------------------------------------

def cmd_fit(args):
    if args.m > args.n:
        raise UsageError(f"--m {args.m} exceeds --n {args.n}")
    if args.sample_size is not None and args.sample_size > MAX_SAMPLE_SIZE:
        raise UsageError(f"--sample-size is capped at {MAX_SAMPLE_SIZE} (dense Gram matrix)")
    X = read_patches(args.patches)
    if args.n > X.shape[0]:
        raise UsageError(f"--n {args.n} exceeds the {X.shape[0]} available patches")
    common = dict(sigma2=args.sigma2, n_filters=args.n, n_components=args.m,
                  filters=args.filters, percentile=args.percentile,
                  sigma2_pairs=args.sigma_pairs, kmeans_batch=args.kmeans_batch,
                  kmeans_iters=args.kmeans_iters, random_state=args.seed)
    if args.method == "ika":
        S = args.sample_size if args.sample_size is not None else min(X.shape[0], MAX_SAMPLE_SIZE)
        if S > X.shape[0]:
            raise UsageError(f"--sample-size {S} exceeds the {X.shape[0]} available patches")
        est = IKA(sample_size=S, **common)
    else:
        if args.sample_size is not None:
            log.warning("--sample-size is ignored by the Nystrom method (it uses only the landmarks)")
        S = None
        est = Nystrom(**common)
    start = time.perf_counter()
    est.fit(X)
    log.info("fit took %.3f s", time.perf_counter() - start)
    write_feature_map(args.out, est.feature_map_)
    _emit({"method": args.method, "out": args.out, "n": args.n, "m": est.n_components_,
           "S": S, "filters": args.filters, "sigma2": est.kernel_.sigma2,
           "eigenvalues_head": est.eigenvalues_[:5].tolist(), **_seed_stream_summary(args.seed)})


# --- eval -------------------------------------------------------------------

def cmd_eval(args):
    fm = read_feature_map(args.model)
    if fm.kernel is None:
        raise UsageError("model file does not record the approximated kernel")
    X = read_patches(args.patches)
    if X.shape[1] != fm.n_features:
        raise UsageError(f"patches have {X.shape[1]} features, model expects {fm.n_features}")
    est = empirical_error(fm.kernel, fm, X, args.pairs, args.seed)
    _emit({"mean_sq_error": est.mean_sq_error, "rms_error": est.rms_error,
           "std_error": est.std_error, "pair_count": est.pair_count})


# --- sweep ------------------------------------------------------------------

def _ints(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ValueError("empty list")
    return out


def _methods(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in items if t not in ("ika", "nystrom")]
    if bad or not items:
        raise ValueError(f"unknown methods {bad}")
    return items


def _filter_source(text):
    if text not in ("random", "kmeans"):
        raise ValueError("expected random or kmeans")
    return text


def _optional_float(text):
    return None if text.lower() in ("", "none", "auto") else float(text)


SWEEP_KEYS = {
    "patches": (str, None),
    "out": (str, None),
    "methods": (_methods, ["ika", "nystrom"]),
    "n": (int, None),
    "m_list": (_ints, None),
    "sample_sizes": (_ints, None),
    "seeds": (_ints, [0]),
    "filter_source": (_filter_source, "random"),
    "pairs": (int, DEFAULT_PAIR_COUNT),
    "master_seed": (int, 0),
    "sigma2": (_optional_float, None),
    "percentile": (float, 10.0),
    "sigma_pairs": (int, 100_000),
    "test_fraction": (float, 0.2),
    "kmeans_batch": (int, 1000),
    "kmeans_iters": (int, 100),
}
REQUIRED_SWEEP_KEYS = ("patches", "n", "m_list", "sample_sizes")


def parse_sweep_config(text):
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SWEEP_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        if key in raw:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        raw[key] = value
    config = {}
    for key, (parse, default) in SWEEP_KEYS.items():
        if key in raw:
            try:
                config[key] = parse(raw[key])
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: bad value {raw[key]!r} ({exc})") from None
        else:
            config[key] = default
    for key in REQUIRED_SWEEP_KEYS:
        if config[key] is None:
            raise UsageError(f"config key {key!r} is required")
    if not 0 < config["test_fraction"] < 1:
        raise UsageError("config key 'test_fraction' must be in (0, 1)")
    return config


def split_train_test(X, test_fraction, seed):
    """Seeded split; both parts keep the original row order."""
    perm = stream(seed, "train-test-split").permutation(X.shape[0])
    n_test = int(round(test_fraction * X.shape[0]))
    return X[np.sort(perm[n_test:])], X[np.sort(perm[:n_test])]


def cmd_sweep(args):
    with open(args.config, "rb") as fh:
        raw = fh.read()
    config = parse_sweep_config(raw.decode("utf-8"))
    base = os.path.dirname(os.path.abspath(args.config))
    out = args.out or config["out"]
    if out is None:
        raise UsageError("no output path: give --out or the 'out' config key")
    if args.out is None:
        out = os.path.join(base, out)
    if max(config["sample_sizes"]) > MAX_SAMPLE_SIZE:
        raise UsageError(f"sample sizes are capped at {MAX_SAMPLE_SIZE}")
    if max(config["m_list"]) > config["n"]:
        raise UsageError("every m in m_list must be <= n")
    X = read_patches(os.path.join(base, config["patches"]))
    train, test = split_train_test(X, config["test_fraction"], config["master_seed"])
    sigma2 = config["sigma2"]
    if sigma2 is None:
        sigma2 = percentile_sigma2(train, config["percentile"], config["sigma_pairs"],
                                   config["master_seed"])
    kernel = GaussianKernel(sigma2)
    rows = compare_methods(
        kernel, train, test, config["filter_source"], n_filters=config["n"],
        sample_sizes=config["sample_sizes"], m_values=config["m_list"], seeds=config["seeds"],
        methods=config["methods"], pair_count=config["pairs"], record_timing=args.timing,
        threads=args.threads, kmeans_batch=config["kmeans_batch"],
        kmeans_iters=config["kmeans_iters"],
    )
    write_csv(out, rows)
    failed = sum(r.status != "ok" for r in rows)
    if failed:
        log.warning("%d of %d rows failed", failed, len(rows))
    meta = {
        "config_sha256": hashlib.sha256(raw).hexdigest(),
        "rng_algorithm": RNG_ALGORITHM,
        "percentile_rule": PERCENTILE_RULE,
        "sigma2": sigma2,
        "sigma2_source": "config" if config["sigma2"] is not None else
        f"{config['percentile']:g}th percentile on the training split, {SIGMA2_STAGE}",
        "library_version": __version__,
        "n_train": int(train.shape[0]),
        "n_test": int(test.shape[0]),
        "rows": len(rows),
        "failed_rows": failed,
        "mean_reduction": mean_reduction(rows),
        "error_units": "mean_sq_error is E (mean squared kernel error); rms_error is its square root",
    }
    with open(out + ".json", "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
    _emit({"out": out, **meta})


# --- entry point --------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="ikapprox", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=["mixture", "images"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int)
    p.add_argument("--dim", type=int, help="mixture dimension")
    p.add_argument("--components", type=int, default=5)
    p.add_argument("--spread", type=float, default=1.0, help="std of mixture means")
    p.add_argument("--scale", type=float, default=0.5, help="std within each component")
    p.add_argument("--h", type=int, default=32)
    p.add_argument("--w", type=int, default=32)
    p.add_argument("--c", type=int, default=3)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("preprocess", help="GCN, patch sampling, PCA whitening, unit norm")
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch", type=int, default=7)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5,
                   help="whitening regularizer, relative to the mean covariance eigenvalue")
    p.add_argument("--percentile", type=float, default=10.0)
    p.add_argument("--sigma-pairs", type=int, default=100_000)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("fit", help="fit an IKA or Nystrom feature map")
    p.add_argument("--method", choices=["ika", "nystrom"], required=True)
    p.add_argument("--patches", required=True)
    p.add_argument("--filters", choices=["random", "kmeans"], default="random")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--sample-size", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--percentile", type=float, default=10.0)
    p.add_argument("--sigma-pairs", type=int, default=100_000)
    p.add_argument("--kmeans-batch", type=int, default=1000)
    p.add_argument("--kmeans-iters", type=int, default=100)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="estimate the approximation error of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--patches", required=True)
    p.add_argument("--pairs", type=int, default=DEFAULT_PAIR_COUNT)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run an IKA vs Nystrom comparison sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="CSV path (overrides the 'out' config key)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--timing", action="store_true",
                   help="fill fit_seconds (makes the CSV non-reproducible)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    for name in ("n", "m", "count", "threads", "pairs"):
        value = getattr(args, name, None)
        if value is not None and value < (0 if name == "count" else 1):
            parser.error(f"--{name} must be positive")
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, FormatError) as exc:
        log.error("%s", exc)
        return 1
    except (ValueError, np.linalg.LinAlgError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
