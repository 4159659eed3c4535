"""Empirical approximation error and IKA-vs-Nystrom comparison sweeps.

The error of a feature map is the mean of ``(K(x, y) - <psi(x), psi(y)>)^2``
over independent pairs drawn from the test set. Every method evaluated for
the same seed sees the same pair stream, which keeps the variance of their
difference small.
"""

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ._validation import check_matrix
from .ika import KernelCenteredBasis, fit_ika
from .nystrom import fit_nystrom
from .preprocess import minibatch_kmeans
from .rng import stream

DEFAULT_PAIR_COUNT = 200_000
METHODS = ("ika", "nystrom")
CSV_COLUMNS = (
    "method", "filter_source", "n", "m", "S", "seed",
    "mean_sq_error", "rms_error", "std_error", "fit_seconds", "status",
)


@dataclass(frozen=True)
class ErrorEstimate:
    mean_sq_error: float
    std_error: float
    pair_count: int

    @property
    def rms_error(self):
        return math.sqrt(self.mean_sq_error)


def sample_pairs(n_points, pair_count, seed):
    """Index pairs drawn with replacement; ``None`` means all ordered pairs.

    Doubling ``pair_count`` under the same seed extends the same sequence.
    """
    if pair_count is None:
        i, j = np.meshgrid(np.arange(n_points), np.arange(n_points), indexing="ij")
        return i.ravel(), j.ravel()
    if pair_count < 2:
        raise ValueError(f"pair_count must be >= 2, got {pair_count}")
    ij = stream(seed, "pair-sampling").integers(0, n_points, size=(int(pair_count), 2))
    return ij[:, 0], ij[:, 1]


def squared_errors(kernel, fm, test, pairs):
    """Per-pair squared errors for precomputed index pairs."""
    i, j = pairs
    psi = fm.transform(test)
    exact = kernel.paired(test[i], test[j])
    approx = np.einsum("ij,ij->i", psi[i], psi[j])
    return (exact - approx) ** 2


def summarize(errors):
    errors = np.asarray(errors)
    count = errors.shape[0]
    std = float(errors.std(ddof=1)) if count > 1 else 0.0
    return ErrorEstimate(float(errors.mean()), std / math.sqrt(count), int(count))


def empirical_error(kernel, fm, test, pair_count=DEFAULT_PAIR_COUNT, seed=0, *, pairs=None):
    """Monte-Carlo estimate of the mean squared kernel approximation error.

    Parameters
    ----------
    kernel : Kernel
    fm : FeatureMap
    test : array-like of shape (N, d)
    pair_count : int or None
        Number of random pairs (``i == j`` allowed); ``None`` enumerates all
        ``N^2`` ordered pairs.
    seed : int
    pairs : (ndarray, ndarray), optional
        Explicit index pairs, overriding ``pair_count`` and ``seed``.
    """
    test = check_matrix(test, "test", n_features=fm.n_features)
    if pairs is None:
        pairs = sample_pairs(test.shape[0], pair_count, seed)
    return summarize(squared_errors(kernel, fm, test, pairs))


@dataclass
class ComparisonRow:
    method: str
    filter_source: str
    n: int
    m: int
    S: int
    seed: int
    mean_sq_error: float
    rms_error: float
    std_error: float
    fit_seconds: float
    status: str = "ok"


def select_filters(train, source, n, seed, *, kmeans_batch=1000, kmeans_iters=100):
    """Pick ``n`` filters from ``train``: ``"random"`` rows or ``"kmeans"`` centers."""
    if source == "random":
        if n > train.shape[0]:
            raise ValueError(f"cannot choose {n} filters from {train.shape[0]} rows")
        idx = stream(seed, "filter-choice").choice(train.shape[0], size=n, replace=False)
        return train[np.sort(idx)]
    if source == "kmeans":
        return minibatch_kmeans(train, n, kmeans_batch, kmeans_iters, seed)
    raise ValueError(f"unknown filter source {source!r}; expected 'random' or 'kmeans'")


def subsample(train, S, seed):
    """First ``S`` rows of a seeded permutation, so samples are nested in ``S``."""
    if S > train.shape[0]:
        raise ValueError(f"sample size S={S} exceeds the {train.shape[0]} training rows")
    perm = stream(seed, "subsample").permutation(train.shape[0])
    return train[np.sort(perm[:S])]


def compare_methods(kernel, train, test, filters, *, sample_sizes, m_values, seeds,
                    methods=METHODS, pair_count=DEFAULT_PAIR_COUNT, n_filters=None,
                    filter_source=None, record_timing=False, threads=1,
                    kmeans_batch=1000, kmeans_iters=100):
    """Fit and evaluate every ``(method, S, m, seed)`` combination.

    Parameters
    ----------
    kernel : Kernel
    train, test : array-like of shape (N, d)
    filters : ndarray of shape (n, d) or {"random", "kmeans"}
        Fixed filters shared by every row, or a rule applied per seed to
        ``train`` (then ``n_filters`` is required).
    sample_sizes, m_values, seeds : sequences
    pair_count : int or None
    record_timing : bool
        Fill ``fit_seconds``; off by default because wall-clock time is the
        one non-reproducible column.
    threads : int
        Seeds run in parallel when > 1; output is identical either way.

    Returns
    -------
    list of ComparisonRow
        Ordered by seed, then S, then m, then method. Rows whose fit failed
        carry ``status`` naming the exception and NaN errors.
    """
    train = check_matrix(train, "train")
    test = check_matrix(test, "test", n_features=train.shape[1])
    methods = tuple(methods)
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
    if isinstance(filters, str):
        if n_filters is None:
            raise ValueError("n_filters is required when filters is a selection rule")
        source = filters
        n = int(n_filters)
    else:
        filters = check_matrix(filters, "filters", n_features=train.shape[1])
        source = filter_source or "given"
        n = filters.shape[0]

    def run_seed(seed):
        rows = []
        try:
            W = (select_filters(train, source, n, seed, kmeans_batch=kmeans_batch,
                                kmeans_iters=kmeans_iters)
                 if isinstance(filters, str) else filters)
        except Exception as exc:
            W = exc
        pairs = sample_pairs(test.shape[0], pair_count, seed)
        nystrom_cache = {}
        for S in sample_sizes:
            for m in m_values:
                for method in methods:
                    rows.append(_run_one(kernel, train, test, W, pairs, method, source,
                                         n, m, S, seed, nystrom_cache, record_timing))
        return rows

    seeds = list(seeds)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_seed = list(pool.map(run_seed, seeds))
    else:
        per_seed = [run_seed(seed) for seed in seeds]
    return [row for rows in per_seed for row in rows]


def _run_one(kernel, train, test, W, pairs, method, source, n, m, S, seed, cache,
             record_timing):
    def row(est, seconds, status="ok"):
        if est is None:
            mse = rms = se = float("nan")
        else:
            mse, rms, se = est.mean_sq_error, est.rms_error, est.std_error
        return ComparisonRow(method, source, n, int(m), int(S), int(seed), mse, rms, se,
                             seconds if record_timing else float("nan"), status)

    if isinstance(W, Exception):
        return row(None, float("nan"), type(W).__name__)
    # Nystrom ignores S, so one fit serves every sample size
    if method == "nystrom" and m in cache:
        est, seconds, status = cache[m]
        return row(est, seconds, status)
    start = time.perf_counter()
    try:
        if method == "ika":
            sample = subsample(train, S, seed)
            fm = fit_ika(kernel, sample, KernelCenteredBasis(kernel, W), m)
        else:
            fm = fit_nystrom(kernel, W, m)
        seconds = time.perf_counter() - start
        est = summarize(squared_errors(kernel, fm, test, pairs))
        status = "ok"
    except Exception as exc:
        est, seconds, status = None, float("nan"), type(exc).__name__
    if method == "nystrom":
        cache[m] = (est, seconds, status)
    return row(est, seconds, status)


def mean_reduction(rows):
    """Mean of ``(E_nystrom - E_ika) / E_nystrom`` over matched configurations.

    Rows are matched on ``(filter_source, n, m, S, seed)``; unmatched or
    failed rows are ignored. Accepts row objects or CSV dicts.
    """
    def get(r, key):
        return r[key] if isinstance(r, dict) else getattr(r, key)

    ika, nys = {}, {}
    for r in rows:
        if get(r, "status") != "ok":
            continue
        key = tuple(str(get(r, k)) for k in ("filter_source", "n", "m", "S", "seed"))
        target = ika if get(r, "method") == "ika" else nys
        target[key] = float(get(r, "mean_sq_error"))
    ratios = [(nys[k] - ika[k]) / nys[k] for k in sorted(ika.keys() & nys.keys()) if nys[k] > 0]
    return float(np.mean(ratios)) if ratios else float("nan")


def _format(value):
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def write_csv(path, rows):
    """Write comparison rows; floats use ``repr`` so values round-trip exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            d = asdict(r)
            writer.writerow([_format(d[c]) for c in CSV_COLUMNS])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
