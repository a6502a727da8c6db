import hashlib
import json
import statistics
import time

from os.path import abspath, dirname, join

import numpy as np

from .exceptions import ResourceError


DEFAULT_MEMORY_BUDGET = 2 * 1024 ** 3


def rng_stream(*keys):
    """
    Returns a counter-based generator keyed by the given non-negative
    integers.

    The Philox bit generator is keyed through `SeedSequence`, so streams are
    identical across platforms and independent across key tuples. Callers
    derive per-entry streams from `(seed, k, m, trial)` and per-node streams
    from `(seed, node_id)`.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(keys))))


def pair_stream(seed, k, m, trial=0):
    """Stream for the unordered index pair (k, m)"""
    lo, hi = (k, m) if k <= m else (m, k)
    return rng_stream(seed, lo, hi, trial)


def check_memory(nbytes, budget, what):
    """Raise a ResourceError before allocating `nbytes` over `budget`"""
    if budget is not None and nbytes > budget:
        raise ResourceError(
            f"{what} needs {nbytes} bytes which exceeds the memory budget of "
            f"{budget} bytes. Raise `memory_budget` or reduce the problem size."
        )


def digest_arrays(*arrays):
    """Hex digest over the raw bytes (and shapes) of the given arrays"""
    h = hashlib.sha256()
    for array in arrays:
        array = np.ascontiguousarray(array)
        h.update(json.dumps([list(array.shape), array.dtype.str]).encode("ascii"))
        h.update(array.tobytes())
    return h.hexdigest()


def median_time(func, repeats=5):
    """
    Runs `func` `repeats` times and returns `(median_seconds, last_result)`.
    """
    timings = []
    result = None
    for _ in range(max(1, repeats)):
        start = time.perf_counter()
        result = func()
        timings.append(time.perf_counter() - start)
    return statistics.median(timings), result


def loglog_slope(xs, ys):
    """Least-squares slope of log(ys) against log(xs)"""
    xs = np.log(np.asarray(xs, dtype=float))
    ys = np.log(np.asarray(ys, dtype=float))
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def parse_number_list(text, cast=int):
    """Parses `"100,1000,10000"` into a tuple of numbers"""
    if isinstance(text, (list, tuple)):
        return tuple(cast(x) for x in text)
    return tuple(cast(float(x)) if cast is int else cast(x) for x in str(text).split(",") if x.strip())


def load_sampledata_json(filename: str) -> dict:
    with open(sampledata_path(filename)) as fh:
        return json.load(fh)


def sampledata_path(filename: str) -> str:
    return join(sampledata_dir(), filename)


def sampledata_dir() -> str:
    return abspath(join(dirname(__file__), "sampledata", "_data"))


def jsonable(value):
    """numpy scalars and arrays to JSON-compatible Python values; NaN becomes null"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        return jsonable(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value
