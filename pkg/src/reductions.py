"""Deterministic reductions and the worker pool.

Workers only ever evaluate element-wise work on contiguous chunks; every sum is
taken afterwards on the concatenated array with a correctly rounded reduction,
so results do not depend on how many workers produced the chunks.
"""

import logging
import math
from multiprocessing import Pool
from typing import Callable, List, Sequence

import numpy as np

_WORKERS: int = 1


def configure_workers(workers: int) -> None:
    """Set the process count used by `parallel_map`.

    Args:
        workers (int): Number of worker processes, at least 1.

    Raises:
        ValueError: If `workers` is smaller than 1.
    """
    global _WORKERS
    if workers < 1:
        raise ValueError("The 'workers' parameter must be at least 1.")
    _WORKERS = int(workers)
    logging.info(f"Worker count set to {_WORKERS}")


def get_workers() -> int:
    return _WORKERS


def chunk_ranges(n_items: int, n_chunks: int) -> List[slice]:
    """Split `range(n_items)` into at most `n_chunks` contiguous slices."""
    n_chunks = max(1, min(n_chunks, n_items))
    bounds = np.linspace(0, n_items, n_chunks + 1).astype(int)
    return [slice(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]


def parallel_map(
    func: Callable[[np.ndarray], np.ndarray], items: np.ndarray, min_chunk: int = 4096
) -> np.ndarray:
    """Apply an element-wise array function over `items` in contiguous chunks.

    The output is the in-order concatenation of the chunk results, which is
    identical to `func(items)` for element-wise functions whatever the worker
    count.

    Args:
        func (Callable): Picklable function mapping an array of rows to an
            array with the same leading length.
        items (np.ndarray): Input rows.
        min_chunk (int, optional): Below this many rows per worker the call
            runs in-process. Defaults to 4096.

    Returns:
        np.ndarray: Concatenated results.
    """
    n_items = len(items)
    workers = get_workers()
    if workers == 1 or n_items < 2 * min_chunk:
        return func(items)

    slices = chunk_ranges(n_items, min(workers, n_items // min_chunk))
    with Pool(workers) as pool:
        parts = pool.map(func, [items[s] for s in slices], 1)
    return np.concatenate(parts, axis=0)


def exact_sum(values: Sequence[float]) -> float:
    """Correctly rounded sum; independent of summation order."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def exact_complex_sum(values: np.ndarray) -> complex:
    values = np.asarray(values, dtype=complex).ravel()
    return complex(exact_sum(values.real), exact_sum(values.imag))


def log_sum_exp(values: Sequence[float]) -> float:
    """Stable log(sum(exp(values))) with a correctly rounded inner sum."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("log_sum_exp needs at least one value.")
    shift = float(np.max(values))
    return shift + math.log(exact_sum(np.exp(values - shift)))


def weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    return exact_sum(np.asarray(weights) * np.asarray(values))
