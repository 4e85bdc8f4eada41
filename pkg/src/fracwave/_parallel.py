"""Seed-parallel map with results returned in input order."""
from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor


def resolve_threads(threads=None):
    if threads is None:
        threads = int(os.environ.get("FRACWAVE_THREADS", "1") or 1)
    return max(1, int(threads))


def map_seeds(fn, jobs, threads=1):
    """``[fn(j) for j in jobs]`` computed by up to ``threads`` worker processes.

    Each job is computed entirely inside one process, so the values do not depend
    on how jobs are distributed.
    """
    jobs = list(jobs)
    threads = resolve_threads(threads)
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs)), mp_context=ctx) as ex:
        return list(ex.map(fn, jobs, chunksize=1))
