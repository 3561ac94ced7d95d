"""
Benchmark harness. Every query is answered by the index and by an exhaustive
filtered scan, and the report keeps the recall@k of each query, the candidate
counts and the throughput.
"""
import json
import time
import logging
import numpy as np
import plotly.express as px
from tqdm import tqdm
from pandas import DataFrame
from itertools import repeat
from dataclasses import dataclass, field
from multiprocessing import Pool, cpu_count


from .hybrid import HybridIndex, check_k
from .multi import TransformChain
from .range_index import RangeIndex, exhaustive_range_scan
from .exceptions import InvalidArgumentError


logger = logging.getLogger(__name__)


def recall_at_k(returned, truth, k):
    """
    Fraction of the true top-k found in the returned top-k. When fewer than
    k records satisfy the filter the denominator is their number, and an
    empty ground truth gives 1.

    :rtype: float
    """
    truth = set(list(truth)[:k])
    if not truth:
        return 1.0
    return len(truth & set(list(returned)[:k])) / len(truth)


def filtered_scan(contents, attrs_list, q, query_attrs, k):
    """
    The exact answer of an attribute query: the k records nearest to q among
    those whose attributes all equal the query ones, ties broken by id.
    """
    match = np.ones(contents.shape[0], dtype=bool)
    for attrs, f in zip(attrs_list, query_attrs):
        match &= np.all(attrs == np.asarray(f, dtype=np.float64), axis=1)
    ids = np.flatnonzero(match)
    dist = np.linalg.norm(contents[ids] - np.asarray(q, dtype=np.float64),
                          axis=1)
    return ids[np.lexsort((ids, dist))[:k]]


def oracle(index, query, k):
    """The exhaustive answer of ``query`` over the records of ``index``."""
    if isinstance(index, RangeIndex):
        q, l, u = query
        ids, _ = exhaustive_range_scan(index.contents, index.attrs,
                                       np.asarray(q, dtype=np.float64),
                                       np.asarray(l, dtype=np.float64),
                                       np.asarray(u, dtype=np.float64), k)
        return ids
    if isinstance(index, TransformChain):
        q, query_attrs = query
        return filtered_scan(index.contents, index.attrs_list, q, query_attrs,
                             k)
    q, f = query
    return filtered_scan(index.contents, [index.attrs], q, [f], k)


def _check_query(index, query):
    expected = 3 if isinstance(index, RangeIndex) else 2
    if len(query) != expected:
        raise InvalidArgumentError(
            "{} queries are tuples of {} items, got {}".format(
                type(index).__name__, expected, len(query)))
    if isinstance(index, TransformChain) and len(query[1]) != index.F:
        raise InvalidArgumentError(
            "chain queries need {} attributes".format(index.F))


def run_query(index, query, k, eps):
    """Answer one query, returning the ids, k' and the elapsed seconds."""
    start = time.perf_counter()
    if isinstance(index, RangeIndex):
        result = index.query(*query, k, eps=eps, fallback=True)
    else:
        result = index.query(query[0], query[1], k, eps=eps)
    return result.ids, result.k_prime, time.perf_counter() - start


@dataclass
class BenchReport:
    """
    Outcome of a benchmark.

    :param list recalls: the recall@k of every query.
    :param list k_primes: the candidate count of every query.
    :param list latencies: the seconds spent on every query.
    :param float qps: the number of queries answered per second.
    :param dict config: the settings of the run.

    """

    recalls: list = field(default_factory=list)
    k_primes: list = field(default_factory=list)
    latencies: list = field(default_factory=list)
    qps: float = 0.0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        assert all(0 <= r <= 1 for r in self.recalls)

    def __str__(self):
        return self.summary()

    @property
    def recall(self):
        return float(np.mean(self.recalls)) if self.recalls else 1.0

    def to_dataframe(self):
        return DataFrame({
            "query": np.arange(len(self.recalls)),
            "recall": self.recalls,
            "k_prime": self.k_primes,
            "seconds": self.latencies,
        })

    def to_jsonl(self, path=None):
        """
        One JSON record per query followed by an aggregate record; written
        to ``path`` when given, returned as a string otherwise.
        """
        lines = [
            json.dumps({"query": i, "recall": r, "k_prime": int(kp)})
            for i, (r, kp) in enumerate(zip(self.recalls, self.k_primes))
        ]
        lines.append(json.dumps({
            "aggregate_recall": self.recall,
            "qps": self.qps,
            "config": self.config,
        }, sort_keys=True, default=str))
        text = "\n".join(lines) + "\n"
        if path is None:
            return text
        with open(path, "w") as f:
            f.write(text)

    def summary(self):
        k_primes = np.asarray(self.k_primes) if self.k_primes else np.zeros(1)
        return "{} queries: recall@{} {:.4f}, {:.1f} QPS, k' mean {:.1f} " \
            "max {}".format(len(self.recalls), self.config.get("k", "k"),
                            self.recall, self.qps, k_primes.mean(),
                            int(k_primes.max()))

    def recall_figure(self):
        return px.histogram(self.to_dataframe(), x="recall", nbins=20,
                            title="Recall@{} per query".format(
                                self.config.get("k", "k")))


def bench(index, queries, k, eps=0.05, parallel=False, progress=False):
    """
    Benchmark ``index`` against the exhaustive oracle.

    :param index: a :class:`core.hybrid.HybridIndex`,
    :class:`core.multi.TransformChain` or :class:`core.range_index.RangeIndex`.
    :param list queries: ``(q, f)`` pairs for a hybrid index, ``(q, [f_1,
    ..., f_F])`` pairs for a chain and ``(q, l, u)`` triples for a range
    index.
    :param int k: the number of results.
    :param float eps: the failure probability.
    :param bool parallel: answer the queries on a worker pool.
    :return: a :class:`BenchReport` object.

    """
    if not isinstance(index, (HybridIndex, TransformChain, RangeIndex)):
        raise InvalidArgumentError("cannot benchmark an object of type "
                                   "{}".format(type(index).__name__))
    k = check_k(k)
    for query in queries:
        _check_query(index, query)
    n = len(queries)
    start = time.perf_counter()
    if parallel:
        with Pool(processes=cpu_count()) as pool:
            answers = pool.starmap(
                run_query,
                zip(repeat(index, n), queries, repeat(k, n), repeat(eps, n))
            )
    else:
        answers = [run_query(index, query, k, eps)
                   for query in tqdm(queries, desc="Benchmark", ncols=100,
                                     disable=not progress)]
    elapsed = time.perf_counter() - start
    recalls = [recall_at_k(ids, oracle(index, query, k), k)
               for (ids, _, _), query in zip(answers, queries)]
    report = BenchReport(
        recalls=recalls,
        k_primes=[kp for _, kp, _ in answers],
        latencies=[s for _, _, s in answers],
        qps=n / elapsed if elapsed > 0 else float("inf"),
        config={"k": k, "eps": eps, "index": str(index), "queries": n,
                "parallel": parallel},
    )
    logger.info("%s", report.summary())
    return report
