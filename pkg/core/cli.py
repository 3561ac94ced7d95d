"""
Command-line interface. Exit codes: 0 on success, 2 when an input or index
file cannot be read and 3 on any other error.
"""
import sys
import json
import click
import logging
import functools
import numpy as np
from dataclasses import dataclass


from config import Config
from .bench import bench as run_bench
from .hybrid import HybridIndex, build_index
from .io import load_attributes, load_dataset, load_vectors
from .multi import TransformChain, build_chain, update_priority
from .range_index import RangeIndex, build_range_index
from .persistence import load_index, save_index
from .exceptions import (
    FusedANNError,
    IndexLoadError,
    InvalidArgumentError,
    ParseError,
)


logger = logging.getLogger(__name__)


@dataclass
class Settings:
    m: int
    epsilon_f: float
    epsilon: float
    delta: float
    nu: float
    alpha: float
    beta: float
    backend: str
    seed: int
    priority: tuple

    @property
    def overrides(self):
        if self.alpha is None and self.beta is None:
            return None
        return (Config.ALPHA if self.alpha is None else self.alpha,
                Config.BETA if self.beta is None else self.beta)

    def backend_params(self):
        if self.backend != "graph":
            return {}
        return {"M": Config.GRAPH_M, "ef_construction": Config.EF_CONSTRUCTION,
                "ef_search": Config.EF_SEARCH, "seed": self.seed}


def handle_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (ParseError, IndexLoadError) as e:
            click.echo("Error: {}".format(e), err=True)
            sys.exit(2)
        except FusedANNError as e:
            click.echo("Error: {}".format(e), err=True)
            sys.exit(3)
    return wrapper


def parse_floats(text):
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise InvalidArgumentError("expected comma separated numbers, got "
                                   "{!r}".format(text))


def parse_priority(text):
    if text is None:
        return None
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise InvalidArgumentError("expected comma separated attribute "
                                   "indices, got {!r}".format(text))


def emit(i, result):
    for row in result:
        click.echo(json.dumps({
            "query": i,
            "id": row.id,
            "s_v": row.content_distance,
            "s_f": row.attribute_distance,
            "score": row.score,
        }))


def read_queries(index, vocabulary, queries, attributes, format):
    """The query tuples of an attribute index."""
    contents = load_vectors(queries, format)
    attrs_list, _ = load_attributes(attributes, embedders=vocabulary,
                                    fit=False)
    if isinstance(index, TransformChain):
        return [(q, [a[i] for a in attrs_list])
                for i, q in enumerate(contents)]
    if len(attrs_list) != 1:
        raise InvalidArgumentError("a single-attribute index needs one "
                                   "attribute per query")
    return list(zip(contents, attrs_list[0]))


@click.group()
@click.option("--m", "m", type=int, default=Config.M, show_default=True,
              help="Dimension of the embedded categorical attributes.")
@click.option("--epsilon-f", type=float, default=Config.EPSILON_F,
              show_default=True, help="Bound on intra-class fused distances.")
@click.option("--epsilon", type=float, default=Config.EPSILON,
              show_default=True, help="Failure probability of the queries.")
@click.option("--delta", type=float, default=Config.DELTA, show_default=True,
              help="Failure probability of the range radii.")
@click.option("--nu", type=float, default=Config.NU, show_default=True,
              help="Angular resolution of the range line index.")
@click.option("--alpha-override", type=float, default=None,
              help="Explicit alpha instead of the computed one.")
@click.option("--beta-override", type=float, default=None,
              help="Explicit beta instead of the computed one.")
@click.option("--backend", type=click.Choice(["flat", "graph"]),
              default=Config.BACKEND, show_default=True)
@click.option("--seed", type=int, default=Config.SEED, show_default=True)
@click.option("--priority", default=None,
              help="Attribute indices from the highest priority, e.g. 2,0,1.")
@click.option("-v", "--verbose", count=True, help="-v info, -vv debug.")
@click.pass_context
@handle_errors
def cli(ctx, m, epsilon_f, epsilon, delta, nu, alpha_override, beta_override,
        backend, seed, priority, verbose):
    """Filtered nearest neighbour search over fused vectors."""
    level = {0: Config.LOG_LEVEL, 1: "INFO"}.get(verbose, "DEBUG")
    logging.basicConfig(level=level,
                        format="%(asctime)s %(name)s %(levelname)s "
                        "%(message)s")
    ctx.obj = Settings(m, epsilon_f, epsilon, delta, nu, alpha_override,
                       beta_override, backend, seed, parse_priority(priority))


@cli.command()
@click.argument("vectors", type=click.Path(exists=True, dir_okay=False))
@click.argument("attributes", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--format", type=click.Choice(["fvecs", "bvecs", "csv"]),
              default=None, help="Vector format, by default the extension.")
@click.option("--range", "range_index", is_flag=True,
              help="Build a range index over a numeric attribute.")
@click.option("-k", type=int, default=10, show_default=True,
              help="Results the range radii are sized for.")
@click.option("--cover", type=float, default=Config.EPS_COVER,
              show_default=True, help="Coverage resolution of range lines.")
@click.option("--max-lines", type=int, default=Config.MAX_LINES,
              show_default=True)
@click.option("--progress/--no-progress", default=True)
@click.pass_obj
@handle_errors
def build(settings, vectors, attributes, output, format, range_index, k,
          cover, max_lines, progress):
    """Build an index from VECTORS and ATTRIBUTES."""
    bundle = load_dataset(vectors, attributes, format, seed=settings.seed,
                          cat_m=settings.m)
    overrides = settings.overrides
    alpha, beta = overrides if overrides else (None, None)
    if range_index:
        if bundle.F != 1 or bundle.embedders:
            raise InvalidArgumentError("range indexes need exactly one "
                                       "numeric attribute")
        index = build_range_index(
            bundle.contents, bundle.attrs_list[0], eps_cover=cover,
            delta=settings.delta, k=k, epsilon_f=settings.epsilon_f,
            alpha=alpha, beta=beta, nu=settings.nu, max_lines=max_lines,
            tau=Config.TAU, kappa=Config.KAPPA, seed=settings.seed,
            progress=progress)
    elif bundle.F == 1:
        index = build_index(
            bundle.contents, bundle.attrs_list[0], settings.epsilon_f,
            settings.backend, settings.backend_params(), alpha, beta,
            progress)
    else:
        index = build_chain(
            bundle.contents, bundle.attrs_list, settings.priority,
            settings.epsilon_f, settings.backend, settings.backend_params(),
            overrides=overrides, progress=progress)
    save_index(index, output, bundle.embedders or None)
    click.echo(str(index))


@cli.command()
@click.argument("index_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("queries", type=click.Path(exists=True, dir_okay=False))
@click.argument("attributes", type=click.Path(exists=True, dir_okay=False))
@click.option("-k", type=int, default=10, show_default=True)
@click.option("--format", type=click.Choice(["fvecs", "bvecs", "csv"]),
              default=None)
@click.option("--approx", is_flag=True,
              help="Let records with other attributes fill the results.")
@click.pass_obj
@handle_errors
def query(settings, index_path, queries, attributes, k, format, approx):
    """Answer the QUERIES with the ATTRIBUTES, one JSON line per result."""
    index, vocabulary = load_index(index_path)
    if not isinstance(index, (HybridIndex, TransformChain)):
        raise InvalidArgumentError("use the range command on a range index")
    for i, (q, f) in enumerate(read_queries(index, vocabulary, queries,
                                            attributes, format)):
        emit(i, index.query(q, f, k, eps=settings.epsilon,
                            attr_approx=approx))


@cli.command("range")
@click.argument("index_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("queries", type=click.Path(exists=True, dir_okay=False))
@click.option("--low", required=True, help="Lower end, e.g. 0.1,0.2.")
@click.option("--high", required=True, help="Upper end, e.g. 0.5,0.9.")
@click.option("-k", type=int, default=10, show_default=True)
@click.option("--format", type=click.Choice(["fvecs", "bvecs", "csv"]),
              default=None)
@click.option("--fallback", is_flag=True,
              help="Scan exhaustively when the index cannot answer.")
@click.pass_obj
@handle_errors
def range_command(settings, index_path, queries, low, high, k, format,
                  fallback):
    """Answer the QUERIES restricted to attributes in [LOW, HIGH]."""
    index, _ = load_index(index_path)
    if not isinstance(index, RangeIndex):
        raise InvalidArgumentError("the index is not a range index")
    l, u = parse_floats(low), parse_floats(high)
    for i, q in enumerate(load_vectors(queries, format)):
        emit(i, index.query(q, l, u, k, eps=settings.epsilon,
                            fallback=fallback))


@cli.command()
@click.argument("index_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("queries", type=click.Path(exists=True, dir_okay=False))
@click.argument("attributes", required=False,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--low", default=None, help="Lower end of range queries.")
@click.option("--high", default=None, help="Upper end of range queries.")
@click.option("-k", type=int, default=10, show_default=True)
@click.option("--format", type=click.Choice(["fvecs", "bvecs", "csv"]),
              default=None)
@click.option("--parallel", is_flag=True)
@click.option("--report", type=click.Path(), default=None,
              help="Write the per-query records as JSON lines.")
@click.option("--figure", type=click.Path(), default=None,
              help="Write the recall histogram as HTML.")
@click.pass_obj
@handle_errors
def bench(settings, index_path, queries, attributes, low, high, k, format,
          parallel, report, figure):
    """Measure recall@k and QPS against an exhaustive scan."""
    index, vocabulary = load_index(index_path)
    if isinstance(index, RangeIndex):
        if low is None or high is None:
            raise InvalidArgumentError("range benchmarks need --low and "
                                       "--high")
        l, u = parse_floats(low), parse_floats(high)
        batch = [(q, l, u) for q in load_vectors(queries, format)]
    else:
        if attributes is None:
            raise InvalidArgumentError("attribute benchmarks need an "
                                       "attribute file")
        batch = read_queries(index, vocabulary, queries, attributes, format)
    result = run_bench(index, batch, k, eps=settings.epsilon,
                       parallel=parallel)
    if report:
        result.to_jsonl(report)
    if figure:
        result.recall_figure().write_html(figure)
    click.echo(result.summary())


@cli.command()
@click.argument("index_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
@handle_errors
def stats(settings, index_path):
    """Print the attribute class statistics of an index."""
    index, _ = load_index(index_path)
    click.echo(str(index))
    if isinstance(index, RangeIndex):
        return
    click.echo(index.stats.to_dataframe().to_string(index=False))


@cli.command("update-priority")
@click.argument("index_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path())
@click.pass_obj
@handle_errors
def update_priority_command(settings, index_path, output):
    """Re-order the attributes of a multi-attribute index (see --priority)."""
    index, vocabulary = load_index(index_path)
    if not isinstance(index, TransformChain):
        raise InvalidArgumentError("the index has no attribute priority")
    if settings.priority is None:
        raise InvalidArgumentError("give the new order with --priority")
    updated = update_priority(index, settings.priority)
    save_index(updated, output, vocabulary)
    click.echo("{} levels recomputed".format(updated.recomputed_levels))
