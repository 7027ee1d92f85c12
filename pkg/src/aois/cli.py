"""Command-line front end. Every subcommand writes versioned CSV.

Exit codes: 2 malformed input file, 3 bad configuration, 4 resource bound exceeded.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from aois.errors import AoisError, BoundExceededError, ParseError
from aois.estimators import ESTIMATORS, estimate_all
from aois.model import BayesianNetwork, Evidence, parse_evidence, parse_network
from aois.oracle import empirical_variance, exact_pe_ao_search, exact_pe_enumeration
from aois.problem import SamplingProblem, build_problem
from aois.proposal import SampleBatch, SampleStream, load_proposal, make_rng
from aois.structure import elimination_order_of, induced_width, parse_pseudo_tree

CSV_HEADER = "# aois-csv v1"
EXIT_PARSE, EXIT_CONFIG, EXIT_BOUND = 2, 3, 4
LN10 = math.log(10.0)


class ConfigError(AoisError):
    pass


@dataclass(frozen=True)
class RunConfig:
    network: Path
    evidence: Path | None = None
    proposal: str = "prior"
    order: str = "topological"
    estimators: tuple[str, ...] = ESTIMATORS
    samples: int = 1000
    seed: int = 0
    checkpoints: tuple[int, ...] = ()
    output: Path | None = None
    timing: bool = False

    def __post_init__(self):
        if self.samples < 1:
            raise ConfigError("--samples must be at least 1")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            raise ConfigError(f"estimators must be a non-empty subset of {','.join(ESTIMATORS)}")
        if len(set(self.estimators)) != len(self.estimators):
            raise ConfigError("estimators listed twice")
        cp = self.checkpoints
        if any(c < 1 for c in cp) or any(a >= b for a, b in zip(cp, cp[1:])):
            raise ConfigError("checkpoints must be positive and strictly ascending")
        if cp and cp[-1] > self.samples:
            raise ConfigError("checkpoints must not exceed --samples")
        for kind, value in (("proposal", self.proposal), ("order", self.order)):
            allowed = ("prior", "uniform") if kind == "proposal" else ("minfill", "topological")
            if value not in allowed and not value.startswith("file:"):
                raise ConfigError(f"--{kind} must be one of {', '.join(allowed)} or file:PATH")

    @property
    def schedule(self) -> tuple[int, ...]:
        if not self.checkpoints:
            return (self.samples,)
        return self.checkpoints if self.checkpoints[-1] == self.samples else (*self.checkpoints, self.samples)


# -- loading -------------------------------------------------------------------


def _read(path: Path | str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc


def load_inputs(network: Path, evidence: Path | None) -> tuple[BayesianNetwork, Evidence]:
    net = parse_network(_read(network))
    ev = parse_evidence(_read(evidence), net) if evidence else Evidence({})
    return net, ev


def load_problem(config: RunConfig) -> SamplingProblem:
    net, ev = load_inputs(config.network, config.evidence)
    return _problem(net, ev, config.order, config.proposal)


def _problem(net, ev, order: str, proposal: str) -> SamplingProblem:
    tree = parse_pseudo_tree(_read(order[5:])) if order.startswith("file:") else order
    if not proposal.startswith("file:"):
        return build_problem(net, ev, tree, proposal)
    problem = build_problem(net, ev, tree, "uniform")
    q = load_proposal(_read(proposal[5:]), net, ev, problem.pseudo_tree, problem.contexts)
    return problem.with_proposal(q)


def _exact_or_none(problem: SamplingProblem) -> float | None:
    try:
        return exact_pe_ao_search(problem.network, problem.evidence, problem.pseudo_tree, problem.contexts)
    except BoundExceededError:
        return None


# -- output --------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _ms(t0: float, enabled: bool) -> float | None:
    return round((time.perf_counter() - t0) * 1000.0, 3) if enabled else None


# -- commands ------------------------------------------------------------------


def run_checkpoints(problem: SamplingProblem, config: RunConfig, stream: SampleStream | None = None):
    """Yield (checkpoint, estimator, log estimate, wall ms) from one shared sample stream."""
    stream = stream or SampleStream(problem.proposal, make_rng(config.seed))
    chunks: list[SampleBatch] = []
    have = 0
    for cp in config.schedule:
        chunks.append(stream.draw(cp - have))
        have = cp
        batch = SampleBatch.concat(chunks) if len(chunks) > 1 else chunks[0]
        chunks = [batch]
        for kind in config.estimators:
            t0 = time.perf_counter()
            log_est = float(estimate_all(problem, batch, (kind,))[kind][0])
            yield cp, kind, log_est, _ms(t0, config.timing)


def cmd_estimate(config: RunConfig, stream: SampleStream | None = None) -> str:
    problem = load_problem(config)
    rows = [
        (kind, cp, log_est / LN10, math.exp(log_est), ms)
        for cp, kind, log_est, ms in run_checkpoints(problem, config, stream)
    ]
    return _csv(("estimator", "N", "log10_estimate", "estimate", "wall_ms"), rows)


def cmd_compare(config: RunConfig) -> str:
    problem = load_problem(config)
    exact = _exact_or_none(problem)
    exact_lin = math.exp(exact) if exact is not None else None
    rows = []
    for cp, kind, log_est, ms in run_checkpoints(problem, config):
        est = math.exp(log_est)
        err = abs(est - exact_lin) if exact_lin is not None else None
        rows.append((cp, kind, log_est / LN10, est, err, ms, exact_lin))
    return _csv(
        ("checkpoint", "estimator", "log10_estimate", "estimate", "abs_error_vs_exact", "wall_ms", "exact"),
        rows,
    )


def cmd_variance_study(config: RunConfig, replicates: int) -> str:
    if replicates < 2:
        raise ConfigError("--replicates must be at least 2")
    problem = load_problem(config)
    stats = empirical_variance(problem, config.samples, replicates, config.seed, config.estimators)
    rows = [(k, s.mean, s.variance, s.stderr) for k, s in stats.items()]
    return _csv(("estimator", "mean", "variance", "stderr"), rows)


def _format_names(names: str | None, n: int) -> list[str]:
    if not names:
        return [f"X{i}" for i in range(n)]
    out = names.split(",") if "," in names else list(names)
    if len(out) != n:
        raise ConfigError(f"--names gives {len(out)} names for {n} variables")
    return out


def cmd_info(network: Path, evidence: Path | None, order: str, names: str | None = None) -> str:
    net, ev = load_inputs(network, evidence)
    problem = _problem(net, ev, order, "uniform")
    label = _format_names(names, net.n)
    tree = problem.pseudo_tree
    rows = [
        ("n", net.n),
        ("evidence", len(ev)),
        ("max_domain", max(net.cardinalities)),
        ("induced_width", induced_width(problem.graph, elimination_order_of(tree))),
    ]
    for v in tree.preorder:
        par = tree.parent[v]
        rows.append((f"parent({label[v]})", "" if par is None else label[par]))
    for v in tree.preorder:
        rows.append((f"context({label[v]})", "{" + ",".join(label[a] for a in problem.contexts[v]) + "}"))
    return _csv(("key", "value"), rows)


def cmd_exact(network: Path, evidence: Path | None, method: str, bound: int | None = None) -> str:
    net, ev = load_inputs(network, evidence)
    if method == "enum":
        log_pe = exact_pe_enumeration(net, ev, **({"max_assignments": bound} if bound else {}))
    elif method == "aosearch":
        problem = build_problem(net, ev, "minfill", "uniform")
        kw = {"max_table": bound} if bound else {}
        log_pe = exact_pe_ao_search(net, ev, problem.pseudo_tree, problem.contexts, **kw)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return _csv(("method", "log10_pe", "pe"), [(method, log_pe / LN10, math.exp(log_pe))])


# -- argument parsing ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aois", description="AND/OR importance sampling for probability of evidence.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def inputs(p):
        p.add_argument("--network", type=Path, required=True, help="network in UAI BAYES format")
        p.add_argument("--evidence", type=Path, help="evidence file (UAI .evid)")
        p.add_argument("--output", type=Path, help="write CSV here instead of stdout")

    def sampling(p):
        inputs(p)
        p.add_argument("--proposal", default="prior", help="prior | uniform | file:PATH")
        p.add_argument("--order", default="topological", help="topological | minfill | file:PATH")
        p.add_argument("--estimators", type=_str_list, default=ESTIMATORS, help="comma list of is,aotree,aograph")
        p.add_argument("--samples", type=int, default=1000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--timing", action="store_true", help="fill the wall_ms column (output is then not reproducible)")

    p = sub.add_parser("estimate", help="run estimators on one shared sample stream")
    sampling(p)
    p.add_argument("--checkpoints", type=_int_list, default=())
    p = sub.add_parser("compare", help="convergence table against the exact value")
    sampling(p)
    p.add_argument("--checkpoints", type=_int_list, default=None)
    p = sub.add_parser("variance-study", help="replicate mean and variance per estimator")
    sampling(p)
    p.add_argument("--replicates", type=int, default=100)
    p = sub.add_parser("info", help="structure report: sizes, induced width, contexts")
    inputs(p)
    p.add_argument("--order", default="topological", help="topological | minfill | file:PATH")
    p.add_argument("--names", help="variable names, comma separated or one character each")
    p = sub.add_parser("exact", help="exact probability of evidence")
    inputs(p)
    p.add_argument("--method", choices=("enum", "aosearch"), default="aosearch")
    p.add_argument("--bound", type=int, help="enumeration / table size limit")
    return parser


def _default_checkpoints(n: int) -> tuple[int, ...]:
    out, c = [], 10
    while c < n:
        out.append(c)
        c *= 10
    return (*out, n)


def _config(args) -> RunConfig:
    checkpoints = getattr(args, "checkpoints", ())
    if checkpoints is None:
        checkpoints = _default_checkpoints(args.samples) if args.samples >= 1 else ()
    return RunConfig(
        network=args.network,
        evidence=args.evidence,
        proposal=args.proposal,
        order=args.order,
        estimators=tuple(args.estimators),
        samples=args.samples,
        seed=args.seed,
        checkpoints=tuple(checkpoints),
        output=args.output,
        timing=args.timing,
    )


def dispatch(args: argparse.Namespace) -> str:
    """Run a parsed command and return its CSV text; errors propagate as exceptions."""
    if args.command == "estimate":
        return cmd_estimate(_config(args))
    if args.command == "compare":
        return cmd_compare(_config(args))
    if args.command == "variance-study":
        return cmd_variance_study(_config(args), args.replicates)
    if args.command == "info":
        return cmd_info(args.network, args.evidence, args.order, args.names)
    return cmd_exact(args.network, args.evidence, args.method, args.bound)


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ParseError):
        return EXIT_PARSE
    if isinstance(exc, BoundExceededError):
        return EXIT_BOUND
    return EXIT_CONFIG


def run(argv: Sequence[str] | None = None) -> str:
    return dispatch(build_parser().parse_args(argv))


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = dispatch(args)
        if args.output:
            try:
                args.output.write_text(text)
            except OSError as exc:
                raise ConfigError(f"cannot write {args.output}: {exc.strerror or exc}") from exc
        else:
            sys.stdout.write(text)
    except AoisError as exc:
        print(f"aois: error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
