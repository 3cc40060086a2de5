"""Command-line front end: ``xmcpw {train,predict,evaluate,propensities,simulate,stats}``.

Exit status is 0 on success, 1 for usage errors and 2 for unreadable or
malformed data and model files.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from typing import Sequence, TextIO

import numpy as np

from . import data, losses, metrics, ovr, propensity, sim
from .solver import SolverConfig, SubproblemLoss

log = logging.getLogger("xmcpw")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _propensity_params(args, n: int) -> propensity.PropensityParams:
    if args.dataset:
        try:
            base = propensity.default_params(args.dataset, n)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        a, b = base.a, base.b
    else:
        a, b = 0.55, 1.5
    if args.a is not None:
        a = args.a
    if args.b is not None:
        b = args.b
    return propensity.PropensityParams(a, b, n)


def _training_propensities(args, train_set: data.SparseDataset) -> propensity.PropensityModel:
    params = _propensity_params(args, train_set.num_points)
    return propensity.from_params(params, data.label_frequencies(train_set))


def _add_propensity_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--a", type=float, help="propensity model parameter A (default 0.55)")
    p.add_argument("--b", type=float, help="propensity model parameter B (default 1.5)")
    p.add_argument("--dataset", help="take A and B from a known benchmark, e.g. EURLex-4K")


def _open_out(path: str | None):
    if path in (None, "-"):
        return contextlib.nullcontext(sys.stdout)
    return open(path, "w", encoding="ascii", newline="\n")


def _preprocess(ds: data.SparseDataset, normalize: bool, bias: float) -> data.SparseDataset:
    if normalize:
        ds = data.l2_normalize(ds)
    if bias != 0.0:
        ds = data.add_bias(ds, bias)
    return ds


def cmd_train(args) -> int:
    train_set = data.load_xmc(args.data)
    props = _training_propensities(args, train_set)
    try:
        config = ovr.TrainConfig(
            scheme=losses.WeightScheme(args.scheme),
            loss=SubproblemLoss(args.loss),
            solver=SolverConfig(args.tol, args.max_iter, args.max_cg),
            prune_threshold=args.prune,
            thread_count=args.threads,
            global_cost=args.cost,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    model = ovr.train(_preprocess(train_set, args.normalize, args.bias), props, config)
    model.metadata["normalize"] = "1" if args.normalize else "0"
    ovr.save_model(model, args.model_out)
    log.info("trained %d labels, %d non-zero weights", model.num_labels, model.nnz)
    return 0


def write_topk(topk: ovr.TopK, out: TextIO) -> None:
    for i in range(len(topk)):
        out.write(" ".join(f"{l}:{s!r}" for l, s in topk.row(i)) + "\n")


def read_predictions(path: str, rerank: bool) -> list[np.ndarray]:
    """Read ``label:score`` lines; with ``rerank`` sort by score (ties by label id)."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            pairs = []
            for tok in line.split():
                l_s, sep, s_s = tok.partition(":")
                try:
                    pairs.append((int(l_s), float(s_s) if sep else 0.0))
                except ValueError:
                    raise data.DataFormatError(f"bad prediction entry {tok!r}", lineno) from None
            if rerank:
                pairs.sort(key=lambda t: (-t[1], t[0]))
            rows.append(np.array([l for l, _ in pairs], dtype=np.int64))
    return rows


def cmd_predict(args) -> int:
    model = ovr.load_model(args.model)
    ds = data.load_xmc(args.data)
    if model.metadata.get("normalize") == "1":
        ds = data.l2_normalize(ds)
    topk = ovr.predict_topk(model, ds, args.k)
    with _open_out(args.out) as out:
        write_topk(topk, out)
    return 0


def cmd_evaluate(args) -> int:
    truth = data.load_xmc(args.truth)
    if args.scores is None and args.topk is None:
        raise UsageError("one of --scores or --topk is required")
    preds = read_predictions(args.scores or args.topk, rerank=args.scores is not None)
    if len(preds) != truth.num_points:
        raise data.DataFormatError(f"{len(preds)} prediction lines for {truth.num_points} test examples")
    if args.freq_from:
        props = _training_propensities(args, data.load_xmc(args.freq_from))
        if len(props) != truth.num_labels:
            raise data.DataFormatError("training and test files disagree on the number of labels")
        inv = propensity.inverse_propensities(props)
    else:
        if args.a is not None or args.b is not None or args.dataset:
            raise UsageError("--a/--b/--dataset need --freq-from")
        inv = np.ones(truth.num_labels)
    report = metrics.evaluate(preds, truth.labels, inv, ks=args.k_list)
    print(report.table())
    if report.skipped:
        print(f"skipped {report.skipped} examples without labels in propensity-scored means", file=sys.stderr)
    print("\n".join(report.lines()))
    return 0


def cmd_propensities(args) -> int:
    props = _training_propensities(args, data.load_xmc(args.data))
    log.info("C = %r", props.c)
    with _open_out(args.out) as out:
        for p in props.propensities:
            out.write(f"{float(p)!r}\n")
    return 0


def cmd_simulate(args) -> int:
    if args.exact:
        cases = sim.exact_grid()
        worst = 0.0
        for case in cases:
            lhs, rhs = sim.exact_expectation_check(case)
            worst = max(worst, abs(lhs - rhs))
        print(f"exact_check_cases={len(cases)}")
        print(f"exact_check_max_abs_diff={worst:.3e}")
        return 0
    for v in args.variants:
        if v not in sim.VARIANTS:
            raise UsageError(f"unknown variant {v!r}; choose from {', '.join(sim.VARIANTS)}")
    rows = sim.synthetic_experiment(
        num_points=args.points,
        num_features=args.features,
        num_labels=args.labels,
        propensity_grid=args.grid,
        seed=args.seed,
        variants=tuple(args.variants),
        loss=SubproblemLoss(args.loss),
    )
    for row in rows:
        print(row.line())
    return 0


HIST_EDGES = (0, 1, 2, 5, 10, 20, 50, 100, 1000)


def cmd_stats(args) -> int:
    ds = data.load_xmc(args.data)
    freqs = data.label_frequencies(ds)
    print(f"points={ds.num_points} features={ds.num_features} labels={ds.num_labels}")
    if ds.num_points:
        print(f"avg_labels_per_point={freqs.sum() / ds.num_points:.4f}")
    if ds.num_labels:
        print(f"avg_points_per_label={freqs.sum() / ds.num_labels:.4f}")
    edges = list(HIST_EDGES) + [max(int(freqs.max(initial=0)) + 1, HIST_EDGES[-1] + 1)]
    for lo, hi in zip(edges, edges[1:]):
        count = int(np.sum((freqs >= lo) & (freqs < hi)))
        label = f"{lo}" if hi == lo + 1 else f"{lo}-{hi - 1}"
        print(f"freq[{label}]={count}")
    try:
        fit = data.power_law_fit(freqs)
    except ValueError as exc:
        print(f"power_law=unavailable ({exc})")
    else:
        print(f"power_law n1={fit.n1:.6f} beta={fit.beta:.6f} r2={fit.r2:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xmcpw", description="Propensity-weighted one-vs-rest extreme classification")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a one-vs-rest model")
    p.add_argument("--data", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--scheme", choices=[s.value for s in losses.WeightScheme], default="empirical")
    p.add_argument("--loss", choices=[l.value for l in SubproblemLoss], default="sqhinge")
    _add_propensity_flags(p)
    p.add_argument("--prune", type=float, default=0.01)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--max-cg", type=int, default=50)
    p.add_argument("--cost", type=float, default=1.0, help="global multiplier on both class costs")
    p.add_argument("--normalize", action="store_true", help="scale feature rows to unit norm")
    p.add_argument("--bias", type=float, default=1.0, help="value of the appended bias feature; 0 disables")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write top-k label:score lines")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="P@k, nDCG@k and propensity-scored metrics")
    p.add_argument("--truth", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--scores", help="label:score lines, ranked here")
    group.add_argument("--topk", help="label:score lines already ranked best first")
    p.add_argument("--k-list", type=_int_list, default=[1, 3, 5])
    p.add_argument("--freq-from", help="training file whose label counts define the propensities")
    _add_propensity_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("propensities", help="print one propensity per label")
    p.add_argument("--data", required=True)
    _add_propensity_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_propensities)

    p = sub.add_parser("simulate", help="synthetic missing-label experiment")
    p.add_argument("--grid", type=_float_list, default=[0.1, 0.3, 0.5, 0.7, 1.0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=4000)
    p.add_argument("--features", type=int, default=50)
    p.add_argument("--labels", type=int, default=8)
    p.add_argument("--variants", type=lambda s: s.split(","), default=["plain", "weighted"])
    p.add_argument("--loss", choices=[l.value for l in SubproblemLoss], default="sqhinge")
    p.add_argument("--exact", action="store_true", help="run the exact expectation grid instead")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="label frequency histogram and power-law fit")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_stats)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"xmcpw: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"xmcpw: error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
