"""Command-line front end.

Subcommands: ``infer``, ``eval``, ``sweep``, ``simulate`` (plus ``make-toy`` to
write the demo model and dataset).  Exit status is 0 on success, 1 for usage
errors and 2 for data or model errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys

from . import __version__
from .errors import QbilstmError
from .eval import evaluate_dataset, load_dataset, load_image, load_model
from .lstm import infer
from .perfmodel import DEFAULT_FREQUENCY_MHZ, OCR_DIMS, Dims, FoldingConfig, simulate
from .quant import PrecisionConfig

logger = logging.getLogger("qbilstm")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
SWEEP_COLUMNS = ["precision", "folding", "cer", "total_ops", "cycles", "gops", "weight_bits", "memory_blocks"]
ERROR_MARKER = "ERROR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt_float(x: float) -> str:
    return f"{x:.6f}"


def _precision(text: str) -> PrecisionConfig:
    try:
        return PrecisionConfig.parse(text)
    except QbilstmError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _folding_point(text: str) -> tuple[int, int, int]:
    parts = text.split("/")
    try:
        values = tuple(int(p) for p in parts)
    except ValueError:
        values = ()
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"folding must look like PE/SIMD_INPUT/SIMD_RECURRENT, got {text!r}")
    return values


def _dims(text: str) -> Dims:
    try:
        return Dims(*(int(p) for p in text.split(",")))
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"dims must look like I,H,K, got {text!r}") from None


def _add_folding_flags(p):
    p.add_argument("--pe", type=int, default=1, help="LSTM cells computed in parallel")
    p.add_argument("--simd-input", type=int, help="input lanes per gate (default: I, full width)")
    p.add_argument("--simd-recurrent", type=int, help="recurrent lanes per gate (default: H, full width)")
    p.add_argument("--pipeline-depth", type=int, default=0)
    p.add_argument("--freq-mhz", type=float, default=DEFAULT_FREQUENCY_MHZ)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qbilstm", description="Quantized BiLSTM OCR inference and accelerator model")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("infer", help="decode a single text-line image")
    p.add_argument("image")
    p.add_argument("--model", required=True)
    p.add_argument("--precision", type=_precision, required=True, help="WQ/AQ/IQ[/RQ], e.g. 1/2/1/1")

    p = sub.add_parser("eval", help="evaluate CER over a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True, help="directory of .pgm images")
    p.add_argument("--truth", required=True, help="tab-separated <image>\\t<text> file")
    p.add_argument("--precision", type=_precision, required=True)
    p.add_argument("--csv", help="write per-image rows to this path")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("sweep", help="precision x folding design-space sweep, CSV output")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--precision", type=_precision, action="append", required=True,
                   help="repeat for each precision point")
    p.add_argument("--folding", type=_folding_point, action="append",
                   help="PE/SIMD_INPUT/SIMD_RECURRENT, repeat for each point "
                        "(default: the single point from --pe/--simd-*)")
    _add_folding_flags(p)
    p.add_argument("--csv", help="write the CSV here instead of standard output")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="performance model report")
    p.add_argument("--model", help="take I,H,K from this model (default: --dims)")
    p.add_argument("--dims", type=_dims, default=OCR_DIMS, help="I,H,K (default: 32,128,82)")
    p.add_argument("--columns", type=int, required=True, help="sequence length C")
    p.add_argument("--precision", type=_precision, default=PrecisionConfig(1, 1, 1))
    _add_folding_flags(p)

    p = sub.add_parser("make-toy", help="write the demo model, images and truth file")
    p.add_argument("outdir")
    p.add_argument("--lines", type=int, default=5)
    p.add_argument("--seed", type=int, default=7)
    return parser


def _folding(args, dims: Dims, point=None) -> FoldingConfig:
    pe, si, sr = point if point is not None else (args.pe, args.simd_input, args.simd_recurrent)
    return FoldingConfig(
        pe=pe,
        simd_input=dims.I if si is None else si,
        simd_recurrent=dims.H if sr is None else sr,
        pipeline_depth=args.pipeline_depth,
        frequency_mhz=args.freq_mhz,
    )


def cmd_infer(args, out) -> int:
    model = load_model(args.model)
    image = load_image(args.image, height=model.dims[0])
    print(infer(model, image, args.precision), file=out)
    return EXIT_OK


def cmd_eval(args, out) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.dataset, args.truth)
    report = evaluate_dataset(model, dataset, args.precision, workers=args.workers)
    width = max(len(r.name) for r in report.results)
    print(f"{'image':<{width}}  distance  truth_len  pred", file=out)
    for r in report.results:
        print(f"{r.name:<{width}}  {r.distance:>8}  {len(r.truth):>9}  {r.pred}", file=out)
    print(f"precision: {args.precision.label}", file=out)
    print(f"columns: {report.total_columns}", file=out)
    print(f"cer: {fmt_float(report.cer)}", file=out)
    print(f"accuracy: {fmt_float(report.accuracy)}", file=out)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["image", "distance", "truth_len", "pred"])
            for r in report.results:
                w.writerow([r.name, r.distance, len(r.truth), r.pred])
    return EXIT_OK


def sweep_rows(model, dataset, precisions, foldings, workers=1) -> list[list[str]]:
    """One row per (precision, folding), sorted; failing points carry an error marker."""
    dims = Dims(*model.dims)
    precisions = sorted(set(precisions), key=PrecisionConfig.sort_key)
    foldings = sorted(set(foldings), key=FoldingConfig.sort_key)
    rows = []
    for prec in precisions:
        try:
            report = evaluate_dataset(model, dataset, prec, workers=workers)
            cer_field, columns = fmt_float(report.cer), report.total_columns
        except QbilstmError as exc:
            logger.error("precision %s failed: %s", prec.label, exc)
            cer_field, columns = ERROR_MARKER, None
        for fold in foldings:
            perf = [ERROR_MARKER] * 5
            if columns is not None:
                try:
                    rep = simulate(dims, fold, columns, prec)
                    perf = [str(rep.ops.total_ops), str(rep.cycles), fmt_float(rep.gops),
                            str(rep.memory.weight_bits), str(rep.memory.memory_blocks)]
                except QbilstmError as exc:
                    logger.error("point %s @ %s failed: %s", prec.label, fold.label, exc)
            rows.append([prec.label, fold.label, cer_field] + perf)
    return rows


def cmd_sweep(args, out) -> int:
    model = load_model(args.model)
    dims = Dims(*model.dims)
    dataset = load_dataset(args.dataset, args.truth)
    points = args.folding or [None]
    try:
        foldings = [_folding(args, dims, pt) for pt in points]
    except QbilstmError as exc:
        raise UsageError(str(exc)) from None
    rows = sweep_rows(model, dataset, args.precision, foldings, workers=args.workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    w.writerows(rows)
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    else:
        out.write(buf.getvalue())
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    dims = Dims(*load_model(args.model).dims) if args.model else args.dims
    if args.columns < 0:
        raise UsageError("--columns must be >= 0")
    rep = simulate(dims, _folding(args, dims), args.columns, args.precision)
    lines = [
        ("dims", f"I={dims.I} H={dims.H} K={dims.K}"),
        ("columns", rep.columns),
        ("folding", rep.folding.label),
        ("fold_factor", rep.fold_factor),
        ("frequency_mhz", fmt_float(rep.folding.frequency_mhz)),
        ("precision", args.precision.label),
        ("bilstm_ops", rep.ops.bilstm_ops),
        ("output_ops", rep.ops.output_ops),
        ("total_ops", rep.ops.total_ops),
        ("cycles", rep.cycles),
        ("runtime_s", f"{rep.runtime_s:.9e}"),
        ("gops", fmt_float(rep.gops)),
        ("weight_bits", rep.memory.weight_bits),
        ("memory_blocks", rep.memory.memory_blocks),
    ]
    for key, value in lines:
        print(f"{key}: {value}", file=out)
    return EXIT_OK


def cmd_make_toy(args, out) -> int:
    from .toy import write_toy_dataset

    lines = write_toy_dataset(args.outdir, n_lines=args.lines, seed=args.seed)
    print(f"wrote model and {len(lines)} lines to {args.outdir}", file=out)
    return EXIT_OK


COMMANDS = {
    "infer": cmd_infer,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "make-toy": cmd_make_toy,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"qbilstm {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QbilstmError, OSError) as exc:
        print(f"qbilstm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
