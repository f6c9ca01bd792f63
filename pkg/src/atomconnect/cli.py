"""Command-line entry point: ``atomconnect <subcommand> [options]``.

Global options (``--seed``, ``--config``, ``--workdir``, ``-v``) may appear
before or after the subcommand. Relative paths resolve against ``--workdir``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, trainer, verify
from .corpus import DEMO_INSTRUCTION, demo_instruction_corpus, demo_pretrain_graphs, load_corpus_jsonl
from .lmtoy import ToyVocab, instruction_summary
from .patcher import run_patching
from .structgraph import (
    batch_graphs,
    build_radius_graph,
    generate_fiber,
    load_graph,
    molecule_from_smiles,
    parse_pdb_atoms,
    save_graph,
)


def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    parser.add_argument("--config", default=d(None), help="flat JSON config file")
    parser.add_argument("--workdir", default=d("."), help="base directory for relative paths")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False), help="log progress")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atomconnect", description="All-atom graph to language-model connector.")
    _globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        _globals(sp, suppress=True)
        return sp

    sp = add("parse", "build a graph file from SMILES, a PDB file, or a nucleotide sequence")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--smiles")
    src.add_argument("--pdb", help="PDB file with ATOM/HETATM records")
    src.add_argument("--fiber", help="nucleotide sequence for an ideal single strand")
    sp.add_argument("--kind", choices=["dna", "rna"], default="dna", help="strand type for --fiber")
    sp.add_argument("--cutoff", type=float, default=10.0, help="radius-graph cutoff in angstrom")
    sp.add_argument("-o", "--output", required=True)

    sp = add("patch", "run gate and patching on one graph and write a JSON report")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--instruction", default=DEMO_INSTRUCTION)
    sp.add_argument("--checkpoint", help="model checkpoint (default: freshly initialized weights)")
    sp.add_argument("-o", "--output", help="report path (default stdout)")

    sp = add("gradcheck", "finite-difference verification of all gradients")
    sp.add_argument("--instances", type=int, default=5, help="random pipeline instances")

    sp = add("pretrain-encoder", "masked-reconstruction pretraining of the graph encoder")
    sp.add_argument("--corpus", help="JSONL corpus whose graphs are used (default: four demo molecules)")
    sp.add_argument("-o", "--output", default="encoder.json")

    sp = add("align", "train the gate and fusion stack with encoder and decoder frozen")
    sp.add_argument("--corpus", help="JSONL corpus (default: built-in eight-sample demo)")
    sp.add_argument("--encoder", required=True, help="encoder checkpoint from pretrain-encoder")
    sp.add_argument("-o", "--output", default="aligned.json")

    sp = add("adapt", "tune connector and decoder at a smaller learning rate")
    sp.add_argument("--corpus", help="JSONL corpus (default: built-in eight-sample demo)")
    sp.add_argument("--model", required=True, help="checkpoint from align")
    sp.add_argument("-o", "--output", default="adapted.json")

    sp = add("bench-tokens", "structural-token budget per node count, as CSV")
    sp.add_argument("--sizes", default="32,128,512,2048,8192,40960", help="comma-separated node counts")
    sp.add_argument("--mode", choices=["uniform", "trained"], default="uniform")
    sp.add_argument("--checkpoint", help="model checkpoint (trained mode)")
    sp.add_argument("--fixed-k", type=int, default=harness.DEFAULT_FIXED_K)
    sp.add_argument("-o", "--output", help="CSV path (default stdout)")
    return p


def _path(args, name) -> Path | None:
    value = getattr(args, name, None)
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else Path(args.workdir) / p


def _emit(args, text: str) -> None:
    out = _path(args, "output")
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _samples(args):
    corpus = _path(args, "corpus")
    return load_corpus_jsonl(corpus) if corpus else demo_instruction_corpus()


def _write_report(report: trainer.TrainReport, ckpt: Path) -> None:
    stem = ckpt.with_suffix("")
    report.write(f"{stem}.report.json", f"{stem}.steps.csv")
    print(f"wrote {ckpt} and {stem}.report.json / {stem}.steps.csv; final {report.final_metrics}")


def cmd_parse(args, cfg) -> int:
    if args.smiles:
        g = molecule_from_smiles(args.smiles, seed=args.seed, cutoff=args.cutoff)
    elif args.pdb:
        g = parse_pdb_atoms(_path(args, "pdb").read_text(), cutoff=args.cutoff)
    else:
        g = build_radius_graph(generate_fiber(args.fiber, args.kind), args.cutoff)
    out = _path(args, "output")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_graph(g, out)
    print(f"wrote {out}: {g.num_atoms} atoms, {len(g.edges)} edges, modality {g.modality}")
    return 0


def cmd_patch(args, cfg) -> int:
    g = load_graph(_path(args, "graph"))
    if args.checkpoint:
        model = trainer.GeoModel.load(_path(args, "checkpoint"))
    else:
        model = trainer.GeoModel(cfg, ToyVocab.build([args.instruction]), args.seed)
    b = batch_graphs([g])
    X = model.encoder(b).node_embeddings.data
    z = instruction_summary(model.decoder, model.vocab.encode(args.instruction)).data.reshape(1, -1)
    res = run_patching(z, X, b.coords, b.batch, model.gate, model.patch_config)
    report = {"node_count": g.num_atoms, **res.report()}
    _emit(args, json.dumps(report, indent=2) + "\n")
    return 0


def cmd_gradcheck(args, cfg) -> int:
    results = verify.run_suite(instances=args.instances, seed=args.seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_pretrain(args, cfg) -> int:
    graphs = [s.graph for s in load_corpus_jsonl(_path(args, "corpus"))] if args.corpus else demo_pretrain_graphs()
    encoder, report = trainer.pretrain_encoder(graphs, cfg, seed=args.seed)
    out = _path(args, "output")
    trainer.save_encoder(out, encoder, cfg, args.seed)
    _write_report(report, out)
    return 0


def cmd_align(args, cfg) -> int:
    samples = _samples(args)
    enc_state = trainer.load_encoder_state(_path(args, "encoder"))
    model, _ = trainer.build_model(samples, cfg, seed=args.seed, encoder_state=enc_state)
    report = trainer.align_connector(model, samples, trainer.stage_config(cfg, "alignment", args.seed))
    out = _path(args, "output")
    model.save(out, "alignment")
    _write_report(report, out)
    return 0


def cmd_adapt(args, cfg) -> int:
    samples = _samples(args)
    model = trainer.GeoModel.load(_path(args, "model"))
    # config keys given explicitly on this run override the checkpoint's
    explicit = {}
    if args.config is not None:
        explicit = json.loads(_path(args, "config").read_text())
        trainer.load_config(overrides=explicit)  # rejects unknown keys
    merged = {**model.config, **explicit}
    report = trainer.adapt_lm(model, samples, trainer.stage_config(merged, "adaptation", args.seed),
                              alignment_lr=model.config["learning_rate"])
    out = _path(args, "output")
    model.save(out, "adaptation")
    _write_report(report, out)
    return 0


def cmd_bench(args, cfg) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise ValueError(f"bad --sizes {args.sizes!r}") from None
    model = None
    if args.mode == "trained":
        if not args.checkpoint:
            raise ValueError("trained gate mode needs a checkpoint (--checkpoint)")
        model = trainer.GeoModel.load(_path(args, "checkpoint"))
    curve = harness.token_budget_curve(sizes, args.mode, trainer.patch_config(cfg), fixed_k=args.fixed_k,
                                       model=model, seed=args.seed)
    _emit(args, curve.to_csv())
    return 0


COMMANDS = {
    "parse": cmd_parse, "patch": cmd_patch, "gradcheck": cmd_gradcheck, "pretrain-encoder": cmd_pretrain,
    "align": cmd_align, "adapt": cmd_adapt, "bench-tokens": cmd_bench,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = trainer.load_config(_path(args, "config"))
        return COMMANDS[args.command](args, cfg)
    except (ValueError, OSError, KeyError, FloatingPointError, RuntimeError) as exc:
        print(f"atomconnect {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
