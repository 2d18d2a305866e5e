"""Command-line surface: synth, split, train, eval, recommend, gradcheck."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from . import data, engine, gradcheck, report
from .model import PRESETS, build_preset


def _add_manifest_split_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="dataset manifest (TSV)")
    p.add_argument("--split-seed", type=int, default=0,
                   help="seed for the song-disjoint split")
    p.add_argument("--ratios", default="0.8,0.1,0.1",
                   help="train,val,test pair-count ratios")


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = tuple(float(x) for x in text.split(","))
    if len(parts) != 3:
        raise SystemExit(f"expected 3 ratios, got {text!r}")
    return parts


def _load_split(args) -> data.DatasetSplit:
    pairs = data.load_pairs(args.manifest)
    return data.split_by_song(pairs, _parse_ratios(args.ratios), args.split_seed)


def cmd_synth(args) -> int:
    cfg = data.SynthConfig(
        n_songs=args.songs, clips_per_song=args.clips_per_song,
        frames=args.frames, vocab=args.vocab, d_audio=args.d_audio,
        d_video=args.d_video, noise=args.noise,
        order_critical=args.order_critical, seed=args.seed,
    )
    pairs = data.synth_generate(cfg)
    manifest = data.save_dataset(pairs, args.out)
    print(f"wrote {len(pairs)} pairs; manifest: {manifest}")
    return 0


def cmd_split(args) -> int:
    split = _load_split(args)
    payload = {
        "ratios": list(split.ratios),
        "seed": args.split_seed,
        "train": [p.clip_id for p in split.train],
        "val": [p.clip_id for p in split.val],
        "test": [p.clip_id for p in split.test],
    }
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    print(f"split {len(split.train)}/{len(split.val)}/{len(split.test)} "
          f"pairs -> {args.out}")
    return 0


def cmd_train(args) -> int:
    split = _load_split(args)
    config = build_preset(args.preset)
    sample = split.train[0] if split.train else split.test[0]
    config.audio_dim = sample.audio.D
    config.video_dim = sample.video.D
    model, metrics = engine.train(
        config, split, epochs=args.epochs, batch_size=args.batch_size,
        seed=args.seed, lr=args.lr,
    )
    engine.save_checkpoint(model, args.out)
    out_dir = Path(args.out).parent
    stem = Path(args.out).stem
    emb = engine.embed_pairs(model, split.test)
    ks = tuple(k for k in engine.DEFAULT_KS if k <= len(split.test))
    rep = engine.evaluate_topk_recall(emb, ks=ks)
    payload = {
        "preset": config.preset,
        "seed": args.seed,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "metrics": metrics,
        "test": rep.as_dict(),
    }
    report.write_json_report(payload, out_dir / f"{stem}.report.json")
    report.write_recall_tsv(rep, config.preset, out_dir / f"{stem}.recall.tsv")
    report.render_loss_curve(metrics, config.preset, out_dir / f"{stem}.loss.png")
    report.render_recall_figure(rep, config.preset, out_dir / f"{stem}.recall.png")
    print(report.format_recall_table(rep, config.preset))
    print(f"checkpoint: {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = engine.load_checkpoint(args.ckpt)
    split = _load_split(args)
    subset = {"train": split.train, "val": split.val, "test": split.test}[args.subset]
    emb = engine.embed_pairs(model, subset)
    ks = tuple(int(k) for k in args.ks.split(","))
    rep = engine.evaluate_topk_recall(emb, ks=ks, direction=args.direction)
    out_dir = Path(args.report).parent if args.report else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"preset": model.cfg.preset, "ckpt": str(args.ckpt),
               "subset": args.subset, **rep.as_dict()}
    if args.report:
        report.write_json_report(payload, args.report)
        base = Path(args.report).with_suffix("")
        report.write_recall_tsv(rep, model.cfg.preset, f"{base}.tsv")
        report.render_recall_figure(rep, model.cfg.preset, f"{base}.png")
    print(report.format_recall_table(rep, model.cfg.preset))
    print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_recommend(args) -> int:
    model = engine.load_checkpoint(args.ckpt)
    query = data.read_feature_file(args.query)
    base = Path(args.candidates).parent
    candidates = []
    for rec in data.read_manifest(args.candidates):
        path = rec.audio_path if query.modality == "video" else rec.video_path
        seq = data.read_feature_file(base / path)
        seq.clip_id = rec.clip_id
        candidates.append(seq)
    ranked = engine.recommend(model, query, candidates, args.top_k)
    for clip_id, sim in ranked:
        print(f"{clip_id}\t{sim:.6f}")
    return 0


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_suite(args.seed)
    failed = False
    for name, err in sorted(results.items()):
        tol = (gradcheck.COMPOSITE_TOL if name.startswith("composite_")
               else gradcheck.PRIMITIVE_TOL)
        ok = err < tol
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<28} max rel err {err:.3e} "
              f"(tol {tol:g})")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avmatch",
        description="Cross-modal audio-video matching engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--songs", type=int, default=40)
    p.add_argument("--clips-per-song", type=int, default=8)
    p.add_argument("--frames", type=int, default=15)
    p.add_argument("--vocab", type=int, default=8)
    p.add_argument("--d-audio", type=int, default=128)
    p.add_argument("--d-video", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--order-critical", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="build a song-disjoint split")
    _add_manifest_split_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a preset")
    p.add_argument("--preset", required=True,
                   choices=[x.lower() for x in PRESETS])
    _add_manifest_split_args(p)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    _add_manifest_split_args(p)
    p.add_argument("--subset", default="test", choices=["train", "val", "test"])
    p.add_argument("--ks", default="1,5,10,25,50")
    p.add_argument("--direction", default="video->audio",
                   choices=["video->audio", "audio->video"])
    p.add_argument("--report", help="JSON report path (TSV and figure beside it)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("recommend", help="rank candidate clips for a query")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--query", required=True, help="query feature file (CMF1)")
    p.add_argument("--candidates", required=True, help="candidate manifest")
    p.add_argument("--top-k", type=int, default=10)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("gradcheck", help="run the finite-difference suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
