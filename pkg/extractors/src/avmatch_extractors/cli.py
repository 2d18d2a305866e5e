"""Command-line entry point: extract features from media files."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .audio import load_vggish
from .pipeline import ExtractionJob, build_manifest, extract_job
from .video import load_resnet50


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="avmatch-extract",
        description="Segment media into 15 s clips and emit CMF1 feature "
                    "files plus a TSV manifest for the matching engine",
    )
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="video files; each needs a .wav sidecar with "
                             "the same stem")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--clip-seconds", type=float, default=15.0)
    parser.add_argument("--vggish-weights",
                        help="path to the VGGish checkpoint (else "
                             "$AVMATCH_EXTRACTOR_WEIGHTS/vggish.pt)")
    parser.add_argument("--resnet-weights",
                        help="path to the ResNet-50 checkpoint (else "
                             "$AVMATCH_EXTRACTOR_WEIGHTS/resnet50.pth)")
    parser.add_argument("--random-weights-seed", type=int,
                        help="use seeded random weights instead of "
                             "pretrained ones (dry runs only)")
    args = parser.parse_args(argv)

    if args.random_weights_seed is not None:
        audio_model = load_vggish(random_seed=args.random_weights_seed)
        video_model = load_resnet50(random_seed=args.random_weights_seed)
    else:
        audio_model = load_vggish(args.vggish_weights)
        video_model = load_resnet50(args.resnet_weights)

    total = 0
    for media in args.inputs:
        job = ExtractionJob(Path(media), clip_seconds=args.clip_seconds)
        clip_ids = extract_job(job, args.out, audio_model, video_model)
        print(f"{media}: {len(clip_ids)} clips")
        total += len(clip_ids)
    manifest = build_manifest(args.out)
    print(f"wrote {total} clips; manifest: {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
