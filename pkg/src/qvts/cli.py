"""Command line pipelines: analysis, following, mixed-state runs, scenes, measurements.

Exit codes: 0 on success, 1 on internal errors, 2 on usage or IO errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import features as feat
from . import snmeasure, synth
from .audio import AudioBuffer, read_wav, write_wav
from .evolution import EvolutionConfig, mixed_initial, run_follower
from .phon import PhonError

log = logging.getLogger("qvts")


class UsageError(Exception):
    pass


def _read(path: str) -> AudioBuffer:
    try:
        return read_wav(path)
    except FileNotFoundError as exc:
        raise UsageError(f"cannot read {path}: no such file") from exc
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _write(path: str, audio: AudioBuffer, pcm16: bool) -> None:
    try:
        write_wav(path, audio, pcm16=pcm16)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc
    log.info("wrote %s (%.2f s)", path, audio.duration)


def _features(args, audio: AudioBuffer) -> feat.FeatureTrack:
    return feat.extract_features(audio, window_size=args.window, fft_size=args.fft, hop=args.hop,
                                 noise_from_residual=not args.raw_noise)


def _config(args, initial) -> EvolutionConfig:
    return EvolutionConfig(
        frame_decimation=args.decimation,
        damping=args.damping,
        pitchiness_threshold=args.threshold,
        collapse_decimation=args.collapse_every,
        initial=initial,
        seed=args.seed,
        omega=args.omega,
        dt=args.dt,
        axis_policy=args.axis_policy,
    )


def cmd_analyze(args) -> None:
    audio = _read(args.input)
    track = _features(args, audio)
    track.to_csv(args.output)
    log.info("wrote %s (%d frames)", args.output, len(track))
    if args.dump_spectrogram:
        spec = feat.stft(audio, window_size=args.window, fft_size=args.fft, hop=args.hop)
        np.savetxt(args.dump_spectrogram, spec.magnitude, delimiter=",", fmt="%.6g")
        log.info("wrote %s", args.dump_spectrogram)


def _follow(args, initial) -> None:
    audio = _read(args.input)
    track = _features(args, audio)
    trace = run_follower(track, _config(args, initial))
    trace.to_csv(args.output)
    log.info("wrote %s (%d steps)", args.output, len(trace))
    if args.json:
        Path(args.json).write_text(trace.to_json())
    wav = getattr(args, "sonify", None) or getattr(args, "wav", None)
    if wav:
        _write(wav, synth.sonify_trace(trace, track, sr=audio.sample_rate, seed=args.seed), args.pcm16)


def cmd_follow(args) -> None:
    _follow(args, args.initial)


def cmd_mixed(args) -> None:
    _follow(args, mixed_initial(args.p_up))


def cmd_scene(args) -> None:
    if args.kind == "glides":
        audio = synth.crossing_glides(noise_amp=args.amp if args.amp is not None else 0.5,
                                      duration=args.duration, seed=args.seed)
    elif args.kind == "fugue":
        try:
            notes, bpm = synth.load_notes(args.notes)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot load notes: {exc}") from exc
        audio = synth.render_notes(notes, bpm=args.bpm or bpm, seed=args.seed)
    else:
        if not args.input:
            raise UsageError("noise-add needs --input")
        audio = synth.add_noise(_read(args.input), args.amp if args.amp is not None else 0.1, seed=args.seed)
    _write(args.output, audio, args.pcm16)


def cmd_measure(args) -> None:
    audio = _read(args.input)
    if args.kind == "both-orders":
        res = snmeasure.noncommutativity_experiment(audio)
        stem = Path(args.output)
        a2 = stem.with_name(stem.stem + "_phon_after_turb" + stem.suffix)
        astar2 = stem.with_name(stem.stem + "_turb_after_phon" + stem.suffix)
        _write(str(a2), res["a2"], args.pcm16)
        _write(str(astar2), res["astar2"], args.pcm16)
        print(f"spectral_distance {res['spectral_distance']:.6f}")
        return
    out = snmeasure.measure_phonation(audio) if args.kind == "phonation" else snmeasure.measure_turbulence(audio)
    _write(args.output, out, args.pcm16)
    print(f"spectral_distance {snmeasure.spectral_distance(audio, out):.6f}")


def _add_analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, default=feat.WINDOW_SIZE, help="analysis window length")
    p.add_argument("--fft", type=int, default=feat.FFT_SIZE, help="FFT size")
    p.add_argument("--hop", type=int, default=feat.HOP, help="hop size in samples")
    p.add_argument("--raw-noise", action="store_true",
                   help="measure noise bands on the full spectrum instead of the residual")


def _add_follow_flags(p: argparse.ArgumentParser) -> None:
    _add_analysis_flags(p)
    p.add_argument("--decimation", type=int, default=10, help="frames per evolution segment (M)")
    p.add_argument("--damping", type=float, default=0.1, help="exponential damping k")
    p.add_argument("--threshold", type=float, default=0.9, help="pitchiness threshold")
    p.add_argument("--collapse-every", type=int, default=5, help="collapse every N-th measurement")
    p.add_argument("--omega", type=float, default=1.0, help="energy scale")
    p.add_argument("--dt", type=float, default=None, help="seconds per frame (default: hop period)")
    p.add_argument("--axis-policy", choices=("pitchiness", "phonation", "min-prob"), default="pitchiness")
    p.add_argument("--json", help="also write the trace as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvts", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of option defaults; explicit flags win")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--pcm16", action="store_true", help="write 16-bit PCM instead of float")

    p = sub.add_parser("analyze", help="write a feature CSV")
    p.add_argument("input")
    p.add_argument("-o", "--output", default="features.csv")
    p.add_argument("--dump-spectrogram", help="write the STFT magnitude matrix as CSV")
    _add_analysis_flags(p)
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("follow", help="follow a phon through a recording")
    p.add_argument("input")
    p.add_argument("-o", "--output", default="trace.csv")
    p.add_argument("--initial", choices=("u", "d", "r", "l", "f", "s"), default="u")
    p.add_argument("--sonify", help="render the trace to this WAV file")
    _add_follow_flags(p)
    common(p)
    p.set_defaults(func=cmd_follow)

    p = sub.add_parser("mixed", help="evolve a mixed state and sonify it")
    p.add_argument("input")
    p.add_argument("-o", "--output", default="trace.csv")
    p.add_argument("--wav", default="out.wav")
    p.add_argument("--p-up", type=float, default=1 / 3, help="probability of |u> in the initial mixture")
    _add_follow_flags(p)
    common(p)
    p.set_defaults(func=cmd_mixed)

    p = sub.add_parser("scene", help="generate a test scene")
    p.add_argument("kind", choices=("glides", "fugue", "noise-add"))
    p.add_argument("-o", "--output", default="scene.wav")
    p.add_argument("--amp", type=float, default=None, help="noise amplitude")
    p.add_argument("--input", help="audio to add noise to (noise-add)")
    p.add_argument("--duration", type=float, default=3.0, help="glides duration")
    p.add_argument("--notes", help="JSON note list (fugue); bundled incipit by default")
    p.add_argument("--bpm", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_scene)

    p = sub.add_parser("measure", help="sines + noise measurements")
    p.add_argument("kind", choices=("phonation", "turbulence", "both-orders"))
    p.add_argument("input")
    p.add_argument("-o", "--output", default="measured.wav")
    common(p)
    p.set_defaults(func=cmd_measure)
    return parser


def _load_config(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.config:
            cfg = _load_config(args.config)
            sub = parser._subparsers._group_actions[0].choices[args.command]
            known = {a.dest for a in sub._actions}
            unknown = sorted(set(cfg) - known)
            if unknown:
                raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
            sub.set_defaults(**cfg)
            args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"qvts: error: {exc}", file=sys.stderr)
        return 2
    except (PhonError, ValueError) as exc:
        print(f"qvts: invalid argument: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"qvts: internal error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
