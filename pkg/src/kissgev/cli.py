"""
Command-line entry point.

    kissgev synth-corpus --out corpus
    kissgev simulate --corpus corpus --out sim --count 20
    kissgev evaluate sim/manifest.json --csv scores.csv
    kissgev enhance mix.wav -o out.wav --azimuth 30
    kissgev mask-dump mix.wav --out-dir masks --azimuth 30

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .array import default_geometry, doa_from_angles, doa_from_vector, load_geometry
from .beamform import EnhanceParams, check_array_input, ds_enhance, kissgev_enhance, target_steering
from .errors import KissGevError, ParameterError, ValidationError
from .maskgen import estimate_masks
from .metrics import METHODS, METRICS, evaluate_methods
from .oracle import oracle_gev_enhance
from .roomsim import ScenarioRanges, load_manifest, sample_scenarios, save_manifest, synthesize_mixture
from .stft import StftConfig, stft
from .wavio import read_wav, write_wav

logger = logging.getLogger("kissgev")

CONFIG_ENV = "KISSGEV_CONFIG"
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

_RANGE_FIELDS = ("width", "length", "height", "absorption", "speed_of_sound")
_SECTIONS = ("stft", "maskgen", "beamform", "simulation", "evaluation", "io")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Every tunable of a run. JSON config files may group keys in sections
    (``{"stft": {"frame_size": 1024}}``) or list them flat."""

    frame_size: int = 512
    hop: int = 256
    separator: int = 100
    alpha: float = 25.0
    loading: float = 1e-6
    reference_channel: int = 0
    geometry: str = None
    methods: list = field(default_factory=lambda: list(METHODS))
    metrics: list = field(default_factory=lambda: ["si_sdr"])
    seed: int = 0
    count: int = 20
    ranges: dict = field(default_factory=dict)
    corpus: str = None
    output: str = None
    jobs: int = 1

    @classmethod
    def from_dict(cls, data):
        flat = {}
        for key, value in data.items():
            if key in _SECTIONS and isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        known = {f.name for f in fields(cls)}
        ranges = {k: flat.pop(k) for k in list(flat) if k in _RANGE_FIELDS}
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ValidationError(unknown[0], "unknown config key")
        cfg = cls(**flat)
        cfg.ranges = {**cfg.ranges, **ranges}
        return cfg

    @classmethod
    def load(cls, path=None):
        """Read ``path``, else the file named by $KISSGEV_CONFIG, else defaults."""
        path = path or os.environ.get(CONFIG_ENV)
        if not path:
            return cls()
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ValidationError("config", f"file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError("config", f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ValidationError("config", f"{path}: expected a JSON object")
        return cls.from_dict(data)

    @property
    def params(self):
        return EnhanceParams(self.separator, self.alpha, self.frame_size, self.hop,
                             self.loading, self.reference_channel)

    def scenario_ranges(self):
        kwargs = {}
        for name, value in self.ranges.items():
            if np.isscalar(value):
                value = (value, value)
            if len(value) != 2:
                raise ValidationError(name, f"expected a value or a [low, high] pair, got {value}")
            kwargs[name] = (float(value[0]), float(value[1]))
        return ScenarioRanges(**kwargs)

    def validate(self, unchecked=False):
        """Check every value against the precondition of the stage that uses it."""
        try:
            StftConfig(int(self.frame_size), int(self.hop))
        except (ParameterError, ValueError) as exc:
            raise ValidationError("frame_size/hop", str(exc)) from None
        if not 1 <= self.separator <= self.frame_size // 2:
            raise ValidationError("separator", f"must lie in [1, {self.frame_size // 2}], got {self.separator}")
        if not 0.0 < self.alpha <= 50.0:
            raise ValidationError("alpha", f"must lie in (0, 50], got {self.alpha}")
        if not (self.loading >= 0.0 and np.isfinite(self.loading)):
            raise ValidationError("loading", f"must be a finite non-negative number, got {self.loading}")
        if self.reference_channel < 0:
            raise ValidationError("reference_channel", "must be non-negative")
        if not self.methods:
            raise ValidationError("methods", "empty method list")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValidationError("methods", f"unknown method {bad[0]!r}; choose from {', '.join(METHODS)}")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad or not self.metrics:
            raise ValidationError("metrics", f"unknown or empty metric list {self.metrics}")
        if self.count < 1:
            raise ValidationError("count", f"must be at least 1, got {self.count}")
        if self.jobs < 1:
            raise ValidationError("jobs", f"must be at least 1, got {self.jobs}")
        try:
            self.scenario_ranges().validate(unchecked)
        except ParameterError as exc:
            name, _, message = str(exc).partition(": ")
            raise ValidationError(name, message) from None
        return self


def _load_geometry(path):
    if path is None:
        return default_geometry()
    if not Path(path).is_file():
        raise ValidationError("geometry", f"file not found: {path}")
    try:
        return load_geometry(path)
    except (json.JSONDecodeError, KissGevError, ValueError) as exc:
        raise ValidationError("geometry", f"{path}: {exc}") from None


def _parse_doa(args):
    if args.doa is not None and args.azimuth is not None:
        raise UsageError("give either --doa or --azimuth/--elevation, not both")
    if args.doa is not None:
        try:
            parts = [float(v) for v in args.doa.split(",")]
            if len(parts) != 3:
                raise ValueError
            return doa_from_vector(parts)
        except (ValueError, ParameterError):
            raise UsageError(f"--doa expects three comma-separated numbers, got {args.doa!r}") from None
    if args.azimuth is None:
        raise UsageError("a target direction is required (--azimuth/--elevation or --doa)")
    return doa_from_angles(args.azimuth, args.elevation)


def _read_input(path, label="input"):
    if not Path(path).is_file():
        raise ValidationError(label, f"file not found: {path}")
    return read_wav(path)


def _check_writable(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise ValidationError("output", f"directory does not exist: {parent}")


def _array_input(args, cfg):
    geometry = _load_geometry(args.geometry or cfg.geometry)
    clip = _read_input(args.input)
    try:
        check_array_input(clip, geometry)
    except KissGevError as exc:
        raise ValidationError("input", str(exc)) from None
    if cfg.reference_channel >= clip.num_channels:
        raise ValidationError("reference_channel", f"{cfg.reference_channel} >= {clip.num_channels} channels")
    if clip.num_samples < cfg.frame_size:
        raise ValidationError("input", f"{clip.num_samples} samples is shorter than one frame ({cfg.frame_size})")
    return clip, geometry


def cmd_enhance(args, cfg):
    cfg.validate()
    doa = _parse_doa(args)
    clip, geometry = _array_input(args, cfg)
    _check_writable(args.output)
    params = cfg.params
    if args.method == "ds":
        out = ds_enhance(clip, geometry, doa, params)
    elif args.method == "kissgev":
        out = kissgev_enhance(clip, geometry, doa, params)
    else:
        if not (args.target_ref and args.interference_ref):
            raise UsageError("--method oracle needs --target-ref and --interference-ref")
        target = _read_input(args.target_ref, "target_ref")
        interference = _read_input(args.interference_ref, "interference_ref")
        for label, ref in (("target_ref", target), ("interference_ref", interference)):
            if ref.num_samples != clip.num_samples or ref.sample_rate != clip.sample_rate:
                raise ValidationError(label, "must match the input length and sample rate")
        out = oracle_gev_enhance(clip, target, interference, geometry, doa, params)
    write_wav(out, args.output, args.encoding)
    logger.info("wrote %s (%d samples)", args.output, out.num_samples)
    return EXIT_OK


def _write_pgm(path, mask):
    # time runs left to right, frequency bottom to top; black (0) marks 1
    img = np.where(np.flipud(mask.T) > 0, 0, 255).astype(np.uint8)
    height, width = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path):
    """Load a binary (P5) PGM written by ``mask-dump`` as a uint8 array."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data[pos + 1:pos + 1 + width * height], dtype=np.uint8)
    return pixels.reshape(height, width)


def cmd_mask_dump(args, cfg):
    cfg.validate()
    doa = _parse_doa(args)
    clip, geometry = _array_input(args, cfg)
    out_dir = Path(args.out_dir)
    params = cfg.params
    spec = stft(clip, params.stft_config, pad=True)
    w = target_steering(geometry, doa, clip.sample_rate, params.frame_size, params.reference_channel)
    masks = estimate_masks(spec, w, params.separator, params.alpha)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, mask in zip(("mask_x", "mask_n"), masks):
        values = mask.values.astype(np.uint8)
        np.savetxt(out_dir / f"{name}.csv", values, fmt="%d", delimiter=",")
        _write_pgm(out_dir / f"{name}.pgm", values)
    logger.info("wrote masks of %d frames x %d bins to %s", *masks[0].shape, out_dir)
    return EXIT_OK


def _simulate_one(task):
    scenario, out_dir = task
    mixture, target_image, interference_image = synthesize_mixture(scenario)
    folder = Path(out_dir) / scenario.id
    folder.mkdir(parents=True, exist_ok=True)
    files = {}
    for key, clip in (("mixture", mixture), ("target_image", target_image),
                      ("interference_image", interference_image)):
        write_wav(clip, folder / f"{key}.wav", "float32")
        files[key] = f"{scenario.id}/{key}.wav"
    rms = lambda c: float(np.sqrt(np.mean(c.samples[0] ** 2)))
    levels = {"target_rms": rms(target_image), "interference_rms": rms(interference_image)}
    return files, levels


def cmd_simulate(args, cfg):
    cfg.validate(unchecked=args.unchecked)
    corpus = args.corpus or cfg.corpus
    out_dir = args.out or cfg.output
    if not corpus or not Path(corpus).is_dir():
        raise ValidationError("corpus", f"directory not found: {corpus}")
    if not out_dir:
        raise ValidationError("output", "an output directory is required (--out)")
    geometry = _load_geometry(args.geometry or cfg.geometry)
    ranges = cfg.scenario_ranges()
    try:
        scenarios = sample_scenarios(corpus, ranges, cfg.count, cfg.seed, geometry)
    except KissGevError as exc:
        raise ValidationError("corpus", str(exc)) from None

    Path(out_dir).mkdir(parents=True, exist_ok=True)
    tasks = [(s, out_dir) for s in scenarios]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_simulate_one, tasks))
    else:
        results = [_simulate_one(t) for t in tasks]
    for scenario, (files, levels) in zip(scenarios, results):
        scenario.extra = {"files": files, "levels": levels}
    manifest = Path(out_dir) / "manifest.json"
    save_manifest(manifest, scenarios, seed=cfg.seed, count_per_type=cfg.count,
                  geometry=geometry.to_json())
    print(f"{len(scenarios)} scenario(s) written; manifest {manifest}")
    return EXIT_OK


def cmd_evaluate(args, cfg):
    cfg.validate()
    if not Path(args.manifest).is_file():
        raise ValidationError("manifest", f"file not found: {args.manifest}")
    if args.csv:
        _check_writable(args.csv)
    scenarios, _ = load_manifest(args.manifest)
    report = evaluate_methods(scenarios, cfg.methods, cfg.params, cfg.metrics,
                              base_dir=Path(args.manifest).parent, jobs=cfg.jobs)
    if args.csv:
        report.to_csv(args.csv)
    for metric in cfg.metrics:
        print(f"\nMean {metric} (dB), improvement over unprocessed in brackets")
        print(report.format_table(metric))
    if report.errors:
        print(f"\n{len(report.errors)} scenario(s) failed:", file=sys.stderr)
        for err in report.errors:
            print(f"  {err}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_synth_corpus(args, cfg):
    from .synth import make_corpus

    if args.per_type < 1 or args.duration <= 0:
        raise ValidationError("per_type/duration", "must be positive")
    written = make_corpus(args.out, args.per_type, args.duration, seed=cfg.seed)
    print(f"{len(written)} clips written under {args.out}")
    return EXIT_OK


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_doa(p):
    p.add_argument("--azimuth", type=float, help="target azimuth in degrees (from +x towards +y)")
    p.add_argument("--elevation", type=float, default=0.0, help="target elevation in degrees")
    p.add_argument("--doa", help="target direction as a vector x,y,z (normalised)")
    p.add_argument("--geometry", help="array geometry JSON (default: built-in 8-mic circle)")


def build_parser():
    parser = argparse.ArgumentParser(prog="kissgev", description="DoA-informed GEV speech enhancement.")
    parser.add_argument("--config", help=f"JSON run config (default: ${CONFIG_ENV})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="enhance one multichannel recording")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--method", choices=("ds", "kissgev", "oracle"), default="kissgev")
    p.add_argument("--target-ref", help="clean target image (oracle method)")
    p.add_argument("--interference-ref", help="clean interference image (oracle method)")
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")
    _add_doa(p)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("mask-dump", help="write target/noise masks as CSV and PGM")
    p.add_argument("input")
    p.add_argument("--out-dir", required=True)
    _add_doa(p)
    p.set_defaults(func=cmd_mask_dump)

    p = sub.add_parser("simulate", help="simulate reverberant mixtures from a clip corpus")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--count", type=int, help="scenarios per interference type")
    p.add_argument("--seed", type=int)
    p.add_argument("--geometry")
    p.add_argument("--jobs", type=int)
    p.add_argument("--unchecked", action="store_true", help="allow ranges outside the supported ones")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score all methods on a simulated manifest")
    p.add_argument("manifest")
    p.add_argument("--methods", type=_csv_list, help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--metrics", type=_csv_list, help="si_sdr and/or sdr (FIR-projection SDR)")
    p.add_argument("--csv", help="per-item score CSV")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth-corpus", help="write a procedural clip corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-type", type=int, default=20)
    p.add_argument("--duration", type=float, default=3.0)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth_corpus)
    return parser


def _apply_overrides(cfg, args):
    for name in ("count", "seed", "jobs", "methods", "metrics"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(RunConfig.load(args.config), args)
        return args.func(args, cfg)
    except UsageError as exc:
        parser.error(str(exc))
    except ValidationError as exc:
        print(f"kissgev: invalid {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KissGevError, OSError, ArithmeticError) as exc:
        print(f"kissgev: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
