"""
Shoebox room simulation with the image-source method, and mixture synthesis
for evaluation scenarios.

Walls are ordered ``(x=0, x=Lx, y=0, y=Ly, z=0, z=Lz)``. Reflection
coefficients are ``sqrt(1 - absorption)``.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .array import ArrayGeometry, default_geometry
from .errors import GeometryError, InputError, ParameterError
from .wavio import AudioClip, read_wav

__all__ = [
    "RoomSpec",
    "ScenarioRanges",
    "MixtureScenario",
    "image_sources",
    "image_method_rir",
    "synthesize_mixture",
    "sample_scenarios",
    "find_corpus",
    "save_manifest",
    "load_manifest",
]

SINC_TAPS = 81


@dataclass
class RoomSpec:
    dimensions: tuple
    absorption: object
    source_position: tuple
    mic_positions: np.ndarray
    speed_of_sound: float = 343.0
    max_order: int = 20
    sample_rate: int = 16000
    rir_length: int = 4096

    def __post_init__(self):
        dims = np.asarray(self.dimensions, dtype=np.float64)
        if dims.shape != (3,) or np.any(dims <= 0):
            raise GeometryError(f"room dimensions must be three positive lengths, got {self.dimensions}")
        absorption = np.broadcast_to(np.asarray(self.absorption, dtype=np.float64), (6,)).copy()
        if np.any(absorption <= 0) or np.any(absorption > 1):
            raise ParameterError(f"absorption must lie in (0, 1], got {self.absorption}")
        mics = np.atleast_2d(np.asarray(self.mic_positions, dtype=np.float64))
        src = np.asarray(self.source_position, dtype=np.float64)
        for name, pts in (("source", src[None]), ("microphone", mics)):
            if np.any(pts <= 0) or np.any(pts >= dims):
                raise GeometryError(f"{name} position outside the room: {pts.tolist()}")
        if self.max_order < 0 or self.rir_length <= 0:
            raise ParameterError("max_order must be >= 0 and rir_length > 0")
        self.dimensions = dims
        self.absorption = absorption
        self.mic_positions = mics
        self.source_position = src

    @property
    def reflection(self):
        return np.sqrt(1.0 - self.absorption)


def _axis_images(src, length, beta_lo, beta_hi, max_order):
    # image coordinate = (1 - 2p) * src + 2 n L; hits |n - p| low wall, |n| high wall
    n = np.arange(-max_order, max_order + 1)
    coords, orders, gains = [], [], []
    for p in (0, 1):
        lo, hi = np.abs(n - p), np.abs(n)
        keep = lo + hi <= max_order
        coords.append((1 - 2 * p) * src + 2 * n[keep] * length)
        orders.append((lo + hi)[keep])
        gains.append((beta_lo ** lo[keep]) * (beta_hi ** hi[keep]))
    return np.concatenate(coords), np.concatenate(orders), np.concatenate(gains)


def image_sources(room):
    """All image sources up to ``room.max_order`` reflections.

    Returns:
        positions (K, 3), reflection orders (K,), reflection gains (K,)
    """
    beta = room.reflection
    axes = [
        _axis_images(room.source_position[k], room.dimensions[k], beta[2 * k], beta[2 * k + 1], room.max_order)
        for k in range(3)
    ]
    (cx, ox, gx), (cy, oy, gy), (cz, oz, gz) = axes
    order = ox[:, None, None] + oy[None, :, None] + oz[None, None, :]
    keep = order <= room.max_order
    ix, iy, iz = np.nonzero(keep)
    positions = np.stack([cx[ix], cy[iy], cz[iz]], axis=1)
    gains = gx[ix] * gy[iy] * gz[iz]
    nonzero = gains != 0.0
    return positions[nonzero], order[keep][nonzero], gains[nonzero]


def _fractional_impulses(delays, amps, length):
    half = SINC_TAPS // 2
    centers = np.round(delays).astype(np.int64)
    offsets = np.arange(-half, half + 1)
    idx = centers[:, None] + offsets[None, :]
    x = idx - delays[:, None]
    # Hann-windowed sinc, window spans the whole tap range
    taps = np.sinc(x) * 0.5 * (1.0 + np.cos(np.pi * x / (half + 1)))
    vals = amps[:, None] * taps
    valid = (idx >= 0) & (idx < length)
    return np.bincount(idx[valid], weights=vals[valid], minlength=length)[:length]


def image_method_rir(room):
    """
    Impulse responses from the source to every microphone.

    Each image adds ``gain / (4 pi r)`` at delay ``r fs / c`` through an
    81-tap Hann-windowed sinc. Output shape: (num_mics, rir_length).
    """
    positions, _, gains = image_sources(room)
    fs, c = room.sample_rate, room.speed_of_sound
    out = np.zeros((room.mic_positions.shape[0], room.rir_length))
    for m, mic in enumerate(room.mic_positions):
        direct = np.linalg.norm(room.source_position - mic)
        if direct < 1e-3:
            raise GeometryError(f"source coincides with microphone {m} (distance {direct:.2e} m)")
        dist = np.linalg.norm(positions - mic, axis=1)
        delays = dist * fs / c
        live = delays < room.rir_length + SINC_TAPS // 2
        out[m] = _fractional_impulses(delays[live], gains[live] / (4.0 * np.pi * dist[live]), room.rir_length)
    return out


@dataclass
class ScenarioRanges:
    """Sampling ranges for simulated scenarios (metres, m/s)."""

    width: tuple = (5.0, 15.0)
    length: tuple = (5.0, 15.0)
    height: tuple = (3.0, 4.0)
    absorption: tuple = (0.2, 0.8)
    speed_of_sound: tuple = (340.0, 355.0)
    wall_margin: float = 0.5
    placement_height: tuple = (1.0, 2.0)
    source_distance: tuple = (1.0, 4.0)
    min_separation_deg: float = 30.0
    max_order: int = 20
    rir_length: int = 4096
    sample_rate: int = 16000

    def validate(self, unchecked=False):
        for name in ("width", "length", "height", "absorption", "speed_of_sound",
                     "placement_height", "source_distance"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ParameterError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if unchecked:
            return
        limits = {
            "width": (5.0, 15.0),
            "length": (5.0, 15.0),
            "height": (3.0, 4.0),
            "absorption": (0.2, 0.8),
            "speed_of_sound": (340.0, 355.0),
        }
        for name, (lo, hi) in limits.items():
            a, b = getattr(self, name)
            if a < lo or b > hi:
                raise ParameterError(f"{name}: range ({a}, {b}) outside the supported ({lo}, {hi})")


@dataclass
class MixtureScenario:
    """One simulated recording: a target and an interferer in a shared room."""

    id: str
    interference_type: str
    target_path: str
    interference_path: str
    dimensions: list
    absorption: float
    speed_of_sound: float
    array_center: list
    array_rotation_deg: float
    mic_offsets: list
    target_position: list
    interference_position: list
    seed: int
    sample_rate: int = 16000
    max_order: int = 20
    rir_length: int = 4096
    extra: dict = field(default_factory=dict)

    @property
    def mic_positions(self):
        return np.asarray(self.array_center) + self._rotated_offsets()

    def _rotated_offsets(self):
        a = np.deg2rad(self.array_rotation_deg)
        rot = np.array([[np.cos(a), -np.sin(a), 0.0], [np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]])
        return np.asarray(self.mic_offsets) @ rot.T

    @property
    def geometry(self):
        """Array geometry as the enhancer sees it (centred, rotated)."""
        return ArrayGeometry(self._rotated_offsets(), self.speed_of_sound)

    @property
    def target_doa(self):
        v = np.asarray(self.target_position) - np.asarray(self.array_center)
        return v / np.linalg.norm(v)

    def room(self, source_position):
        return RoomSpec(
            self.dimensions, self.absorption, source_position, self.mic_positions,
            self.speed_of_sound, self.max_order, self.sample_rate, self.rir_length,
        )

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, data):
        return cls(**data)


def _mono(clip, sample_rate, label):
    if clip.sample_rate != sample_rate:
        raise InputError(f"{label} sample rate {clip.sample_rate} Hz differs from scenario rate {sample_rate} Hz")
    return clip.samples[0]


def _fit_length(x, n):
    if len(x) >= n:
        return x[:n]
    return np.tile(x, -(-n // len(x)))[:n]


def synthesize_mixture(scenario, target=None, interference=None):
    """
    Convolve both sources with their RIRs and sum.

    The interferer is looped or cropped to the target length; no level
    rescaling is applied. Clips default to the files named in the scenario.

    Return:
        mixture, target_image, interference_image (all D-channel clips)
    """
    fs = scenario.sample_rate
    target = read_wav(scenario.target_path) if target is None else target
    interference = read_wav(scenario.interference_path) if interference is None else interference
    x = _mono(target, fs, "target")
    n = _fit_length(_mono(interference, fs, "interference"), len(x))

    images = []
    for signal, pos in ((x, scenario.target_position), (n, scenario.interference_position)):
        rir = image_method_rir(scenario.room(pos))
        images.append(fftconvolve(signal[None, :], rir, axes=1)[:, : len(x)])
    target_image, interference_image = images
    mixture = target_image + interference_image
    return (
        AudioClip(mixture, fs),
        AudioClip(target_image, fs),
        AudioClip(interference_image, fs),
    )


def find_corpus(corpus_dir):
    """
    Locate clips under ``corpus_dir``.

    Layout: ``target/*.wav`` and either ``interference/<type>/*.wav`` or a flat
    ``interference/*.wav`` (type ``"interference"``).

    Return:
        (sorted target paths, {type: sorted interference paths})
    """
    root = Path(corpus_dir)
    targets = sorted(str(p) for p in (root / "target").glob("*.wav"))
    interferers = {}
    base = root / "interference"
    flat = sorted(str(p) for p in base.glob("*.wav"))
    if flat:
        interferers["interference"] = flat
    if base.is_dir():
        for sub in sorted(p for p in base.iterdir() if p.is_dir()):
            files = sorted(str(p) for p in sub.glob("*.wav"))
            if files:
                interferers[sub.name] = files
    if not targets or not interferers:
        raise InputError(f"{root}: need target/*.wav and at least one interference clip")
    return targets, interferers


def _draw_source(rng, ranges, dims, center, avoid=None):
    margin = ranges.wall_margin
    for _ in range(10000):
        pos = np.array([
            rng.uniform(margin, dims[0] - margin),
            rng.uniform(margin, dims[1] - margin),
            rng.uniform(*ranges.placement_height),
        ])
        v = pos - center
        dist = np.linalg.norm(v)
        if not ranges.source_distance[0] <= dist <= ranges.source_distance[1]:
            continue
        if avoid is not None:
            cos = np.dot(v, avoid) / (dist * np.linalg.norm(avoid))
            if np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))) < ranges.min_separation_deg:
                continue
        return pos
    raise GeometryError("could not place a source satisfying the distance/separation constraints")


def sample_scenarios(corpus_dir, ranges=None, count=20, seed=0, geometry=None):
    """
    Draw ``count`` scenarios per interference type found in the corpus.

    Each scenario has its own generator seeded from ``(seed, type index,
    item index)`` so results do not depend on generation order.
    """
    ranges = ranges or ScenarioRanges()
    geometry = geometry or default_geometry()
    targets, interferers = find_corpus(corpus_dir)
    scenarios = []
    for k, itype in enumerate(sorted(interferers)):
        pool = interferers[itype]
        for i in range(count):
            rng = np.random.default_rng((seed, k, i))
            dims = np.array([rng.uniform(*ranges.width), rng.uniform(*ranges.length), rng.uniform(*ranges.height)])
            absorption = rng.uniform(*ranges.absorption)
            c = rng.uniform(*ranges.speed_of_sound)
            reach = ranges.wall_margin + 0.1
            center = np.array([
                rng.uniform(reach, dims[0] - reach),
                rng.uniform(reach, dims[1] - reach),
                rng.uniform(*ranges.placement_height),
            ])
            rotation = rng.uniform(0.0, 360.0)
            tpos = _draw_source(rng, ranges, dims, center)
            ipos = _draw_source(rng, ranges, dims, center, avoid=tpos - center)
            scenarios.append(MixtureScenario(
                id=f"{itype}-{i:04d}",
                interference_type=itype,
                target_path=targets[(i + k) % len(targets)],
                interference_path=pool[i % len(pool)],
                dimensions=dims.tolist(),
                absorption=float(absorption),
                speed_of_sound=float(c),
                array_center=center.tolist(),
                array_rotation_deg=float(rotation),
                mic_offsets=geometry.mic_positions.tolist(),
                target_position=tpos.tolist(),
                interference_position=ipos.tolist(),
                seed=int(seed),
                sample_rate=ranges.sample_rate,
                max_order=ranges.max_order,
                rir_length=ranges.rir_length,
            ))
    return scenarios


def save_manifest(path, scenarios, **meta):
    data = dict(meta)
    data["scenarios"] = [s.to_json() for s in scenarios]
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True))


def load_manifest(path):
    data = json.loads(Path(path).read_text())
    scenarios = [MixtureScenario.from_json(s) for s in data.pop("scenarios")]
    return scenarios, data
