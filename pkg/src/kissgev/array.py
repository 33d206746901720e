"""
Far-field array model: microphone geometry, time differences of arrival and
anechoic steering vectors.
"""

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import GeometryError, ParameterError

__all__ = [
    "ArrayGeometry",
    "SteeringVector",
    "doa_from_angles",
    "doa_from_vector",
    "tdoa",
    "steering",
    "load_geometry",
    "default_geometry",
    "circular_array",
]


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in metres, relative to the array centre."""

    mic_positions: np.ndarray
    speed_of_sound: float = 343.0

    def __post_init__(self):
        pos = np.asarray(self.mic_positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise GeometryError(f"mic positions must be a list of 3-vectors, got shape {pos.shape}")
        if pos.shape[0] < 2:
            raise GeometryError("at least two microphones are required")
        gaps = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() <= 0.0:
            raise GeometryError("microphone positions must be distinct")
        if not 300.0 <= self.speed_of_sound <= 400.0:
            raise GeometryError(f"speed of sound {self.speed_of_sound} m/s outside [300, 400]")
        object.__setattr__(self, "mic_positions", pos)

    @property
    def num_mics(self):
        return self.mic_positions.shape[0]

    def to_json(self):
        return {"mics": self.mic_positions.tolist(), "speed_of_sound": self.speed_of_sound}


@dataclass(frozen=True)
class SteeringVector:
    """Unit-modulus weights ``W_d(f)``, shape (D, N/2+1), and the delays
    ``tau_d`` (samples) they were built from."""

    weights: np.ndarray
    tdoas: np.ndarray


def doa_from_vector(vec):
    u = np.asarray(vec, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(u)
    if not np.isfinite(norm) or norm == 0.0:
        raise ParameterError(f"DoA vector must be finite and nonzero, got {vec}")
    return u / norm


def doa_from_angles(azimuth_deg, elevation_deg=0.0):
    """Unit vector for an azimuth (from +x towards +y) and elevation (from
    the xy-plane towards +z), both in degrees."""
    az, el = np.deg2rad(azimuth_deg), np.deg2rad(elevation_deg)
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def tdoa(geometry, doa, sample_rate):
    """Per-microphone plane-wave delays in samples.

    ``tau_d = -(u . p_d) * fs / c``: a microphone further along the DoA hears
    the wavefront earlier and therefore gets a negative delay.
    """
    u = np.asarray(doa, dtype=np.float64)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ParameterError("DoA must be a unit vector")
    return -(geometry.mic_positions @ u) * sample_rate / geometry.speed_of_sound


def steering(tdoas, frame_size):
    """``W_d(f) = exp(j 2 pi f tau_d / N)`` for ``f = 0 .. N/2``.

    Applied as ``sum_d W_d(f) Y_d(t, f)`` these weights undo the delays
    returned by :func:`tdoa`.
    """
    tau = np.asarray(tdoas, dtype=np.float64)
    if not np.all(np.isfinite(tau)):
        raise ParameterError("TDoAs must be finite")
    f = np.arange(frame_size // 2 + 1)
    weights = np.exp(2j * np.pi * np.outer(tau, f) / frame_size)
    return SteeringVector(weights, tau)


def circular_array(num_mics, radius, speed_of_sound=343.0):
    """Uniform circular array in the xy-plane, first mic on the +x axis."""
    phi = 2.0 * np.pi * np.arange(num_mics) / num_mics
    pos = np.stack([radius * np.cos(phi), radius * np.sin(phi), np.zeros(num_mics)], axis=1)
    return ArrayGeometry(pos, speed_of_sound)


def load_geometry(path):
    """Read a geometry JSON file: ``{"mics": [[x, y, z], ...], "speed_of_sound": c}``."""
    with open(path) as fh:
        data = json.load(fh)
    try:
        mics = data["mics"]
    except (KeyError, TypeError):
        raise GeometryError(f"{path}: missing 'mics' list") from None
    return ArrayGeometry(np.asarray(mics, dtype=np.float64), float(data.get("speed_of_sound", 343.0)))


def default_geometry():
    """8-mic circular array of radius 46.3 mm.

    This approximates a ReSpeaker-class board; exact vendor coordinates are
    not used.
    """
    ref = resources.files("kissgev") / "data" / "uca8_r46mm.json"
    with resources.as_file(ref) as path:
        return load_geometry(path)
