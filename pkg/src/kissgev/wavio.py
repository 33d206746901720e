"""
Multichannel RIFF/WAVE input and output.

Samples live in memory as a channel-major float64 matrix ``(D, T)``; on disk
they are interleaved. Supported encodings are PCM-16, PCM-32 and IEEE
float-32, which covers everything the rest of the toolkit writes.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

__all__ = ["AudioClip", "read_wav", "write_wav"]

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE

_MAX_CHANNELS = 64


@dataclass
class AudioClip:
    """Time-domain multichannel signal.

    Attributes:
        samples: float matrix of shape (channels, num_samples)
        sample_rate: sampling rate in Hz
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ValueError(f"samples must be 2-D (channels x samples), got ndim={samples.ndim}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain NaN or Inf")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        self.samples = samples
        self.sample_rate = int(self.sample_rate)

    @property
    def num_channels(self):
        return self.samples.shape[0]

    @property
    def num_samples(self):
        return self.samples.shape[1]

    @property
    def duration(self):
        return self.num_samples / self.sample_rate

    def channel(self, index):
        """Return a single channel as a mono clip."""
        return AudioClip(self.samples[index : index + 1].copy(), self.sample_rate)


def _encoding_name(format_tag, bits):
    if format_tag == _WAVE_FORMAT_PCM:
        return f"PCM-{bits}"
    if format_tag == _WAVE_FORMAT_IEEE_FLOAT:
        return f"IEEE-float-{bits}"
    return f"format tag 0x{format_tag:04X} ({bits}-bit)"


def _iter_chunks(data, path):
    pos = 12
    while pos < len(data):
        if pos + 8 > len(data):
            raise OSError(f"{path}: truncated chunk header at byte {pos}")
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = pos + 8
        yield chunk_id, body, size
        # chunks are word aligned
        pos = body + size + (size & 1)


def read_wav(path):
    """Read a WAV file into an :class:`AudioClip`.

    Integer PCM is scaled so that full scale maps onto [-1, 1): PCM-16 is
    divided by 32768 and PCM-32 by 2**31. Float files are returned as-is.

    Raises:
        FormatError: not RIFF/WAVE, or an unsupported encoding
        OSError: missing or truncated file
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12:
        raise OSError(f"{path}: truncated RIFF header")
    riff, _, wave = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF" or wave != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    for chunk_id, body, size in _iter_chunks(data, path):
        if chunk_id == b"fmt ":
            if size < 16 or body + 16 > len(data):
                raise OSError(f"{path}: truncated fmt chunk")
            tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == _WAVE_FORMAT_EXTENSIBLE:
                if size < 40 or body + 40 > len(data):
                    raise OSError(f"{path}: truncated extensible fmt chunk")
                # first two bytes of the sub-format GUID carry the real tag
                (tag,) = struct.unpack_from("<H", data, body + 24)
            fmt = (tag, channels, rate, block_align, bits)
        elif chunk_id == b"data":
            if body + size > len(data):
                raise OSError(
                    f"{path}: truncated data chunk ({len(data) - body} of {size} bytes present)"
                )
            payload = data[body : body + size]
            break

    if fmt is None:
        raise FormatError(f"{path}: missing fmt chunk")
    if payload is None:
        raise OSError(f"{path}: missing data chunk")

    tag, channels, rate, block_align, bits = fmt
    if not 1 <= channels <= _MAX_CHANNELS:
        raise FormatError(f"{path}: unsupported channel count {channels}")
    if (tag, bits) == (_WAVE_FORMAT_PCM, 16):
        samples = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    elif (tag, bits) == (_WAVE_FORMAT_PCM, 32):
        samples = np.frombuffer(payload, dtype="<i4").astype(np.float64) / 2.0**31
    elif (tag, bits) == (_WAVE_FORMAT_IEEE_FLOAT, 32):
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported encoding {_encoding_name(tag, bits)}")

    if samples.size % channels:
        raise OSError(f"{path}: data chunk is not a whole number of frames")
    samples = samples.reshape(-1, channels).T
    return AudioClip(np.ascontiguousarray(samples), rate)


def write_wav(clip, path, encoding="float32"):
    """Write ``clip`` to ``path`` as interleaved PCM-16 or float-32.

    PCM-16 output is clamped to [-1, 1] before quantization; +1.0 saturates
    at 32767.
    """
    if encoding == "pcm16":
        scaled = np.round(np.clip(clip.samples, -1.0, 1.0) * 32768.0)
        frames = np.clip(scaled, -32768, 32767).astype("<i2")
        tag, bits = _WAVE_FORMAT_PCM, 16
    elif encoding == "float32":
        frames = clip.samples.astype("<f4")
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise FormatError(f"unsupported output encoding {encoding!r}")

    channels = clip.num_channels
    block_align = channels * bits // 8
    payload = np.ascontiguousarray(frames.T).tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        tag,
        channels,
        clip.sample_rate,
        clip.sample_rate * block_align,
        block_align,
        bits,
        b"data",
        len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        if len(payload) & 1:
            fh.write(b"\x00")
