"""PCM WAV reading and writing (16-bit mono only)."""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

__all__ = ["AudioClip", "AudioFormatError", "ChannelCountError",
           "load_audio", "write_wav"]

_INT16_SCALE = 32768.0


class AudioFormatError(ValueError):
    """The file is not the 16-bit PCM WAV encoding this pipeline accepts."""


class ChannelCountError(AudioFormatError):
    """The file is not mono."""


@dataclass
class AudioClip:
    samples: np.ndarray  # float32 in [-1, 1]
    sample_rate: int

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def load_audio(path) -> AudioClip:
    """Read a 16-bit mono PCM WAV file, scaling samples by 1/32768."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            if n_channels != 1:
                raise ChannelCountError(
                    "%s: expected mono, got %d channels" % (path, n_channels))
            if wf.getsampwidth() != 2:
                raise AudioFormatError(
                    "%s: expected 16-bit samples, got %d-bit"
                    % (path, 8 * wf.getsampwidth()))
            if wf.getcomptype() != "NONE":
                raise AudioFormatError(
                    "%s: unsupported compression %r" % (path, wf.getcomptype()))
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise AudioFormatError("%s: not a PCM WAV file (%s)" % (path, exc))
    pcm = np.frombuffer(raw, dtype="<i2")
    samples = (pcm.astype(np.float32) / np.float32(_INT16_SCALE))
    return AudioClip(samples=samples, sample_rate=rate)


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write float samples in [-1, 1] as a 16-bit mono PCM WAV file."""
    pcm = np.clip(np.asarray(samples, dtype=np.float64) * _INT16_SCALE,
                  -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())
