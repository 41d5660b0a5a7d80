"""Toroidal channelized lattice with double buffering.

The world is a fixed-size 2D grid of cells.  Each cell carries a set of
named float32 channels (possibly multi-plane), an int32 genome slot
index (-1 when unoccupied) and a uint8 rotation in 0..7.  All planes
exist twice: a front buffer that is read during a step and a back
buffer that physics writes into, swapped atomically at step end.

Coordinates are (x, y) with x increasing rightward along a row and y
increasing across rows; both axes wrap.  Linear cell index is
``y * width + x``.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChannelSpec",
    "PlaneSet",
    "Substrate",
    "RgbFrame",
    "STANDARD_CHANNELS",
    "create_substrate",
    "wrap",
    "render_rgb",
    "GOLDEN_FRACTION",
]

# Fractional part of the golden ratio; multiples mod 1 spread hues evenly.
GOLDEN_FRACTION = 0.6180339887498949


@dataclass(frozen=True)
class ChannelSpec:
    """Declares one named channel: plane count and optional value bounds."""

    name: str
    arity: int = 1
    bounds: tuple[float, float] | None = None


# The ecosystem's working channel set.  Communication has three planes;
# its values live in [0, 1] because actuators emit through a sigmoid.
STANDARD_CHANNELS = (
    ChannelSpec("energy", 1, (0.0, float("inf"))),
    ChannelSpec("infrastructure", 1, (0.0, float("inf"))),
    ChannelSpec("communication", 3, (0.0, 1.0)),
)


class PlaneSet:
    """One buffer's worth of planes.

    ``channels[name]`` is a float32 array of shape (arity, H, W);
    ``genome_index`` is int32 (H, W); ``rotation`` is uint8 (H, W).
    """

    __slots__ = ("channels", "genome_index", "rotation")

    def __init__(self, specs: tuple[ChannelSpec, ...], height: int, width: int):
        self.channels: dict[str, np.ndarray] = {
            s.name: np.zeros((s.arity, height, width), dtype=np.float32) for s in specs
        }
        self.genome_index = np.full((height, width), -1, dtype=np.int32)
        self.rotation = np.zeros((height, width), dtype=np.uint8)

    def copy_from(self, other: "PlaneSet") -> None:
        for name, arr in self.channels.items():
            np.copyto(arr, other.channels[name])
        np.copyto(self.genome_index, other.genome_index)
        np.copyto(self.rotation, other.rotation)

    def plane(self, name: str, sub: int = 0) -> np.ndarray:
        return self.channels[name][sub]


class Substrate:
    """Double-buffered lattice state plus the step counter."""

    def __init__(self, width: int, height: int, specs: tuple[ChannelSpec, ...]):
        self.width = width
        self.height = height
        self.specs = specs
        self.step_counter = 0
        self._front = PlaneSet(specs, height, width)
        self._back = PlaneSet(specs, height, width)

    @property
    def front(self) -> PlaneSet:
        return self._front

    @property
    def back(self) -> PlaneSet:
        return self._back

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def begin_step(self) -> None:
        """Prime the back buffer with a copy of the front."""
        self._back.copy_from(self._front)

    def swap_buffers(self) -> None:
        """Atomically publish the back buffer and advance the step count."""
        self._front, self._back = self._back, self._front
        self.step_counter += 1


def create_substrate(width: int, height: int, specs: tuple[ChannelSpec, ...] = STANDARD_CHANNELS) -> Substrate:
    """Allocate a zeroed, unoccupied substrate after validating the spec list."""
    if width < 1 or height < 1:
        raise ValueError("substrate dimensions must be positive")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("channel names must be unique")
    for s in specs:
        if s.arity < 1:
            raise ValueError(f"channel {s.name!r} arity must be >= 1")
        if s.bounds is not None and not s.bounds[0] < s.bounds[1]:
            raise ValueError(f"channel {s.name!r} bounds must satisfy lo < hi")
    return Substrate(width, height, tuple(specs))


def wrap(x, y, width: int, height: int):
    """Map any integer coordinates onto the torus.  Accepts scalars or arrays."""
    return x % width, y % height


@dataclass
class RgbFrame:
    """Row-major RGBA image of the front buffer."""

    width: int
    height: int
    pixels: np.ndarray  # (H, W, 4) uint8

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()


def _clamp01(a: np.ndarray) -> np.ndarray:
    return np.clip(a, 0.0, 1.0)


def render_rgb(sub: Substrate, norm_energy: float = 1.0, norm_infrastructure: float = 1.0) -> RgbFrame:
    """Render the front buffer to RGBA.

    Red is energy and green is infrastructure, each scaled by its display
    norm and clamped.  Blue encodes the occupying genome slot as a hue:
    (slot * golden fraction) mod 1, zero for empty cells.  Alpha is 255.
    """
    front = sub._front
    e = front.plane("energy").astype(np.float64)
    i = front.plane("infrastructure").astype(np.float64)
    gi = front.genome_index
    px = np.empty((sub.height, sub.width, 4), dtype=np.uint8)
    px[..., 0] = np.rint(_clamp01(e / norm_energy) * 255.0)
    px[..., 1] = np.rint(_clamp01(i / norm_infrastructure) * 255.0)
    hue = (gi.astype(np.float64) * GOLDEN_FRACTION) % 1.0
    hue[gi < 0] = 0.0
    px[..., 2] = np.rint(hue * 255.0)
    px[..., 3] = 255
    return RgbFrame(sub.width, sub.height, px)
