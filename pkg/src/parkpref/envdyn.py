"""Dynamic environment model: sun position, shadows, light, temperature.

All quantities are deterministic functions of (layout, hour). The day model
is deliberately simple: elevation follows a half-sine between 06:00 and
18:00, azimuth sweeps linearly, shadows are binary ray-casts against
per-cell heights, and temperature tracks the same half-sine with a fixed
penalty for shaded cells.

Angle conventions: azimuth is measured in degrees from the +row grid axis
toward the +col axis, so azimuth 0 points along +row and azimuth 90 along
+col. Elevation is degrees above the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .layout import Layout


def _sinpi(u: float) -> float:
    """sin(pi * u), exactly 0.0 at integer u.

    math.sin(math.pi) is ~1.2e-16 rather than 0, which would break the
    "daylight iff hour in (6, 18)" boundary at sunrise/sunset; integer
    multiples of pi are therefore special-cased.
    """
    if u == math.floor(u):
        return 0.0
    return math.sin(math.pi * u)


def _dirvec(azimuth_deg: float) -> tuple[float, float]:
    """Unit direction (dr, dc) for an azimuth, with exact quadrant symmetry.

    Computed by folding the angle into [0, 90) and permuting/negating
    components, so that cardinal directions are exact (+-1/0) and
    antipodal azimuths a and a+180 give exactly opposite vectors whenever
    both are exactly representable. Plain cos/sin would miss both
    properties by ~1 ulp, which matters for bit-exact shadow symmetry
    under 180-degree layout rotation.
    """
    a = azimuth_deg % 360.0
    quadrant, rem = divmod(a, 90.0)
    c = math.cos(math.radians(rem))
    s = math.sin(math.radians(rem))
    if rem == 0.0:
        c, s = 1.0, 0.0
    quadrant = int(quadrant) % 4
    if quadrant == 0:
        return (c, s)
    if quadrant == 1:
        return (-s, c)
    if quadrant == 2:
        return (-c, -s)
    return (s, -c)


@dataclass(frozen=True)
class SunState:
    """Sun position at a simulated hour.

    elevation: degrees above horizon, in [-90, 90]; positive iff daytime.
    azimuth: degrees from +row toward +col, in [0, 360).
    """

    hour: float
    elevation: float
    azimuth: float

    def __post_init__(self):
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError(f"elevation {self.elevation} outside [-90, 90]")
        if not 0.0 <= self.azimuth < 360.0:
            raise ValueError(f"azimuth {self.azimuth} outside [0, 360)")

    @property
    def is_daytime(self) -> bool:
        return self.elevation > 0.0


@dataclass(frozen=True)
class EnvParams:
    """Tunable constants of the environment model (config-overridable)."""

    night_elevation: float = -10.0
    t_base: float = 18.0  # degrees C at night / sunrise
    t_amplitude: float = 12.0  # added at peak elevation
    shade_cooling: float = 4.0  # degrees C subtracted in shadow
    t_min: float = 10.0  # hard floor after shade cooling
    shade_light_factor: float = 0.8  # fraction of light removed in shadow
    shadow_max_steps: int = 16  # ray length in cells

    def __post_init__(self):
        if self.shadow_max_steps < 1:
            raise ValueError("shadow_max_steps must be >= 1")
        if not 0.0 <= self.shade_light_factor <= 1.0:
            raise ValueError("shade_light_factor must be in [0, 1]")


DEFAULT_ENV = EnvParams()


def sun_state(hour: float, params: EnvParams = DEFAULT_ENV) -> SunState:
    """Sun elevation/azimuth at a simulated local hour in [0, 24).

    Elevation is 90*sin(pi*(hour-6)/12) between 06:00 and 18:00 and a
    fixed below-horizon value otherwise; azimuth is 90 + 15*(hour-12)
    wrapped to [0, 360), sweeping 15 degrees per hour.
    """
    if not 0.0 <= hour < 24.0:
        raise ValueError(f"hour {hour} outside [0, 24)")
    if 6.0 <= hour <= 18.0:
        elevation = 90.0 * _sinpi((hour - 6.0) / 12.0)
    else:
        elevation = params.night_elevation
    azimuth = (90.0 + 15.0 * (hour - 12.0)) % 360.0
    return SunState(hour=hour, elevation=elevation, azimuth=azimuth)


def sun_direction(azimuth_deg: float) -> tuple[float, float]:
    """Unit (dr, dc) vector pointing from a cell toward the sun."""
    return _dirvec(azimuth_deg)


def _shifted_heights(heights: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """out[r, c] = heights[r + dr, c + dc], zero where that is out of bounds."""
    rows, cols = heights.shape
    out = np.zeros_like(heights)
    n_r = max(0, rows - abs(dr))
    n_c = max(0, cols - abs(dc))
    if n_r and n_c:
        src_r0, dst_r0 = max(dr, 0), max(-dr, 0)
        src_c0, dst_c0 = max(dc, 0), max(-dc, 0)
        out[dst_r0:dst_r0 + n_r, dst_c0:dst_c0 + n_c] = \
            heights[src_r0:src_r0 + n_r, src_c0:src_c0 + n_c]
    return out


def shadow_map(layout: Layout, sun: SunState,
               params: EnvParams = DEFAULT_ENV) -> np.ndarray:
    """Binary per-cell shadow (rows, cols) float array of 0.0 / 1.0.

    At or below the horizon everything is shadowed. Otherwise a cell is
    shadowed iff stepping toward the sun azimuth, some cell k steps away
    (k = 1..shadow_max_steps, positions rounded to the grid) holds an
    object of height h with h > k * cell_size * tan(elevation). A cell's
    own contents never shadow it, and the park boundary is open (rays
    leaving the grid find no occluder).
    """
    rows, cols = layout.dims.rows, layout.dims.cols
    if sun.elevation <= 0.0:
        return np.ones((rows, cols))
    dr, dc = _dirvec(sun.azimuth)
    tan_e = math.tan(math.radians(sun.elevation))
    shadow = np.zeros((rows, cols), dtype=bool)
    for k in range(1, params.shadow_max_steps + 1):
        off_r = int(np.rint(k * dr))
        off_c = int(np.rint(k * dc))
        blocker = _shifted_heights(layout.heights, off_r, off_c)
        shadow |= blocker > k * layout.dims.cell_size * tan_e
    return shadow.astype(np.float64)


def light_map(layout: Layout, sun: SunState, params: EnvParams = DEFAULT_ENV,
              shadow: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-cell light intensity in [0, 1].

    Clear-sky light is max(0, sin(elevation)); shaded cells keep only
    (1 - shade_light_factor) of it. Night is 0 everywhere.
    """
    if shadow is None:
        shadow = shadow_map(layout, sun, params)
    clear = max(0.0, math.sin(math.radians(sun.elevation)))
    return clear * (1.0 - params.shade_light_factor * shadow)


def temperature_map(layout: Layout, sun: SunState,
                    params: EnvParams = DEFAULT_ENV,
                    shadow: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-cell temperature in degrees C.

    Base temperature follows the daylight half-sine between t_base and
    t_base + t_amplitude; shaded cells lose shade_cooling degrees; the
    result never drops below t_min.
    """
    if shadow is None:
        shadow = shadow_map(layout, sun, params)
    base = params.t_base + params.t_amplitude * max(0.0, _sinpi((sun.hour - 6.0) / 12.0))
    temp = base - params.shade_cooling * shadow
    return np.maximum(temp, params.t_min)


@dataclass(frozen=True)
class EnvField:
    """Per-cell environmental attributes at one instant."""

    temperature: np.ndarray
    light: np.ndarray
    shadow: np.ndarray

    def __post_init__(self):
        shape = self.shadow.shape
        if self.temperature.shape != shape or self.light.shape != shape:
            raise ValueError("temperature, light, and shadow shapes differ")


def env_field(layout: Layout, sun: SunState,
              params: EnvParams = DEFAULT_ENV) -> EnvField:
    """All environmental attributes for a layout at one sun state."""
    shadow = shadow_map(layout, sun, params)
    return EnvField(
        temperature=temperature_map(layout, sun, params, shadow=shadow),
        light=light_map(layout, sun, params, shadow=shadow),
        shadow=shadow,
    )
