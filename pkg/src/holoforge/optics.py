"""Scalar wave optics on a regular grid: unitary FFTs, band-limited angular
spectrum propagation, layer-based hologram synthesis, and focal-plane
reconstruction. Everything here is plain numpy on complex fields; nothing
is differentiable and nothing needs to be, since these routines produce the
ground truth the network learns from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class PropagationParams:
    wavelength: float = 520e-9
    pitch: float = 8e-6
    n_layers: int = 8
    z_range: tuple = (0.0, 6e-3)

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if self.pitch <= 0:
            raise ValueError(f"pixel pitch must be positive, got {self.pitch}")
        if self.n_layers < 1:
            raise ValueError(f"need at least one depth layer, got {self.n_layers}")
        z_min, z_max = self.z_range
        if not z_min < z_max:
            raise ValueError(f"z range must satisfy z_min < z_max, got {self.z_range}")


@dataclass
class ComplexField:
    """A monochromatic wavefield sampled on a square-pixel grid."""

    values: np.ndarray
    pitch: float
    wavelength: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim != 2:
            raise ValueError(f"a field is a 2-d array, got {v.ndim}-d")
        h, w = v.shape
        if not (is_power_of_two(h) and is_power_of_two(w)):
            raise ValueError(f"field dimensions must be powers of two, got {h}x{w}")
        if not (np.isfinite(v.real).all() and np.isfinite(v.imag).all()):
            raise ValueError("field contains non-finite values")
        if self.pitch <= 0 or self.wavelength <= 0:
            raise ValueError("pitch and wavelength must be positive")
        self.values = v

    @property
    def shape(self):
        return self.values.shape

    def like(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(values, self.pitch, self.wavelength)


def fft2(field: ComplexField) -> ComplexField:
    """Unitary 2-d DFT (1/sqrt(N) scaling each way)."""
    return field.like(np.fft.fft2(field.values, norm="ortho"))


def ifft2(field: ComplexField) -> ComplexField:
    return field.like(np.fft.ifft2(field.values, norm="ortho"))


def transfer_function(shape, pitch: float, wavelength: float, z: float) -> np.ndarray:
    """Angular-spectrum transfer function with a hard evanescent cutoff.

    H(fx, fy) = exp(i 2 pi z sqrt(1/wl^2 - fx^2 - fy^2)) where the root is
    real, zero beyond it: those frequencies decay instead of propagating.
    """
    h, w = shape
    fy = np.fft.fftfreq(h, d=pitch)
    fx = np.fft.fftfreq(w, d=pitch)
    f2 = fy[:, None] ** 2 + fx[None, :] ** 2
    inv_wl2 = 1.0 / (wavelength * wavelength)
    propagating = f2 <= inv_wl2
    kz = np.sqrt(np.maximum(inv_wl2 - f2, 0.0))
    tf = np.exp(2j * np.pi * z * kz)
    tf[~propagating] = 0.0
    return tf


def angular_spectrum_propagate(field: ComplexField, z: float) -> ComplexField:
    spectrum = np.fft.fft2(field.values, norm="ortho")
    spectrum *= transfer_function(field.shape, field.pitch, field.wavelength, z)
    return field.like(np.fft.ifft2(spectrum, norm="ortho"))


def field_energy(field: ComplexField) -> float:
    return float(np.sum(np.abs(field.values) ** 2))


def luminance_of_rgb(rgb: np.ndarray) -> np.ndarray:
    """Collapse a (3,h,w) RGB stack to the standard luminance plane."""
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError(f"expected a (3,h,w) RGB array, got shape {rgb.shape}")
    return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]


def layer_centers(params: PropagationParams) -> np.ndarray:
    """Propagation distance of each depth bin's center, nearest first."""
    z_min, z_max = params.z_range
    step = (z_max - z_min) / params.n_layers
    return z_min + (np.arange(params.n_layers) + 0.5) * step


def assign_layers(depth: np.ndarray, n_layers: int) -> np.ndarray:
    """Quantize a [0,1] depth map into bin indices 0..n_layers-1."""
    idx = np.floor(depth * n_layers).astype(np.int64)
    return np.clip(idx, 0, n_layers - 1)


def _check_image(img: np.ndarray, name: str):
    if img.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got {img.ndim}-d")
    h, w = img.shape
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ValueError(f"{name} dimensions must be powers of two, got {h}x{w}")
    lo, hi = float(img.min()), float(img.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{name} values must lie in [0,1], found range [{lo:g}, {hi:g}]")


def synthesize_hologram(luminance: np.ndarray, depth: np.ndarray,
                        params: PropagationParams = PropagationParams()):
    """Layer-based hologram of a luminance/depth scene.

    Depth is cut into n_layers bins across z_range (0 = nearest). Each
    layer's pixels become a zero-phase source plane that is propagated back
    by its bin-center distance to the hologram plane at z = 0; the complex
    sum over layers is returned in polar form: amplitude normalized to
    [0,1], the normalizing scale, and phase mapped from (-pi, pi] to [0,1].

    Returns (amplitude, phase, scale). With scale recorded the synthesis is
    exactly invertible by `reconstruct`.
    """
    luminance = np.asarray(luminance, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    _check_image(luminance, "luminance")
    _check_image(depth, "depth")
    if luminance.shape != depth.shape:
        raise ValueError(f"luminance {luminance.shape} and depth {depth.shape} differ")

    bins = assign_layers(depth, params.n_layers)
    centers = layer_centers(params)
    total = np.zeros(luminance.shape, dtype=np.complex128)
    for k in range(params.n_layers):
        mask = bins == k
        if not mask.any():
            continue
        plane = np.where(mask, luminance, 0.0)
        if not plane.any():
            continue
        src = ComplexField(plane.astype(np.complex128), params.pitch, params.wavelength)
        total += angular_spectrum_propagate(src, -centers[k]).values

    scale = float(np.abs(total).max())
    if scale == 0.0:
        zeros = np.zeros_like(luminance)
        return zeros, np.full_like(luminance, 0.5), 0.0
    amplitude = np.abs(total) / scale
    phase = (np.angle(total) + np.pi) / (2.0 * np.pi)
    return amplitude, phase, scale


def reconstruct(amplitude: np.ndarray, phase: np.ndarray, scale: float, z: float,
                params: PropagationParams = PropagationParams()) -> np.ndarray:
    """Numerically refocus a stored hologram at distance z.

    Rebuilds the complex field from its normalized polar parts, propagates
    it forward, and returns the intensity image normalized to [0,1] by its
    own maximum (an all-dark result stays all zero).
    """
    amplitude = np.asarray(amplitude, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if amplitude.shape != phase.shape:
        raise ValueError(f"amplitude {amplitude.shape} and phase {phase.shape} differ")
    _check_image(amplitude, "amplitude")
    _check_image(phase, "phase")
    if scale < 0:
        raise ValueError(f"scale must be non-negative, got {scale}")

    radians = 2.0 * np.pi * phase - np.pi
    u0 = amplitude * scale * np.exp(1j * radians)
    field = ComplexField(u0, params.pitch, params.wavelength)
    out = angular_spectrum_propagate(field, z)
    intensity = np.abs(out.values) ** 2
    peak = intensity.max()
    if peak > 0:
        intensity /= peak
    return intensity
