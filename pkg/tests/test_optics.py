"""Wave propagation checks against first-principles oracles: a naive DFT,
closed-form single-frequency fields, and focus geometry."""

import numpy as np
import pytest

from holoforge import optics, metrics
from holoforge.optics import ComplexField, PropagationParams


PARAMS = PropagationParams()


def naive_dft2(values, inverse=False):
    """O(N^4) direct transform with unitary scaling."""
    h, w = values.shape
    sign = 2j if inverse else -2j
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = 0.0 + 0.0j
            for y in range(h):
                for x in range(w):
                    acc += values[y, x] * np.exp(sign * np.pi * (u * y / h + v * x / w))
            out[u, v] = acc
    return out / np.sqrt(h * w)


def random_field(seed, size=16):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    return ComplexField(vals, pitch=PARAMS.pitch, wavelength=PARAMS.wavelength)


class TestFFT:
    @pytest.mark.parametrize("size", [2, 4, 8, 16])
    def test_matches_naive_dft(self, size):
        f = random_field([1, size], size)
        ours = optics.fft2(f).values
        ref = naive_dft2(f.values)
        assert np.abs(ours - ref).max() < 1e-6

    @pytest.mark.parametrize("size", [4, 8, 16])
    def test_inverse_matches_naive_dft(self, size):
        f = random_field([2, size], size)
        ours = optics.ifft2(f).values
        ref = naive_dft2(f.values, inverse=True)
        assert np.abs(ours - ref).max() < 1e-6

    def test_round_trip(self):
        f = random_field(3, 32)
        back = optics.ifft2(optics.fft2(f)).values
        rms = np.sqrt(np.mean(np.abs(back - f.values) ** 2))
        assert rms < 1e-6

    def test_delta_has_flat_spectrum(self):
        vals = np.zeros((8, 8), dtype=np.complex128)
        vals[3, 5] = 1.0
        f = ComplexField(vals, pitch=PARAMS.pitch, wavelength=PARAMS.wavelength)
        spec = optics.fft2(f).values
        np.testing.assert_allclose(np.abs(spec), 1.0 / 8.0, atol=1e-9)

    def test_parseval(self):
        f = random_field(4, 16)
        assert optics.field_energy(optics.fft2(f)) == pytest.approx(
            optics.field_energy(f), rel=1e-6)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ValueError):
            ComplexField(np.zeros((6, 6), dtype=np.complex128),
                         pitch=PARAMS.pitch, wavelength=PARAMS.wavelength)


class TestPropagation:
    def test_zero_distance_is_identity(self):
        f = random_field(5, 32)
        out = optics.angular_spectrum_propagate(f, 0.0).values
        rms = np.sqrt(np.mean(np.abs(out - f.values) ** 2))
        assert rms < 1e-6

    @pytest.mark.parametrize("z", [0.5e-3, 1e-3, 3e-3, 6e-3])
    def test_forward_backward_round_trip(self, z):
        f = random_field([6, int(z * 1e6)], 32)
        there = optics.angular_spectrum_propagate(f, z)
        back = optics.angular_spectrum_propagate(there, -z).values
        rms = np.sqrt(np.mean(np.abs(back - f.values) ** 2))
        assert rms < 1e-6

    def test_energy_conserved_for_many_fields_and_distances(self):
        distances = [0.5e-3, 1e-3, 2e-3, 4e-3, 6e-3]
        for k in range(20):
            f = random_field([7, k], 16)
            e0 = optics.field_energy(f)
            for z in distances:
                ez = optics.field_energy(optics.angular_spectrum_propagate(f, z))
                assert abs(ez - e0) / e0 < 1e-6

    def test_uniform_field_gains_plane_wave_phase(self):
        size = 32
        vals = np.ones((size, size), dtype=np.complex128)
        f = ComplexField(vals, pitch=PARAMS.pitch, wavelength=PARAMS.wavelength)
        z = 2.0e-3
        out = optics.angular_spectrum_propagate(f, z).values
        expected = np.exp(2j * np.pi * z / PARAMS.wavelength)
        assert np.abs(out - expected).max() < 1e-6
        np.testing.assert_allclose(np.abs(out), 1.0, atol=1e-6)

    def test_intensity_invariant_to_global_phase(self):
        rng = np.random.default_rng(8)
        amp = rng.uniform(0, 1, (32, 32))
        phase = rng.uniform(0, 1, (32, 32))
        base = optics.reconstruct(amp, phase, 1.0, 2e-3, PARAMS)
        shifted = np.mod(phase + 0.25, 1.0)  # +pi/2 global offset in radians
        other = optics.reconstruct(amp, shifted, 1.0, 2e-3, PARAMS)
        np.testing.assert_allclose(base, other, atol=1e-6)


class TestLayerGeometry:
    def test_layer_centers_cover_range(self):
        centers = optics.layer_centers(PARAMS)
        assert len(centers) == PARAMS.n_layers
        step = (PARAMS.z_range[1] - PARAMS.z_range[0]) / PARAMS.n_layers
        np.testing.assert_allclose(centers[0], PARAMS.z_range[0] + step / 2)
        np.testing.assert_allclose(np.diff(centers), step)

    def test_assign_layers_bounds(self):
        depth = np.array([[0.0, 0.5], [0.999, 1.0]])
        bins = optics.assign_layers(depth, 8)
        assert bins[0, 0] == 0
        assert bins[0, 1] == 4
        assert bins[1, 0] == 7
        assert bins[1, 1] == 7  # depth 1.0 clips into the last bin

    def test_luminance_weights(self):
        rgb = np.zeros((3, 2, 2))
        rgb[0] = 1.0
        np.testing.assert_allclose(optics.luminance_of_rgb(rgb), 0.299)


class TestSynthesize:
    def test_empty_scene(self):
        lum = np.zeros((16, 16))
        depth = np.ones((16, 16))
        amp, phase, scale = optics.synthesize_hologram(lum, depth, PARAMS)
        assert scale == 0.0
        assert np.all(amp == 0.0)
        assert np.all(phase == 0.5)

    def test_flat_scene_round_trip_psnr(self):
        rng = np.random.default_rng(9)
        lum = np.zeros((64, 64))
        lum[16:48, 20:44] = rng.uniform(0.3, 1.0, (32, 24))
        depth = np.full((64, 64), 0.5)
        amp, phase, scale = optics.synthesize_hologram(lum, depth, PARAMS)
        centers = optics.layer_centers(PARAMS)
        z = centers[optics.assign_layers(depth, PARAMS.n_layers)[0, 0]]
        recon = optics.reconstruct(amp, phase, scale, z, PARAMS)
        target = lum / lum.max()
        # reconstruct returns normalized intensity, so compare against the
        # squared (amplitude) scene
        assert metrics.psnr(recon, target ** 2) > 40.0

    def test_point_source_refocuses_to_its_pixel(self):
        lum = np.zeros((64, 64))
        lum[20, 37] = 1.0
        depth = np.full((64, 64), 0.25)
        amp, phase, scale = optics.synthesize_hologram(lum, depth, PARAMS)
        centers = optics.layer_centers(PARAMS)
        z = centers[optics.assign_layers(depth, PARAMS.n_layers)[0, 0]]
        recon = optics.reconstruct(amp, phase, scale, z, PARAMS)
        assert np.unravel_index(np.argmax(recon), recon.shape) == (20, 37)

    def test_out_of_range_values_rejected(self):
        lum = np.full((16, 16), 1.5)
        depth = np.ones((16, 16))
        with pytest.raises(ValueError):
            optics.synthesize_hologram(lum, depth, PARAMS)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ValueError):
            optics.synthesize_hologram(np.zeros((10, 10)), np.ones((10, 10)), PARAMS)

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        lum = rng.uniform(0, 1, (32, 32))
        depth = rng.uniform(0, 1, (32, 32))
        a1 = optics.synthesize_hologram(lum, depth, PARAMS)
        a2 = optics.synthesize_hologram(lum, depth, PARAMS)
        assert np.array_equal(a1[0], a2[0])
        assert np.array_equal(a1[1], a2[1])
        assert a1[2] == a2[2]


class TestReconstruct:
    def test_zero_amplitude_gives_zero_intensity(self):
        amp = np.zeros((16, 16))
        phase = np.full((16, 16), 0.5)
        out = optics.reconstruct(amp, phase, 1.0, 3e-3, PARAMS)
        assert np.all(out == 0.0)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            optics.reconstruct(np.zeros((16, 16)), np.zeros((32, 32)), 1.0, 1e-3, PARAMS)

    def test_output_normalized(self):
        rng = np.random.default_rng(11)
        amp = rng.uniform(0, 1, (32, 32))
        phase = rng.uniform(0, 1, (32, 32))
        out = optics.reconstruct(amp, phase, 2.5, 2e-3, PARAMS)
        assert out.max() == pytest.approx(1.0)
        assert out.min() >= 0.0


class TestFocusSelectivity:
    """Two shapes at separated depths: each is rendered best at its own z."""

    @staticmethod
    def _two_layer_scene():
        lum = np.zeros((64, 64))
        depth = np.ones((64, 64))
        yy, xx = np.mgrid[0:64, 0:64]
        circle = (yy - 18) ** 2 + (xx - 18) ** 2 <= 81
        square = (np.abs(yy - 45) <= 8) & (np.abs(xx - 45) <= 8)
        lum[circle] = 0.9
        depth[circle] = 0.1
        lum[square] = 0.8
        depth[square] = 0.7
        return lum, depth, circle, square

    def test_each_layer_wins_at_its_own_depth(self):
        lum, depth, circle, square = self._two_layer_scene()
        amp, phase, scale = optics.synthesize_hologram(lum, depth, PARAMS)
        bins = optics.assign_layers(depth, PARAMS.n_layers)
        centers = optics.layer_centers(PARAMS)
        z_near = centers[bins[18, 18]]
        z_far = centers[bins[45, 45]]

        near_img = np.where(circle, lum, 0.0)
        near_img /= near_img.max()
        far_img = np.where(square, lum, 0.0)
        far_img /= far_img.max()

        at_near = optics.reconstruct(amp, phase, scale, z_near, PARAMS)
        at_far = optics.reconstruct(amp, phase, scale, z_far, PARAMS)

        assert metrics.psnr(at_near, near_img) > metrics.psnr(at_far, near_img)
        assert metrics.psnr(at_far, far_img) > metrics.psnr(at_near, far_img)

    def test_single_depth_contrast_exceeds_3db(self):
        # ten flat scenes, each at a different depth: in-focus reconstruction
        # beats a 3 mm defocus by a wide margin
        centers = optics.layer_centers(PARAMS)
        for k in range(10):
            rng = np.random.default_rng([12, k])
            lum = np.zeros((64, 64))
            cy, cx = rng.integers(16, 48, size=2)
            ry, rx = rng.integers(6, 14, size=2)
            yy, xx = np.mgrid[0:64, 0:64]
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            lum[mask] = rng.uniform(0.4, 1.0)
            d = (k % PARAMS.n_layers + 0.5) / PARAMS.n_layers
            depth = np.full((64, 64), d)
            amp, phase, scale = optics.synthesize_hologram(lum, depth, PARAMS)
            z = centers[k % PARAMS.n_layers]
            target = lum / lum.max()
            sharp = metrics.psnr(optics.reconstruct(amp, phase, scale, z, PARAMS), target)
            blurred = metrics.psnr(
                optics.reconstruct(amp, phase, scale, z + 3e-3, PARAMS), target)
            assert sharp - blurred >= 3.0, f"scene {k}: {sharp:.2f} vs {blurred:.2f}"


class TestComplexFieldValidation:
    def test_nonfinite_rejected(self):
        vals = np.ones((8, 8), dtype=np.complex128)
        vals[0, 0] = np.nan
        with pytest.raises(ValueError):
            ComplexField(vals, pitch=PARAMS.pitch, wavelength=PARAMS.wavelength)

    def test_bad_pitch_rejected(self):
        with pytest.raises(ValueError):
            ComplexField(np.ones((8, 8), dtype=np.complex128),
                         pitch=0.0, wavelength=PARAMS.wavelength)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            PropagationParams(n_layers=0)
        with pytest.raises(ValueError):
            PropagationParams(z_range=(5e-3, 1e-3))
