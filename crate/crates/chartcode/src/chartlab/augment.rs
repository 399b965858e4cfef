//! Training-time image augmentation: small rotations and per-channel
//! brightness jitter, applied to the f64 image only (labels are untouched).

use crate::rng::Rng;

/// Rotate by `angle_deg` about the image center (bilinear, white fill) and
/// scale each channel by `jitter[c]`, clamping to [0,1]. An angle of 0 and
/// unit jitter reproduce the input exactly.
pub fn augment_with(
    width: usize,
    height: usize,
    data: &[f64],
    angle_deg: f64,
    jitter: [f64; 3],
) -> Vec<f64> {
    assert_eq!(data.len(), 3 * width * height, "image buffer size");
    let mut out = vec![1.0; data.len()];
    if angle_deg == 0.0 {
        out.copy_from_slice(data);
    } else {
        let theta = angle_deg.to_radians();
        let (sin, cos) = theta.sin_cos();
        let cx = width as f64 / 2.0 - 0.5;
        let cy = height as f64 / 2.0 - 0.5;
        for y in 0..height {
            for x in 0..width {
                // inverse-map the output pixel into source coordinates
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let sx = cx + cos * dx + sin * dy;
                let sy = cy - sin * dx + cos * dy;
                let x0 = sx.floor();
                let y0 = sy.floor();
                let fx = sx - x0;
                let fy = sy - y0;
                for c in 0..3 {
                    let sample = |xi: f64, yi: f64| -> f64 {
                        if xi < 0.0 || yi < 0.0 || xi >= width as f64 || yi >= height as f64 {
                            1.0 // white outside the frame
                        } else {
                            data[3 * (yi as usize * width + xi as usize) + c]
                        }
                    };
                    let v = sample(x0, y0) * (1.0 - fx) * (1.0 - fy)
                        + sample(x0 + 1.0, y0) * fx * (1.0 - fy)
                        + sample(x0, y0 + 1.0) * (1.0 - fx) * fy
                        + sample(x0 + 1.0, y0 + 1.0) * fx * fy;
                    out[3 * (y * width + x) + c] = v;
                }
            }
        }
    }
    for (i, v) in out.iter_mut().enumerate() {
        *v = (*v * jitter[i % 3]).clamp(0.0, 1.0);
    }
    out
}

/// Draw augmentation parameters from `rng`: rotation uniform in +/-5 degrees,
/// per-channel brightness in [0.9, 1.1].
pub fn augment_image(rng: &mut Rng, width: usize, height: usize, data: &[f64]) -> Vec<f64> {
    let angle = rng.uniform(-5.0, 5.0);
    let jitter = [
        rng.uniform(0.9, 1.1),
        rng.uniform(0.9, 1.1),
        rng.uniform(0.9, 1.1),
    ];
    augment_with(width, height, data, angle, jitter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartlab::spec::{sample_spec, TypeMix};
    use crate::chartlab::raster::rasterize_spec;
    use crate::rng::Rng;

    fn test_image() -> (usize, usize, Vec<f64>) {
        let spec = sample_spec(&mut Rng::from_seed(50), &TypeMix::default_mix());
        let img = rasterize_spec(&spec).unwrap();
        (img.width, img.height, img.to_f64())
    }

    #[test]
    fn identity_params_reproduce_input() {
        let (w, h, data) = test_image();
        let out = augment_with(w, h, &data, 0.0, [1.0, 1.0, 1.0]);
        assert_eq!(out, data);
    }

    #[test]
    fn jitter_scales_channels() {
        let (w, h, data) = test_image();
        let out = augment_with(w, h, &data, 0.0, [0.5, 1.0, 1.0]);
        for (i, (&o, &d)) in out.iter().zip(&data).enumerate() {
            let expect = if i % 3 == 0 { d * 0.5 } else { d };
            assert!((o - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn rotation_preserves_bounds_and_changes_pixels() {
        let (w, h, data) = test_image();
        let out = augment_with(w, h, &data, 4.0, [1.0, 1.0, 1.0]);
        assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_ne!(out, data);
    }

    #[test]
    fn sampled_augmentation_is_deterministic_in_seed() {
        let (w, h, data) = test_image();
        let a = augment_image(&mut Rng::from_seed(8), w, h, &data);
        let b = augment_image(&mut Rng::from_seed(8), w, h, &data);
        assert_eq!(a, b);
    }
}
