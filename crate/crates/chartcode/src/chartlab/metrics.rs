//! Rendering-based verification metrics: mask IoU and execution success rate.

use crate::chartlab::dsl::DSLProgram;
use crate::chartlab::raster::{execute, Raster};
use crate::{Error, Result};

/// Intersection-over-union of the two rasters' ink masks. Two blank images
/// are defined to agree perfectly (IoU 1.0).
pub fn iou(a: &Raster, b: &Raster) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::contract(format!(
            "iou on mismatched rasters: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let ma = a.mask();
    let mb = b.mask();
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in ma.iter().zip(&mb) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Fraction of generated programs that execute and reproduce their reference
/// raster with IoU at or above `threshold`. Programs that fail to parse or
/// render score zero. `threshold` must sit in the calibrated [0.75, 0.90]
/// band and the batch must be non-empty.
pub fn success_rate(
    generated: &[DSLProgram],
    references: &[Raster],
    threshold: f64,
) -> Result<f64> {
    if generated.is_empty() || generated.len() != references.len() {
        return Err(Error::contract(format!(
            "success_rate over {} programs vs {} references",
            generated.len(),
            references.len()
        )));
    }
    if !(0.75..=0.90).contains(&threshold) {
        return Err(Error::contract(format!(
            "success threshold {threshold} outside [0.75, 0.90]"
        )));
    }
    let mut hits = 0usize;
    for (prog, truth) in generated.iter().zip(references) {
        if let Ok(img) = execute(prog) {
            if iou(&img, truth)? >= threshold {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / generated.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chartlab::spec::{emit_code, sample_spec, TypeMix};
    use crate::chartlab::raster::rasterize_spec;
    use crate::rng::Rng;

    fn blank() -> Raster {
        Raster::from_f64(4, 4, &vec![1.0; 48])
    }

    fn with_ink(pixels: &[(usize, usize)]) -> Raster {
        let mut data = vec![1.0; 48];
        for &(x, y) in pixels {
            let i = 3 * (y * 4 + x);
            data[i] = 0.0;
            data[i + 1] = 0.0;
            data[i + 2] = 0.0;
        }
        Raster::from_f64(4, 4, &data)
    }

    #[test]
    fn identical_masks_score_one() {
        let a = with_ink(&[(0, 0), (1, 1), (2, 3)]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_masks_score_zero() {
        let a = with_ink(&[(0, 0), (1, 1)]);
        let b = with_ink(&[(2, 2), (3, 3)]);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn half_overlap_scores_one_third() {
        // |A|=2, |B|=2, |A∩B|=1, |A∪B|=3
        let a = with_ink(&[(0, 0), (1, 1)]);
        let b = with_ink(&[(1, 1), (2, 2)]);
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn both_blank_scores_one() {
        assert_eq!(iou(&blank(), &blank()).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = blank();
        let b = Raster::from_f64(2, 2, &vec![1.0; 12]);
        assert!(iou(&a, &b).is_err());
    }

    #[test]
    fn success_rate_counts_hits_and_failures() {
        let mix = TypeMix::default_mix();
        let root = Rng::from_seed(41);
        let mut programs = Vec::new();
        let mut refs = Vec::new();
        for i in 0..10 {
            let mut rng = root.child_idx("sr", i);
            let spec = sample_spec(&mut rng, &mix);
            refs.push(rasterize_spec(&spec).unwrap());
            if i < 3 {
                programs.push(emit_code(&spec)); // exact reproduction
            } else {
                programs.push(DSLProgram { tokens: vec![3] }); // truncated, fails to parse
            }
        }
        let rate = success_rate(&programs, &refs, 0.85).unwrap();
        assert!((rate - 0.3).abs() < 1e-15);
    }

    #[test]
    fn success_rate_contract_checks() {
        assert!(success_rate(&[], &[], 0.85).is_err());
        let prog = DSLProgram { tokens: vec![3] };
        assert!(success_rate(&[prog.clone()], &[blank()], 0.5).is_err());
        assert!(success_rate(&[prog], &[blank(), blank()], 0.85).is_err());
    }
}
