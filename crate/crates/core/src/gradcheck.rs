//! Central finite-difference gradient checking.

use alloc::vec::Vec;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::seed;

/// Coordinates where both the analytic and numeric derivative are below this
/// magnitude, and agree to within it, count as exact matches.
pub const ABS_FLOOR: f64 = 1e-8;

/// Which coordinates to perturb.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subsample {
    pub count: usize,
    pub seed: u64,
}

/// Compares the analytic gradient returned by `loss` against central
/// differences `(L(p + h·e_i) − L(p − h·e_i)) / 2h` and returns the worst
/// relative deviation `|a − n| / max(|a|, |n|)` over the checked coordinates.
///
/// `loss` must return the scalar and its flat gradient, laid out in
/// [`Parameters::to_flat`] order. With `subsample = None` every coordinate is
/// checked.
pub fn grad_check<P, F>(loss: F, params: &P, step: f64, subsample: Option<Subsample>) -> Result<f64>
where
    P: Parameters + Clone,
    F: Fn(&P) -> Result<(f64, Vec<f64>)>,
{
    if !(step > 0.0) {
        return Err(Error::Precondition("grad_check step must be > 0".into()));
    }
    let base = params.to_flat();
    let (_, analytic) = loss(params)?;
    if analytic.len() != base.len() {
        return Err(Error::shape("grad_check analytic gradient", base.len(), analytic.len()));
    }
    let coords: Vec<usize> = match subsample {
        Some(s) if s.count < base.len() => {
            let mut rng = seed::rng(s.seed);
            let mut v = index::sample(&mut rng, base.len(), s.count).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..base.len()).collect(),
    };

    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut worst = 0.0f64;
    for &i in &coords {
        flat[i] = base[i] + step;
        probe.load_flat(&flat)?;
        let (fp, _) = loss(&probe)?;
        flat[i] = base[i] - step;
        probe.load_flat(&flat)?;
        let (fm, _) = loss(&probe)?;
        flat[i] = base[i];

        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic[i];
        let diff = (a - numeric).abs();
        let scale = a.abs().max(numeric.abs());
        let dev = if scale < ABS_FLOOR && diff < ABS_FLOOR {
            0.0
        } else {
            diff / scale
        };
        if dev.is_nan() {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(dev);
    }
    Ok(worst)
}
