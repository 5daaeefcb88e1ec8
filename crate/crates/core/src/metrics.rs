//! Depth-completion error metrics and the Gaussian negative log-likelihood
//! diagnostic.
//!
//! Metrics are computed per sample over pixels with valid ground truth (and a
//! valid prediction), then averaged across samples with [`aggregate`].

use log::warn;

use crate::error::{Error, Result};
use crate::raster::DepthGrid;
use crate::scalar::Scalar;

pub const DEFAULT_THETAS: [f64; 3] = [1.02, 1.05, 1.25];
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T> {
    pub rmse: T,
    pub mae: T,
    pub irmse: T,
    pub imae: T,
    pub rel: T,
    /// `(θ, δ_θ)` in the order the thresholds were requested.
    pub delta: Vec<(T, T)>,
    pub nll: Option<T>,
    pub n_valid: usize,
}

impl<T: Scalar> EvalReport<T> {
    pub fn delta_at(&self, theta: T) -> Option<T> {
        self.delta.iter().find(|(t, _)| *t == theta).map(|&(_, d)| d)
    }

    /// Ordered `(key, value)` pairs, the common source for both text formats.
    pub fn fields(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("rmse".to_string(), self.rmse.to_f64_lossy()),
            ("mae".to_string(), self.mae.to_f64_lossy()),
            ("irmse".to_string(), self.irmse.to_f64_lossy()),
            ("imae".to_string(), self.imae.to_f64_lossy()),
            ("rel".to_string(), self.rel.to_f64_lossy()),
        ];
        for &(theta, d) in &self.delta {
            out.push((format!("delta_{theta}"), d.to_f64_lossy()));
        }
        if let Some(nll) = self.nll {
            out.push(("nll".to_string(), nll.to_f64_lossy()));
        }
        out.push(("n_valid".to_string(), self.n_valid as f64));
        out
    }

    /// One `key=value` line per metric.
    pub fn to_key_value(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

/// Normalized per-pixel depth loss `(d² + α|d|) / max|d|` over `pixels`,
/// with `d = μ − x_g`. All zeros when the prediction is exact.
pub fn depth_loss<T: Scalar>(
    pred_mu: &DepthGrid<T>,
    gt: &DepthGrid<T>,
    pixels: &[usize],
    alpha: T,
) -> Vec<T> {
    let diffs: Vec<T> = pixels
        .iter()
        .map(|&i| pred_mu.pixel(i)[0] - gt.pixel(i)[0])
        .collect();
    let max_l1 = diffs.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    if max_l1 == T::zero() {
        return vec![T::zero(); diffs.len()];
    }
    diffs
        .iter()
        .map(|&d| (d * d + alpha * d.abs()) / max_l1)
        .collect()
}

/// Pixels with valid ground truth and a valid prediction, row-major.
pub fn evaluation_pixels<T: Scalar>(pred_mu: &DepthGrid<T>, gt: &DepthGrid<T>) -> Vec<usize> {
    let mut missing = 0usize;
    let pixels: Vec<usize> = gt
        .valid_indices()
        .filter(|&i| {
            let ok = pred_mu.is_valid(i);
            missing += usize::from(!ok);
            ok
        })
        .collect();
    if missing > 0 {
        warn!("{missing} ground-truth pixels have no prediction and are skipped");
    }
    pixels
}

pub fn evaluate<T: Scalar>(
    pred_mu: &DepthGrid<T>,
    pred_lambda: Option<&DepthGrid<T>>,
    gt: &DepthGrid<T>,
    thetas: &[T],
    alpha: T,
) -> Result<EvalReport<T>> {
    pred_mu.ensure_same_shape(gt, "prediction vs ground truth")?;
    if let Some(lam) = pred_lambda {
        lam.ensure_same_shape(gt, "precision vs ground truth")?;
    }
    let pixels = evaluation_pixels(pred_mu, gt);
    if pixels.is_empty() {
        return Err(Error::EmptyValidSet);
    }
    let n = T::lit(pixels.len() as f64);

    let mut sq = T::zero();
    let mut abs = T::zero();
    let mut rel = T::zero();
    let mut inv_sq = T::zero();
    let mut inv_abs = T::zero();
    let mut n_inv = 0usize;
    let mut hits = vec![0usize; thetas.len()];
    for &i in &pixels {
        let (x, g) = (pred_mu.pixel(i)[0], gt.pixel(i)[0]);
        let d = x - g;
        sq += d * d;
        abs += d.abs();
        if x > T::zero() && g > T::zero() {
            let di = T::one() / g - T::one() / x;
            inv_sq += di * di;
            inv_abs += di.abs();
            rel += d.abs() / g;
            n_inv += 1;
            let ratio = (g / x).max(x / g);
            for (h, &theta) in hits.iter_mut().zip(thetas) {
                if ratio < theta {
                    *h += 1;
                }
            }
        }
    }
    if n_inv < pixels.len() {
        warn!(
            "{} pixels with non-positive depth skipped by inverse and relative metrics",
            pixels.len() - n_inv
        );
    }
    let (irmse, imae, rel) = if n_inv == 0 {
        (T::zero(), T::zero(), T::zero())
    } else {
        let m = T::lit(n_inv as f64);
        ((inv_sq / m).sqrt(), inv_abs / m, rel / m)
    };

    let nll = pred_lambda.map(|lam| {
        let loss = depth_loss(pred_mu, gt, &pixels, alpha);
        let total: T = pixels
            .iter()
            .zip(&loss)
            .map(|(&i, &lx)| {
                let l = if lam.is_valid(i) { lam.pixel(i)[0] } else { T::zero() };
                if l > T::zero() {
                    l * lx - l.ln()
                } else {
                    T::infinity()
                }
            })
            .sum();
        total / n
    });

    Ok(EvalReport {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        irmse,
        imae,
        rel,
        delta: thetas
            .iter()
            .zip(&hits)
            .map(|(&t, &h)| (t, T::lit(h as f64) / n))
            .collect(),
        nll,
        n_valid: pixels.len(),
    })
}

/// Unweighted mean of each metric across samples; `n_valid` is summed.
pub fn aggregate<T: Scalar>(reports: &[EvalReport<T>]) -> Result<EvalReport<T>> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot aggregate an empty report list".into()))?;
    if reports
        .iter()
        .any(|r| r.delta.iter().map(|d| d.0).ne(first.delta.iter().map(|d| d.0)))
    {
        return Err(Error::InvalidParameter(
            "reports use different delta thresholds".into(),
        ));
    }
    let k = T::lit(reports.len() as f64);
    let mean = |f: &dyn Fn(&EvalReport<T>) -> T| reports.iter().map(f).sum::<T>() / k;
    let delta = (0..first.delta.len())
        .map(|j| (first.delta[j].0, mean(&|r| r.delta[j].1)))
        .collect();
    let nll = reports
        .iter()
        .map(|r| r.nll)
        .collect::<Option<Vec<T>>>()
        .map(|v| v.into_iter().sum::<T>() / k);
    Ok(EvalReport {
        rmse: mean(&|r| r.rmse),
        mae: mean(&|r| r.mae),
        irmse: mean(&|r| r.irmse),
        imae: mean(&|r| r.imae),
        rel: mean(&|r| r.rel),
        delta,
        nll,
        n_valid: reports.iter().map(|r| r.n_valid).sum(),
    })
}
