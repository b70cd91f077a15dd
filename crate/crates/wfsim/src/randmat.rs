//! Random coupling-matrix ensembles and spectral chaos statistics.
//!
//! The couplings are real symmetric matrices with independent Gaussian
//! entries: unit standard deviation on the diagonal and
//! `1/(sqrt(2) |n-m|^alpha)` off it. `alpha = 0` is the Gaussian Orthogonal
//! Ensemble; large `alpha` leaves only a narrow band of relevant
//! off-diagonal elements and the spectrum approaches integrable statistics.
//! Chaos is diagnosed through the ratio of consecutive level spacings, which
//! needs no unfolding.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, WfError};

/// Parameters of the banded Gaussian ensemble.
///
/// The generator is ChaCha8 seeded from `seed`; every realization index maps
/// to an independent ChaCha stream, so sampling is reproducible and
/// parallelizable with no shared state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub dim: usize,
    pub band_exponent: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn goe(dim: usize, seed: u64) -> Self {
        EnsembleSpec {
            dim,
            band_exponent: 0.0,
            seed,
        }
    }
}

/// Draw one symmetric coupling matrix from the ensemble on the given stream.
///
/// Entries are filled row by row over the upper triangle, so a fixed
/// `(spec, stream)` pair reproduces the identical matrix bit for bit.
pub fn sample_coupling(spec: &EnsembleSpec, stream: u64) -> Result<DMatrix<f64>> {
    if spec.dim < 2 {
        return Err(WfError::EnsembleTooSmall(spec.dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let d = spec.dim;
    let mut m = DMatrix::<f64>::zeros(d, d);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            let sigma = if i == j {
                1.0
            } else {
                inv_sqrt2 / ((j - i) as f64).powf(spec.band_exponent)
            };
            let v = sigma * z;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Sorted spectrum of a coupling matrix.
pub fn spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Spectrum, consecutive spacings, and spacing ratios r_n = s_{n+1}/s_n.
#[derive(Debug, Clone)]
pub struct SpectralStatistics {
    pub spectrum: Vec<f64>,
    pub spacings: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Ratio entries dropped because a zero spacing made them undefined.
    pub degenerate_excluded: usize,
}

/// Compute spacing ratios on the sorted spectrum.
///
/// Ratios touching a zero spacing are excluded and counted instead of being
/// propagated into histograms.
pub fn spacing_ratios(spectrum: &[f64]) -> Result<SpectralStatistics> {
    if spectrum.len() < 3 {
        return Err(WfError::SpectrumTooShort(spectrum.len()));
    }
    let mut sorted = spectrum.to_vec();
    sorted.sort_by(f64::total_cmp);
    let spacings: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let mut ratios = Vec::with_capacity(spacings.len() - 1);
    let mut degenerate_excluded = 0usize;
    for w in spacings.windows(2) {
        if w[0] > 0.0 && w[1] > 0.0 {
            ratios.push(w[1] / w[0]);
        } else {
            degenerate_excluded += 1;
        }
    }
    Ok(SpectralStatistics {
        spectrum: sorted,
        spacings,
        ratios,
        degenerate_excluded,
    })
}

/// Analytic spacing-ratio family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioFamily {
    Integrable,
    Goe,
}

impl RatioFamily {
    pub fn name(self) -> &'static str {
        match self {
            RatioFamily::Integrable => "integrable",
            RatioFamily::Goe => "goe",
        }
    }
}

/// Analytic density P(r).
///
/// Integrable: P(r) = 1/(1+r)^2. GOE: P(r) = 27(r+r^2)/(8(1+r+r^2)^{5/2}).
pub fn analytic_pr(r: f64, family: RatioFamily) -> Result<f64> {
    if r < 0.0 {
        return Err(WfError::NegativeRatio(r));
    }
    Ok(match family {
        RatioFamily::Integrable => 1.0 / ((1.0 + r) * (1.0 + r)),
        RatioFamily::Goe => {
            let q = 1.0 + r + r * r;
            27.0 * (r + r * r) / (8.0 * q.powf(2.5))
        }
    })
}

/// Closed-form cumulative distribution of P(r) on [0, r].
///
/// The GOE form follows from integrating the density once:
/// F(r) = 1/2 + u (u^2 - 9/4) / (2 (u^2 + 3/4)^{3/2}) with u = r + 1/2.
pub fn analytic_cdf(r: f64, family: RatioFamily) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    match family {
        RatioFamily::Integrable => r / (1.0 + r),
        RatioFamily::Goe => {
            let u = r + 0.5;
            let s2 = u * u + 0.75;
            0.5 + u * (u * u - 2.25) / (2.0 * s2 * s2.sqrt())
        }
    }
}

/// Kolmogorov–Smirnov distance between the sample and an analytic family.
pub fn ks_distance(samples: &[f64], family: RatioFamily) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = analytic_cdf(x, family);
        let lo = (f - i as f64 / n).abs();
        let hi = ((i + 1) as f64 / n - f).abs();
        worst = worst.max(lo).max(hi);
    }
    worst
}

/// Histogram of spacing ratios: 50 uniform bins on [0, 5], with the mass
/// beyond 5 reported separately rather than folded into the last bin.
#[derive(Debug, Clone)]
pub struct RatioHistogram {
    pub bin_edges: Vec<f64>,
    pub density: Vec<f64>,
    pub overflow_mass: f64,
    pub total_count: usize,
}

pub const HISTOGRAM_BINS: usize = 50;
pub const HISTOGRAM_MAX: f64 = 5.0;

pub fn ratio_histogram(ratios: &[f64]) -> RatioHistogram {
    let width = HISTOGRAM_MAX / HISTOGRAM_BINS as f64;
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    let mut overflow = 0usize;
    for &r in ratios {
        if r >= HISTOGRAM_MAX {
            overflow += 1;
        } else {
            let b = ((r / width) as usize).min(HISTOGRAM_BINS - 1);
            counts[b] += 1;
        }
    }
    let total = ratios.len();
    let norm = if total == 0 {
        0.0
    } else {
        1.0 / (total as f64 * width)
    };
    RatioHistogram {
        bin_edges: (0..=HISTOGRAM_BINS).map(|i| i as f64 * width).collect(),
        density: counts.iter().map(|&c| c as f64 * norm).collect(),
        overflow_mass: if total == 0 {
            0.0
        } else {
            overflow as f64 / total as f64
        },
        total_count: total,
    }
}

/// Pool the spacing ratios of `matrices` ensemble draws.
pub fn pooled_ratios(spec: &EnsembleSpec, matrices: usize) -> Result<Vec<f64>> {
    let mut all = Vec::new();
    for stream in 0..matrices as u64 {
        let m = sample_coupling(spec, stream)?;
        let stats = spacing_ratios(&spectrum(&m))?;
        all.extend(stats.ratios);
    }
    Ok(all)
}
