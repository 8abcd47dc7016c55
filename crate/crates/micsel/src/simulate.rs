//! Seedable samplers for every synthetic data-generating process.
//!
//! Draws use exact acceptance-rejection (never MCMC): the heavy-tailed
//! noise kernel is dominated by its own Gaussian factor, and the torus
//! density by the uniform square. Each sampler reports its proposal count
//! so callers can budget runtime.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{ArBakerParams, BakerParams, PolyBakerParams, VonMisesParams};

/// Number of leading simulated values discarded before a series is kept.
pub const DEFAULT_BURN_IN: usize = 200;

/// Replication-addressable RNG: one master seed, one stream per
/// replication. Distinct stream ids give independent sequences; the same
/// pair reproduces bit-identical draws on any machine or thread schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Proposal bookkeeping from a rejection sampler.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl SampleStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Guard against a silent hang if someone requests absurd shape values.
const MAX_REJECTIONS_PER_DRAW: u64 = 10_000_000;

/// Acceptance probability for a standardized-scale proposal `z`:
/// the heavy-tail factor `(1+z^2)^(-k)`, always in (0, 1].
pub(crate) fn baker_accept_prob(z: f64, k: f64) -> f64 {
    (1.0 + z * z).powf(-k)
}

fn draw_baker_std<R: Rng>(alpha: f64, k: f64, rng: &mut R, stats: &mut SampleStats) -> Result<f64> {
    let proposal_sd = 1.0 / alpha.sqrt();
    let mut rejections = 0u64;
    loop {
        let z: f64 = proposal_sd * rng.sample::<f64, _>(StandardNormal);
        let p = baker_accept_prob(z, k);
        debug_assert!(p <= 1.0 + 1e-12, "acceptance ratio {p} exceeds 1");
        stats.proposals += 1;
        if rng.random::<f64>() < p {
            stats.accepted += 1;
            return Ok(z);
        }
        rejections += 1;
        if rejections > MAX_REJECTIONS_PER_DRAW {
            return Err(Error::Config(format!(
                "rejection sampler stalled (alpha={alpha}, k={k}); acceptance rate too low"
            )));
        }
    }
}

/// Draws `n` standardized noise values: proposals are Normal(0, 1/alpha)
/// and a proposal `z` is accepted with probability `(1+z^2)^(-k)`.
pub fn sample_baker_std<R: Rng>(
    n: usize,
    alpha: f64,
    k: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, SampleStats)> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite() && k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "noise kernel needs alpha > 0 and k > 0, got alpha={alpha}, k={k}"
        )));
    }
    let mut stats = SampleStats::default();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(draw_baker_std(alpha, k, rng, &mut stats)?);
    }
    Ok((out, stats))
}

/// Draws `n` values from the location-scale family: `mu + s * z` with `z`
/// from the standardized sampler.
pub fn sample_baker<R: Rng>(
    n: usize,
    params: &BakerParams,
    rng: &mut R,
) -> Result<(Vec<f64>, SampleStats)> {
    let (z, stats) = sample_baker_std(n, params.alpha, params.k, rng)?;
    Ok((
        z.into_iter().map(|zi| params.mu + params.s * zi).collect(),
        stats,
    ))
}

/// Spectral radius of the AR companion matrix.
fn companion_spectral_radius(a: &[f64]) -> f64 {
    let p = a.len();
    let c = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            a[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    c.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max)
}

/// Simulates `x_t = c + sum_j a_j (x_{t-j} - c) + s * e_t` with
/// standardized heavy-tailed noise, discarding the first `burn_in` values.
/// Initial lags are set to `c` so runs are exactly reproducible.
pub fn simulate_ar_baker<R: Rng>(
    n_keep: usize,
    params: &ArBakerParams,
    burn_in: usize,
    rng: &mut R,
) -> Result<(Dataset, SampleStats)> {
    if n_keep == 0 {
        return Err(Error::Config("series length must be at least 1".into()));
    }
    let radius = companion_spectral_radius(&params.a);
    if !(radius < 1.0 - 1e-8) {
        return Err(Error::Nonstationary {
            spectral_radius: radius,
        });
    }
    let p = params.order();
    let mut stats = SampleStats::default();
    let mut history = vec![params.c; p];
    let mut kept = Vec::with_capacity(n_keep);
    for t in 0..burn_in + n_keep {
        let mut mean = params.c;
        for j in 0..p {
            mean += params.a[j] * (history[p - 1 - j] - params.c);
        }
        let z = draw_baker_std(params.alpha, params.k, rng, &mut stats)?;
        let x = mean + params.s * z;
        history.rotate_left(1);
        history[p - 1] = x;
        if t >= burn_in {
            kept.push(x);
        }
    }
    Ok((Dataset::timeseries(kept)?, stats))
}

/// Rule producing the regression inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XDesign {
    StandardNormal,
    Uniform { lo: f64, hi: f64 },
    Fixed { values: Vec<f64> },
}

impl XDesign {
    fn generate<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        let x = match self {
            XDesign::StandardNormal => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            XDesign::Uniform { lo, hi } => {
                if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Config(format!(
                        "uniform design needs finite lo < hi, got [{lo}, {hi}]"
                    )));
                }
                (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
            }
            XDesign::Fixed { values } => {
                if values.len() != n {
                    return Err(Error::Config(format!(
                        "fixed design has {} values but n={n}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("fixed design contains non-finite values".into()));
                }
                values.clone()
            }
        };
        Ok(x)
    }
}

/// Simulates `y_i = sum_j beta_j x_i^j + c + s * e_i` over a generated
/// input design, returning paired regression data.
pub fn simulate_poly_baker<R: Rng>(
    n: usize,
    design: &XDesign,
    params: &PolyBakerParams,
    rng: &mut R,
) -> Result<(Dataset, SampleStats)> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let x = design.generate(n, rng)?;
    let mut stats = SampleStats::default();
    let mut y = Vec::with_capacity(n);
    for &xi in &x {
        let mean = crate::models::poly_mean(xi, &params.beta, params.c);
        let z = draw_baker_std(params.alpha, params.k, rng, &mut stats)?;
        y.push(mean + params.s * z);
    }
    Ok((Dataset::regression(x, y)?, stats))
}

/// Log of the unnormalized torus density minus its upper bound
/// `kappa1 + kappa2 + |lambda|`; always <= 0.
pub(crate) fn vonmises_log_accept(x1: f64, x2: f64, params: &VonMisesParams) -> f64 {
    let exponent = params.kappa1 * (x1 - params.mu1).cos()
        + params.kappa2 * (x2 - params.mu2).cos()
        + params.lambda * (x1 - params.mu1).sin() * (x2 - params.mu2).sin();
    exponent - (params.kappa1 + params.kappa2 + params.lambda.abs())
}

/// Draws `n` angle pairs on `[0, 2pi)^2` by uniform proposals accepted
/// with probability `exp(exponent - (kappa1 + kappa2 + |lambda|))`.
pub fn sample_vonmises2<R: Rng>(
    n: usize,
    params: &VonMisesParams,
    rng: &mut R,
) -> Result<(Vec<[f64; 2]>, SampleStats)> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let mut stats = SampleStats::default();
    let mut out = Vec::with_capacity(n);
    let tau = std::f64::consts::TAU;
    for _ in 0..n {
        let mut rejections = 0u64;
        loop {
            let x1 = tau * rng.random::<f64>();
            let x2 = tau * rng.random::<f64>();
            let p = vonmises_log_accept(x1, x2, params).exp();
            debug_assert!(p <= 1.0 + 1e-12, "acceptance ratio {p} exceeds 1");
            stats.proposals += 1;
            if rng.random::<f64>() < p {
                stats.accepted += 1;
                out.push([x1, x2]);
                break;
            }
            rejections += 1;
            if rejections > MAX_REJECTIONS_PER_DRAW {
                return Err(Error::Config(
                    "torus rejection sampler stalled; acceptance rate too low".into(),
                ));
            }
        }
    }
    Ok((out, stats))
}

/// Flattens angle pairs into an unconditional 2-d dataset.
pub fn vonmises_dataset(pairs: &[[f64; 2]]) -> Result<Dataset> {
    let mut flat = Vec::with_capacity(pairs.len() * 2);
    for p in pairs {
        flat.extend_from_slice(p);
    }
    Dataset::unconditional(2, flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(id: u64) -> ChaCha8Rng {
        RngStream::new(7, id).rng()
    }

    #[test]
    fn acceptance_probability_hand_values() {
        assert_eq!(baker_accept_prob(0.0, 2.3), 1.0);
        assert!((baker_accept_prob(1.0, 1.5) - 2f64.powf(-1.5)).abs() < 1e-15);
        assert!((baker_accept_prob(1.0, 1.5) - 0.35355).abs() < 1e-5);
    }

    #[test]
    fn same_stream_is_bit_identical_and_streams_differ() {
        let p = BakerParams::new(0.3, 0.5, 0.5, 1.5).unwrap();
        let (a, sa) = sample_baker(100, &p, &mut stream(1)).unwrap();
        let (b, sb) = sample_baker(100, &p, &mut stream(1)).unwrap();
        let (c, _) = sample_baker(100, &p, &mut stream(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_ne!(a, c);
    }

    #[test]
    fn standardized_draws_are_symmetric() {
        // These tails are heavy enough that the Gaussian sqrt(6/n) error
        // bar for sample skewness is badly optimistic, so estimate the
        // spread from batch skewnesses instead.
        let (z, stats) = sample_baker_std(100_000, 0.5, 1.5, &mut stream(3)).unwrap();
        let skew_of = |chunk: &[f64]| {
            let n = chunk.len() as f64;
            let mean = chunk.iter().sum::<f64>() / n;
            let m2 = chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let m3 = chunk.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
            m3 / m2.powf(1.5)
        };
        let batches: Vec<f64> = z.chunks_exact(1000).map(skew_of).collect();
        let b = batches.len() as f64;
        let mean = batches.iter().sum::<f64>() / b;
        let var = batches.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
        let se_mean = (var / b).sqrt();
        assert!(
            mean.abs() < 4.0 * se_mean,
            "batch-mean skew {mean} vs 4*SE {}",
            4.0 * se_mean
        );
        assert!(stats.acceptance_rate() > 0.05 && stats.acceptance_rate() < 1.0);
    }

    #[test]
    fn ar_with_zero_coefficients_matches_iid_draws() {
        let arp = ArBakerParams::new(vec![0.0], 3.0, 0.5, 0.5, 1.5).unwrap();
        let (series, _) = simulate_ar_baker(50, &arp, 0, &mut stream(4)).unwrap();
        let loc = BakerParams::new(3.0, 0.5, 0.5, 1.5).unwrap();
        let (iid, _) = sample_baker(50, &loc, &mut stream(4)).unwrap();
        assert_eq!(series.series().unwrap(), &iid[..]);
    }

    #[test]
    fn burn_in_zero_keeps_the_first_step() {
        // With lags initialized at c, the first kept value is c + s*z for
        // the first accepted draw of the stream.
        let arp = ArBakerParams::new(vec![0.7], 2.0, 1.0, 0.5, 1.5).unwrap();
        let (series, _) = simulate_ar_baker(1, &arp, 0, &mut stream(5)).unwrap();
        let mut stats = SampleStats::default();
        let z = draw_baker_std(0.5, 1.5, &mut stream(5), &mut stats).unwrap();
        assert_eq!(series.series().unwrap()[0], 2.0 + z);
    }

    #[test]
    fn nonstationary_coefficients_are_rejected() {
        let unit_root = ArBakerParams::new(vec![1.0], 0.0, 1.0, 0.5, 1.5).unwrap();
        assert!(matches!(
            simulate_ar_baker(10, &unit_root, 0, &mut stream(6)),
            Err(Error::Nonstationary { .. })
        ));
        let explosive = ArBakerParams::new(vec![0.5, 0.7], 0.0, 1.0, 0.5, 1.5).unwrap();
        assert!(simulate_ar_baker(10, &explosive, 0, &mut stream(6)).is_err());
        let stable = ArBakerParams::new(vec![0.5, -0.25, 0.1], 3.0, 0.5, 0.5, 1.5).unwrap();
        assert!(simulate_ar_baker(10, &stable, 0, &mut stream(6)).is_ok());
    }

    #[test]
    fn ar_sample_mean_tracks_the_location() {
        let arp = ArBakerParams::new(vec![0.5, -0.25, 0.1], 3.0, 0.5, 0.5, 1.5).unwrap();
        let (series, _) = simulate_ar_baker(3000, &arp, DEFAULT_BURN_IN, &mut stream(7)).unwrap();
        let s = series.series().unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 3.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn stationarity_across_quintiles() {
        let arp = ArBakerParams::new(vec![0.5, -0.25, 0.1], 3.0, 0.5, 0.5, 1.5).unwrap();
        let (series, _) = simulate_ar_baker(50_000, &arp, DEFAULT_BURN_IN, &mut stream(8)).unwrap();
        let s = series.series().unwrap();
        let var = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        };
        let q = s.len() / 5;
        let v1 = var(&s[..q]);
        let v5 = var(&s[4 * q..]);
        // Heavy-tailed noise makes variance estimates noisy; 3 SEs of a
        // variance ratio at this length is comfortably inside 25%.
        assert!((v1 / v5 - 1.0).abs() < 0.25, "v1={v1} v5={v5}");
    }

    #[test]
    fn poly_conditional_mean_is_exact_in_the_noiseless_limit() {
        let p = PolyBakerParams::new(vec![-1.5, 2.0, 5.0], 3.0, 1e-12, 0.5, 1.5).unwrap();
        let design = XDesign::Fixed {
            values: vec![0.0, 1.0, -1.0],
        };
        let (data, _) = simulate_poly_baker(3, &design, &p, &mut stream(9)).unwrap();
        if let Dataset::Regression { x, y } = &data {
            assert_eq!(x[1], 1.0);
            assert!((y[0] - 3.0).abs() < 1e-9);
            assert!((y[1] - 8.5).abs() < 1e-9, "cubic at 1 should be 8.5");
            assert!((y[2] - (1.5 + 2.0 - 5.0 + 3.0)).abs() < 1e-9);
        } else {
            panic!("expected regression data");
        }
    }

    #[test]
    fn fixed_design_length_mismatch_errors() {
        let p = PolyBakerParams::new(vec![1.0], 0.0, 1.0, 0.5, 1.5).unwrap();
        let design = XDesign::Fixed { values: vec![1.0] };
        assert!(simulate_poly_baker(3, &design, &p, &mut stream(10)).is_err());
    }

    #[test]
    fn torus_acceptance_is_one_when_flat() {
        let flat = VonMisesParams::coupled(0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let (pairs, stats) = sample_vonmises2(500, &flat, &mut stream(11)).unwrap();
        assert_eq!(stats.proposals, stats.accepted);
        assert!(pairs
            .iter()
            .all(|p| (0.0..std::f64::consts::TAU).contains(&p[0])
                && (0.0..std::f64::consts::TAU).contains(&p[1])));
    }

    #[test]
    fn torus_acceptance_peaks_at_the_mode() {
        let p = VonMisesParams::independent(2.0, 1.0, 1.5, 2.5).unwrap();
        assert!((vonmises_log_accept(1.5, 2.5, &p)).abs() < 1e-12);
        let pc = VonMisesParams::coupled(2.0, 1.0, 1.5, 2.5, 3.0).unwrap();
        assert!(vonmises_log_accept(1.5, 2.5, &pc) < 0.0);
        assert!(vonmises_log_accept(1.5 + 0.3, 2.5, &p) < 0.0);
    }

    #[test]
    fn circular_sample_means_point_at_the_locations() {
        let p = VonMisesParams::coupled(2.0, 1.0, 1.5, 2.5, 3.0).unwrap();
        let (pairs, _) = sample_vonmises2(20_000, &p, &mut stream(12)).unwrap();
        let (mut s1, mut c1, mut s2, mut c2) = (0.0, 0.0, 0.0, 0.0);
        for [x1, x2] in &pairs {
            s1 += x1.sin();
            c1 += x1.cos();
            s2 += x2.sin();
            c2 += x2.cos();
        }
        // The dependence term is symmetric about both locations, so the
        // circular means stay at (mu1, mu2).
        let m1 = s1.atan2(c1);
        let m2 = s2.atan2(c2);
        assert!((m1 - 1.5).abs() < 0.08, "circular mean 1: {m1}");
        assert!((m2 - 2.5).abs() < 0.12, "circular mean 2: {m2}");
    }
}
