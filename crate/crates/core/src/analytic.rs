//! Closed-form BER, SINR and throughput for CI and OAP precoding.
//!
//! Every expression averages over the `2^N_T` equiprobable OOK words. The
//! receiver decides with a per-word threshold at half the desired amplitude
//! `gamma P h_i^T w_i`, so under perfect CSI each term is the exact
//! conditional error probability of that word. The outdated-CSI functions
//! return upper bounds built from the residual matrix `H W_hat`.

use std::f64::consts::SQRT_2;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::channel::ChannelMatrix;
use crate::error::{domain, Error, Result};
use crate::noise::NoiseModel;
use crate::precoding::{ci_precoder, precode_word, OapScaling, Precoder, Scheme, SymbolVector, WordPrecoding, DEFAULT_PINV_TOLERANCE};

/// Largest word length the enumerating functions accept.
pub const MAX_STREAMS: usize = 16;

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Every OOK word of length `n_t` in binary counting order.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    n_t: usize,
}

impl CombinationMatrix {
    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn rows(&self) -> usize {
        1 << self.n_t
    }

    /// Entry `A[s][k]`.
    pub fn get(&self, s: usize, k: usize) -> u8 {
        ((s >> (self.n_t - 1 - k)) & 1) as u8
    }

    pub fn word(&self, s: usize) -> SymbolVector {
        SymbolVector::from_index(s, self.n_t)
    }

    pub fn words(&self) -> impl Iterator<Item = SymbolVector> + '_ {
        (0..self.rows()).map(|s| self.word(s))
    }

    pub fn to_matrix(&self) -> DMatrix<u8> {
        DMatrix::from_fn(self.rows(), self.n_t, |s, k| self.get(s, k))
    }
}

pub fn combination_matrix(n_t: usize) -> Result<CombinationMatrix> {
    if !(1..=MAX_STREAMS).contains(&n_t) {
        return Err(Error::Size(format!(
            "word length must be in 1..={MAX_STREAMS}, got {n_t}"
        )));
    }
    Ok(CombinationMatrix { n_t })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CsiMode {
    Perfect,
    Outdated,
}

impl fmt::Display for CsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsiMode::Perfect => "perfect",
            CsiMode::Outdated => "outdated",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerResult {
    pub per_pd: Vec<f64>,
    pub average: f64,
    pub scheme: Scheme,
    pub csi: CsiMode,
}

impl BerResult {
    fn new(per_pd: Vec<f64>, scheme: Scheme, csi: CsiMode) -> Self {
        let average = per_pd.iter().sum::<f64>() / per_pd.len() as f64;
        Self { per_pd, average, scheme, csi }
    }
}

/// Detector responsivity (A/W) and per-luminaire optical power (W).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub responsivity: f64,
    pub power: f64,
}

impl Link {
    pub fn gamma_p(&self) -> f64 {
        self.responsivity * self.power
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticOptions {
    pub tolerance: f64,
    pub oap_scaling: OapScaling,
}

impl Default for AnalyticOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_PINV_TOLERANCE,
            oap_scaling: OapScaling::Literal,
        }
    }
}

/// One word seen through the true channel.
struct WordLink {
    precoding: WordPrecoding,
    /// `G = H * (beta W T)`; `G[i][j] = h_i^T w_j` with the applied precoder.
    g: DMatrix<f64>,
    /// Noise standard deviation per detector for this word.
    sigma: Vec<f64>,
}

fn word_links(
    h: &ChannelMatrix,
    base: &Precoder,
    scheme: Scheme,
    noise: &NoiseModel,
    link: &Link,
    scaling: OapScaling,
) -> Result<Vec<WordLink>> {
    let combos = combination_matrix(h.n_t())?;
    if h.n_r() != base.w().ncols() || h.n_t() != base.w().nrows() {
        return Err(Error::Size("precoder does not match the channel".into()));
    }
    if let Some(n) = noise.detectors() {
        if n != h.n_r() {
            return Err(Error::Size(format!("noise model covers {n} detectors, channel has {}", h.n_r())));
        }
    }
    if h.n_t() != h.n_r() {
        return Err(Error::Size("word enumeration needs a square channel".into()));
    }
    (0..combos.rows())
        .into_par_iter()
        .map(|s| {
            let x = combos.word(s);
            let precoding = precode_word(base, scheme, &x, scaling)?;
            let g = h.gains() * &precoding.scaled;
            let received = &g * x.to_vector() * link.power;
            let sigma = (0..h.n_r()).map(|i| noise.sigma(i, received[i])).collect();
            Ok(WordLink { precoding, g, sigma })
        })
        .collect()
}

/// Sums per-word rows in word order.
fn average_rows(rows: Vec<Vec<f64>>, weight: f64) -> Vec<f64> {
    let n = rows.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; n];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    acc.into_iter().map(|a| a * weight).collect()
}

/// Argument `c * a / sigma` that tolerates `sigma = 0`.
fn ratio(num: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        if num > 0.0 {
            f64::INFINITY
        } else if num < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    } else {
        num / sigma
    }
}

fn perfect(h: &ChannelMatrix, scheme: Scheme, noise: &NoiseModel, link: &Link, opts: &AnalyticOptions) -> Result<BerResult> {
    let base = ci_precoder(h, opts.tolerance)?;
    let words = word_links(h, &base, scheme, noise, link, opts.oap_scaling)?;
    let gp = link.gamma_p();
    let rows = words
        .par_iter()
        .map(|w| {
            let x = &w.precoding.symbols;
            (0..h.n_r())
                .map(|i| {
                    let desired = 0.5 * gp * w.g[(i, i)];
                    let constructive: f64 = match scheme {
                        Scheme::Oap if x.bit(i) => w
                            .precoding
                            .group(i)
                            .into_iter()
                            .filter(|&j| j != i)
                            .map(|j| gp * w.g[(i, j)])
                            .sum(),
                        _ => 0.0,
                    };
                    q_function(ratio(desired + constructive, w.sigma[i]))
                })
                .collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>();
    let per_pd = average_rows(rows, 1.0 / words.len() as f64);
    Ok(BerResult::new(per_pd, scheme, CsiMode::Perfect))
}

/// BER of channel inversion under perfect CSI.
pub fn ber_ci_perfect(h: &ChannelMatrix, noise: &NoiseModel, link: &Link, opts: &AnalyticOptions) -> Result<BerResult> {
    perfect(h, Scheme::Ci, noise, link, opts)
}

/// BER of adaptive precoding under perfect CSI.
///
/// A word with `x_i = 1` contributes the constructive paths of its group to
/// the distance from the threshold; a word with `x_i = 0` sees only the half
/// desired amplitude.
pub fn ber_oap_perfect(h: &ChannelMatrix, noise: &NoiseModel, link: &Link, opts: &AnalyticOptions) -> Result<BerResult> {
    perfect(h, Scheme::Oap, noise, link, opts)
}

fn outdated(
    h: &ChannelMatrix,
    h_hat: &ChannelMatrix,
    scheme: Scheme,
    noise: &NoiseModel,
    link: &Link,
    opts: &AnalyticOptions,
) -> Result<BerResult> {
    if h.gains().shape() != h_hat.gains().shape() {
        return Err(Error::Size("estimate and channel differ in shape".into()));
    }
    let stale = ci_precoder(h_hat, opts.tolerance)?;
    let words = word_links(h, &stale, scheme, noise, link, opts.oap_scaling)?;
    let gp = link.gamma_p();
    let n = h.n_r();
    let residual_base = h.gains() * stale.w();
    // terms[s][i] = Q1 + Q2 for word s at detector i
    let terms: Vec<Vec<f64>> = words
        .par_iter()
        .map(|w| {
            let x = &w.precoding.symbols;
            let upsilon = &residual_base * w.precoding.beta.value;
            (0..n)
                .map(|i| {
                    let sigma = w.sigma[i];
                    let hw = w.g[(i, i)];
                    let interference: f64 = (0..n).filter(|&k| k != i && x.bit(k)).map(|k| upsilon[(i, k)]).sum();
                    let constructive: f64 = match scheme {
                        Scheme::Ci => 0.0,
                        Scheme::Oap => w.precoding.group(i).into_iter().map(|j| w.g[(i, j)]).sum(),
                    };
                    let q1 = q_function(ratio(gp * (0.5 * hw - interference), sigma));
                    let q2 = q_function(ratio(gp * (0.5 * hw + constructive + upsilon[(i, i)] + interference), sigma));
                    q1 + q2
                })
                .collect()
        })
        .collect();
    let n_words = words.len();
    let mut per_pd = vec![0.0; n];
    for (i, acc) in per_pd.iter_mut().enumerate() {
        let bit = 1usize << (n - 1 - i);
        // every word is paired with both hypotheses for bit i: 2^(N_T + 1) terms
        for s in 0..n_words {
            for hypothesis in [0, bit] {
                *acc += terms[(s & !bit) | hypothesis][i];
            }
        }
        *acc = (*acc / n_words as f64).min(0.5);
    }
    Ok(BerResult::new(per_pd, scheme, CsiMode::Outdated))
}

/// Upper bound on the CI BER when the precoder was built from `h_hat`.
pub fn ber_ci_outdated(
    h: &ChannelMatrix,
    h_hat: &ChannelMatrix,
    noise: &NoiseModel,
    link: &Link,
    opts: &AnalyticOptions,
) -> Result<BerResult> {
    outdated(h, h_hat, Scheme::Ci, noise, link, opts)
}

/// Upper bound on the OAP BER when the precoder was built from `h_hat`.
///
/// The residual terms use the stale channel-inversion precoder; the
/// constructive sum uses the masked one.
pub fn ber_oap_outdated(
    h: &ChannelMatrix,
    h_hat: &ChannelMatrix,
    noise: &NoiseModel,
    link: &Link,
    opts: &AnalyticOptions,
) -> Result<BerResult> {
    outdated(h, h_hat, Scheme::Oap, noise, link, opts)
}

/// Dispatches to the four BER expressions.
pub fn ber(
    scheme: Scheme,
    h: &ChannelMatrix,
    h_hat: Option<&ChannelMatrix>,
    noise: &NoiseModel,
    link: &Link,
    opts: &AnalyticOptions,
) -> Result<BerResult> {
    match h_hat {
        None => perfect(h, scheme, noise, link, opts),
        Some(est) => outdated(h, est, scheme, noise, link, opts),
    }
}

/// Per-detector SINR of the unprecoded channel,
/// `gamma P h_ii / (gamma P sum_{j != i} h_ij + 2 sigma)`.
///
/// The denominator adds a current amplitude to a standard deviation; the
/// value is informational only.
pub fn sinr_report(h: &ChannelMatrix, link: &Link, sigma: f64) -> Vec<f64> {
    let gp = link.gamma_p();
    (0..h.n_r())
        .map(|i| {
            let interference: f64 = (0..h.n_t()).filter(|&j| j != i).map(|j| h.get(i, j)).sum();
            gp * h.get(i, i) / (gp * interference + 2.0 * sigma)
        })
        .collect()
}

/// Which words enter the throughput average for a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThroughputAveraging {
    /// Words in which the detector's own bit is on.
    #[default]
    OnSymbols,
    /// All `2^N_T` words.
    AllWords,
}

/// Normalized sum throughput in bits/s/Hz.
pub fn throughput(
    scheme: Scheme,
    h: &ChannelMatrix,
    precoder: &Precoder,
    noise: &NoiseModel,
    link: &Link,
    scaling: OapScaling,
    averaging: ThroughputAveraging,
) -> Result<f64> {
    let words = word_links(h, precoder, scheme, noise, link, scaling)?;
    let gp = link.gamma_p();
    let n = h.n_r();
    let mut total = 0.0;
    for i in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for w in &words {
            let x = &w.precoding.symbols;
            if averaging == ThroughputAveraging::OnSymbols && !x.bit(i) {
                continue;
            }
            let amplitude = match scheme {
                Scheme::Ci => w.g[(i, i)],
                Scheme::Oap => w
                    .precoding
                    .group(i)
                    .into_iter()
                    .filter(|&j| x.bit(j))
                    .map(|j| w.g[(i, j)])
                    .sum(),
            };
            let snr = if gp == 0.0 { 0.0 } else { ratio(gp * amplitude, 2.0 * w.sigma[i]) };
            sum += (1.0 + snr).log2();
            count += 1;
        }
        total += sum / count as f64;
    }
    Ok(total)
}

/// Smallest SNR (dB) in `[lo, hi]` at which `ber_at(snr)` falls to `target`,
/// by bisection on a decreasing curve.
pub fn snr_for_target_ber(target: f64, lo: f64, hi: f64, tol_db: f64, mut ber_at: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    if !(target > 0.0 && target < 0.5) {
        return Err(domain(format!("target BER must be in (0, 0.5), got {target}")));
    }
    let (mut a, mut b) = (lo, hi);
    if ber_at(a)? < target || ber_at(b)? > target {
        return Err(domain(format!("target BER {target} is not bracketed by [{lo}, {hi}] dB")));
    }
    while b - a > tol_db {
        let mid = 0.5 * (a + b);
        if ber_at(mid)? > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Noiseless received vector `gamma P H (beta W T) x` for one word.
pub fn noiseless_receive(h: &ChannelMatrix, word: &WordPrecoding, link: &Link) -> DVector<f64> {
    h.gains() * word.transmit() * link.gamma_p()
}
