//! Symbol-level Monte Carlo BER estimation.
//!
//! Symbols are split into fixed-size blocks. Block `b` draws from a ChaCha8
//! stream keyed by `(seed, b)`, and error counts are integers, so results do
//! not depend on how many worker threads run the blocks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analytic::{self, combination_matrix, AnalyticOptions, BerResult, Link};
use crate::channel::ChannelMatrix;
use crate::csi::ChannelEstimate;
use crate::error::{domain, invalid, Error, Result};
use crate::noise::NoiseModel;
use crate::precoding::{ci_precoder, precode_word, OapScaling, Precoder, Scheme, DEFAULT_PINV_TOLERANCE};

/// Symbols per generator stream.
pub const BLOCK_SYMBOLS: u64 = 1 << 16;
/// Blocks evaluated between early-stopping checks.
const WAVE_BLOCKS: u64 = 16;
/// Fewest errors an early stop may be based on.
pub const MIN_EARLY_STOP_ERRORS: u64 = 100;

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub enum CsiState {
    Perfect,
    /// Precoder built from `h_hat`; symbols still cross the true channel.
    Outdated(ChannelEstimate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// `tau_i = gamma P h_i^T w_i / 2` for the word actually sent.
    #[default]
    Genie,
    /// `gamma P beta_bar / 2` with beta averaged over the nonzero words.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_symbols: u64,
    pub seed: u64,
    pub scheme: Scheme,
    pub csi: CsiState,
    pub noise: NoiseModel,
    pub link: Link,
    pub threshold: ThresholdMode,
    pub oap_scaling: OapScaling,
    pub early_stop_errors: Option<u64>,
    pub tolerance: f64,
}

impl SimConfig {
    pub fn new(scheme: Scheme, noise: NoiseModel, link: Link) -> Self {
        Self {
            n_symbols: 2_000_000,
            seed: 0,
            scheme,
            csi: CsiState::Perfect,
            noise,
            link,
            threshold: ThresholdMode::Genie,
            oap_scaling: OapScaling::Literal,
            early_stop_errors: None,
            tolerance: DEFAULT_PINV_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_symbols == 0 {
            return Err(invalid("n_symbols", "must be at least 1"));
        }
        if let Some(e) = self.early_stop_errors {
            if e < MIN_EARLY_STOP_ERRORS {
                return Err(invalid(
                    "early_stop_errors",
                    format!("must be at least {MIN_EARLY_STOP_ERRORS}, got {e}"),
                ));
            }
        }
        if let NoiseModel::Fixed { sigma } = self.noise {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
            }
        }
        if !(self.link.power >= 0.0 && self.link.power.is_finite()) {
            return Err(invalid("power", format!("must be finite and >= 0, got {}", self.link.power)));
        }
        if !(self.link.responsivity > 0.0 && self.link.responsivity.is_finite()) {
            return Err(invalid("responsivity", format!("must be finite and > 0, got {}", self.link.responsivity)));
        }
        Ok(())
    }

    fn analytic_options(&self) -> AnalyticOptions {
        AnalyticOptions {
            tolerance: self.tolerance,
            oap_scaling: self.oap_scaling,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerEstimate {
    pub per_pd_errors: Vec<u64>,
    pub per_pd_ber: Vec<f64>,
    pub halfwidth_95: Vec<f64>,
    pub symbols_run: u64,
}

impl BerEstimate {
    fn from_counts(errors: Vec<u64>, symbols: u64) -> Self {
        let n = symbols as f64;
        let per_pd_ber: Vec<f64> = errors.iter().map(|&e| e as f64 / n).collect();
        let halfwidth_95 = per_pd_ber.iter().map(|&p| Z95 * (p * (1.0 - p) / n).sqrt()).collect();
        Self {
            per_pd_errors: errors,
            per_pd_ber,
            halfwidth_95,
            symbols_run: symbols,
        }
    }

    pub fn total_errors(&self) -> u64 {
        self.per_pd_errors.iter().sum()
    }

    /// Pooled BER over all detectors.
    pub fn average_ber(&self) -> f64 {
        self.total_errors() as f64 / (self.symbols_run as f64 * self.per_pd_errors.len() as f64)
    }

    /// 95% halfwidth of the pooled BER.
    pub fn average_halfwidth_95(&self) -> f64 {
        let p = self.average_ber();
        Z95 * (p * (1.0 - p) / (self.symbols_run as f64 * self.per_pd_errors.len() as f64)).sqrt()
    }
}

/// Strict threshold decision; a tie reads as 0.
pub fn detect(y: f64, threshold: f64) -> bool {
    y > threshold
}

/// Everything the inner loop needs about one word.
struct WordEntry {
    mean: Vec<f64>,
    sigma: Vec<f64>,
    threshold: Vec<f64>,
    bits: Vec<bool>,
}

fn word_table(h: &ChannelMatrix, base: &Precoder, cfg: &SimConfig) -> Result<Vec<WordEntry>> {
    let n = h.n_r();
    if let Some(d) = cfg.noise.detectors() {
        if d != n {
            return Err(Error::Size(format!("noise model covers {d} detectors, channel has {n}")));
        }
    }
    let combos = combination_matrix(h.n_t())?;
    let gp = cfg.link.gamma_p();
    let mut words = Vec::with_capacity(combos.rows());
    let mut beta_sum = 0.0;
    let mut beta_count = 0usize;
    for x in combos.words() {
        let p = precode_word(base, cfg.scheme, &x, cfg.oap_scaling)?;
        let t = p.transmit();
        if cfg.scheme == Scheme::Ci && !x.is_zero() {
            debug_assert!(
                (t.norm() - 1.0).abs() < 1e-8,
                "unit-norm CI drive violated: {}",
                t.norm()
            );
        }
        if !p.beta.degenerate {
            beta_sum += p.beta.value;
            beta_count += 1;
        }
        // explicit pass through the true channel
        let r = h.gains() * &t;
        let g: DMatrix<f64> = h.gains() * &p.scaled;
        words.push(WordEntry {
            mean: r.iter().map(|v| gp * v).collect(),
            sigma: (0..n).map(|i| cfg.noise.sigma(i, cfg.link.power * r[i])).collect(),
            threshold: (0..n).map(|i| 0.5 * gp * g[(i, i)]).collect(),
            bits: x.bits().to_vec(),
        });
    }
    if cfg.threshold == ThresholdMode::Fixed {
        let beta_bar = if beta_count > 0 { beta_sum / beta_count as f64 } else { 1.0 };
        for w in &mut words {
            w.threshold.iter_mut().for_each(|t| *t = 0.5 * gp * beta_bar);
        }
    }
    Ok(words)
}

fn run_block(words: &[WordEntry], seed: u64, block: u64, symbols: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let n = words[0].mean.len();
    let mask = words.len() - 1;
    let mut errors = vec![0u64; n];
    for _ in 0..symbols {
        let w = &words[(rng.random::<u32>() as usize) & mask];
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let y = w.mean[i] + w.sigma[i] * z;
            if detect(y, w.threshold[i]) != w.bits[i] {
                errors[i] += 1;
            }
        }
    }
    errors
}

fn stale_precoder(h: &ChannelMatrix, cfg: &SimConfig) -> Result<Precoder> {
    match &cfg.csi {
        CsiState::Perfect => ci_precoder(h, cfg.tolerance),
        CsiState::Outdated(est) => {
            if est.h_hat.gains().shape() != h.gains().shape() {
                return Err(Error::Size("estimate and channel differ in shape".into()));
            }
            ci_precoder(&est.h_hat, cfg.tolerance)
        }
    }
}

/// Monte Carlo BER of `cfg.scheme` over the true channel `h`.
pub fn simulate(h: &ChannelMatrix, cfg: &SimConfig) -> Result<BerEstimate> {
    cfg.validate()?;
    if h.n_r() != h.n_t() {
        return Err(Error::Size("simulation needs a square channel".into()));
    }
    let base = stale_precoder(h, cfg)?;
    let words = word_table(h, &base, cfg)?;

    let n_blocks = cfg.n_symbols.div_ceil(BLOCK_SYMBOLS);
    let block_len = |b: u64| BLOCK_SYMBOLS.min(cfg.n_symbols - b * BLOCK_SYMBOLS);
    let mut errors = vec![0u64; h.n_r()];
    let mut symbols = 0u64;
    let wave = if cfg.early_stop_errors.is_some() { WAVE_BLOCKS } else { n_blocks };
    let mut next = 0u64;
    while next < n_blocks {
        let end = (next + wave).min(n_blocks);
        let counts: Vec<Vec<u64>> = (next..end)
            .into_par_iter()
            .map(|b| run_block(&words, cfg.seed, b, block_len(b)))
            .collect();
        for c in counts {
            errors.iter_mut().zip(c).for_each(|(a, e)| *a += e);
        }
        symbols += (next..end).map(block_len).sum::<u64>();
        next = end;
        if let Some(target) = cfg.early_stop_errors {
            if errors.iter().sum::<u64>() >= target {
                break;
            }
        }
    }
    Ok(BerEstimate::from_counts(errors, symbols))
}

/// Bit errors per detector over every word with the noise switched off.
pub fn exhaustive_noiseless_errors(h: &ChannelMatrix, scheme: Scheme, scaling: OapScaling, tolerance: f64) -> Result<Vec<u64>> {
    let base = ci_precoder(h, tolerance)?;
    let combos = combination_matrix(h.n_t())?;
    let mut errors = vec![0u64; h.n_r()];
    for x in combos.words() {
        let p = precode_word(&base, scheme, &x, scaling)?;
        let y = h.gains() * p.transmit();
        let g = h.gains() * &p.scaled;
        for (i, e) in errors.iter_mut().enumerate() {
            if detect(y[i], 0.5 * g[(i, i)]) != x.bit(i) {
                *e += 1;
            }
        }
    }
    Ok(errors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub analytic: BerResult,
    pub mc: Option<BerEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub scheme: Scheme,
    pub points: Vec<CurvePoint>,
}

/// Seed for one SNR point, independent of where it sits in the list.
pub fn point_seed(seed: u64, snr_db: f64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ snr_db.to_bits().wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d4_9133_11eb_70bb);
    z ^ (z >> 31)
}

/// Analytic BER and (when `n_symbols` is nonzero) a Monte Carlo estimate at
/// each transmit SNR, using swept noise. The template's noise is ignored.
pub fn sweep(h: &ChannelMatrix, snr_points: &[f64], template: &SimConfig, with_mc: bool) -> Result<BerCurve> {
    if snr_points.is_empty() {
        return Err(domain("sweep needs at least one SNR point"));
    }
    let h_hat = match &template.csi {
        CsiState::Perfect => None,
        CsiState::Outdated(est) => Some(&est.h_hat),
    };
    let opts = template.analytic_options();
    let mut points = snr_points
        .par_iter()
        .map(|&snr| {
            let noise = NoiseModel::swept(snr, template.link.responsivity, template.link.power)?;
            let analytic = analytic::ber(template.scheme, h, h_hat, &noise, &template.link, &opts)?;
            let mc = if with_mc {
                let cfg = SimConfig {
                    noise,
                    seed: point_seed(template.seed, snr),
                    ..template.clone()
                };
                Some(simulate(h, &cfg)?)
            } else {
                None
            };
            Ok(CurvePoint { snr_db: snr, analytic, mc })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    Ok(BerCurve {
        scheme: template.scheme,
        points,
    })
}

/// Error count of a single word sent `n` times; used to check the estimator
/// against a scalar closed form.
#[doc(hidden)]
pub fn scalar_errors(amplitude: f64, sigma: f64, n: u64, seed: u64) -> u64 {
    let words = vec![
        WordEntry {
            mean: vec![0.0],
            sigma: vec![sigma],
            threshold: vec![0.5 * amplitude],
            bits: vec![false],
        },
        WordEntry {
            mean: vec![amplitude],
            sigma: vec![sigma],
            threshold: vec![0.5 * amplitude],
            bits: vec![true],
        },
    ];
    let n_blocks = n.div_ceil(BLOCK_SYMBOLS);
    (0..n_blocks)
        .into_par_iter()
        .map(|b| run_block(&words, seed, b, BLOCK_SYMBOLS.min(n - b * BLOCK_SYMBOLS))[0])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::q_function;
    use crate::precoding::SymbolVector;

    const UNIT: Link = Link { responsivity: 1.0, power: 1.0 };

    fn h4() -> ChannelMatrix {
        ChannelMatrix::from_rows(&[
            &[1.0, 0.5, 0.3, 0.1],
            &[0.5, 1.0, 0.1, 0.3],
            &[0.3, 0.1, 1.0, 0.5],
            &[0.1, 0.3, 0.5, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn detect_is_strict() {
        assert!(!detect(0.5, 0.5));
        assert!(detect(1.0, 0.5));
        assert!(!detect(-1.0, 0.5));
    }

    #[test]
    fn genie_threshold_on_inverted_channel() {
        let h = ChannelMatrix::identity(3);
        let base = ci_precoder(&h, 1e-12).unwrap();
        for scheme in [Scheme::Ci, Scheme::Oap] {
            let cfg = SimConfig::new(scheme, NoiseModel::noiseless(), Link { responsivity: 0.5, power: 4.0 });
            let table = word_table(&h, &base, &cfg).unwrap();
            for (s, w) in table.iter().enumerate() {
                let beta = base.beta(&SymbolVector::from_index(s, 3)).value;
                for t in &w.threshold {
                    assert!((t - 0.5 * 2.0 * beta).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn noiseless_runs_are_error_free() {
        for scheme in [Scheme::Ci, Scheme::Oap] {
            let mut cfg = SimConfig::new(scheme, NoiseModel::noiseless(), UNIT);
            cfg.n_symbols = 10_000;
            let r = simulate(&h4(), &cfg).unwrap();
            assert_eq!(r.total_errors(), 0);
            assert_eq!(exhaustive_noiseless_errors(&h4(), scheme, OapScaling::Literal, 1e-12).unwrap(), vec![0; 4]);
        }
    }

    #[test]
    fn same_seed_same_counts() {
        let mut cfg = SimConfig::new(Scheme::Oap, NoiseModel::swept(8.0, 1.0, 1.0).unwrap(), UNIT);
        cfg.n_symbols = 200_000;
        cfg.seed = 42;
        let a = simulate(&h4(), &cfg).unwrap();
        let b = simulate(&h4(), &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 43;
        assert_ne!(simulate(&h4(), &cfg).unwrap().per_pd_errors, a.per_pd_errors);
    }

    #[test]
    fn partial_last_block() {
        let mut cfg = SimConfig::new(Scheme::Ci, NoiseModel::swept(0.0, 1.0, 1.0).unwrap(), UNIT);
        cfg.n_symbols = BLOCK_SYMBOLS + 17;
        assert_eq!(simulate(&h4(), &cfg).unwrap().symbols_run, BLOCK_SYMBOLS + 17);
    }

    #[test]
    fn early_stop() {
        let mut cfg = SimConfig::new(Scheme::Ci, NoiseModel::swept(0.0, 1.0, 1.0).unwrap(), UNIT);
        cfg.n_symbols = 100 * BLOCK_SYMBOLS;
        cfg.early_stop_errors = Some(1000);
        let r = simulate(&h4(), &cfg).unwrap();
        assert_eq!(r.symbols_run, WAVE_BLOCKS * BLOCK_SYMBOLS);
        assert!(r.total_errors() >= 1000);
        cfg.early_stop_errors = Some(99);
        assert!(simulate(&h4(), &cfg).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SimConfig::new(Scheme::Ci, NoiseModel::noiseless(), UNIT);
        cfg.n_symbols = 0;
        assert!(simulate(&h4(), &cfg).is_err());
        let singular = ChannelMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        cfg.n_symbols = 10;
        assert!(matches!(simulate(&singular, &cfg), Err(Error::SingularChannel { .. })));
    }

    #[test]
    fn scalar_estimator_converges() {
        let sigma = 0.4;
        let n = 1_000_000;
        let p = q_function(0.5 / sigma);
        let e = scalar_errors(1.0, sigma, n, 7) as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((e - p).abs() < 3.0 * se, "{e} vs {p}");
    }

    #[test]
    fn sweep_sorted_and_matches_analytic() {
        let mut cfg = SimConfig::new(Scheme::Oap, NoiseModel::noiseless(), UNIT);
        cfg.n_symbols = 400_000;
        let curve = sweep(&h4(), &[12.0, 3.0, 6.0], &cfg, true).unwrap();
        let snrs: Vec<f64> = curve.points.iter().map(|p| p.snr_db).collect();
        assert_eq!(snrs, vec![3.0, 6.0, 12.0]);
        for p in &curve.points {
            let mc = p.mc.as_ref().unwrap();
            let a = p.analytic.average;
            let se = (a * (1.0 - a) / (mc.symbols_run as f64 * 4.0)).sqrt();
            assert!((mc.average_ber() - a).abs() < 4.0 * se, "{} dB: {} vs {a}", p.snr_db, mc.average_ber());
        }
        assert!(sweep(&h4(), &[], &cfg, false).is_err());
    }
}
