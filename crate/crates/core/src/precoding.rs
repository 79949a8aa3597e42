//! Channel-inversion and optical adaptive precoding for OOK symbols.
//!
//! The channel-inversion (CI) precoder is the right pseudo-inverse
//! `W = H^T (H H^T)^-1`, which nulls all inter-channel interference. The
//! adaptive (OAP) precoder multiplies `W` by a per-symbol binary mask `T`
//! that keeps the paths between users carrying equal bits. Since optical
//! gains are nonnegative, interference between equal OOK bits always adds to
//! the "on" amplitude.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::channel::{matrix_csv, ChannelMatrix};
use crate::error::{domain, Error, Result};

/// Default relative singular-value cutoff of the pseudo-inverse.
pub const DEFAULT_PINV_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Channel inversion.
    Ci,
    /// Optical adaptive precoding.
    Oap,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ci => "ci",
            Scheme::Oap => "oap",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ci" => Ok(Scheme::Ci),
            "oap" => Ok(Scheme::Oap),
            _ => Err(domain(format!("unknown precoding scheme `{s}`"))),
        }
    }
}

/// Which scaling factor the OAP transmitter applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OapScaling {
    /// Reuse the CI factor computed from `x`.
    #[default]
    Literal,
    /// Normalize the masked transmit vector to unit norm instead.
    Renormalized,
}

/// One OOK word, one bit per stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolVector(Vec<bool>);

impl SymbolVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Parses `0`/`1` entries; anything else is rejected.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(domain(format!("OOK symbols are binary, got {b}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    /// Word number `index` in binary counting order, first stream as the
    /// most significant bit.
    pub fn from_index(index: usize, n: usize) -> Self {
        Self((0..n).map(|k| (index >> (n - 1 - k)) & 1 == 1).collect())
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bit(&self, k: usize) -> bool {
        self.0[k]
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_zero(&self) -> bool {
        self.ones() == 0
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| !b).collect())
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }))
    }
}

/// Per-word power scaling factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beta {
    pub value: f64,
    /// Set for the all-zero word, where the factor is fixed to one.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    w: DMatrix<f64>,
    kind: Scheme,
    tolerance: f64,
    condition_number: f64,
    gram_inverse: DMatrix<f64>,
}

impl Precoder {
    /// Unscaled precoding matrix, `N_T x N_R`.
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn kind(&self) -> Scheme {
        self.kind
    }

    pub fn pseudo_inverse_tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Condition number of `H H^T`.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    /// `(H H^T)^-1`.
    pub fn gram_inverse(&self) -> &DMatrix<f64> {
        &self.gram_inverse
    }

    /// Column `k` of the unscaled precoder.
    pub fn column(&self, k: usize) -> DVector<f64> {
        self.w.column(k).into_owned()
    }

    /// Scaling factor `(x^T (H H^T)^-1 x)^(-1/2)`.
    pub fn beta(&self, x: &SymbolVector) -> Beta {
        self.quadratic_beta(&x.to_vector())
    }

    fn quadratic_beta(&self, v: &DVector<f64>) -> Beta {
        if v.iter().all(|&e| e == 0.0) {
            return Beta { value: 1.0, degenerate: true };
        }
        let q = (v.transpose() * &self.gram_inverse * v)[(0, 0)];
        Beta { value: q.powf(-0.5), degenerate: false }
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.w)
    }
}

/// Right pseudo-inverse of `h` via SVD. Singular values below
/// `tolerance * s_max` count as zero and make the channel unusable.
pub fn ci_precoder(h: &ChannelMatrix, tolerance: f64) -> Result<Precoder> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(domain(format!("pseudo-inverse tolerance must be in (0, 1), got {tolerance}")));
    }
    let (n_r, n_t) = (h.n_r(), h.n_t());
    let svd = h.gains().clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = if n_r <= n_t { s.min() } else { 0.0 };
    let rank = s.iter().filter(|&&v| v > tolerance * s_max).count();
    let condition = (s_max / s_min).powi(2);
    if rank < n_r || !(s_max > 0.0) {
        return Err(Error::SingularChannel {
            rank,
            rows: n_r,
            condition,
            min_singular: s_min,
            max_singular: s_max,
        });
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let inv = DMatrix::from_diagonal(&s.map(|v| 1.0 / v));
    let inv2 = DMatrix::from_diagonal(&s.map(|v| 1.0 / (v * v)));
    let w = v_t.transpose() * &inv * u.transpose();
    let gram_inverse = &u * inv2 * u.transpose();
    Ok(Precoder {
        w,
        kind: Scheme::Ci,
        tolerance,
        condition_number: condition,
        gram_inverse,
    })
}

/// Scaling factor computed directly from the channel.
pub fn scaling_beta(h: &ChannelMatrix, x: &SymbolVector, tolerance: f64) -> Result<Beta> {
    if x.len() != h.n_r() {
        return Err(Error::Size(format!(
            "symbol vector has {} entries for {} receivers",
            x.len(),
            h.n_r()
        )));
    }
    Ok(ci_precoder(h, tolerance)?.beta(x))
}

/// Symmetric 0/1 matrix with `T[k][l] = 1` iff streams `k` and `l` carry the
/// same bit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveMask(DMatrix<f64>);

impl AdaptiveMask {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, k: usize, l: usize) -> bool {
        self.0[(k, l)] == 1.0
    }

    /// Checks that the mask is the block structure of an equality relation.
    pub fn is_valid(&self) -> bool {
        let n = self.size();
        let binary = self.0.iter().all(|&v| v == 0.0 || v == 1.0);
        let symmetric = self.0 == self.0.transpose();
        let unit_diag = (0..n).all(|k| self.get(k, k));
        let transitive = (0..n).all(|a| {
            (0..n).all(|b| (0..n).all(|c| !(self.get(a, b) && self.get(b, c)) || self.get(a, c)))
        });
        binary && symmetric && unit_diag && transitive
    }
}

pub fn adaptive_mask(x: &SymbolVector) -> AdaptiveMask {
    let n = x.len();
    AdaptiveMask(DMatrix::from_fn(n, n, |k, l| {
        if x.bit(k) == x.bit(l) {
            1.0
        } else {
            0.0
        }
    }))
}

/// `W_d = W T`.
pub fn oap_precoder(w: &Precoder, t: &AdaptiveMask) -> Result<Precoder> {
    if w.w.ncols() != t.size() || w.w.nrows() != t.size() {
        return Err(Error::Size(format!(
            "adaptive precoding needs a square {0}x{0} precoder, got {1}x{2}",
            t.size(),
            w.w.nrows(),
            w.w.ncols()
        )));
    }
    Ok(Precoder {
        w: &w.w * &t.0,
        kind: Scheme::Oap,
        ..w.clone()
    })
}

/// Indices of the streams that add constructively at receiver `i`.
pub fn constructive_group(t: &AdaptiveMask, i: usize) -> Vec<usize> {
    (0..t.size()).filter(|&j| t.get(i, j)).collect()
}

/// The precoder actually applied to one word: `beta * W (T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordPrecoding {
    pub symbols: SymbolVector,
    pub beta: Beta,
    pub mask: Option<AdaptiveMask>,
    /// Scaled precoder, `N_T x N_R`.
    pub scaled: DMatrix<f64>,
}

impl WordPrecoding {
    /// Per-LED drive vector for unit optical power, `beta W (T) x`.
    pub fn transmit(&self) -> DVector<f64> {
        &self.scaled * self.symbols.to_vector()
    }

    /// Constructive group of receiver `i`; just `{i}` under CI.
    pub fn group(&self, i: usize) -> Vec<usize> {
        match &self.mask {
            Some(t) => constructive_group(t, i),
            None => vec![i],
        }
    }
}

/// Builds the scaled precoder for one word from the CI precoder `base`.
pub fn precode_word(
    base: &Precoder,
    scheme: Scheme,
    x: &SymbolVector,
    scaling: OapScaling,
) -> Result<WordPrecoding> {
    if base.kind != Scheme::Ci {
        return Err(domain("word precoding starts from the channel-inversion precoder"));
    }
    if x.len() != base.w.ncols() {
        return Err(Error::Size(format!(
            "symbol vector has {} entries for {} streams",
            x.len(),
            base.w.ncols()
        )));
    }
    let beta = base.beta(x);
    match scheme {
        Scheme::Ci => Ok(WordPrecoding {
            symbols: x.clone(),
            beta,
            mask: None,
            scaled: &base.w * beta.value,
        }),
        Scheme::Oap => {
            let t = adaptive_mask(x);
            let wd = oap_precoder(base, &t)?;
            let beta = match scaling {
                OapScaling::Literal => beta,
                OapScaling::Renormalized => base.quadratic_beta(&(&t.0 * x.to_vector())),
            };
            Ok(WordPrecoding {
                symbols: x.clone(),
                beta,
                mask: Some(t),
                scaled: wd.w * beta.value,
            })
        }
    }
}
