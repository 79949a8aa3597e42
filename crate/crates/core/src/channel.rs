//! Line-of-sight optical channel model.
//!
//! Gains follow the generalized Lambertian emitter with an ideal
//! non-imaging concentrator at the receiver. Each luminaire is a single
//! point source; its LED array only sets the emitted power. Angles are
//! given in degrees at the public surface and converted to radians here.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{domain, invalid, Error, Result};

/// Lambertian order `m` for a given semi-angle at half power.
pub fn lambertian_order(semi_angle_half_power_deg: f64) -> Result<f64> {
    let a = semi_angle_half_power_deg;
    if !(a > 0.0 && a < 90.0) {
        return Err(domain(format!(
            "semi-angle at half power must lie in (0, 90) degrees, got {a}"
        )));
    }
    Ok(-(2f64.ln()) / cos_deg(a).ln())
}

/// Cosine of an angle in degrees, exact at 60 degrees where the radian
/// conversion would leave `cos` one ulp above 1/2.
fn cos_deg(a: f64) -> f64 {
    if a == 60.0 {
        0.5
    } else {
        a.to_radians().cos()
    }
}

/// Gain of the optical concentrator; zero outside the field of view.
pub fn concentrator_gain(incidence_deg: f64, fov_deg: f64, refractive_index: f64) -> f64 {
    concentrator_gain_rad(incidence_deg.to_radians(), fov_deg.to_radians(), refractive_index)
}

fn concentrator_gain_rad(incidence: f64, fov: f64, n: f64) -> f64 {
    if incidence.abs() <= fov {
        n * n / fov.sin().powi(2)
    } else {
        0.0
    }
}

/// Lambertian radiant intensity (1/sr) at the given emergence angle.
pub fn radiant_intensity(emergence_deg: f64, m: f64) -> f64 {
    radiant_intensity_rad(emergence_deg.to_radians(), m)
}

fn radiant_intensity_rad(emergence: f64, m: f64) -> f64 {
    let c = emergence.cos();
    if c <= 0.0 {
        return 0.0;
    }
    (m + 1.0) / (2.0 * PI) * c.powf(m)
}

/// Distance-only gain model for vertically aligned axes: `varpi / d^(m+3)`.
pub fn simplified_gain(distance: f64, varpi: f64, m: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(domain(format!("distance must be positive, got {distance}")));
    }
    Ok(varpi / distance.powf(m + 3.0))
}

/// Prefactor of [`simplified_gain`] for a detector at vertical separation `z`.
///
/// The `z^(m+1)` factor comes from replacing both cosines by `z/d`; with it
/// the simplified and full models agree exactly for aligned axes.
pub fn varpi(m: f64, area: f64, filter_gain: f64, concentrator: f64, z: f64) -> f64 {
    (m + 1.0) * area * filter_gain * concentrator * z.powf(m + 1.0) / (2.0 * PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Luminaire {
    pub position: Vector3<f64>,
    pub semi_angle_half_power_deg: f64,
    pub leds_per_luminaire: u32,
    /// Optical power per LED in watts.
    pub power_per_led: f64,
    /// Unit boresight vector.
    pub orientation: Vector3<f64>,
}

impl Luminaire {
    /// A downward-facing luminaire with the 60x60 array of 10 mW LEDs.
    pub fn new(position: Vector3<f64>, semi_angle_half_power_deg: f64) -> Self {
        Self {
            position,
            semi_angle_half_power_deg,
            leds_per_luminaire: 3600,
            power_per_led: 0.01,
            orientation: -Vector3::z(),
        }
    }

    pub fn lambertian_order(&self) -> Result<f64> {
        lambertian_order(self.semi_angle_half_power_deg)
    }

    /// Total emitted power in watts.
    pub fn total_power(&self) -> f64 {
        f64::from(self.leds_per_luminaire) * self.power_per_led
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.semi_angle_half_power_deg;
        if !(a > 0.0 && a < 90.0) {
            return Err(invalid("semi_angle_half_power", format!("{a} not in (0, 90)")));
        }
        if self.leds_per_luminaire < 1 {
            return Err(invalid("leds_per_luminaire", "must be at least 1"));
        }
        if !(self.power_per_led > 0.0 && self.power_per_led.is_finite()) {
            return Err(invalid("power_per_led", format!("{} must be > 0", self.power_per_led)));
        }
        check_unit("luminaire orientation", &self.orientation)?;
        check_finite("luminaire position", &self.position)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotoDetector {
    pub position: Vector3<f64>,
    /// Physical area in m^2.
    pub area: f64,
    pub fov_deg: f64,
    /// Responsivity in A/W.
    pub responsivity: f64,
    pub refractive_index: f64,
    pub filter_gain: f64,
    /// Unit normal of the detector surface.
    pub orientation: Vector3<f64>,
}

impl PhotoDetector {
    /// An upward-facing detector with the reference receiver parameters.
    pub fn new(position: Vector3<f64>) -> Self {
        Self {
            position,
            area: 1e-4,
            fov_deg: 15.0,
            responsivity: 1.0,
            refractive_index: 1.5,
            filter_gain: 1.0,
            orientation: Vector3::z(),
        }
    }

    /// Concentrator gain inside the field of view.
    pub fn concentrator(&self) -> f64 {
        concentrator_gain(0.0, self.fov_deg, self.refractive_index)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(invalid("area", format!("{} must be > 0", self.area)));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg <= 90.0) {
            return Err(invalid("fov", format!("{} not in (0, 90]", self.fov_deg)));
        }
        if !(self.responsivity > 0.0 && self.responsivity.is_finite()) {
            return Err(invalid("responsivity", format!("{} must be > 0", self.responsivity)));
        }
        if !(self.refractive_index >= 1.0 && self.refractive_index.is_finite()) {
            return Err(invalid(
                "refractive_index",
                format!("{} must be >= 1", self.refractive_index),
            ));
        }
        if !(self.filter_gain > 0.0 && self.filter_gain <= 1.0) {
            return Err(invalid("filter_gain", format!("{} not in (0, 1]", self.filter_gain)));
        }
        check_unit("detector orientation", &self.orientation)?;
        check_finite("detector position", &self.position)
    }
}

fn check_unit(what: &'static str, v: &Vector3<f64>) -> Result<()> {
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
        return Err(invalid(what, format!("must be a unit vector, norm is {n}")));
    }
    Ok(())
}

fn check_finite(what: &'static str, v: &Vector3<f64>) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(invalid(what, "non-finite coordinate"))
    }
}

/// LOS gain between one luminaire and one detector.
pub fn channel_gain(led: &Luminaire, pd: &PhotoDetector) -> Result<f64> {
    let v = pd.position - led.position;
    let d = v.norm();
    if !(d > 0.0) {
        return Err(domain("luminaire and detector positions coincide"));
    }
    let cos_em = v.dot(&led.orientation) / d;
    let cos_inc = (-v).dot(&pd.orientation) / d;
    if cos_em <= 0.0 || cos_inc <= 0.0 {
        return Ok(0.0);
    }
    let incidence = cos_inc.clamp(-1.0, 1.0).acos();
    let fov = pd.fov_deg.to_radians();
    if incidence > fov {
        return Ok(0.0);
    }
    let m = led.lambertian_order()?;
    let emergence = cos_em.clamp(-1.0, 1.0).acos();
    let gain = pd.area / (d * d)
        * radiant_intensity_rad(emergence, m)
        * pd.filter_gain
        * concentrator_gain_rad(incidence, fov, pd.refractive_index)
        * cos_inc;
    Ok(gain)
}

/// Rectangular room with luminaires on (or near) the ceiling and detectors
/// on the receiver plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomLayout {
    pub room_x: f64,
    pub room_y: f64,
    pub room_z: f64,
    pub receiver_plane_z: f64,
    pub luminaires: Vec<Luminaire>,
    pub detectors: Vec<PhotoDetector>,
}

impl RoomLayout {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("room_x", self.room_x),
            ("room_y", self.room_y),
            ("room_z", self.room_z),
            ("receiver_plane_z", self.receiver_plane_z),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be > 0")));
            }
        }
        if self.receiver_plane_z >= self.room_z {
            return Err(invalid("receiver_plane_z", "must lie below the ceiling"));
        }
        for led in &self.luminaires {
            led.validate()?;
            self.check_inside("luminaire position", &led.position)?;
            if led.position.z <= self.receiver_plane_z {
                return Err(invalid(
                    "luminaire position",
                    format!("height {} is not above the receiver plane", led.position.z),
                ));
            }
        }
        for pd in &self.detectors {
            pd.validate()?;
            self.check_inside("detector position", &pd.position)?;
        }
        Ok(())
    }

    fn check_inside(&self, what: &'static str, p: &Vector3<f64>) -> Result<()> {
        let inside = (0.0..=self.room_x).contains(&p.x)
            && (0.0..=self.room_y).contains(&p.y)
            && (0.0..=self.room_z).contains(&p.z);
        if inside {
            Ok(())
        } else {
            Err(invalid(
                what,
                format!("({}, {}, {}) lies outside the room", p.x, p.y, p.z),
            ))
        }
    }

    /// Height between the luminaire plane (first luminaire) and the receiver plane.
    pub fn plane_separation(&self) -> Option<f64> {
        self.luminaires
            .first()
            .map(|l| l.position.z - self.receiver_plane_z)
    }
}

/// Rows `x cols` arrangement used for `n` devices: as square as possible with
/// the longer side along x.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt().floor().max(1.0) as usize;
    while !n.is_multiple_of(rows) {
        rows -= 1;
    }
    (rows, n / rows)
}

/// Regular-grid layout parameters. Luminaires sit on a grid centred in the
/// room; each detector sits on the receiver plane directly beneath its
/// luminaire.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub room_x: f64,
    pub room_y: f64,
    pub room_z: f64,
    pub receiver_plane_z: f64,
    /// Defaults to the ceiling height.
    pub luminaire_z: Option<f64>,
    pub spacing: f64,
    pub count: usize,
    pub luminaire: Luminaire,
    pub detector: PhotoDetector,
}

impl Default for GridLayout {
    fn default() -> Self {
        Self {
            room_x: 4.0,
            room_y: 4.0,
            room_z: 3.0,
            receiver_plane_z: 0.75,
            luminaire_z: None,
            spacing: 1.0,
            count: 4,
            luminaire: Luminaire::new(Vector3::zeros(), 15.0),
            detector: PhotoDetector::new(Vector3::zeros()),
        }
    }
}

impl GridLayout {
    pub fn build(&self) -> Result<RoomLayout> {
        if self.count == 0 {
            return Err(invalid("count", "at least one luminaire is required"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(invalid("spacing", format!("{} must be > 0", self.spacing)));
        }
        let (rows, cols) = grid_shape(self.count);
        let lz = self.luminaire_z.unwrap_or(self.room_z);
        let cx = self.room_x / 2.0;
        let cy = self.room_y / 2.0;
        let mut luminaires = Vec::with_capacity(self.count);
        let mut detectors = Vec::with_capacity(self.count);
        for r in 0..rows {
            for c in 0..cols {
                let x = cx + (c as f64 - (cols as f64 - 1.0) / 2.0) * self.spacing;
                let y = cy + (r as f64 - (rows as f64 - 1.0) / 2.0) * self.spacing;
                luminaires.push(Luminaire {
                    position: Vector3::new(x, y, lz),
                    ..self.luminaire.clone()
                });
                detectors.push(PhotoDetector {
                    position: Vector3::new(x, y, self.receiver_plane_z),
                    ..self.detector.clone()
                });
            }
        }
        let layout = RoomLayout {
            room_x: self.room_x,
            room_y: self.room_y,
            room_z: self.room_z,
            receiver_plane_z: self.receiver_plane_z,
            luminaires,
            detectors,
        };
        layout.validate()?;
        Ok(layout)
    }
}

/// `N_R x N_T` matrix of nonnegative, finite optical gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix(DMatrix<f64>);

impl ChannelMatrix {
    pub fn new(gains: DMatrix<f64>) -> Result<Self> {
        if gains.nrows() == 0 || gains.ncols() == 0 {
            return Err(Error::Size("channel matrix must be non-empty".into()));
        }
        if let Some(bad) = gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(domain(format!(
                "channel gains must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(Self(gains))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n_r = rows.len();
        let n_t = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_t) {
            return Err(Error::Size("ragged channel rows".into()));
        }
        Self::new(DMatrix::from_fn(n_r, n_t, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn gains(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n_r(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.0.row(i).transpose()
    }

    /// Strict row-wise diagonal dominance (square matrices only).
    pub fn is_diagonally_dominant(&self) -> bool {
        self.n_r() == self.n_t()
            && (0..self.n_r()).all(|i| {
                let off: f64 = (0..self.n_t()).filter(|&j| j != i).map(|j| self.0[(i, j)]).sum();
                self.0[(i, i)] > off
            })
    }

    pub fn to_csv(&self) -> String {
        matrix_csv(&self.0)
    }
}

pub(crate) fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

/// `gains[i][j]` is the gain from luminaire `j` to detector `i`.
pub fn build_channel_matrix(layout: &RoomLayout) -> Result<ChannelMatrix> {
    if layout.luminaires.is_empty() || layout.detectors.is_empty() {
        return Err(invalid(
            "layout",
            "at least one luminaire and one detector are required",
        ));
    }
    let mut gains = DMatrix::zeros(layout.detectors.len(), layout.luminaires.len());
    for (i, pd) in layout.detectors.iter().enumerate() {
        for (j, led) in layout.luminaires.iter().enumerate() {
            gains[(i, j)] = channel_gain(led, pd)?;
        }
    }
    ChannelMatrix::new(gains)
}

/// Total received gain sampled over the receiver plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, one row per y sample.
    pub values: Vec<f64>,
}

impl GainMap {
    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx() + ix]
    }

    /// Index and value of the largest sample.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let (k, v) = self
            .values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
        (k % self.nx(), k / self.nx(), v)
    }

    /// Grid as CSV: one line per y index, one column per x index.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.nx()) {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn centred_axis(extent: f64, resolution: f64) -> Vec<f64> {
    let n = (extent / resolution).ceil().max(1.0) as usize;
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n)
        .map(|k| extent / 2.0 + (k as f64 - mid) * resolution)
        .collect()
}

/// Sum of gains from every luminaire to a probe detector moved over a grid
/// centred in the room. The probe copies the first detector of the layout.
pub fn gain_map(layout: &RoomLayout, resolution: f64) -> Result<GainMap> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(domain(format!("grid resolution must be positive, got {resolution}")));
    }
    let template = layout
        .detectors
        .first()
        .cloned()
        .unwrap_or_else(|| PhotoDetector::new(Vector3::zeros()));
    let xs = centred_axis(layout.room_x, resolution);
    let ys = centred_axis(layout.room_y, resolution);
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let probe = PhotoDetector {
                position: Vector3::new(x, y, layout.receiver_plane_z),
                ..template.clone()
            };
            let mut total = 0.0;
            for led in &layout.luminaires {
                total += channel_gain(led, &probe)?;
            }
            values.push(total);
        }
    }
    Ok(GainMap { xs, ys, values })
}
