//! Declarative experiment configuration.
//!
//! Every field has a default taken from the reference indoor setup, so an
//! empty file is a valid config. Unknown keys are rejected.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use vlcsim::channel::{GridLayout, Luminaire, PhotoDetector, RoomLayout};
use vlcsim::csi::{PerturbationModel, ShiftSign};
use vlcsim::noise::NoiseParams;
use vlcsim::precoding::{OapScaling, Scheme};
use vlcsim::analytic::ThroughputAveraging;
use vlcsim::montecarlo::{ThresholdMode, MIN_EARLY_STOP_ERRORS};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub layout: LayoutConfig,
    pub noise: NoiseConfig,
    pub sweep: SweepConfig,
    pub simulation: SimulationConfig,
    pub csi: CsiConfig,
    pub mobility: MobilityConfig,
    pub channel_map: ChannelMapConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            layout: LayoutConfig::default(),
            noise: NoiseConfig::default(),
            sweep: SweepConfig::default(),
            simulation: SimulationConfig::default(),
            csi: CsiConfig::default(),
            mobility: MobilityConfig::default(),
            channel_map: ChannelMapConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    /// Room width, depth and height in metres.
    pub room: [f64; 3],
    pub receiver_plane_z: f64,
    /// Luminaire mounting height; the ceiling when absent.
    pub luminaire_z: Option<f64>,
    /// Centre-to-centre LED spacing, one run per entry.
    pub spacings: Vec<f64>,
    /// Half-power semi-angles in degrees, one run per entry.
    pub semi_angles: Vec<f64>,
    /// Number of luminaires (= users), one run per entry.
    pub mimo_orders: Vec<usize>,
    pub leds_per_luminaire: u32,
    pub power_per_led: f64,
    pub detector_area: f64,
    pub fov_deg: f64,
    pub responsivity: f64,
    pub refractive_index: f64,
    pub filter_gain: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            room: [4.0, 4.0, 3.0],
            receiver_plane_z: 0.75,
            luminaire_z: None,
            spacings: vec![1.0],
            semi_angles: vec![15.0],
            mimo_orders: vec![4],
            leds_per_luminaire: 3600,
            power_per_led: 0.01,
            detector_area: 1e-4,
            fov_deg: 15.0,
            responsivity: 1.0,
            refractive_index: 1.5,
            filter_gain: 1.0,
        }
    }
}

/// One point of the spacing x semi-angle x order grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayoutPoint {
    pub spacing: f64,
    pub semi_angle: f64,
    pub mimo_order: usize,
}

impl LayoutConfig {
    pub fn points(&self) -> Vec<LayoutPoint> {
        let mut out = Vec::new();
        for &mimo_order in &self.mimo_orders {
            for &semi_angle in &self.semi_angles {
                for &spacing in &self.spacings {
                    out.push(LayoutPoint { spacing, semi_angle, mimo_order });
                }
            }
        }
        out
    }

    pub fn grid(&self, p: &LayoutPoint) -> GridLayout {
        let mut luminaire = Luminaire::new(Vector3::zeros(), p.semi_angle);
        luminaire.leds_per_luminaire = self.leds_per_luminaire;
        luminaire.power_per_led = self.power_per_led;
        let mut detector = PhotoDetector::new(Vector3::zeros());
        detector.area = self.detector_area;
        detector.fov_deg = self.fov_deg;
        detector.responsivity = self.responsivity;
        detector.refractive_index = self.refractive_index;
        detector.filter_gain = self.filter_gain;
        GridLayout {
            room_x: self.room[0],
            room_y: self.room[1],
            room_z: self.room[2],
            receiver_plane_z: self.receiver_plane_z,
            luminaire_z: self.luminaire_z,
            spacing: p.spacing,
            count: p.mimo_order,
            luminaire,
            detector,
        }
    }

    pub fn build(&self, p: &LayoutPoint) -> Result<RoomLayout, CliError> {
        self.grid(p).build().map_err(CliError::config)
    }

    /// Optical power per luminaire in watts.
    pub fn luminaire_power(&self) -> f64 {
        self.leds_per_luminaire as f64 * self.power_per_led
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// `sigma = gamma P 10^(-SNR/20)` swept over the SNR axis.
    Swept,
    /// Shot plus thermal noise at the configured power; no SNR sweep.
    Physical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub mode: NoiseMode,
    pub bandwidth: f64,
    pub background_current: f64,
    pub i2: f64,
    pub i3: f64,
    pub temperature: f64,
    pub open_loop_gain: f64,
    pub capacitance_per_area: f64,
    pub fet_noise_factor: f64,
    pub fet_transconductance: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let p = NoiseParams::default();
        Self {
            mode: NoiseMode::Swept,
            bandwidth: p.bandwidth,
            background_current: p.i_bg,
            i2: p.i2,
            i3: p.i3,
            temperature: p.temperature,
            open_loop_gain: p.open_loop_gain,
            capacitance_per_area: p.capacitance_per_area,
            fet_noise_factor: p.fet_noise_factor,
            fet_transconductance: p.fet_transconductance,
        }
    }
}

impl NoiseConfig {
    pub fn params(&self) -> NoiseParams {
        NoiseParams {
            bandwidth: self.bandwidth,
            i_bg: self.background_current,
            i2: self.i2,
            i3: self.i3,
            temperature: self.temperature,
            open_loop_gain: self.open_loop_gain,
            capacitance_per_area: self.capacitance_per_area,
            fet_noise_factor: self.fet_noise_factor,
            fet_transconductance: self.fet_transconductance,
            ..NoiseParams::default()
        }
    }
}

/// Transmit SNR axis in dB, inclusive of both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_start_db: f64,
    pub snr_stop_db: f64,
    pub snr_step_db: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_start_db: 40.0,
            snr_stop_db: 110.0,
            snr_step_db: 2.0,
        }
    }
}

impl SweepConfig {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.snr_stop_db - self.snr_start_db) / self.snr_step_db + 1e-9).floor() as usize;
        (0..=n).map(|k| self.snr_start_db + k as f64 * self.snr_step_db).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Ci,
    Oap,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Ci => Scheme::Ci,
            SchemeName::Oap => Scheme::Oap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingName {
    Literal,
    Renormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdName {
    Genie,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingName {
    OnSymbols,
    AllWords,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub schemes: Vec<SchemeName>,
    /// Run the Monte Carlo engine next to the analytic expressions.
    pub monte_carlo: bool,
    pub symbols: u64,
    pub early_stop_errors: Option<u64>,
    pub oap_scaling: ScalingName,
    pub threshold: ThresholdName,
    pub pinv_tolerance: f64,
    pub throughput_averaging: AveragingName,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            schemes: vec![SchemeName::Ci, SchemeName::Oap],
            monte_carlo: true,
            symbols: 2_000_000,
            early_stop_errors: None,
            oap_scaling: ScalingName::Literal,
            threshold: ThresholdName::Genie,
            pinv_tolerance: vlcsim::precoding::DEFAULT_PINV_TOLERANCE,
            throughput_averaging: AveragingName::OnSymbols,
        }
    }
}

impl SimulationConfig {
    pub fn scaling(&self) -> OapScaling {
        match self.oap_scaling {
            ScalingName::Literal => OapScaling::Literal,
            ScalingName::Renormalized => OapScaling::Renormalized,
        }
    }

    pub fn threshold_mode(&self) -> ThresholdMode {
        match self.threshold {
            ThresholdName::Genie => ThresholdMode::Genie,
            ThresholdName::Fixed => ThresholdMode::Fixed,
        }
    }

    pub fn averaging(&self) -> ThroughputAveraging {
        match self.throughput_averaging {
            AveragingName::OnSymbols => ThroughputAveraging::OnSymbols,
            AveragingName::AllWords => ThroughputAveraging::AllWords,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationName {
    Uniform,
    WorstCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignName {
    Plus,
    Minus,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsiConfig {
    pub model: PerturbationName,
    pub sign: SignName,
    /// Receivers whose channel rows are stale.
    pub mobile_users: Vec<usize>,
}

impl Default for CsiConfig {
    fn default() -> Self {
        Self {
            model: PerturbationName::Uniform,
            sign: SignName::Adversarial,
            mobile_users: vec![0],
        }
    }
}

impl CsiConfig {
    pub fn perturbation(&self) -> PerturbationModel {
        match self.model {
            PerturbationName::Uniform => PerturbationModel::Uniform,
            PerturbationName::WorstCase => PerturbationModel::WorstCase(match self.sign {
                SignName::Plus => ShiftSign::Plus,
                SignName::Minus => ShiftSign::Minus,
                SignName::Adversarial => ShiftSign::Adversarial,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    /// Walking speed in m/s.
    pub velocity: f64,
    /// Start offset from the serving luminaire's axis, metres.
    pub start: [f64; 2],
    pub heading: [f64; 2],
    /// Delays between channel estimation and use, one run per entry.
    pub elapsed_times: Vec<f64>,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            velocity: 1.0,
            start: [0.0, 0.0],
            heading: [1.0, 0.0],
            elapsed_times: vec![0.02, 0.05, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelMapConfig {
    pub resolution: f64,
}

impl Default for ChannelMapConfig {
    fn default() -> Self {
        Self { resolution: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// File stem; the subcommand name when absent.
    pub name: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "results".into(),
            name: None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        Err(CliError::Config(format!("{name} must not be empty")))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Range checks and a trial build of every layout. Nothing numerical
    /// runs before this passes.
    pub fn validate(&self) -> Result<(), CliError> {
        let l = &self.layout;
        nonempty("layout.spacings", &l.spacings)?;
        nonempty("layout.semi_angles", &l.semi_angles)?;
        nonempty("layout.mimo_orders", &l.mimo_orders)?;
        for &n in &l.mimo_orders {
            if !(1..=vlcsim::analytic::MAX_STREAMS).contains(&n) {
                return Err(CliError::Config(format!(
                    "layout.mimo_orders entries must be in 1..={}, got {n}",
                    vlcsim::analytic::MAX_STREAMS
                )));
            }
        }
        positive("layout.power_per_led", l.power_per_led)?;
        if l.leds_per_luminaire == 0 {
            return Err(CliError::Config("layout.leds_per_luminaire must be at least 1".into()));
        }
        for p in l.points() {
            l.build(&p)?;
        }
        self.noise.params().validate().map_err(CliError::config)?;

        let s = &self.sweep;
        positive("sweep.snr_step_db", s.snr_step_db)?;
        if !(s.snr_start_db.is_finite() && s.snr_stop_db.is_finite() && s.snr_stop_db >= s.snr_start_db) {
            return Err(CliError::Config(format!(
                "sweep range [{}, {}] dB is not a finite increasing interval",
                s.snr_start_db, s.snr_stop_db
            )));
        }

        let sim = &self.simulation;
        nonempty("simulation.schemes", &sim.schemes)?;
        if sim.symbols == 0 {
            return Err(CliError::Config("simulation.symbols must be at least 1".into()));
        }
        if let Some(e) = sim.early_stop_errors {
            if e < MIN_EARLY_STOP_ERRORS {
                return Err(CliError::Config(format!(
                    "simulation.early_stop_errors must be at least {MIN_EARLY_STOP_ERRORS}, got {e}"
                )));
            }
        }
        positive("simulation.pinv_tolerance", sim.pinv_tolerance)?;

        let min_order = l.mimo_orders.iter().copied().min().unwrap_or(0);
        if let Some(&u) = self.csi.mobile_users.iter().find(|&&u| u >= min_order) {
            return Err(CliError::Config(format!(
                "csi.mobile_users entry {u} exceeds the smallest MIMO order {min_order}"
            )));
        }

        let m = &self.mobility;
        if !(m.velocity >= 0.0 && m.velocity.is_finite()) {
            return Err(CliError::Config(format!("mobility.velocity must be finite and >= 0, got {}", m.velocity)));
        }
        nonempty("mobility.elapsed_times", &m.elapsed_times)?;
        if let Some(t) = m.elapsed_times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(CliError::Config(format!("mobility.elapsed_times entries must be >= 0, got {t}")));
        }
        if m.velocity > 0.0 && m.heading == [0.0, 0.0] {
            return Err(CliError::Config("mobility.heading must be nonzero when velocity > 0".into()));
        }

        positive("channel_map.resolution", self.channel_map.resolution)?;
        if self.output.dir.is_empty() {
            return Err(CliError::Config("output.dir must not be empty".into()));
        }
        Ok(())
    }

    /// Hash input: the resolved config without output locations.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        serde_json::to_string(&c).expect("config serializes")
    }
}
