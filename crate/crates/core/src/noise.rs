//! Receiver noise: shot and thermal variances from device physics, and the
//! swept transmit-SNR mode used for BER curves.
//!
//! Transmit SNR is `20 log10(gamma P / sigma)` with one `sigma` shared by
//! all detectors.

use std::f64::consts::PI;

use crate::channel::PhotoDetector;
use crate::error::{domain, invalid, Result};

/// Electronic charge in coulombs.
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParams {
    pub q: f64,
    /// Noise bandwidth in Hz.
    pub bandwidth: f64,
    /// Background current in A.
    pub i_bg: f64,
    pub i2: f64,
    pub i3: f64,
    pub k_boltzmann: f64,
    /// Absolute temperature in K.
    pub temperature: f64,
    pub open_loop_gain: f64,
    /// Fixed detector capacitance per unit area, F/m^2.
    pub capacitance_per_area: f64,
    pub fet_noise_factor: f64,
    /// FET transconductance in S.
    pub fet_transconductance: f64,
}

impl Default for NoiseParams {
    /// Background current and `I_2` from the reference receiver; the
    /// transimpedance front-end values are conventional choices.
    fn default() -> Self {
        Self {
            q: ELECTRON_CHARGE,
            bandwidth: 100e6,
            i_bg: 100e-6,
            i2: 0.562,
            i3: 0.0868,
            k_boltzmann: BOLTZMANN,
            temperature: 295.0,
            open_loop_gain: 10.0,
            // 112 pF/cm^2
            capacitance_per_area: 112e-12 / 1e-4,
            fet_noise_factor: 1.5,
            fet_transconductance: 30e-3,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("q", self.q),
            ("bandwidth", self.bandwidth),
            ("i_bg", self.i_bg),
            ("i2", self.i2),
            ("i3", self.i3),
            ("k_boltzmann", self.k_boltzmann),
            ("temperature", self.temperature),
            ("open_loop_gain", self.open_loop_gain),
            ("capacitance_per_area", self.capacitance_per_area),
            ("fet_noise_factor", self.fet_noise_factor),
            ("fet_transconductance", self.fet_transconductance),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be strictly positive")));
            }
        }
        Ok(())
    }
}

/// Shot-noise variance (A^2) at a detector with gain row `channel_row`
/// driven by the per-LED optical powers in `transmit_signal`.
pub fn shot_variance(
    channel_row: &[f64],
    transmit_signal: &[f64],
    responsivity: f64,
    params: &NoiseParams,
) -> Result<f64> {
    if channel_row.len() != transmit_signal.len() {
        return Err(crate::Error::Size(format!(
            "channel row has {} entries, signal has {}",
            channel_row.len(),
            transmit_signal.len()
        )));
    }
    if let Some(x) = transmit_signal.iter().find(|x| !(**x >= 0.0)) {
        return Err(domain(format!("transmit signal must be nonnegative, got {x}")));
    }
    let received: f64 = channel_row.iter().zip(transmit_signal).map(|(h, x)| h * x).sum();
    shot_variance_received(received, responsivity, params)
}

/// Shot-noise variance for a given received optical power in watts.
pub fn shot_variance_received(received_power: f64, responsivity: f64, params: &NoiseParams) -> Result<f64> {
    if !(received_power >= 0.0) {
        return Err(domain(format!(
            "received optical power must be nonnegative, got {received_power}"
        )));
    }
    Ok(2.0 * params.q * params.bandwidth * (responsivity * received_power + params.i_bg * params.i2))
}

/// Thermal-noise variance (A^2) of the transimpedance front end.
pub fn thermal_variance(detector_area: f64, params: &NoiseParams) -> Result<f64> {
    if !(detector_area > 0.0) {
        return Err(domain(format!("detector area must be positive, got {detector_area}")));
    }
    let kt = params.k_boltzmann * params.temperature;
    let eta = params.capacitance_per_area;
    let b = params.bandwidth;
    let feedback = 8.0 * PI * kt / params.open_loop_gain * eta * detector_area * params.i2 * b * b;
    let channel = 16.0 * PI * PI * kt * params.fet_noise_factor / params.fet_transconductance
        * eta
        * eta
        * detector_area
        * detector_area
        * params.i3
        * b.powi(3);
    Ok(feedback + channel)
}

/// Standard deviation of the combined noise.
pub fn total_sigma(shot: f64, thermal: f64) -> f64 {
    debug_assert!(shot >= 0.0 && thermal >= 0.0);
    (shot + thermal).sqrt()
}

/// Noise standard deviation that realises a transmit SNR of `snr_db`.
pub fn sigma_from_transmit_snr(snr_db: f64, responsivity: f64, power: f64) -> Result<f64> {
    if !(power > 0.0) {
        return Err(domain(format!("transmit power must be positive, got {power}")));
    }
    if !snr_db.is_finite() {
        return Err(domain(format!("transmit SNR must be finite, got {snr_db} dB")));
    }
    Ok(responsivity * power * 10f64.powf(-snr_db / 20.0))
}

/// Per-detector noise as seen by the analytic and Monte Carlo engines.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// One standard deviation for every detector and symbol.
    Fixed { sigma: f64 },
    /// Shot plus thermal noise, recomputed from each detector's received power.
    Physical(PhysicalNoise),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalNoise {
    pub params: NoiseParams,
    responsivity: Vec<f64>,
    thermal: Vec<f64>,
}

impl NoiseModel {
    /// Swept mode at the given transmit SNR.
    pub fn swept(snr_db: f64, responsivity: f64, power: f64) -> Result<Self> {
        Ok(Self::Fixed {
            sigma: sigma_from_transmit_snr(snr_db, responsivity, power)?,
        })
    }

    /// Noise switched off; only meaningful as a test hook.
    pub fn noiseless() -> Self {
        Self::Fixed { sigma: 0.0 }
    }

    pub fn physical(params: NoiseParams, detectors: &[PhotoDetector]) -> Result<Self> {
        params.validate()?;
        let thermal = detectors
            .iter()
            .map(|pd| thermal_variance(pd.area, &params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::Physical(PhysicalNoise {
            responsivity: detectors.iter().map(|pd| pd.responsivity).collect(),
            thermal,
            params,
        }))
    }

    /// Noise standard deviation at detector `pd` receiving `received_power`
    /// watts. Negative net powers (possible with stale precoders) count as
    /// zero signal.
    pub fn sigma(&self, pd: usize, received_power: f64) -> f64 {
        match self {
            Self::Fixed { sigma } => *sigma,
            Self::Physical(p) => {
                let shot = shot_variance_received(received_power.max(0.0), p.responsivity[pd], &p.params)
                    .expect("clamped power is nonnegative");
                total_sigma(shot, p.thermal[pd])
            }
        }
    }

    pub fn is_signal_dependent(&self) -> bool {
        matches!(self, Self::Physical(_))
    }

    /// Number of detectors the model was built for, if it is per-detector.
    pub fn detectors(&self) -> Option<usize> {
        match self {
            Self::Fixed { .. } => None,
            Self::Physical(p) => Some(p.thermal.len()),
        }
    }
}
