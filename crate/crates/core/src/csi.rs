//! Outdated channel state information caused by user mobility.
//!
//! A user that moves between two channel updates changes its row of `H`.
//! With both device axes vertical, each gain reduces to `varpi / d^(m+3)`,
//! which bounds the change by the radial distances before and after the
//! move.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{channel_gain, simplified_gain, ChannelMatrix, Luminaire, PhotoDetector};
use crate::error::{domain, invalid, Result};
use crate::precoding::Precoder;

/// Horizontal move of one user relative to the vertical axis of its
/// serving luminaire.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityEvent {
    /// Offset from the luminaire axis before the move, metres.
    pub start_xy: [f64; 2],
    /// Offset after the move, metres.
    pub end_xy: [f64; 2],
    /// Height between luminaire and receiver planes.
    pub plane_separation: f64,
    /// Time since the last channel update, seconds.
    pub elapsed_time: f64,
}

impl MobilityEvent {
    /// Straight move from `start_xy` along `heading` at `velocity` for
    /// `elapsed_time` seconds.
    pub fn along(start_xy: [f64; 2], heading: [f64; 2], velocity: f64, elapsed_time: f64, plane_separation: f64) -> Result<Self> {
        let norm = heading[0].hypot(heading[1]);
        if !(norm > 0.0) {
            return Err(invalid("heading", "must be a nonzero direction"));
        }
        if !(velocity >= 0.0 && velocity.is_finite()) {
            return Err(invalid("velocity", format!("{velocity} must be >= 0")));
        }
        let step = velocity * elapsed_time / norm;
        let ev = Self {
            start_xy,
            end_xy: [start_xy[0] + heading[0] * step, start_xy[1] + heading[1] * step],
            plane_separation,
            elapsed_time,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.elapsed_time > 0.0 && self.elapsed_time.is_finite()) {
            return Err(invalid("elapsed_time", format!("{} must be > 0", self.elapsed_time)));
        }
        if !(self.plane_separation > 0.0 && self.plane_separation.is_finite()) {
            return Err(invalid(
                "plane_separation",
                format!("{} must be > 0", self.plane_separation),
            ));
        }
        if self.start_xy.iter().chain(&self.end_xy).any(|c| !c.is_finite()) {
            return Err(invalid("mobility", "non-finite coordinate"));
        }
        Ok(())
    }

    /// Checks that both endpoints lie inside a room, given the absolute
    /// position of the serving luminaire's axis.
    pub fn validate_in_room(&self, axis_xy: [f64; 2], room_x: f64, room_y: f64) -> Result<()> {
        for p in [self.start_xy, self.end_xy] {
            let (x, y) = (axis_xy[0] + p[0], axis_xy[1] + p[1]);
            if !((0.0..=room_x).contains(&x) && (0.0..=room_y).contains(&y)) {
                return Err(invalid("mobility", format!("position ({x}, {y}) lies outside the room")));
            }
        }
        Ok(())
    }

    pub fn displacement(&self) -> f64 {
        (self.end_xy[0] - self.start_xy[0]).hypot(self.end_xy[1] - self.start_xy[1])
    }

    /// Speed implied by the move.
    pub fn max_velocity(&self) -> f64 {
        self.displacement() / self.elapsed_time
    }

    pub fn d1(&self) -> f64 {
        let [x, y] = self.start_xy;
        (x * x + y * y + self.plane_separation.powi(2)).sqrt()
    }

    pub fn d2(&self) -> f64 {
        let [x, y] = self.end_xy;
        (x * x + y * y + self.plane_separation.powi(2)).sqrt()
    }
}

/// Worst-case absolute gain change caused by `event`.
pub fn error_bound(event: &MobilityEvent, varpi: f64, m: f64) -> Result<f64> {
    event.validate()?;
    let before = simplified_gain(event.d1(), varpi, m)?;
    let after = simplified_gain(event.d2(), varpi, m)?;
    Ok((after - before).abs())
}

/// Cross-check of [`error_bound`] with the full geometric model, including
/// the receiver field of view.
pub fn geometric_gain_change(led: &Luminaire, probe: &PhotoDetector, event: &MobilityEvent) -> Result<f64> {
    event.validate()?;
    let at = |xy: [f64; 2]| {
        let mut pd = probe.clone();
        pd.position.x = led.position.x + xy[0];
        pd.position.y = led.position.y + xy[1];
        pd.position.z = led.position.z - event.plane_separation;
        channel_gain(led, &pd)
    };
    Ok((at(event.end_xy)? - at(event.start_xy)?).abs())
}

/// Sign of the worst-case shift applied to each perturbed entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShiftSign {
    Plus,
    Minus,
    /// `-E` on the user's own (desired) path, `+E` on interference paths.
    #[default]
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationModel {
    WorstCase(ShiftSign),
    /// I.i.d. uniform on `[-E, +E]`.
    Uniform,
}

/// Transmitter-side copy of the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub h_hat: ChannelMatrix,
    pub error_bound: f64,
    pub true_h: ChannelMatrix,
}

impl ChannelEstimate {
    /// Fresh CSI.
    pub fn exact(h: &ChannelMatrix) -> Self {
        Self {
            h_hat: h.clone(),
            error_bound: 0.0,
            true_h: h.clone(),
        }
    }

    pub fn max_abs_error(&self) -> f64 {
        (self.h_hat.gains() - self.true_h.gains()).amax()
    }
}

/// Perturbs the rows of the moving users; results are clamped at zero.
pub fn perturb_channel(
    h: &ChannelMatrix,
    moving_rows: &[usize],
    bound: f64,
    model: PerturbationModel,
    seed: u64,
) -> Result<ChannelEstimate> {
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(domain(format!("error bound must be finite and >= 0, got {bound}")));
    }
    if let Some(&r) = moving_rows.iter().find(|&&r| r >= h.n_r()) {
        return Err(domain(format!("row {r} out of range for {} receivers", h.n_r())));
    }
    let mut g = h.gains().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &i in moving_rows {
        for j in 0..h.n_t() {
            let shift = match model {
                PerturbationModel::Uniform => {
                    if bound > 0.0 {
                        rng.random_range(-bound..=bound)
                    } else {
                        0.0
                    }
                }
                PerturbationModel::WorstCase(ShiftSign::Plus) => bound,
                PerturbationModel::WorstCase(ShiftSign::Minus) => -bound,
                PerturbationModel::WorstCase(ShiftSign::Adversarial) => {
                    if i == j {
                        -bound
                    } else {
                        bound
                    }
                }
            };
            g[(i, j)] = (g[(i, j)] + shift).max(0.0);
        }
    }
    Ok(ChannelEstimate {
        h_hat: ChannelMatrix::new(g)?,
        error_bound: bound,
        true_h: h.clone(),
    })
}

/// `Upsilon[i][k] = h_i^T w_k` of the true channel with the scaled precoder
/// built from the stale estimate.
pub fn residual_matrix(h: &ChannelMatrix, w_hat: &Precoder, beta_hat: f64) -> DMatrix<f64> {
    h.gains() * w_hat.w() * beta_hat
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoding::{adaptive_mask, ci_precoder, oap_precoder, SymbolVector};
    use approx::assert_relative_eq;

    fn event(start: [f64; 2], end: [f64; 2]) -> MobilityEvent {
        MobilityEvent {
            start_xy: start,
            end_xy: end,
            plane_separation: 2.25,
            elapsed_time: 0.1,
        }
    }

    #[test]
    fn no_move_no_error() {
        let e = event([0.3, 0.1], [0.3, 0.1]);
        assert_eq!(error_bound(&e, 1.0, 20.0).unwrap(), 0.0);
        assert_eq!(e.max_velocity(), 0.0);
    }

    #[test]
    fn tangential_move_no_error() {
        let r = 0.4f64;
        let e = event([r, 0.0], [r * 0.6, r * 0.8]);
        assert_relative_eq!(e.d1(), e.d2(), max_relative = 1e-15);
        assert!(error_bound(&e, 1.0, 20.0).unwrap() < 1e-15);
    }

    #[test]
    fn outward_move_grows_the_bound() {
        let varpi = 3.0;
        let m = 20.0;
        let mut last = 0.0;
        for k in 1..=10 {
            let dx = 0.05 * k as f64;
            let e = event([0.0, 0.0], [dx, 0.0]);
            let b = error_bound(&e, varpi, m).unwrap();
            let direct = varpi * (1.0 / 2.25f64.powf(23.0) - 1.0 / (2.25f64 * 2.25 + dx * dx).sqrt().powf(23.0));
            assert_relative_eq!(b, direct, max_relative = 1e-12);
            assert!(b > last);
            last = b;
        }
    }

    #[test]
    fn velocity_from_displacement() {
        let e = MobilityEvent::along([0.0, 0.0], [3.0, 4.0], 1.5, 0.2, 2.25).unwrap();
        assert_relative_eq!(e.displacement(), 0.3, max_relative = 1e-12);
        assert_relative_eq!(e.max_velocity(), 1.5, max_relative = 1e-12);
        assert!(MobilityEvent::along([0.0, 0.0], [0.0, 0.0], 1.0, 0.1, 2.25).is_err());
        assert!(MobilityEvent::along([0.0, 0.0], [1.0, 0.0], 1.0, 0.0, 2.25).is_err());
        assert!(e.validate_in_room([2.0, 2.0], 4.0, 4.0).is_ok());
        assert!(e.validate_in_room([3.9, 3.9], 4.0, 4.0).is_err());
    }

    #[test]
    fn geometric_cross_check_agrees_inside_fov() {
        let led = Luminaire::new(nalgebra::Vector3::new(2.0, 2.0, 3.0), 15.0);
        let pd = PhotoDetector::new(nalgebra::Vector3::zeros());
        let m = led.lambertian_order().unwrap();
        let w = crate::channel::varpi(m, pd.area, pd.filter_gain, pd.concentrator(), 2.25);
        let e = event([0.0, 0.0], [0.1, 0.05]);
        assert_relative_eq!(
            geometric_gain_change(&led, &pd, &e).unwrap(),
            error_bound(&e, w, m).unwrap(),
            max_relative = 1e-10
        );
    }

    fn sample_h() -> ChannelMatrix {
        ChannelMatrix::from_rows(&[
            &[2.0e-3, 4.0e-4, 0.0],
            &[3.0e-4, 2.1e-3, 2.0e-4],
            &[0.0, 5.0e-4, 1.9e-3],
        ])
        .unwrap()
    }

    #[test]
    fn zero_bound_is_exact() {
        let h = sample_h();
        for model in [PerturbationModel::Uniform, PerturbationModel::WorstCase(ShiftSign::Adversarial)] {
            let est = perturb_channel(&h, &[0, 2], 0.0, model, 7).unwrap();
            assert_eq!(est.h_hat, h);
        }
    }

    #[test]
    fn uniform_stays_within_bound_and_nonnegative() {
        let h = sample_h();
        let bound = 3e-4;
        let mut max_err: f64 = 0.0;
        for seed in 0..100_000u64 {
            let est = perturb_channel(&h, &[1], bound, PerturbationModel::Uniform, seed).unwrap();
            max_err = max_err.max(est.max_abs_error());
            if seed < 1000 {
                assert!(est.h_hat.gains().iter().all(|&g| g >= 0.0));
                assert_eq!(est.h_hat.gains().row(0), h.gains().row(0));
            }
        }
        assert!(max_err <= bound);
        assert!(max_err > 0.9 * bound);
    }

    #[test]
    fn worst_case_signs() {
        let h = sample_h();
        let b = 1e-4;
        let adv = perturb_channel(&h, &[1], b, PerturbationModel::WorstCase(ShiftSign::Adversarial), 0).unwrap();
        assert_relative_eq!(adv.h_hat.get(1, 1), 2.1e-3 - b, max_relative = 1e-12);
        assert_relative_eq!(adv.h_hat.get(1, 0), 3.0e-4 + b, max_relative = 1e-12);
        let minus = perturb_channel(&h, &[0], 1e-3, PerturbationModel::WorstCase(ShiftSign::Minus), 0).unwrap();
        assert_eq!(minus.h_hat.get(0, 1), 0.0, "clamped at zero");
        assert!(perturb_channel(&h, &[5], b, PerturbationModel::Uniform, 0).is_err());
        assert!(perturb_channel(&h, &[0], -1.0, PerturbationModel::Uniform, 0).is_err());
    }

    #[test]
    fn residual_under_fresh_csi() {
        let h = sample_h();
        let w = ci_precoder(&h, 1e-12).unwrap();
        let x = SymbolVector::from_bits(&[1, 1, 0]).unwrap();
        let beta = w.beta(&x).value;
        let u = residual_matrix(&h, &w, beta);
        assert_relative_eq!(u, DMatrix::identity(3, 3) * beta, epsilon = 1e-9 * beta);
        let t = adaptive_mask(&x);
        let wd = oap_precoder(&w, &t).unwrap();
        let ud = residual_matrix(&h, &wd, beta);
        assert_relative_eq!(ud, t.matrix() * beta, epsilon = 1e-9 * beta);
    }

    #[test]
    fn adversarial_shift_moves_desired_residual_predictably() {
        let h = sample_h();
        let b = 1e-4;
        let est = perturb_channel(&h, &[0], b, PerturbationModel::WorstCase(ShiftSign::Plus), 0).unwrap();
        let w_hat = ci_precoder(&est.h_hat, 1e-12).unwrap();
        let u = residual_matrix(&h, &w_hat, 1.0);
        // H W_hat = (H_hat - D) W_hat = I - D W_hat, with D nonzero only in row 0
        let d = est.h_hat.gains() - h.gains();
        let expected = DMatrix::identity(3, 3) - &d * w_hat.w();
        assert_relative_eq!(u, expected, epsilon = 1e-10);
        // the moving user's desired residual drops below one, others stay exact
        assert!(u[(0, 0)] < 1.0);
        assert_relative_eq!(u[(1, 1)], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn off_diagonal_residual_grows_with_bound() {
        let h = sample_h();
        let w = |bound: f64| {
            let mut acc = 0.0;
            for seed in 0..200 {
                let est = perturb_channel(&h, &[1], bound, PerturbationModel::Uniform, seed).unwrap();
                let wh = ci_precoder(&est.h_hat, 1e-12).unwrap();
                let u = residual_matrix(&h, &wh, 1.0);
                acc += u[(1, 0)].abs() + u[(1, 2)].abs();
            }
            acc / 200.0
        };
        let (a, b, c) = (w(1e-5), w(5e-5), w(2e-4));
        assert!(a > 0.0 && a < b && b < c, "{a} {b} {c}");
    }
}
