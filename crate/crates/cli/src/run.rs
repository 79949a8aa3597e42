//! Experiment drivers behind the subcommands.

use std::path::{Path, PathBuf};

use serde::Serialize;
use vlcsim::analytic::{self, AnalyticOptions, BerResult, Link};
use vlcsim::channel::{build_channel_matrix, gain_map, varpi, ChannelMatrix, RoomLayout};
use vlcsim::csi::{error_bound, perturb_channel, MobilityEvent};
use vlcsim::montecarlo::{point_seed, simulate, sweep, BerEstimate, CsiState, CurvePoint, SimConfig};
use vlcsim::noise::NoiseModel;
use vlcsim::precoding::{ci_precoder, Scheme};

use crate::config::{ExperimentConfig, LayoutPoint, NoiseMode, PerturbationName};
use crate::error::CliError;
use crate::output::{fmt_f64, write_result, Table};

/// A built layout with its channel.
struct Setup {
    point: LayoutPoint,
    layout: RoomLayout,
    h: ChannelMatrix,
    link: Link,
}

#[derive(Debug, Serialize)]
struct SetupInfo {
    spacing_m: f64,
    semi_angle_deg: f64,
    mimo_order: usize,
    lambertian_order: f64,
    luminaire_power_w: f64,
    condition_number: f64,
    channel: Vec<Vec<f64>>,
}

fn setups(cfg: &ExperimentConfig) -> Result<Vec<Setup>, CliError> {
    cfg.layout
        .points()
        .into_iter()
        .map(|point| {
            let layout = cfg.layout.build(&point)?;
            let h = build_channel_matrix(&layout)?;
            let link = Link {
                responsivity: cfg.layout.responsivity,
                power: cfg.layout.luminaire_power(),
            };
            Ok(Setup { point, layout, h, link })
        })
        .collect()
}

fn info(cfg: &ExperimentConfig, s: &Setup) -> Result<SetupInfo, CliError> {
    let p = ci_precoder(&s.h, cfg.simulation.pinv_tolerance)?;
    Ok(SetupInfo {
        spacing_m: s.point.spacing,
        semi_angle_deg: s.point.semi_angle,
        mimo_order: s.point.mimo_order,
        lambertian_order: s.layout.luminaires[0].lambertian_order()?,
        luminaire_power_w: s.link.power,
        condition_number: p.condition_number(),
        channel: (0..s.h.n_r()).map(|i| s.h.row(i).iter().copied().collect()).collect(),
    })
}

fn stem<'a>(cfg: &'a ExperimentConfig, command: &'a str) -> &'a str {
    cfg.output.name.as_deref().unwrap_or(command)
}

fn layout_cells(p: &LayoutPoint) -> Vec<String> {
    vec![fmt_f64(p.spacing), fmt_f64(p.semi_angle), p.mimo_order.to_string()]
}

fn max_order(cfg: &ExperimentConfig) -> usize {
    cfg.layout.mimo_orders.iter().copied().max().unwrap_or(0)
}

fn ber_header(cfg: &ExperimentConfig, extra: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = ["spacing_m", "semi_angle_deg", "mimo_order"].map(String::from).to_vec();
    h.extend(extra.iter().map(|s| s.to_string()));
    h.extend(["scheme", "csi_mode", "snr_db"].map(String::from));
    h.extend((1..=max_order(cfg)).map(|k| format!("ber_pd{k}")));
    h.extend(["ber_avg", "mc_ber", "mc_halfwidth_95", "mc_errors", "symbols"].map(String::from));
    h
}

fn ber_cells(cfg: &ExperimentConfig, snr_db: f64, analytic: &BerResult, mc: Option<&BerEstimate>) -> Vec<String> {
    let mut row = vec![analytic.scheme.to_string(), analytic.csi.to_string(), fmt_f64(snr_db)];
    let k = max_order(cfg);
    row.extend((0..k).map(|i| analytic.per_pd.get(i).map_or_else(String::new, |v| fmt_f64(*v))));
    row.push(fmt_f64(analytic.average));
    match mc {
        Some(m) => {
            row.push(fmt_f64(m.average_ber()));
            row.push(fmt_f64(m.average_halfwidth_95()));
            row.push(m.total_errors().to_string());
            row.push(m.symbols_run.to_string());
        }
        None => row.extend(std::iter::repeat_n(String::new(), 4)),
    }
    row
}

/// Transmit SNR implied by physical noise: `gamma P` over the dark-signal
/// noise of the first detector.
fn physical_snr_db(noise: &NoiseModel, link: &Link) -> f64 {
    20.0 * (link.gamma_p() / noise.sigma(0, 0.0)).log10()
}

fn template(cfg: &ExperimentConfig, scheme: Scheme, link: Link, seed: u64) -> SimConfig {
    let mut t = SimConfig::new(scheme, NoiseModel::noiseless(), link);
    t.n_symbols = cfg.simulation.symbols;
    t.seed = seed;
    t.threshold = cfg.simulation.threshold_mode();
    t.oap_scaling = cfg.simulation.scaling();
    t.early_stop_errors = cfg.simulation.early_stop_errors;
    t.tolerance = cfg.simulation.pinv_tolerance;
    t
}

fn opts(cfg: &ExperimentConfig) -> AnalyticOptions {
    AnalyticOptions {
        tolerance: cfg.simulation.pinv_tolerance,
        oap_scaling: cfg.simulation.scaling(),
    }
}

/// Seed for one run, keyed by its position in the experiment.
fn run_seed(seed: u64, tags: &[usize]) -> u64 {
    tags.iter().fold(seed, |s, &t| point_seed(s, t as f64))
}

/// Analytic values (and Monte Carlo when enabled) over the SNR axis, or a
/// single physical-noise point.
fn curve(cfg: &ExperimentConfig, s: &Setup, t: &SimConfig) -> Result<Vec<CurvePoint>, CliError> {
    match cfg.noise.mode {
        NoiseMode::Swept => Ok(sweep(&s.h, &cfg.sweep.points(), t, cfg.simulation.monte_carlo)?.points),
        NoiseMode::Physical => {
            let noise = NoiseModel::physical(cfg.noise.params(), &s.layout.detectors)?;
            let h_hat = match &t.csi {
                CsiState::Perfect => None,
                CsiState::Outdated(e) => Some(&e.h_hat),
            };
            let analytic = analytic::ber(t.scheme, &s.h, h_hat, &noise, &s.link, &opts(cfg))?;
            let mc = if cfg.simulation.monte_carlo {
                Some(simulate(&s.h, &SimConfig { noise: noise.clone(), ..t.clone() })?)
            } else {
                None
            };
            Ok(vec![CurvePoint {
                snr_db: physical_snr_db(&noise, &s.link),
                analytic,
                mc,
            }])
        }
    }
}

pub fn ber_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let setups = setups(cfg)?;
    let mut table = Table::new(ber_header(cfg, &[]));
    let mut infos = Vec::new();
    let total = setups.len() * cfg.simulation.schemes.len();
    let mut done = 0;
    for (si, s) in setups.iter().enumerate() {
        infos.push(info(cfg, s)?);
        for (ki, &scheme) in cfg.simulation.schemes.iter().enumerate() {
            done += 1;
            let scheme = Scheme::from(scheme);
            eprintln!(
                "[{done}/{total}] ber-sweep {scheme} spacing={} m semi-angle={} deg order={}",
                s.point.spacing, s.point.semi_angle, s.point.mimo_order
            );
            let t = template(cfg, scheme, s.link, run_seed(cfg.seed, &[si, ki]));
            for p in curve(cfg, s, &t)? {
                let mut row = layout_cells(&s.point);
                row.extend(ber_cells(cfg, p.snr_db, &p.analytic, p.mc.as_ref()));
                table.push(row);
            }
        }
    }
    write_result(out, stem(cfg, "ber-sweep"), "ber-sweep", cfg, &table, infos)
}

pub fn throughput_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let setups = setups(cfg)?;
    let averaging = cfg.simulation.averaging();
    let mut table = Table::new([
        "spacing_m",
        "semi_angle_deg",
        "mimo_order",
        "scheme",
        "averaging",
        "snr_db",
        "throughput_bps_hz",
    ]);
    let averaging_name = match averaging {
        analytic::ThroughputAveraging::OnSymbols => "on_symbols",
        analytic::ThroughputAveraging::AllWords => "all_words",
    };
    let mut infos = Vec::new();
    for s in &setups {
        infos.push(info(cfg, s)?);
        let precoder = ci_precoder(&s.h, cfg.simulation.pinv_tolerance)?;
        eprintln!(
            "throughput-sweep spacing={} m semi-angle={} deg order={}",
            s.point.spacing, s.point.semi_angle, s.point.mimo_order
        );
        let noises: Vec<(f64, NoiseModel)> = match cfg.noise.mode {
            NoiseMode::Swept => cfg
                .sweep
                .points()
                .into_iter()
                .map(|snr| Ok((snr, NoiseModel::swept(snr, s.link.responsivity, s.link.power)?)))
                .collect::<Result<_, vlcsim::Error>>()?,
            NoiseMode::Physical => {
                let n = NoiseModel::physical(cfg.noise.params(), &s.layout.detectors)?;
                vec![(physical_snr_db(&n, &s.link), n)]
            }
        };
        for &scheme in &cfg.simulation.schemes {
            let scheme = Scheme::from(scheme);
            for (snr, noise) in &noises {
                let t = analytic::throughput(scheme, &s.h, &precoder, noise, &s.link, cfg.simulation.scaling(), averaging)?;
                let mut row = layout_cells(&s.point);
                row.extend([scheme.to_string(), averaging_name.to_string(), fmt_f64(*snr), fmt_f64(t)]);
                table.push(row);
            }
        }
    }
    write_result(out, stem(cfg, "throughput-sweep"), "throughput-sweep", cfg, &table, infos)
}

#[derive(Debug, Serialize)]
struct MobilityInfo {
    spacing_m: f64,
    semi_angle_deg: f64,
    mimo_order: usize,
    elapsed_time_s: f64,
    displacement_m: f64,
    error_bound: f64,
    direct_gain: f64,
    max_abs_estimate_error: f64,
    estimate: Vec<Vec<f64>>,
}

pub fn mobility(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let setups = setups(cfg)?;
    let mut table = Table::new(ber_header(
        cfg,
        &["elapsed_time_s", "displacement_m", "error_bound", "csi_model"],
    ));
    let model_name = match cfg.csi.model {
        PerturbationName::Uniform => "uniform",
        PerturbationName::WorstCase => "worst_case",
    };
    let m = &cfg.mobility;
    let mut infos = Vec::new();
    for (si, s) in setups.iter().enumerate() {
        let z = s.layout.plane_separation().ok_or_else(|| CliError::Config("luminaires must share one mounting height".into()))?;
        let led = &s.layout.luminaires[cfg.csi.mobile_users[0]];
        let pd = &s.layout.detectors[0];
        let order = led.lambertian_order()?;
        let w = varpi(order, pd.area, pd.filter_gain, pd.concentrator(), z);
        let axis = [led.position.x, led.position.y];

        // elapsed time 0 with fresh CSI is the reference curve
        let mut runs: Vec<(usize, f64, Option<MobilityEvent>)> = vec![(0, 0.0, None)];
        for (ti, &t) in m.elapsed_times.iter().enumerate() {
            let heading = if m.velocity > 0.0 { m.heading } else { [1.0, 0.0] };
            let ev = MobilityEvent::along(m.start, heading, m.velocity, t, z).map_err(CliError::config)?;
            ev.validate_in_room(axis, s.layout.room_x, s.layout.room_y).map_err(CliError::config)?;
            runs.push((ti + 1, t, Some(ev)));
        }
        for (ti, t, ev) in runs {
            let (bound, displacement, csi) = match &ev {
                None => (0.0, 0.0, CsiState::Perfect),
                Some(ev) => {
                    let bound = error_bound(ev, w, order)?;
                    let est = perturb_channel(
                        &s.h,
                        &cfg.csi.mobile_users,
                        bound,
                        cfg.csi.perturbation(),
                        run_seed(cfg.seed, &[si, ti, usize::MAX]),
                    )?;
                    infos.push(MobilityInfo {
                        spacing_m: s.point.spacing,
                        semi_angle_deg: s.point.semi_angle,
                        mimo_order: s.point.mimo_order,
                        elapsed_time_s: t,
                        displacement_m: ev.displacement(),
                        error_bound: bound,
                        direct_gain: s.h.get(0, 0),
                        max_abs_estimate_error: est.max_abs_error(),
                        estimate: (0..s.h.n_r()).map(|i| est.h_hat.row(i).iter().copied().collect()).collect(),
                    });
                    (bound, ev.displacement(), CsiState::Outdated(est))
                }
            };
            for (ki, &scheme) in cfg.simulation.schemes.iter().enumerate() {
                let scheme = Scheme::from(scheme);
                eprintln!("mobility {scheme} t={t} s error_bound={bound:e}");
                let mut tmpl = template(cfg, scheme, s.link, run_seed(cfg.seed, &[si, ti, ki]));
                tmpl.csi = csi.clone();
                let model = if ev.is_some() { model_name } else { "none" };
                for p in curve(cfg, s, &tmpl)? {
                    let mut row = layout_cells(&s.point);
                    row.extend([fmt_f64(t), fmt_f64(displacement), fmt_f64(bound), model.to_string()]);
                    row.extend(ber_cells(cfg, p.snr_db, &p.analytic, p.mc.as_ref()));
                    table.push(row);
                }
            }
        }
    }
    write_result(out, stem(cfg, "mobility"), "mobility", cfg, &table, infos)
}

#[derive(Debug, Serialize)]
struct MapInfo {
    spacing_m: f64,
    semi_angle_deg: f64,
    mimo_order: usize,
    peak_x_m: f64,
    peak_y_m: f64,
    peak_gain: f64,
    channel: Vec<Vec<f64>>,
}

pub fn channel_map(cfg: &ExperimentConfig, out: &Path) -> Result<PathBuf, CliError> {
    let setups = setups(cfg)?;
    let mut table = Table::new(["spacing_m", "semi_angle_deg", "mimo_order", "x_m", "y_m", "gain"]);
    let mut infos = Vec::new();
    for s in &setups {
        eprintln!("channel-map spacing={} m semi-angle={} deg order={}", s.point.spacing, s.point.semi_angle, s.point.mimo_order);
        let map = gain_map(&s.layout, cfg.channel_map.resolution)?;
        for (iy, &y) in map.ys.iter().enumerate() {
            for (ix, &x) in map.xs.iter().enumerate() {
                let mut row = layout_cells(&s.point);
                row.extend([fmt_f64(x), fmt_f64(y), fmt_f64(map.at(ix, iy))]);
                table.push(row);
            }
        }
        let (ix, iy, peak) = map.argmax();
        infos.push(MapInfo {
            spacing_m: s.point.spacing,
            semi_angle_deg: s.point.semi_angle,
            mimo_order: s.point.mimo_order,
            peak_x_m: map.xs[ix],
            peak_y_m: map.ys[iy],
            peak_gain: peak,
            channel: (0..s.h.n_r()).map(|i| s.h.row(i).iter().copied().collect()).collect(),
        });
    }
    write_result(out, stem(cfg, "channel-map"), "channel-map", cfg, &table, infos)
}

/// Builds every layout and precoder without running a sweep. Returns one
/// summary line per layout.
pub fn validate(cfg: &ExperimentConfig) -> Result<Vec<String>, CliError> {
    let setups = setups(cfg)?;
    setups
        .iter()
        .map(|s| {
            let i = info(cfg, s)?;
            Ok(format!(
                "spacing={} m semi-angle={} deg order={}: m={:.4} cond(HH^T)={:.4e} diagonally_dominant={}",
                i.spacing_m,
                i.semi_angle_deg,
                i.mimo_order,
                i.lambertian_order,
                i.condition_number,
                s.h.is_diagonally_dominant()
            ))
        })
        .collect()
}
