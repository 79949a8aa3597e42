//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::fs;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlcsim::analytic::{self, q_function, snr_for_target_ber, AnalyticOptions, Link, ThroughputAveraging};
use vlcsim::channel::{build_channel_matrix, concentrator_gain, lambertian_order, varpi, ChannelMatrix, GridLayout, Luminaire};
use vlcsim::csi::{error_bound, perturb_channel, MobilityEvent, PerturbationModel};
use vlcsim::montecarlo::{exhaustive_noiseless_errors, sweep, CsiState, SimConfig};
use vlcsim::noise::NoiseModel;
use vlcsim::precoding::{ci_precoder, OapScaling, Scheme, SymbolVector};

const SEED: u64 = 1;
const MC_SYMBOLS: u64 = 2_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn grid(spacing: f64, semi_angle: f64, count: usize) -> GridLayout {
    GridLayout {
        spacing,
        count,
        luminaire: Luminaire::new(Vector3::zeros(), semi_angle),
        ..GridLayout::default()
    }
}

fn channel(spacing: f64, semi_angle: f64, count: usize) -> (ChannelMatrix, Link) {
    let g = grid(spacing, semi_angle, count);
    let layout = g.build().unwrap();
    let link = Link {
        responsivity: layout.detectors[0].responsivity,
        power: layout.luminaires[0].total_power(),
    };
    (build_channel_matrix(&layout).unwrap(), link)
}

fn avg_ber(scheme: Scheme, h: &ChannelMatrix, link: &Link, snr_db: f64) -> f64 {
    let noise = NoiseModel::swept(snr_db, link.responsivity, link.power).unwrap();
    analytic::ber(scheme, h, None, &noise, link, &AnalyticOptions::default())
        .unwrap()
        .average
}

fn snr_at_1e3(scheme: Scheme, h: &ChannelMatrix, link: &Link) -> f64 {
    snr_for_target_ber(1e-3, 0.0, 200.0, 1e-9, |s| Ok(avg_ber(scheme, h, link, s))).unwrap()
}

fn snr_axis(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

fn c1_zero_interference() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let spacing = rng.random_range(0.3..1.5);
        let semi = rng.random_range(10.0..60.0);
        let mut layout = grid(spacing, semi, 4).build().unwrap();
        for pd in &mut layout.detectors {
            pd.position.x += rng.random_range(-0.1..0.1);
            pd.position.y += rng.random_range(-0.1..0.1);
        }
        let h = build_channel_matrix(&layout).unwrap();
        let w = ci_precoder(&h, 1e-12).unwrap();
        let hw = h.gains() * w.w();
        let off = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| hw[(i, j)].abs())
            .fold(0.0, f64::max);
        worst = worst.max(off);
    }
    outcome(worst < 1e-9, format!("max |off-diagonal of H W| = {worst:.3e}"))
}

fn c2_power_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for n in 1..=8 {
        for _ in 0..20 {
            let g = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + rng.random::<f64>() } else { rng.random::<f64>() * 0.5 });
            let h = ChannelMatrix::new(g).unwrap();
            let p = ci_precoder(&h, 1e-12).unwrap();
            for s in 1..(1usize << n) {
                let x = SymbolVector::from_index(s, n);
                let beta = p.beta(&x).value;
                let norm = (p.w() * x.to_vector() * beta).norm();
                worst = worst.max((norm - 1.0).abs());
            }
        }
    }
    outcome(worst < 1e-10, format!("max | ||beta W x|| - 1 | = {worst:.3e}"))
}

fn c3_analytic_mc_agreement() -> Outcome {
    let (h, link) = channel(1.0, 15.0, 4);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for scheme in [Scheme::Ci, Scheme::Oap] {
        let mut t = SimConfig::new(scheme, NoiseModel::noiseless(), link);
        t.n_symbols = MC_SYMBOLS;
        t.seed = SEED;
        let curve = sweep(&h, &snr_axis(40.0, 110.0, 2.0), &t, true).unwrap();
        for p in curve.points.iter().filter(|p| p.analytic.average >= 1e-4) {
            let mc = p.mc.as_ref().unwrap();
            let a = p.analytic.average;
            let se = (a * (1.0 - a) / (mc.symbols_run as f64 * h.n_r() as f64)).sqrt();
            let z = (mc.average_ber() - a).abs() / se;
            worst = worst.max(z);
            checked += 1;
            if z > 3.0 {
                failures.push(format!("{scheme}@{}dB z={z:.2}", p.snr_db));
            }
        }
    }
    outcome(
        failures.is_empty() && checked > 0,
        format!("{checked} points, worst deviation {worst:.2} SE {}", failures.join(" ")),
    )
}

fn c4_oap_gain() -> Outcome {
    let (h, link) = channel(1.0, 15.0, 4);
    let ci = snr_at_1e3(Scheme::Ci, &h, &link);
    let oap = snr_at_1e3(Scheme::Oap, &h, &link);
    let gap = ci - oap;
    outcome(
        (5.0..=11.0).contains(&gap),
        format!("SNR at BER 1e-3: CI {ci:.3} dB, OAP {oap:.3} dB, gap {gap:.3} dB (target 8 +/- 3)"),
    )
}

fn c5_spacing_ordering() -> Outcome {
    let snr = 75.0;
    let mut detail = Vec::new();
    let mut pass = true;
    for scheme in [Scheme::Ci, Scheme::Oap] {
        let bers: Vec<f64> = [0.25, 0.5, 1.0]
            .iter()
            .map(|&s| {
                let (h, link) = channel(s, 15.0, 4);
                avg_ber(scheme, &h, &link, snr)
            })
            .collect();
        pass &= bers[0] > bers[1] && bers[1] > bers[2];
        detail.push(format!("{scheme} {:.3e} > {:.3e} > {:.3e}", bers[0], bers[1], bers[2]));
    }
    outcome(pass, format!("at {snr} dB, spacing 0.25/0.5/1.0 m: {}", detail.join("; ")))
}

fn c6_semi_angle_robustness() -> Outcome {
    let (h15, l15) = channel(1.0, 15.0, 4);
    let (h30, l30) = channel(1.0, 30.0, 4);
    let pen = |s| snr_at_1e3(s, &h30, &l30) - snr_at_1e3(s, &h15, &l15);
    let ci = pen(Scheme::Ci);
    let oap = pen(Scheme::Oap);
    // bisection resolves to 1e-9 dB
    outcome(
        ci - oap > 1e-6,
        format!("15->30 deg penalty at BER 1e-3: CI {ci:.6} dB, OAP {oap:.6} dB"),
    )
}

fn c7_outdated_bound() -> Outcome {
    let g = grid(1.0, 15.0, 4);
    let layout = g.build().unwrap();
    let h = build_channel_matrix(&layout).unwrap();
    let link = Link {
        responsivity: 1.0,
        power: layout.luminaires[0].total_power(),
    };
    let z = layout.plane_separation().unwrap();
    let m = lambertian_order(15.0).unwrap();
    let pd = &layout.detectors[0];
    let w = varpi(m, pd.area, pd.filter_gain, pd.concentrator(), z);
    let mut checked = 0;
    let mut failures = Vec::new();
    for (k, t) in [0.02, 0.05, 0.1].into_iter().enumerate() {
        let ev = MobilityEvent::along([0.0, 0.0], [1.0, 0.0], 1.0, t, z).unwrap();
        let bound = error_bound(&ev, w, m).unwrap();
        let est = perturb_channel(&h, &[0], bound, PerturbationModel::Uniform, SEED + k as u64).unwrap();
        for scheme in [Scheme::Ci, Scheme::Oap] {
            let mut tmpl = SimConfig::new(scheme, NoiseModel::noiseless(), link);
            tmpl.n_symbols = MC_SYMBOLS;
            tmpl.seed = SEED;
            tmpl.csi = CsiState::Outdated(est.clone());
            let curve = sweep(&h, &snr_axis(40.0, 110.0, 5.0), &tmpl, true).unwrap();
            for p in &curve.points {
                let mc = p.mc.as_ref().unwrap();
                for (i, (&b, &e)) in p.analytic.per_pd.iter().zip(&mc.per_pd_ber).enumerate() {
                    let se = (b * (1.0 - b) / mc.symbols_run as f64).sqrt();
                    checked += 1;
                    if e > b + 3.0 * se {
                        failures.push(format!("t={t} {scheme}@{}dB pd{} mc {e:.3e} > bound {b:.3e}", p.snr_db, i + 1));
                    }
                }
            }
        }
    }
    outcome(failures.is_empty(), format!("{checked} (point, detector) pairs {}", failures.join("; ")))
}

fn c8_noiseless() -> Outcome {
    let start = Instant::now();
    let mut total = 0u64;
    for n in [2, 4, 8] {
        for spacing in [0.5, 1.0] {
            let (h, _) = channel(spacing, 15.0, n);
            for scheme in [Scheme::Ci, Scheme::Oap] {
                total += exhaustive_noiseless_errors(&h, scheme, OapScaling::Literal, 1e-12)
                    .unwrap()
                    .iter()
                    .sum::<u64>();
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(total == 0 && secs < 1.0, format!("{total} errors over all words, {secs:.3} s"))
}

fn c9_unit_oracles() -> Outcome {
    let m = lambertian_order(60.0).unwrap();
    let g = concentrator_gain(0.0, 15.0, 1.5);
    let g_ref = 2.25 / 15f64.to_radians().sin().powi(2);
    let q = q_function(0.0);
    let pass = m == 1.0 && ((g - g_ref) / g_ref).abs() < 1e-12 && (q - 0.5).abs() < 1e-15;
    outcome(pass, format!("m(60) = {m:?}, g = {g:?} vs {g_ref:?}, Q(0) = {q:?}"))
}

fn c10_throughput() -> Outcome {
    let (h, link) = channel(1.0, 15.0, 8);
    let p = ci_precoder(&h, 1e-12).unwrap();
    let mut detail = Vec::new();
    let mut pass = true;
    for snr in [100.0, 110.0, 120.0] {
        let noise = NoiseModel::swept(snr, link.responsivity, link.power).unwrap();
        let t = |s| analytic::throughput(s, &h, &p, &noise, &link, OapScaling::Literal, ThroughputAveraging::OnSymbols).unwrap();
        let (ci, oap) = (t(Scheme::Ci), t(Scheme::Oap));
        pass &= oap > ci;
        detail.push(format!("{snr} dB: OAP {oap:.3} vs CI {ci:.3}"));
    }
    outcome(pass, format!("8x8 bits/s/Hz, {}", detail.join("; ")))
}

fn c11_reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("repro.toml");
    fs::write(
        &cfg,
        "seed = 11\n[layout]\nspacings = [0.5, 1.0]\n[sweep]\nsnr_start_db = 60.0\nsnr_stop_db = 80.0\nsnr_step_db = 5.0\n\
         [simulation]\nsymbols = 200000\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for threads in [1, 4] {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_vlcsim"))
            .args(["ber-sweep", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--threads", &threads.to_string()])
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, format!("run with {threads} threads failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push(fs::read(out.join("ber-sweep.csv")).unwrap());
    }
    let body = |b: &[u8]| b.splitn(2, |&c| c == b'\n').nth(1).unwrap_or_default().to_vec();
    let same_body = body(&outputs[0]) == body(&outputs[1]);
    outcome(
        same_body && outputs[0] == outputs[1],
        format!("1 vs 4 threads: {} bytes each, identical = {same_body}", outputs[0].len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("CI zero interference", c1_zero_interference),
        ("power normalization", c2_power_normalization),
        ("analytic/Monte Carlo agreement", c3_analytic_mc_agreement),
        ("OAP SNR gain at BER 1e-3", c4_oap_gain),
        ("spacing ordering", c5_spacing_ordering),
        ("semi-angle robustness", c6_semi_angle_robustness),
        ("outdated-CSI bound validity", c7_outdated_bound),
        ("noiseless exactness", c8_noiseless),
        ("unit oracles", c9_unit_oracles),
        ("throughput ordering 8x8", c10_throughput),
        ("reproducibility across thread counts", c11_reproducibility),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<38} {} ({:.1} s) {}",
            k + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
