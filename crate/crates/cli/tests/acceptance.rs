//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when the
//! output is not captured; exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;
use zeno_campaign::campaign::{load_analytics, run_campaign, ANALYTICS};
use zeno_campaign::config::CampaignConfig;
use zeno_campaign::with_workers;
use zeno_drag::analytics::{
    ensemble_mean, estimate_eta, estimate_gamma_d, fit_survival, jump_statistics, rotating_frame_drift,
    spectral_analysis, JumpThresholds,
};
use zeno_drag::ensemble::{par_map_indexed, simulate_ensemble, stream_rng};
use zeno_drag::record::integrated_signal;
use zeno_drag::sme::{
    ito_step, povm_step, reconstruct_trajectory, simulate_trajectory_indexed, simulate_with, unconditioned_mean,
    wiener_to_record, StepInput,
};
use zeno_drag::state::purity;
use zeno_drag::tomography::{
    fidelity_vs_threshold, quantile_threshold, threshold_grid, PostselectSample, LOW_STATS_MIN,
};
use zeno_drag::{ExperimentConfig, MeasurementAxis, QubitState};

const GAMMA_D: f64 = TAU * 0.13e6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: usize, f: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    println!("criterion {id:>2}: {} ({secs:.1} s) {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, spectral_oracle),
        (2, unconditioned_mean_oracle),
        (3, positivity_fuzz),
        (4, integrator_convergence),
        (5, reconstruction_round_trip),
        (6, jump_statistics_rates),
        (7, dragging_monotonicity),
        (8, postselection_gain),
        (9, calibration_closed_loop),
        (10, campaign_determinism),
    ];
    let selected = |id: usize| args.is_empty() || args.iter().any(|a| a.parse() == Ok(id));
    let mut failed = Vec::new();
    for (id, f) in criteria {
        if selected(id) && !run(id, f) {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}

/// Distance between two eigenvalue pairs, minimised over the pairing.
fn pair_distance(a: [(f64, f64); 2], b: [(f64, f64); 2]) -> f64 {
    let d = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).hypot(p.1 - q.1);
    (d(a[0], b[0]).max(d(a[1], b[1]))).min(d(a[0], b[1]).max(d(a[1], b[0])))
}

fn spectral_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = stream_rng(1, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let gamma_d = TAU * 10f64.powf(rng.random_range(3.0..8.0));
        let v = rng.random_range(-1.0..1.0) * gamma_d / TAU;
        let a = spectral_analysis(gamma_d, v);
        let drift: Matrix2<f64> = rotating_frame_drift(gamma_d, -a.omega);
        let ev = drift.complex_eigenvalues();
        let closed = [(a.lambda_plus.re, a.lambda_plus.im), (a.lambda_minus.re, a.lambda_minus.im)];
        let numeric = [(ev[0].re, ev[0].im), (ev[1].re, ev[1].im)];
        // relative to the scale of the drift matrix
        worst = worst.max(pair_distance(closed, numeric) / gamma_d);
    }
    let eig_ok = worst <= 1e-10;

    let mut theta_worst: f64 = 0.0;
    for gd_hz in [1e3, 0.13e6, 1.7e6, 3.3e7] {
        let gamma_d = TAU * gd_hz;
        let theta = spectral_analysis(gamma_d, gamma_d / (2.0 * TAU)).theta.unwrap_or(f64::NAN);
        theta_worst = theta_worst.max((theta - FRAC_PI_4).abs());
    }
    let theta_ok = theta_worst <= 1e-12;

    let omega = GAMMA_D / 30.0;
    let ratio = spectral_analysis(GAMMA_D, omega / TAU).gamma_j.unwrap() / (omega * omega / (2.0 * GAMMA_D));
    let ratio_ok = (0.99..=1.0).contains(&ratio);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        eig_ok && theta_ok && ratio_ok && secs < 10.0,
        format!(
            "max |lambda - eig| / gamma_d = {worst:.2e} (<= 1e-10: {eig_ok}); |theta - pi/4| at boundary = {theta_worst:.1e} \
             ({theta_ok}); gamma_j / (omega^2 / 2 gamma_d) at gamma_d/omega = 30 is {ratio:.6} (in [0.99, 1.0]: {ratio_ok})"
        ),
    )
}

fn unconditioned_mean_oracle() -> Outcome {
    let start = Instant::now();
    let c = ExperimentConfig { seed: 2, ..ExperimentConfig::reference_defaults(40e3, 5e-6) };
    let trajs = simulate_ensemble(&c, 2000, 10).unwrap();
    let m = ensemble_mean(&trajs).unwrap();
    let mut worst: f64 = 0.0;
    let mut exact_misses = 0;
    for (i, &t) in m.times.iter().enumerate() {
        let exact = unconditioned_mean(&c, t).as_array();
        let mean = m.mean[i].as_array();
        for j in 0..3 {
            let se = m.stderr[i][j];
            let dev = (mean[j] - exact[j]).abs();
            if se > 0.0 {
                worst = worst.max(dev / se);
            } else if dev > 1e-12 {
                exact_misses += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 3.0 && exact_misses == 0 && secs < 60.0,
        format!(
            "{} sampled times, worst deviation {worst:.2} SE (<= 3), {exact_misses} zero-spread misses",
            m.times.len()
        ),
    )
}

fn positivity_fuzz() -> Outcome {
    let violations: usize = par_map_indexed(1000, |chunk| {
        let mut rng = stream_rng(3, chunk as u64);
        let mut bad = 0usize;
        for k in 0..1000 {
            let gamma_d = TAU * 10f64.powf(rng.random_range(3.0..8.0));
            let dt = rng.random_range(1e-6..0.499) / gamma_d;
            let eta = if k % 17 == 0 { 1.0 } else { rng.random_range(0.0..=1.0) };
            let gamma_phi = rng.random_range(0.0..1.0) * gamma_d;
            let dir = [rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            let radius = match k % 4 {
                0 => 1.0,
                1 => 1.0 - 1e-12,
                2 => rng.random_range(0.0f64..1.0).cbrt(),
                _ => rng.random_range(0.0..1e-6),
            };
            let state = QubitState::new(radius * dir[0] / len, radius * dir[1] / len, radius * dir[2] / len);
            let record = match k % 10 {
                0 => 50.0,
                1 => -50.0,
                _ => rng.random_range(-50.0..=50.0),
            };
            let input = StepInput {
                state,
                record,
                axis: MeasurementAxis::new(rng.random_range(-10.0..10.0)),
                dt,
                gamma_d,
                eta,
                gamma_phi,
            };
            match povm_step(&input) {
                Ok(s) if s.x.is_finite() && s.y.is_finite() && s.z.is_finite() && s.norm_sq() <= 1.0 + 1e-9 => {}
                _ => bad += 1,
            }
        }
        Ok(bad)
    })
    .unwrap()
    .into_iter()
    .sum();
    outcome(violations == 0, format!("10^6 updates, {violations} outside the Bloch ball or non-finite"))
}

fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Mean distance between one Euler-Maruyama step and one finite update
/// driven by the same Wiener increment.
fn step_discrepancy(dt: f64, samples: &[(QubitState, f64, f64)]) -> f64 {
    let (gamma_d, eta, gamma_phi) = (GAMMA_D, 0.49, TAU * 5e3);
    let total: f64 = samples
        .iter()
        .map(|&(state, delta, xi)| {
            let axis = MeasurementAxis::new(delta);
            let dw = xi * dt.sqrt();
            let ito = ito_step(&state, dw, axis, dt, gamma_d, eta, gamma_phi).unwrap();
            let record = wiener_to_record(dw, &state, axis, dt, gamma_d, eta);
            let povm = povm_step(&StepInput { state, record, axis, dt, gamma_d, eta, gamma_phi }).unwrap();
            let d = [ito.x - povm.x, ito.y - povm.y, ito.z - povm.z];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .sum();
    total / samples.len() as f64
}

/// Endpoint distance after integrating both schemes over 1 us along one
/// Brownian path sampled at the finest step.
fn path_discrepancy(dt: f64, finest: f64, paths: &[(QubitState, Vec<f64>)]) -> f64 {
    let (gamma_d, eta, gamma_phi) = (GAMMA_D, 0.49, TAU * 5e3);
    let factor = (dt / finest).round() as usize;
    let total: f64 = paths
        .iter()
        .map(|(start, xi)| {
            let (mut a, mut b) = (*start, *start);
            for (i, block) in xi.chunks(factor).enumerate() {
                let axis = MeasurementAxis::new(FRAC_PI_4 + TAU * 40e3 * i as f64 * dt);
                let dw: f64 = block.iter().sum::<f64>() * finest.sqrt();
                a = ito_step(&a, dw, axis, dt, gamma_d, eta, gamma_phi).unwrap();
                let record = wiener_to_record(dw, &b, axis, dt, gamma_d, eta);
                b = povm_step(&StepInput { state: b, record, axis, dt, gamma_d, eta, gamma_phi }).unwrap();
            }
            let d = [a.x - b.x, a.y - b.y, a.z - b.z];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .sum();
    total / paths.len() as f64
}

fn integrator_convergence() -> Outcome {
    let dts = [40e-9, 20e-9, 10e-9, 5e-9];
    let mut rng = stream_rng(4, 0);
    let samples: Vec<(QubitState, f64, f64)> = (0..20_000)
        .map(|_| {
            let r = rng.random_range(0.0f64..1.0).cbrt();
            let (pol, az) = (rng.random_range(0.0..std::f64::consts::PI), rng.random_range(0.0..TAU));
            let state = QubitState::new(r * pol.sin() * az.cos(), r * pol.sin() * az.sin(), r * pol.cos());
            (state, rng.random_range(0.0..TAU), rng.sample(StandardNormal))
        })
        .collect();
    let errs: Vec<f64> = dts.iter().map(|&dt| step_discrepancy(dt, &samples)).collect();
    let slope = log_log_slope(&dts, &errs);

    let paths: Vec<(QubitState, Vec<f64>)> = (0..500)
        .map(|_| (QubitState::new(0.0, 0.94, 0.0), (0..200).map(|_| rng.sample(StandardNormal)).collect()))
        .collect();
    let path_errs: Vec<f64> = dts.iter().map(|&dt| path_discrepancy(dt, 5e-9, &paths)).collect();
    let path_slope = log_log_slope(&dts, &path_errs);
    outcome(
        (0.9..=1.6).contains(&slope),
        format!(
            "per-step discrepancy {:?} over dt = 40, 20, 10, 5 ns, slope {slope:.3} (in [0.9, 1.6]); \
             1 us endpoint discrepancy slope {path_slope:.3} (reported only)",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()
        ),
    )
}

fn reconstruction_round_trip() -> Outcome {
    let base = ExperimentConfig { seed: 5, ..ExperimentConfig::reference_defaults(40e3, 5e-6) };
    let identical = (0..200).all(|i| {
        let t = simulate_trajectory_indexed(&base, i).unwrap();
        let back = reconstruct_trajectory(t.record.as_ref().unwrap(), &base).unwrap();
        back.states == t.states
    });
    let efficient = ExperimentConfig { eta: 1.0, gamma_phi: 0.0, ..base };
    let final_purity = |c: &ExperimentConfig| {
        par_map_indexed(200, |i| {
            let t = simulate_trajectory_indexed(c, i as u64)?;
            let back = reconstruct_trajectory(t.record.as_ref().unwrap(), c)?;
            Ok(purity(&back.final_state()))
        })
        .unwrap()
    };
    let pure = final_purity(&ExperimentConfig { initial: QubitState::new(0.0, 1.0, 0.0), ..efficient.clone() });
    let pure_min = pure.iter().copied().fold(f64::INFINITY, f64::min);
    // from the heralded start the two branches of the mixture purify only as
    // fast as the record tells them apart
    let heralded = final_purity(&efficient);
    let heralded_mean = heralded.iter().sum::<f64>() / heralded.len() as f64;
    let heralded_low = heralded.iter().filter(|&&p| p < 0.999).count();
    outcome(
        identical && pure_min >= 0.999 && heralded_mean >= 0.999,
        format!(
            "200 records replayed bit-identically: {identical}; eta = 1: min final purity from a pure start \
             {pure_min:.12}, mean from the heralded start {heralded_mean:.5} (>= 0.999, {heralded_low}/200 single \
             trajectories below)"
        ),
    )
}

fn jump_statistics_rates() -> Outcome {
    let start = Instant::now();
    let c = ExperimentConfig { gamma_phi: 0.0, seed: 6, ..ExperimentConfig::reference_defaults(50e3, 20e-6) };
    let n = 20_000;
    let a = spectral_analysis(c.gamma_d, 50e3);
    let gamma_j = a.gamma_j.unwrap();
    let stats = jump_statistics(&c, n, 10, &JumpThresholds::default()).unwrap();
    let survival = fit_survival(&stats.frame.times, &stats.survival(), n, 0.05, 0.95).unwrap();
    let along = stats.frame.fit_along(7e-6).unwrap();
    let perp = stats.frame.fit_perp(4e-6).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let r_jump = survival.rate / gamma_j;
    let r_along = along.rate / a.lambda_plus.re.abs();
    let r_perp = perp.rate / a.lambda_minus.re.abs();

    let mut sensitivity = Vec::new();
    for level in [0.3, 0.7] {
        let s = jump_statistics(&c, n / 4, 10, &JumpThresholds { level, ..JumpThresholds::default() }).unwrap();
        let fit = fit_survival(&s.frame.times, &s.survival(), n / 4, 0.05, 0.95).unwrap();
        sensitivity.push(format!("level {level}: {:.3}", fit.rate / gamma_j));
    }
    outcome(
        (r_jump - 1.0).abs() <= 0.2 && (r_along - 1.0).abs() <= 0.15 && (r_perp - 1.0).abs() <= 0.15 && secs < 300.0,
        format!(
            "{n} trajectories: survival rate / gamma_j = {r_jump:.3} (within 20%), along / |lambda+| = {r_along:.3}, \
             perp / |lambda-| = {r_perp:.3} (within 15%); detector sensitivity {}",
            sensitivity.join(", ")
        ),
    )
}

fn desk_campaign() -> &'static (tempfile::TempDir, PathBuf) {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("workers-3");
        let config = CampaignConfig::default();
        with_workers(Some(3), || run_campaign(&config, &out)).unwrap().unwrap();
        (dir, out)
    })
}

fn dragging_monotonicity() -> Outcome {
    let (_, out) = desk_campaign();
    let analytics = load_analytics(out).unwrap();
    let at4: Vec<(f64, f64, f64)> = analytics
        .points
        .iter()
        .map(|p| {
            let r = p.readouts.iter().find(|r| (r.t_us - 4.0).abs() < 1e-9).expect("4 us readout");
            (p.v_khz, r.fidelity, r.fidelity_se)
        })
        .collect();
    let mut violations = Vec::new();
    for w in at4.windows(2) {
        let (rise, tol) = (w[1].1 - w[0].1, 2.0 * w[0].2.hypot(w[1].2));
        if rise > tol {
            violations.push(format!("{}->{} kHz rises {rise:.4} > {tol:.4}", w[0].0, w[1].0));
        }
    }
    let curve: Vec<String> = at4.iter().map(|p| format!("{:.0}:{:.3}", p.0, p.1)).collect();
    outcome(
        violations.is_empty() && at4.len() == 18,
        format!(
            "{} velocities x {} trajectories, fidelity at 4 us [{}]; violations beyond 2 SE: {}",
            at4.len(),
            analytics.campaign.trajectories_per_point,
            curve.join(" "),
            if violations.is_empty() { "none".to_string() } else { violations.join("; ") }
        ),
    )
}

fn postselection_gain() -> Outcome {
    let c = ExperimentConfig { seed: 8, ..ExperimentConfig::reference_defaults(50e3, 4e-6) };
    let n = 50_000;
    let samples = par_map_indexed(n, |i| {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut last = QubitState::MIXED;
        simulate_with(&c, i as u64, |_, s, v| {
            if let Some(v) = v {
                sum += v;
                count += 1;
            }
            last = *s;
        })?;
        Ok(PostselectSample { integrated_voltage: sum / count as f64, final_state: last })
    })
    .unwrap();
    let target = QubitState::axis_eigenstate(c.schedule.axis_at(c.duration), 1.0);
    let curve = fidelity_vs_threshold(&samples, &target, &threshold_grid(-1.0, 1.0, 41)).unwrap();
    let kept: Vec<(f64, f64)> = (0..curve.thresholds.len())
        .filter(|&i| curve.retained[i] >= LOW_STATS_MIN)
        .map(|i| (curve.thresholds[i], curve.fidelity[i].unwrap()))
        .collect();
    let drops: Vec<String> =
        kept.windows(2).filter(|w| w[1].1 < w[0].1).map(|w| format!("{:.2}->{:.2}", w[0].0, w[1].0)).collect();
    let all = fidelity_vs_threshold(&samples, &target, &[f64::NEG_INFINITY]).unwrap().fidelity[0].unwrap();
    let top = quantile_threshold(&samples, 0.1).unwrap();
    let top_fid = fidelity_vs_threshold(&samples, &target, &[top]).unwrap().fidelity[0].unwrap();
    outcome(
        drops.is_empty() && top_fid >= all + 0.05,
        format!(
            "{n} trajectories, {} thresholds with >= {LOW_STATS_MIN} kept, decreases: {}; unconditioned {all:.4}, \
             top decile (V >= {top:.3}) {top_fid:.4}",
            kept.len(),
            if drops.is_empty() { "none".to_string() } else { drops.join(", ") }
        ),
    )
}

fn integrated_records(sign: f64, n: usize, tau: f64, seed: u64) -> Vec<f64> {
    let c = ExperimentConfig {
        gamma_phi: 0.0,
        initial: QubitState::new(0.0, sign, 0.0),
        seed,
        ..ExperimentConfig::reference_defaults(0.0, tau)
    };
    par_map_indexed(n, |i| {
        let t = simulate_trajectory_indexed(&c, i as u64)?;
        integrated_signal(t.record.as_ref().unwrap(), (0.0, tau))
    })
    .unwrap()
}

fn calibration_closed_loop() -> Outcome {
    // separation of the two Gaussians grows as tau, their width as sqrt(tau)
    let tau = 5e-6;
    let plus = integrated_records(1.0, 5000, tau, 91);
    let minus = integrated_records(-1.0, 5000, tau, 92);
    let eta = estimate_eta(&plus, &minus, GAMMA_D, tau).unwrap();

    let c = ExperimentConfig {
        initial: QubitState::new(1.0, 0.0, 0.0),
        seed: 93,
        ..ExperimentConfig::reference_defaults(0.0, 3e-6)
    };
    let m = ensemble_mean(&simulate_ensemble(&c, 2000, 10).unwrap()).unwrap();
    let x: Vec<f64> = m.mean.iter().map(|s| s.x).collect();
    let se: Vec<f64> = m.stderr.iter().map(|s| s[0]).collect();
    let gamma_d = estimate_gamma_d(&m.times, &x, Some(&se), c.gamma_phi).unwrap();
    let (re, rg) = (eta / 0.49 - 1.0, gamma_d / GAMMA_D - 1.0);
    outcome(
        re.abs() <= 0.05 && rg.abs() <= 0.05,
        format!(
            "eta = {eta:.4} ({:+.2}%), gamma_d / 2pi = {:.1} kHz ({:+.2}%)",
            100.0 * re,
            gamma_d / TAU / 1e3,
            100.0 * rg
        ),
    )
}

fn file_bytes(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap()
}

fn campaign_determinism() -> Outcome {
    let (dir, reference) = desk_campaign();
    let out = dir.path().join("workers-1");
    let config = CampaignConfig::default();
    let manifest = with_workers(Some(1), || run_campaign(&config, &out)).unwrap().unwrap();
    let same_analytics = file_bytes(reference, ANALYTICS) == file_bytes(&out, ANALYTICS);
    let same_payloads =
        manifest.entries.iter().filter(|e| file_bytes(reference, &e.path) != file_bytes(&out, &e.path)).count();
    outcome(
        same_analytics && same_payloads == 0,
        format!(
            "1 vs 3 workers: analytics.json identical: {same_analytics}; {same_payloads} of {} manifest files differ",
            manifest.entries.len()
        ),
    )
}
