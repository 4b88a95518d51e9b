//! Seeded velocity sweep: simulate, persist, analyse, tabulate.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zeno_drag::analytics::{
    detect_jumps, fit_survival, jump_frame_project, polar_histogram, spectral_analysis, survival_curve, JumpThresholds,
    SpectralAnalysis,
};
use zeno_drag::ensemble::{derive_seed, simulate_ensemble, stream_rng, MomentAccumulator};
use zeno_drag::fit::ExpFit;
use zeno_drag::format::{config_hash, write_ensemble, EnsembleHeader};
use zeno_drag::record::integrated_voltage;
use zeno_drag::sme::unconditioned_mean;
use zeno_drag::state::fidelity_to_axis_eigenstate;
use zeno_drag::tomography::{
    fidelity_vs_threshold, quantile_threshold, simulate_tomography, threshold_grid, unconditioned_fidelity,
    PostselectSample, PostselectionCurve, ThresholdWindow, TomographyEstimate,
};
use zeno_drag::{ExperimentConfig, QubitState, Trajectory};

use crate::config::CampaignConfig;
use crate::error::CampaignError;

pub const MANIFEST: &str = "manifest.json";
pub const ANALYTICS: &str = "analytics.json";

/// Mean state and fidelity at one tomography time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub t_us: f64,
    pub mean: QubitState,
    pub stderr: [f64; 3],
    /// Closed-form unconditioned state at the same time.
    pub theory: QubitState,
    /// Finite-shot seven-pulse reconstruction, one shot per trajectory and pulse.
    pub tomography: TomographyEstimate,
    /// Mean fidelity to the +1 eigenstate of the axis at `t_us`.
    pub fidelity: f64,
    pub fidelity_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpSummary {
    pub theta: f64,
    pub gamma_j: f64,
    /// Fraction of trajectories with at least one jump by the horizon.
    pub jump_fraction: f64,
    /// `1 - exp(-gamma_j t)` at the horizon.
    pub jump_fraction_theory: f64,
    pub mean_jumps: f64,
    pub survival_fit: Option<ExpFit>,
    pub along_fit: Option<ExpFit>,
    pub perp_fit: Option<ExpFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostselectSummary {
    pub t_us: f64,
    pub window: ThresholdWindow,
    pub unconditioned: f64,
    pub top_decile_threshold: f64,
    pub top_decile_fidelity: Option<f64>,
    pub curve: PostselectionCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointAnalytics {
    pub index: usize,
    pub v_khz: f64,
    pub seed: u64,
    pub config_hash: String,
    pub spectral: SpectralAnalysis,
    pub readouts: Vec<Readout>,
    pub jumps: Option<JumpSummary>,
    pub postselect: PostselectSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignAnalytics {
    pub campaign: CampaignConfig,
    pub points: Vec<PointAnalytics>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: String,
    pub kind: String,
    /// Hash of the run configuration, or of the campaign for shared files.
    pub config_hash: String,
    pub seed: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub campaign: CampaignConfig,
    pub campaign_hash: String,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(out: &Path) -> Result<Self, CampaignError> {
        let path = out.join(MANIFEST);
        let text = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CampaignError::MissingInput(path.display().to_string()),
            _ => CampaignError::io(&path, e),
        })?;
        Ok(serde_json::from_slice(&text)?)
    }

    pub fn save(&self, out: &Path) -> Result<(), CampaignError> {
        write_file(out, MANIFEST, serde_json::to_vec_pretty(self)?.as_slice())
    }

    pub fn find(&self, kind: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.kind == kind)
    }

    /// Records a file already written under `out`.
    pub fn add(
        &mut self,
        out: &Path,
        path: &str,
        kind: &str,
        config_hash: &str,
        seed: u64,
    ) -> Result<(), CampaignError> {
        let full = out.join(path);
        let bytes = fs::read(&full).map_err(|e| CampaignError::io(&full, e))?;
        self.entries.retain(|e| e.path != path);
        self.entries.push(ManifestEntry {
            path: path.to_string(),
            kind: kind.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }
}

pub fn campaign_hash(config: &CampaignConfig) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(config).unwrap_or_default()))
}

pub(crate) fn write_file(out: &Path, rel: &str, bytes: &[u8]) -> Result<(), CampaignError> {
    let path = out.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CampaignError::io(dir, e))?;
    }
    fs::write(&path, bytes).map_err(|e| CampaignError::io(&path, e))
}

/// Tables accumulated across sweep points.
#[derive(Default)]
struct Tables {
    fig2a: String,
    hist: String,
    axes: String,
    decay: String,
    fig4: String,
}

impl Tables {
    fn new() -> Self {
        Self {
            fig2a:
                "v_khz,t_us,x,y,z,x_se,y_se,z_se,tomo_x,tomo_y,tomo_z,theory_x,theory_y,theory_z,fidelity,fidelity_se\n"
                    .into(),
            hist: "v_khz,t_us,angle_bin,radius_bin,count\n".into(),
            axes: "v_khz,t_us,measurement_axis_rad,jump_axis_rad\n".into(),
            decay: "v_khz,t_us,along,along_se,perp,perp_se\n".into(),
            fig4: "v_khz,threshold,fidelity,stderr,retained_fraction,low_stats_flag\n".into(),
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Readout-time rows shared by every point.
fn readout(
    config: &CampaignConfig,
    exp: &ExperimentConfig,
    trajs: &[Trajectory],
    t_us: f64,
) -> Result<Readout, CampaignError> {
    let row = config.row_of(t_us);
    let t = t_us * 1e-6;
    let axis = exp.schedule.axis_at(t);
    let mut acc = MomentAccumulator::new(4);
    let mut finals = Vec::with_capacity(trajs.len());
    for tr in trajs {
        let s = tr.states[row];
        finals.push(s);
        acc.push(&[s.x, s.y, s.z, fidelity_to_axis_eigenstate(&s, axis, 1.0)])?;
    }
    let (m, se) = (acc.mean(), acc.stderr());
    let mut rng = stream_rng(exp.seed, u64::MAX - row as u64);
    let tomography = simulate_tomography(&finals, trajs.len() as u64, &mut rng, false)?;
    Ok(Readout {
        t_us,
        mean: QubitState::new(m[0], m[1], m[2]),
        stderr: [se[0], se[1], se[2]],
        theory: unconditioned_mean(exp, t),
        tomography,
        fidelity: m[3],
        fidelity_se: se[3],
    })
}

fn jump_summary(
    config: &CampaignConfig,
    exp: &ExperimentConfig,
    analysis: &SpectralAnalysis,
    trajs: &[Trajectory],
    tables: &mut Tables,
    v_khz: f64,
) -> Result<Option<JumpSummary>, CampaignError> {
    let (Some(theta), Some(gamma_j)) = (analysis.theta, analysis.gamma_j) else {
        return Ok(None);
    };
    let frame = jump_frame_project(trajs, analysis, &exp.schedule)?;
    for i in 0..frame.times.len() {
        let _ = writeln!(
            tables.decay,
            "{v_khz},{},{},{},{},{}",
            frame.times[i] * 1e6,
            frame.along[i],
            frame.along_se[i],
            frame.perp[i],
            frame.perp_se[i]
        );
    }
    let thresholds = JumpThresholds { level: config.jump_level, smoothing: 1 };
    let mut first = Vec::with_capacity(trajs.len());
    let mut total = 0usize;
    for tr in trajs {
        let jumps = detect_jumps(tr, analysis, &exp.schedule, &thresholds)?;
        total += jumps.len();
        first.push(jumps.first().map(|j| j.time));
    }
    let horizon = exp.duration;
    let survival = survival_curve(&frame.times, &first);
    let jumped = first.iter().filter(|f| f.is_some()).count() as f64 / trajs.len() as f64;
    Ok(Some(JumpSummary {
        theta,
        gamma_j,
        jump_fraction: jumped,
        jump_fraction_theory: 1.0 - (-gamma_j * horizon).exp(),
        mean_jumps: total as f64 / trajs.len() as f64,
        survival_fit: fit_survival(&frame.times, &survival, trajs.len(), 0.05, 0.95).ok(),
        along_fit: frame.fit_along(0.5 * horizon).ok(),
        perp_fit: frame.fit_perp(2.0 / analysis.lambda_minus.re.abs()).ok(),
    }))
}

fn postselect(
    config: &CampaignConfig,
    exp: &ExperimentConfig,
    trajs: &[Trajectory],
    tables: &mut Tables,
    v_khz: f64,
) -> Result<PostselectSummary, CampaignError> {
    let t = config.postselect_us * 1e-6;
    let row = config.row_of(config.postselect_us);
    let bounds = config.threshold_window.bounds(t);
    let samples: Vec<PostselectSample> = trajs
        .iter()
        .map(|tr| {
            let record = tr.record.as_ref().ok_or(zeno_drag::Error::NoInformation)?;
            Ok(PostselectSample {
                integrated_voltage: integrated_voltage(record, bounds)?,
                final_state: tr.states[row],
            })
        })
        .collect::<Result<_, zeno_drag::Error>>()?;
    let target = QubitState::axis_eigenstate(exp.schedule.axis_at(t), 1.0);
    let curve = fidelity_vs_threshold(&samples, &target, &threshold_grid(-1.0, 1.0, config.threshold_points))?;
    for i in 0..curve.thresholds.len() {
        let _ = writeln!(
            tables.fig4,
            "{v_khz},{},{},{},{},{}",
            curve.thresholds[i],
            opt(curve.fidelity[i]),
            opt(curve.stderr[i]),
            curve.retained_fraction[i],
            u8::from(curve.low_stats[i])
        );
    }
    let top = quantile_threshold(&samples, 0.1)?;
    let top_fid = fidelity_vs_threshold(&samples, &target, &[top])?.fidelity[0];
    Ok(PostselectSummary {
        t_us: config.postselect_us,
        window: config.threshold_window,
        unconditioned: unconditioned_fidelity(&samples, &target)?,
        top_decile_threshold: top,
        top_decile_fidelity: top_fid,
        curve,
    })
}

fn run_point(
    config: &CampaignConfig,
    out: &Path,
    manifest: &mut Manifest,
    tables: &mut Tables,
    index: usize,
    v_khz: f64,
) -> Result<PointAnalytics, CampaignError> {
    let seed = derive_seed(config.seed, index as u64);
    let exp = config.experiment(v_khz, seed);
    let hash = config_hash(&exp);
    let trajs = simulate_ensemble(&exp, config.trajectories_per_point, config.state_stride)?;

    if config.write_ensembles {
        let rel = format!("ensembles/point_{index:02}.zdrg");
        let path = out.join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CampaignError::io(dir, e))?;
        }
        let header = EnsembleHeader::new(&exp, trajs.len(), config.state_stride);
        write_ensemble(&path, header, &trajs).map_err(|e| match e {
            zeno_drag::Error::Io(io) => CampaignError::io(&path, io),
            other => other.into(),
        })?;
        manifest.add(out, &rel, "ensemble", &hash, seed)?;
    }

    let readouts =
        config.durations_us.iter().map(|&t| readout(config, &exp, &trajs, t)).collect::<Result<Vec<_>, _>>()?;
    for r in &readouts {
        let _ = writeln!(
            tables.fig2a,
            "{v_khz},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t_us,
            r.mean.x,
            r.mean.y,
            r.mean.z,
            r.stderr[0],
            r.stderr[1],
            r.stderr[2],
            r.tomography.state.x,
            r.tomography.state.y,
            r.tomography.state.z,
            r.theory.x,
            r.theory.y,
            r.theory.z,
            r.fidelity,
            r.fidelity_se
        );
    }

    let spectral = spectral_analysis(exp.gamma_d, exp.schedule.v);
    if config.histogram_velocities_khz.contains(&v_khz) {
        for &t_us in &config.durations_us {
            let row = config.row_of(t_us);
            let states: Vec<QubitState> = trajs.iter().map(|t| t.states[row]).collect();
            let counts = polar_histogram(&states, config.angle_bins, config.radius_bins);
            for (k, c) in counts.iter().enumerate() {
                let _ =
                    writeln!(tables.hist, "{v_khz},{t_us},{},{},{c}", k / config.radius_bins, k % config.radius_bins);
            }
            let t = t_us * 1e-6;
            let jump_axis = spectral.jump_axis_angle(&exp.schedule, t).ok();
            let _ = writeln!(tables.axes, "{v_khz},{t_us},{},{}", exp.schedule.delta_at(t), opt(jump_axis));
        }
    }

    let jumps = jump_summary(config, &exp, &spectral, &trajs, tables, v_khz)?;
    let postselect = postselect(config, &exp, &trajs, tables, v_khz)?;
    Ok(PointAnalytics { index, v_khz, seed, config_hash: hash, spectral, readouts, jumps, postselect })
}

/// Runs every sweep point and writes the ensembles, `analytics.json`, the
/// figure tables and `manifest.json` under `out`.
pub fn run_campaign(config: &CampaignConfig, out: &Path) -> Result<Manifest, CampaignError> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| CampaignError::io(out, e))?;
    let chash = campaign_hash(config);
    let mut manifest = Manifest { campaign: config.clone(), campaign_hash: chash.clone(), entries: Vec::new() };
    let mut tables = Tables::new();
    let mut points = Vec::with_capacity(config.velocities_khz.len());
    for (i, &v) in config.velocities_khz.iter().enumerate() {
        points.push(run_point(config, out, &mut manifest, &mut tables, i, v)?);
    }
    let analytics = CampaignAnalytics { campaign: config.clone(), points };
    write_file(out, ANALYTICS, &serde_json::to_vec_pretty(&analytics)?)?;
    manifest.add(out, ANALYTICS, "analytics", &chash, config.seed)?;
    for (rel, kind, body) in [
        ("data/fig2a.csv", "fig2a-data", &tables.fig2a),
        ("data/fig3_histogram.csv", "fig3-histogram", &tables.hist),
        ("data/fig3_axes.csv", "fig3-axes", &tables.axes),
        ("data/fig3_decay.csv", "fig3-decay", &tables.decay),
        ("data/fig4.csv", "fig4-data", &tables.fig4),
    ] {
        write_file(out, rel, body.as_bytes())?;
        manifest.add(out, rel, kind, &chash, config.seed)?;
    }
    manifest.save(out)?;
    Ok(manifest)
}

/// Reads `analytics.json` of a finished campaign.
pub fn load_analytics(out: &Path) -> Result<CampaignAnalytics, CampaignError> {
    let path: PathBuf = out.join(ANALYTICS);
    let bytes = fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CampaignError::MissingInput(path.display().to_string()),
        _ => CampaignError::io(&path, e),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}
