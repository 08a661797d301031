//! End-to-end scenario runs: evolution from `t = 0`, analysis from `t = 1`, and
//! every artifact on disk, with resume from the last complete checkpoint.
//!
//! Output layout under the run directory:
//!
//! ```text
//! series.csv                    one row per observation
//! checkpoints/snapshot_KKK.bin  lens field B(t_K)
//! checkpoints/state_KKK.json    phase tracker and checkpoint summary
//! gamma/convolution_KKK.bin     γ on the full velocity grid
//! gamma/direct_KKK.bin          γ by direct quadrature at sample nodes
//! profile.json                  extracted profile (needs 4 checkpoints)
//! report.json                   fits and bound summaries
//! manifest.json                 config echo and artifact checksums
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    decay_exponent_fit, energy_growth_fit, phase_density, phase_multiplier, profile_limit,
    reconstruction_remainder, remainder_terms, renormalize, Fit, PhaseTracker, ProfileEstimate,
    ProfileOptions, ScatteringTrace, TraceCheckpoint,
};
use crate::error::{Error, Result};
use crate::galilean::{report_norms_lens, NormReport};
use crate::grid::{ComplexField, GridSpec};
use crate::lens;
use crate::propagator::{evolve, Event, EvolutionState, Frame, StepControl, Stepper};
use crate::wavepacket::{
    gamma_bounds, gamma_convolution, gamma_direct, gamma_fourier, gamma_relative_gap, sample_nodes, GammaBounds,
    GammaField, WavepacketProfile,
};

use super::config::ScenarioConfig;
use super::series::{header, read_series, SeriesRow};
use super::snapshot::{read_snapshot, sha256_hex, write_snapshot, SnapshotMeta, SNAPSHOT_VERSION};

pub const MANIFEST_SCHEMA: &str = "modscat-manifest/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub t: f64,
    pub norms: NormReport,
    pub bounds: GammaBounds,
    pub direct_vs_convolution: f64,
    pub direct_vs_fourier: f64,
    /// Modeled sizes of the three remainder terms.
    pub remainder: [f64; 3],
    /// `t^{d/2} sup |u - reconstruction|` over the analysis region.
    pub reconstruction_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub t_final: f64,
    pub slope_relative_error: f64,
    pub residual_exponent: Option<Fit>,
    pub cauchy_gaps: Vec<f64>,
    pub gamma_gaps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub equation: String,
    pub d: usize,
    pub epsilon: f64,
    pub beta: f64,
    pub steps: u64,
    pub t_final: f64,
    pub mass_drift_max: f64,
    pub mass_drift_per_1000_steps: f64,
    pub boundary_mass_max: f64,
    pub fit_window: [f64; 2],
    /// Slope of `log ‖u‖_∞` against `log t`.
    pub decay_fit: Option<Fit>,
    /// Slope of `log ‖e^{-itΔ}u‖_{H^{0,β}}` against `log ⟨t⟩`.
    pub growth_fit: Option<Fit>,
    /// Largest checkpoint value of each ratio: `‖γ‖_∞`, `‖γ‖₂`, `‖|∇|^βγ‖₂`, physical gap, Fourier gap.
    pub max_gamma_ratios: [f64; 5],
    pub max_direct_vs_convolution: f64,
    pub max_direct_vs_fourier: f64,
    pub phase_quadrature_error: f64,
    pub phase_jump_flags: usize,
    pub checkpoints: Vec<CheckpointSummary>,
    pub profile: Option<ProfileSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub config: ScenarioConfig,
    pub versions: serde_json::Value,
    pub grid_hash: String,
    pub wall_clock_s: f64,
    pub status: String,
    pub error: Option<String>,
    pub resumed_from: Option<f64>,
    pub artifacts: Vec<Artifact>,
    pub report: Option<RunReport>,
}

/// Everything a run produced, in memory.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub report: RunReport,
    pub trace: ScatteringTrace,
    pub profile: Option<ProfileEstimate>,
    pub series: Vec<SeriesRow>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointState {
    index: usize,
    t: f64,
    step_count: u64,
    boundary_mass: f64,
    initial_l2: f64,
    series_bytes: u64,
    tracker: PhaseTracker,
    summary: CheckpointSummary,
}

fn snapshot_path(out: &Path, k: usize) -> PathBuf {
    out.join(format!("checkpoints/snapshot_{k:03}.bin"))
}

fn state_path(out: &Path, k: usize) -> PathBuf {
    out.join(format!("checkpoints/state_{k:03}.json"))
}

fn conv_path(out: &Path, k: usize) -> PathBuf {
    out.join(format!("gamma/convolution_{k:03}.bin"))
}

fn direct_path(out: &Path, k: usize) -> PathBuf {
    out.join(format!("gamma/direct_{k:03}.bin"))
}

pub fn grid_hash(cfg: &ScenarioConfig) -> String {
    sha256_hex(format!("d={};n={};L={:e};t_switch={:e}", cfg.d, cfg.n, cfg.l, cfg.t_switch).as_bytes())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
}

struct Analysis<'a> {
    cfg: &'a ScenarioConfig,
    out: &'a Path,
    vgrid: GridSpec,
    profile: WavepacketProfile,
    nodes: Vec<usize>,
    meta: SnapshotMeta,
    tracker: PhaseTracker,
    trace: ScatteringTrace,
    series: Vec<SeriesRow>,
    summaries: Vec<CheckpointSummary>,
    csv: std::io::BufWriter<File>,
    csv_bytes: u64,
    initial_l2: f64,
}

impl Analysis<'_> {
    fn observe(&mut self, state: &EvolutionState, event: Event) -> Result<()> {
        let t = state.t;
        if t < 1.0 - 1e-12 || self.tracker.t_last().is_some_and(|tl| t <= tl) {
            return Ok(());
        }
        let cfg = self.cfg;
        let b = match state.frame {
            Frame::Lens => state.field.clone(),
            Frame::Physical => lens::to_lens(&state.field, t),
        };
        if b.grid != self.vgrid {
            return Err(Error::GridMismatch("analysis expects the fixed velocity grid".into()));
        }
        let norms = report_norms_lens(&b, t, cfg.beta)?;
        let conv = gamma_convolution(&b, Frame::Lens, &self.profile)?;
        let four = gamma_fourier(&b, Frame::Lens, &self.profile)?;
        let bounds = gamma_bounds(&b, Frame::Lens, &conv, &four, norms.linf, norms.l2, norms.jbeta, cfg.beta)?;
        let m = phase_multiplier(self.vgrid, &cfg.equation, t)?;
        let density = phase_density(&conv.values, self.vgrid, &cfg.equation, m.as_ref())?;
        self.tracker.observe(t, &conv.values, density)?;
        let remainder = remainder_terms(&norms, cfg.d);
        let row = SeriesRow {
            frame: if state.frame == Frame::Lens { "lens" } else { "physical" }.into(),
            step: state.step_count,
            mass_drift: (norms.l2 - self.initial_l2) / self.initial_l2,
            boundary_mass: state.boundary_mass,
            norms,
            bounds,
            phase_quad_error: self.tracker.quadrature_error(),
            remainder,
        };
        let line = row.to_line();
        self.csv.write_all(line.as_bytes())?;
        self.csv_bytes += line.len() as u64;
        self.series.push(row);
        self.trace.series.push(norms);

        if event == Event::Checkpoint {
            let k = self.trace.checkpoints.len();
            let direct = gamma_direct(&b, Frame::Lens, &self.profile, self.vgrid, &self.nodes)?;
            let gaps = (gamma_relative_gap(&direct, &conv)?, gamma_relative_gap(&direct, &four)?);
            let summary = CheckpointSummary {
                t,
                norms,
                bounds,
                direct_vs_convolution: gaps.0,
                direct_vs_fourier: gaps.1,
                remainder,
                reconstruction_error: None,
            };
            write_snapshot(&b, &self.meta, &snapshot_path(self.out, k))?;
            conv.write(&conv_path(self.out, k))?;
            direct.write(&direct_path(self.out, k))?;
            self.csv.flush()?;
            let cp = self.trace.push(&self.tracker, conv)?;
            cp.norms = Some(norms);
            cp.bounds = Some(bounds);
            cp.cross_gaps = Some(gaps);
            cp.field = Some(b);
            let st = CheckpointState {
                index: k,
                t,
                step_count: state.step_count,
                boundary_mass: state.boundary_mass,
                initial_l2: self.initial_l2,
                series_bytes: self.csv_bytes,
                tracker: self.tracker.clone(),
                summary: summary.clone(),
            };
            write_json(&state_path(self.out, k), &st)?;
            self.summaries.push(summary);
        }
        Ok(())
    }
}

struct Restored {
    state: EvolutionState,
    tracker: PhaseTracker,
    checkpoints: Vec<TraceCheckpoint>,
    summaries: Vec<CheckpointSummary>,
    series_bytes: u64,
    initial_l2: f64,
}

fn load_checkpoint(out: &Path, k: usize, cfg: &ScenarioConfig) -> Result<(CheckpointState, ComplexField, GammaField)> {
    let st: CheckpointState = read_json(&state_path(out, k))?;
    let (field, header) = read_snapshot(&snapshot_path(out, k))?;
    let gamma = GammaField::read(&conv_path(out, k))?;
    GammaField::read(&direct_path(out, k))?;
    if st.index != k || header.t != st.t || gamma.t != st.t || header.version != SNAPSHOT_VERSION {
        return Err(Error::Corrupt(format!("checkpoint {k} files disagree")));
    }
    if cfg.checkpoints.get(k) != Some(&st.t) {
        return Err(Error::Corrupt(format!("checkpoint {k} at t = {} is not in the schedule", st.t)));
    }
    Ok((st, field, gamma))
}

fn restore(out: &Path, cfg: &ScenarioConfig) -> Option<Restored> {
    let mut loaded = Vec::new();
    for k in 0..cfg.checkpoints.len() {
        match load_checkpoint(out, k, cfg) {
            Ok(c) => loaded.push(c),
            Err(_) => break,
        }
    }
    let (last, _, _) = loaded.last()?;
    let state = EvolutionState {
        field: loaded.last()?.1.clone(),
        t: last.t,
        frame: Frame::Lens,
        spec: cfg.equation,
        step_count: last.step_count,
        boundary_mass: last.boundary_mass,
    };
    let tracker = last.tracker.clone();
    let series_bytes = last.series_bytes;
    let initial_l2 = last.initial_l2;
    let mut checkpoints = Vec::new();
    let mut summaries = Vec::new();
    for (st, field, gamma) in loaded {
        let g = renormalize(&gamma.values, &st.tracker.phi, cfg.sigma);
        checkpoints.push(TraceCheckpoint {
            t: st.t,
            gamma,
            phi: st.tracker.phi,
            arg: st.tracker.arg,
            g,
            norms: Some(st.summary.norms),
            bounds: Some(st.summary.bounds),
            cross_gaps: Some((st.summary.direct_vs_convolution, st.summary.direct_vs_fourier)),
            field: Some(field),
        });
        summaries.push(st.summary);
    }
    Some(Restored { state, tracker, checkpoints, summaries, series_bytes, initial_l2 })
}

fn clear_outputs(out: &Path, keep_checkpoints: usize) -> Result<()> {
    for name in ["profile.json", "report.json", "manifest.json"] {
        let p = out.join(name);
        if p.exists() {
            fs::remove_file(p)?;
        }
    }
    for k in keep_checkpoints.. {
        let paths = [snapshot_path(out, k), state_path(out, k), conv_path(out, k), direct_path(out, k)];
        if !paths.iter().any(|p| p.exists()) {
            break;
        }
        for p in paths.iter().filter(|p| p.exists()) {
            fs::remove_file(p)?;
        }
    }
    Ok(())
}

fn list_artifacts(out: &Path) -> Result<Vec<Artifact>> {
    fn walk(dir: &Path, acc: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                walk(&p, acc)?;
            } else {
                acc.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(out, &mut files)?;
    let mut out_list = Vec::new();
    for p in files {
        let rel = p.strip_prefix(out).expect("walked under out").to_string_lossy().replace('\\', "/");
        if rel == "manifest.json" {
            continue;
        }
        let bytes = fs::read(&p)?;
        out_list.push(Artifact { path: rel, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
    }
    out_list.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out_list)
}

/// Checks that every artifact listed in `dir/manifest.json` exists with its checksum.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest> {
    let m: RunManifest = read_json(&dir.join("manifest.json"))?;
    for a in &m.artifacts {
        let bytes = fs::read(dir.join(&a.path)).map_err(|e| Error::Corrupt(format!("{}: {e}", a.path)))?;
        if sha256_hex(&bytes) != a.sha256 {
            return Err(Error::Corrupt(format!("{}: checksum mismatch", a.path)));
        }
    }
    Ok(m)
}

fn build_report(
    cfg: &ScenarioConfig,
    series: &[SeriesRow],
    trace: &ScatteringTrace,
    summaries: Vec<CheckpointSummary>,
    profile: Option<&ProfileEstimate>,
    steps: u64,
    t_final: f64,
) -> RunReport {
    let norms: Vec<NormReport> = series.iter().map(|r| r.norms).collect();
    let mass_drift_max = series.iter().map(|r| r.mass_drift.abs()).fold(0.0, f64::max);
    let mut ratios = [0.0f64; 5];
    for s in &summaries {
        let b = &s.bounds;
        for (r, v) in ratios.iter_mut().zip([b.linf_ratio, b.l2_ratio, b.grad_ratio, b.physical_ratio, b.fourier_ratio]) {
            *r = r.max(v);
        }
    }
    RunReport {
        equation: cfg.equation.name(),
        d: cfg.d,
        epsilon: cfg.epsilon,
        beta: cfg.beta,
        steps,
        t_final,
        mass_drift_max,
        mass_drift_per_1000_steps: mass_drift_max * 1000.0 / (steps.max(1000) as f64),
        boundary_mass_max: series.iter().map(|r| r.boundary_mass).fold(0.0, f64::max),
        fit_window: [cfg.fit_from, cfg.t_end],
        decay_fit: decay_exponent_fit(&norms, cfg.fit_from, cfg.t_end).ok(),
        growth_fit: energy_growth_fit(&norms, cfg.fit_from, cfg.t_end).ok(),
        max_gamma_ratios: ratios,
        max_direct_vs_convolution: summaries.iter().map(|s| s.direct_vs_convolution).fold(0.0, f64::max),
        max_direct_vs_fourier: summaries.iter().map(|s| s.direct_vs_fourier).fold(0.0, f64::max),
        phase_quadrature_error: trace.quadrature_error,
        phase_jump_flags: trace.jump_flags,
        checkpoints: summaries,
        profile: profile.map(|p| ProfileSummary {
            t_final: p.t_final,
            slope_relative_error: p.slope_relative_error(),
            residual_exponent: p.residual_exponent,
            cauchy_gaps: p.cauchy_gaps.clone(),
            gamma_gaps: p.gamma_gaps.clone(),
        }),
    }
}

/// Runs a scenario into `out` (the configured output directory when `None`).
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Path>, resume: bool) -> Result<RunResult> {
    let started = Instant::now();
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.clone());
    fs::create_dir_all(out.join("checkpoints"))?;
    fs::create_dir_all(out.join("gamma"))?;
    let restored = if resume { restore(&out, cfg) } else { None };
    clear_outputs(&out, restored.as_ref().map_or(0, |r| r.checkpoints.len()))?;

    let xgrid = cfg.grid();
    let vgrid = lens::velocity_grid(xgrid, cfg.t_switch);
    let series_path = out.join("series.csv");
    let mut trace = ScatteringTrace::new(cfg.equation, cfg.sigma, vgrid);
    let (mut state, tracker, summaries, series, csv_bytes, initial_l2, resumed_from) = match restored {
        Some(r) => {
            let f = OpenOptions::new().write(true).open(&series_path)?;
            f.set_len(r.series_bytes)?;
            let series = read_series(&series_path)?;
            trace.checkpoints = r.checkpoints;
            trace.series = series.iter().map(|s| s.norms).collect();
            trace.jump_flags = r.tracker.jump_flags;
            trace.quadrature_error = r.tracker.quadrature_error();
            let t = r.state.t;
            (r.state, r.tracker, r.summaries, series, r.series_bytes, r.initial_l2, Some(t))
        }
        None => {
            let u0 = cfg.initial_field()?;
            let l2 = u0.l2();
            let h = header();
            fs::write(&series_path, &h)?;
            let state = EvolutionState::new(u0, cfg.equation);
            (state, PhaseTracker::new(vgrid.len()), Vec::new(), Vec::new(), h.len() as u64, l2, None)
        }
    };
    let csv = std::io::BufWriter::new(OpenOptions::new().append(true).open(&series_path)?);
    let mut analysis = Analysis {
        cfg,
        out: &out,
        vgrid,
        profile: WavepacketProfile::gaussian(cfg.d),
        nodes: sample_nodes(&vgrid, cfg.v_max, cfg.direct_nodes),
        meta: SnapshotMeta { equation: cfg.equation.name(), epsilon: cfg.epsilon, frame: "lens".into() },
        tracker,
        trace,
        series,
        summaries,
        csv,
        csv_bytes,
        initial_l2,
    };
    let control = StepControl {
        dt: cfg.dt,
        t_start: state.t,
        t_end: cfg.t_end,
        checkpoint_times: cfg.checkpoints.iter().copied().filter(|&c| c > state.t).collect(),
        t_switch: Some(cfg.t_switch),
        lens_ratio: cfg.lens_ratio,
        observe_from: 1.0,
        boundary_limit: cfg.boundary_limit,
    };
    let mut stepper = Stepper::new(cfg.equation);
    let outcome = evolve(&mut state, &mut stepper, &control, |s, e, _| analysis.observe(s, e));
    analysis.csv.flush()?;

    let Analysis { trace, series, mut summaries, .. } = analysis;
    let profile = match &outcome {
        Ok(()) if trace.checkpoints.len() >= 4 => {
            let est = profile_limit(&trace, ProfileOptions { v_max: cfg.v_max, floor: 0.1, t_min: cfg.fit_from.max(cfg.t_end / 64.0) })?;
            for (s, cp) in summaries.iter_mut().zip(&trace.checkpoints) {
                if let Some(b) = &cp.field {
                    s.reconstruction_error = Some(reconstruction_remainder(&est, b, Frame::Lens)?);
                }
            }
            write_json(&out.join("profile.json"), &est.to_json())?;
            Some(est)
        }
        _ => None,
    };
    let report = build_report(cfg, &series, &trace, summaries, profile.as_ref(), state.step_count, state.t);
    write_json(&out.join("report.json"), &report)?;

    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        config: cfg.clone(),
        versions: serde_json::json!({
            "modscat": env!("CARGO_PKG_VERSION"),
            "series_schema": super::series::SERIES_SCHEMA,
            "snapshot_version": SNAPSHOT_VERSION,
        }),
        grid_hash: grid_hash(cfg),
        wall_clock_s: started.elapsed().as_secs_f64(),
        status: if outcome.is_ok() { "complete".into() } else { "failed".into() },
        error: outcome.as_ref().err().map(|e| e.to_string()),
        resumed_from,
        artifacts: list_artifacts(&out)?,
        report: Some(report.clone()),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    outcome?;
    Ok(RunResult { manifest, report, trace, profile, series })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config_str;

    fn small(extra: &str) -> ScenarioConfig {
        let text = format!(
            "equation = \"hartree\"\nd = 2\nepsilon = 0.1\nn = 32\nL = 8\nt_end = 4\nlens_ratio = 0.05\ndirect_nodes = 3\n{extra}"
        );
        parse_config_str(&text, Path::new("/tmp")).unwrap()
    }

    #[test]
    fn small_run_writes_consistent_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_scenario(&small(""), Some(dir.path()), false).unwrap();
        assert_eq!(r.manifest.status, "complete");
        assert_eq!(r.trace.checkpoints.len(), 3);
        assert!(r.profile.is_none());
        let m = verify_manifest(dir.path()).unwrap();
        assert!(m.artifacts.iter().any(|a| a.path == "checkpoints/snapshot_002.bin"));
        assert_eq!(read_series(&dir.path().join("series.csv")).unwrap(), r.series);
        assert!(r.series.first().unwrap().norms.t == 1.0);
    }

    #[test]
    fn boundary_breach_leaves_partial_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small("boundary_limit = 1e-300\n");
        let err = run_scenario(&cfg, Some(dir.path()), false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let m = verify_manifest(dir.path()).unwrap();
        assert_eq!(m.status, "failed");
        assert!(m.error.unwrap().contains("boundary"));
    }
}
