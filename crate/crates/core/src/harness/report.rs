//! File-only views of a finished run: the `report` and `export-csv` commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::asymptotics::{decay_exponent_fit, energy_growth_fit, Fit};
use crate::error::{Error, Result};
use crate::galilean::NormReport;
use crate::wavepacket::GammaField;

use super::run::{verify_manifest, RunManifest};
use super::series::read_series;

fn fit_line(name: &str, f: Result<Fit>) -> String {
    match f {
        Ok(f) => format!("{name:<28} {:>+.6} ± {:.1e}  ({} points)\n", f.slope, f.stderr, f.points),
        Err(e) => format!("{name:<28} unavailable: {e}\n"),
    }
}

/// Human-readable summary recomputed from `series.csv`, `report.json` and `profile.json`.
pub fn report_from_trace(dir: &Path) -> Result<String> {
    let manifest: RunManifest = verify_manifest(dir)?;
    let cfg = &manifest.config;
    let series = read_series(&dir.join("series.csv"))?;
    let norms: Vec<NormReport> = series.iter().map(|r| r.norms).collect();
    let mut s = String::new();
    writeln!(s, "run        {} (d = {}, n = {}, L = {}, ε = {}, β = {})", cfg.equation.name(), cfg.d, cfg.n, cfg.l, cfg.epsilon, cfg.beta).ok();
    writeln!(s, "status     {}{}", manifest.status, manifest.error.as_deref().map(|e| format!(": {e}")).unwrap_or_default()).ok();
    writeln!(s, "rows       {} (t = {} .. {})", series.len(), norms.first().map_or(f64::NAN, |r| r.t), norms.last().map_or(f64::NAN, |r| r.t)).ok();
    writeln!(s, "window     [{}, {}]", cfg.fit_from, cfg.t_end).ok();
    s += &fit_line("decay slope (‖u‖_∞)", decay_exponent_fit(&norms, cfg.fit_from, cfg.t_end));
    writeln!(s, "{:<28} {:+.6}", "  reference -d/2", -(cfg.d as f64) / 2.0).ok();
    s += &fit_line("growth slope (H^{0,β})", energy_growth_fit(&norms, cfg.fit_from, cfg.t_end));
    let drift = series.iter().map(|r| r.mass_drift.abs()).fold(0.0, f64::max);
    writeln!(s, "{:<28} {drift:.3e}", "max mass drift").ok();
    if let Some(r) = &manifest.report {
        writeln!(s, "{:<28} {:?}", "max γ ratios", r.max_gamma_ratios.map(|v| (v * 1e4).round() / 1e4)).ok();
        writeln!(s, "{:<28} {:.3e} / {:.3e}", "direct vs conv / Fourier", r.max_direct_vs_convolution, r.max_direct_vs_fourier).ok();
        writeln!(s, "{:<28} {}", "phase jump flags", r.phase_jump_flags).ok();
    }
    let profile_path = dir.join("profile.json");
    if profile_path.exists() {
        let p: serde_json::Value = serde_json::from_slice(&std::fs::read(&profile_path)?)?;
        if let Some(e) = p["slope_relative_error"].as_f64() {
            writeln!(s, "{:<28} {e:.4e}", "phase slope rel. error").ok();
        }
        match p["residual_exponent"]["slope"].as_f64() {
            Some(v) => writeln!(s, "{:<28} {v:+.6}", "profile residual exponent").ok(),
            None => writeln!(s, "{:<28} unavailable", "profile residual exponent").ok(),
        };
        let gaps = |key: &str| -> Vec<String> {
            p[key].as_array().map(|a| a.iter().filter_map(|v| v.as_f64()).map(|v| format!("{v:.3e}")).collect()).unwrap_or_default()
        };
        writeln!(s, "{:<28} {}", "‖G_k+1 - G_k‖_∞", gaps("cauchy_gaps").join(" ")).ok();
        writeln!(s, "{:<28} {}", "‖γ_k+1 - γ_k‖_∞", gaps("gamma_gaps").join(" ")).ok();
    }
    Ok(s)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(serde::Deserialize)]
struct StateView {
    t: f64,
    tracker: TrackerView,
}

#[derive(serde::Deserialize)]
struct TrackerView {
    phi: Vec<f64>,
    arg: Vec<f64>,
}

/// Writes `gamma.csv` (sampled nodes at every checkpoint) and `profile.csv` into `dir`.
pub fn export_csv(dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = verify_manifest(dir)?;
    let sigma = manifest.config.sigma;
    let mut out = Vec::new();
    let mut g = String::from("t,node,v1,v2,v3,gamma_re,gamma_im,direct_re,direct_im,arg,phi,G_re,G_im\n");
    for k in 0.. {
        let state_path = dir.join(format!("checkpoints/state_{k:03}.json"));
        if !state_path.exists() {
            break;
        }
        let st: StateView = serde_json::from_slice(&std::fs::read(&state_path)?)
            .map_err(|e| Error::Corrupt(format!("{}: {e}", state_path.display())))?;
        let conv = GammaField::read(&dir.join(format!("gamma/convolution_{k:03}.bin")))?;
        let direct = GammaField::read(&dir.join(format!("gamma/direct_{k:03}.bin")))?;
        for (node, dv) in direct.node_list().into_iter().zip(&direct.values) {
            let v = conv.grid.point(node);
            let gam = conv.values[node];
            let phi = st.tracker.phi[node];
            let gg = gam * crate::C64::from_polar(1.0, sigma * phi);
            let vcols: Vec<String> = (0..3).map(|a| if a < conv.grid.d { num(v[a]) } else { String::new() }).collect();
            writeln!(
                g,
                "{},{node},{},{},{},{},{},{},{},{},{}",
                num(st.t),
                vcols.join(","),
                num(gam.re),
                num(gam.im),
                num(dv.re),
                num(dv.im),
                num(st.tracker.arg[node]),
                num(phi),
                num(gg.re),
                num(gg.im)
            )
            .ok();
        }
    }
    let gp = dir.join("gamma.csv");
    std::fs::write(&gp, g)?;
    out.push(gp);

    let profile_path = dir.join("profile.json");
    if profile_path.exists() {
        let p: serde_json::Value = serde_json::from_slice(&std::fs::read(&profile_path)?)?;
        let col = |k: &str| -> Vec<f64> { p[k].as_array().map(|a| a.iter().filter_map(|v| v.as_f64()).collect()).unwrap_or_default() };
        let (wr, wi, ar, ai, slope, pred) =
            (col("W_re"), col("W_im"), col("W_asymptotic_re"), col("W_asymptotic_im"), col("phase_slope"), col("predicted_slope"));
        let mask: Vec<bool> = p["fit_mask"].as_array().map(|a| a.iter().map(|v| v.as_bool().unwrap_or(false)).collect()).unwrap_or_default();
        let vs = p["v"].as_array().cloned().unwrap_or_default();
        if [wi.len(), ar.len(), ai.len(), slope.len(), pred.len(), mask.len(), vs.len()].iter().any(|&l| l != wr.len()) {
            return Err(Error::Corrupt("profile.json columns differ in length".into()));
        }
        let mut s = String::from("node,v1,v2,v3,W_re,W_im,W_asymptotic_re,W_asymptotic_im,fit_mask,phase_slope,predicted_slope\n");
        for i in 0..wr.len() {
            let v: Vec<f64> = vs[i].as_array().map(|a| a.iter().filter_map(|x| x.as_f64()).collect()).unwrap_or_default();
            let vcols: Vec<String> = (0..3).map(|a| v.get(a).map(|&x| num(x)).unwrap_or_default()).collect();
            writeln!(
                s,
                "{i},{},{},{},{},{},{},{},{}",
                vcols.join(","),
                num(wr[i]),
                num(wi[i]),
                num(ar[i]),
                num(ai[i]),
                u8::from(mask[i]),
                num(slope[i]),
                num(pred[i])
            )
            .ok();
        }
        let pp = dir.join("profile.csv");
        std::fs::write(&pp, s)?;
        out.push(pp);
    }
    Ok(out)
}
