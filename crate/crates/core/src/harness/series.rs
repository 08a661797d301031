//! `series.csv`: one row per observation from `t = 1` on.
//!
//! Line 1 is a `# modscat-series schema=N` marker, line 2 the column names. Floats
//! are written with 17 significant digits so every value reads back bit-exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::galilean::NormReport;
use crate::wavepacket::GammaBounds;

pub const SERIES_SCHEMA: u32 = 1;

pub const COLUMNS: [&str; 24] = [
    "t",
    "frame",
    "step",
    "mass",
    "l2",
    "mass_drift",
    "linf",
    "jbeta",
    "jbracket",
    "h0beta",
    "gn_ratio",
    "boundary_mass",
    "gamma_linf_ratio",
    "gamma_l2_ratio",
    "gamma_grad_ratio",
    "physical_gap",
    "physical_gap_ratio",
    "fourier_gap",
    "fourier_gap_ratio",
    "phase_quad_error",
    "remainder_1",
    "remainder_2",
    "remainder_3",
    "jbeta_route_gap",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRow {
    pub frame: String,
    pub step: u64,
    /// `(‖u‖₂ - ‖u₀‖₂)/‖u₀‖₂`.
    pub mass_drift: f64,
    pub boundary_mass: f64,
    pub norms: NormReport,
    pub bounds: GammaBounds,
    pub phase_quad_error: f64,
    pub remainder: [f64; 3],
}

pub fn header() -> String {
    format!("# modscat-series schema={SERIES_SCHEMA}\n{}\n", COLUMNS.join(","))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl SeriesRow {
    pub fn to_line(&self) -> String {
        let n = &self.norms;
        let b = &self.bounds;
        let mut cells = vec![num(n.t), self.frame.clone(), self.step.to_string(), num(n.l2 * n.l2), num(n.l2), num(self.mass_drift)];
        cells.extend(
            [
                n.linf,
                n.jbeta,
                n.jbracket,
                n.h0beta_pullback,
                n.gn_ratio,
                self.boundary_mass,
                b.linf_ratio,
                b.l2_ratio,
                b.grad_ratio,
                b.physical_gap,
                b.physical_ratio,
                b.fourier_gap,
                b.fourier_ratio,
                self.phase_quad_error,
                self.remainder[0],
                self.remainder[1],
                self.remainder[2],
            ]
            .map(num),
        );
        cells.push(n.jbeta_route_gap.map(num).unwrap_or_default());
        let mut s = cells.join(",");
        s.push('\n');
        s
    }

    pub fn parse(line: &str) -> Result<Self> {
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != COLUMNS.len() {
            return Err(Error::Corrupt(format!("series row has {} cells, expected {}", cells.len(), COLUMNS.len())));
        }
        let f = |i: usize| -> Result<f64> {
            cells[i].parse::<f64>().map_err(|e| Error::Corrupt(format!("column {}: {e}", COLUMNS[i])))
        };
        let t = f(0)?;
        let norms = NormReport {
            t,
            l2: f(4)?,
            linf: f(6)?,
            jbeta: f(7)?,
            jbracket: f(8)?,
            h0beta_pullback: f(9)?,
            jbeta_route_gap: if cells[23].is_empty() { None } else { Some(f(23)?) },
            gn_ratio: f(10)?,
        };
        let bounds = GammaBounds {
            t,
            linf_ratio: f(12)?,
            l2_ratio: f(13)?,
            grad_ratio: f(14)?,
            physical_gap: f(15)?,
            physical_ratio: f(16)?,
            fourier_gap: f(17)?,
            fourier_ratio: f(18)?,
        };
        Ok(Self {
            frame: cells[1].to_string(),
            step: cells[2].parse().map_err(|e| Error::Corrupt(format!("column step: {e}")))?,
            mass_drift: f(5)?,
            boundary_mass: f(11)?,
            norms,
            bounds,
            phase_quad_error: f(19)?,
            remainder: [f(20)?, f(21)?, f(22)?],
        })
    }
}

pub fn parse_series(text: &str) -> Result<Vec<SeriesRow>> {
    let mut lines = text.lines();
    let marker = lines.next().ok_or_else(|| Error::Corrupt("empty series file".into()))?;
    let schema = marker
        .strip_prefix("# modscat-series schema=")
        .and_then(|s| s.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Corrupt("series file lacks a schema marker".into()))?;
    if schema != SERIES_SCHEMA {
        return Err(Error::Corrupt(format!("series schema {schema} (supported: {SERIES_SCHEMA})")));
    }
    if lines.next() != Some(COLUMNS.join(",").as_str()) {
        return Err(Error::Corrupt("series column header does not match the schema".into()));
    }
    lines.filter(|l| !l.is_empty()).map(SeriesRow::parse).collect()
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesRow>> {
    parse_series(&std::fs::read_to_string(path)?)
}
