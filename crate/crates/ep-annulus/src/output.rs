//! CSV tables with fixed 17-significant-digit numbers.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use ep_annulus_core::background::mach_profile;
use ep_annulus_core::iteration::{FullResidual, SolveReport};
use ep_annulus_core::sparse::Csr;
use ep_annulus_core::{BackgroundProfile, Grid2D};

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().copied().map(num).collect());
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()
    }
}

pub fn background_table(profile: &BackgroundProfile) -> Table {
    let mut t = Table::new(&["r", "rho", "u1", "u2", "E", "Phi", "M1sq", "M2sq"]);
    for (i, m) in mach_profile(profile).iter().enumerate() {
        t.push_nums(&[
            profile.r_nodes[i],
            profile.rho[i],
            profile.u1[i],
            profile.u2[i],
            profile.e_field[i],
            profile.phi[i],
            m.m1_sq,
            m.m2_sq,
        ]);
    }
    t
}

/// One row per iteration; the first ratio is empty.
pub fn iteration_table(report: &SolveReport) -> Table {
    let mut t = Table::new(&["iteration", "increment", "increment_c1", "ratio"]);
    for (k, inc) in report.increments.iter().enumerate() {
        let ratio = if k == 0 { String::new() } else { num(report.ratios[k - 1]) };
        t.push(vec![(k + 1).to_string(), num(*inc), num(report.increments_c1[k]), ratio]);
    }
    t
}

pub fn fields_table(grid: &Grid2D, report: &SolveReport) -> Table {
    let mut t = Table::new(&["r", "x3", "W1", "W2", "W3", "W4", "W5", "W6"]);
    for j in 0..grid.nz {
        for i in 0..grid.nr {
            let mut row = vec![grid.r(i), grid.z(j)];
            row.extend(report.field.w.iter().map(|w| w[(i, j)]));
            t.push_nums(&row);
        }
    }
    t
}

pub fn residual_table(res: &FullResidual) -> Table {
    let mut t = Table::new(&["equation", "sup", "l2"]);
    for (k, name) in FullResidual::NAMES.iter().enumerate() {
        t.push(vec![name.to_string(), num(res.sup[k]), num(res.l2[k])]);
    }
    t
}

/// `i j value` lines, 0-based.
pub fn coo_string(a: &Csr) -> String {
    let mut s = String::new();
    for r in 0..a.n {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            let _ = writeln!(s, "{} {} {}", r, a.cols[k], num(a.vals[k]));
        }
    }
    s
}

/// Surface plots of the six deviations from fields.csv.
pub fn gnuplot_script(grid: &Grid2D) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset xlabel 'r'\nset ylabel 'x3'\n");
    let _ = writeln!(s, "set dgrid3d {},{}", grid.nz, grid.nr);
    s.push_str("set multiplot layout 2,3\n");
    for k in 1..=6 {
        let _ = writeln!(s, "splot 'fields.csv' using 1:2:{} with pm3d title 'W{k}'", k + 2);
    }
    s.push_str("unset multiplot\n");
    s
}
