//! Subcommands and their artifacts.

use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

use ep_annulus_core::decomposition::{equivalence_check_forced, CylField3D, CylGrid3D, DecompositionResidual, EulerPoissonResidual};
use ep_annulus_core::iteration::{streamline_invariants, FullResidual};
use ep_annulus_core::{find_sonic_radius, integrate_background, BackgroundProfile, FlowRegime, Grid2D, SchemeOperators, SolveReport};

use crate::config::{ConfigError, Field3D, RunConfig};
use crate::output::{self, num, Table};

pub const THREADS_VAR: &str = "EP_ANNULUS_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Background,
    Sonic,
    Solve,
    Check3d,
    Residual,
    Sweep,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Solver(#[from] ep_annulus_core::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        use ep_annulus_core::Error as E;
        match self {
            RunError::Io { .. } | RunError::Config(ConfigError::Io { .. }) => 1,
            RunError::Config(_) | RunError::Solver(E::InvalidInput(_) | E::Compatibility(_)) => 2,
            RunError::Solver(_) => 3,
        }
    }
}

fn write(table: &Table, path: PathBuf) -> Result<(), RunError> {
    table.write(&path).map_err(|source| RunError::Io { path, source })
}

fn write_text(text: &str, path: PathBuf) -> Result<(), RunError> {
    std::fs::write(&path, text).map_err(|source| RunError::Io { path, source })
}

fn create_dir(path: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(path).map_err(|source| RunError::Io { path: path.into(), source })
}

fn regime_name(r: FlowRegime) -> &'static str {
    match r {
        FlowRegime::Subsonic => "subsonic",
        FlowRegime::TransonicCandidate => "transonic_candidate",
        FlowRegime::Transonic { .. } => "transonic",
        FlowRegime::Invalid(_) => "invalid",
    }
}

fn profile(cfg: &RunConfig) -> Result<BackgroundProfile, RunError> {
    Ok(integrate_background(&cfg.inlet_data(), cfg.inlet.n_nodes)?)
}

/// Loads the config, runs `cmd` into `out` (the config's output dir when
/// `None`), prints a summary and returns the process exit code.
pub fn run(cmd: Command, config: &Path, out: Option<&Path>) -> i32 {
    let result = RunConfig::load(config).map_err(RunError::from).and_then(|cfg| {
        let dir = out.map_or_else(|| cfg.output.dir.clone(), Path::to_path_buf);
        dispatch(cmd, &cfg, &dir)
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one subcommand; the returned text is a human-readable summary.
pub fn dispatch(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<String, RunError> {
    create_dir(out)?;
    match cmd {
        Command::Background => background(cfg, out),
        Command::Sonic => sonic(cfg, out),
        Command::Solve => solve(cfg, out),
        Command::Check3d => check3d(cfg, out),
        Command::Residual => residual(cfg, out),
        Command::Sweep => sweep(cfg, out),
    }
}

fn background(cfg: &RunConfig, out: &Path) -> Result<String, RunError> {
    let p = profile(cfg)?;
    write(&output::background_table(&p), out.join("background.csv"))?;
    Ok(format!("{} background, {} nodes on [{}, {}]", regime_name(p.regime), p.len(), cfg.inlet.r0, cfg.inlet.r1))
}

fn sonic(cfg: &RunConfig, out: &Path) -> Result<String, RunError> {
    let p = profile(cfg)?;
    let radius = find_sonic_radius(&p)?.map_or_else(|| "none".to_string(), num);
    let mut t = Table::new(&["regime", "sonic_radius"]);
    t.push(vec![regime_name(p.regime).into(), radius.clone()]);
    write(&t, out.join("sonic.csv"))?;
    Ok(format!("sonic radius: {radius}"))
}

fn write_solution(cfg: &RunConfig, ops: &SchemeOperators, report: &SolveReport, out: &Path) -> Result<(), RunError> {
    write(&output::iteration_table(report), out.join("report.csv"))?;
    write(&output::fields_table(&ops.grid, report), out.join("fields.csv"))?;
    write(&output::residual_table(&report.residual), out.join("residuals.csv"))?;
    if cfg.solver.gnuplot {
        write_text(&output::gnuplot_script(&ops.grid), out.join("plot.gp"))?;
    }
    if cfg.solver.dump_matrix {
        write_text(&output::coo_string(ops.coupled_matrix()), out.join("coupled.coo"))?;
    }
    Ok(())
}

fn operators(cfg: &RunConfig, p: &BackgroundProfile, grid: Grid2D) -> Result<SchemeOperators, RunError> {
    Ok(SchemeOperators::new(p, grid, cfg.solve_options()?.solver)?)
}

fn describe(report: &SolveReport) -> String {
    let q = report.contraction_ratio.map_or_else(|| "n/a".into(), |q| format!("{q:.3e}"));
    format!(
        "converged in {} iterations, |W| = {:.6e}, contraction {q}, max residual {:.3e}",
        report.iterations,
        report.field.sup_norm(),
        report.residual.max_sup()
    )
}

fn solve(cfg: &RunConfig, out: &Path) -> Result<String, RunError> {
    let p = profile(cfg)?;
    let opts = cfg.solve_options()?;
    let ops = operators(cfg, &p, opts.grid)?;
    let report = ops.solve(&cfg.boundary(), &opts)?;
    write_solution(cfg, &ops, &report, out)?;
    Ok(describe(&report))
}

fn check3d(cfg: &RunConfig, out: &Path) -> Result<String, RunError> {
    let c = &cfg.check3d;
    let (r0, r1) = (cfg.inlet.r0, cfg.inlet.r1);
    let p = match c.field {
        Field3D::Background => Some(profile(cfg)?),
        Field3D::Manufactured => None,
    };
    let smooth = cfg.manufactured();
    let mut t = Table::new(&["n", "family", "equation", "sup"]);
    let mut maxima = Vec::new();
    for &n in &c.levels {
        let grid = CylGrid3D::cube(n, r0, r1)?;
        let report = match &p {
            Some(p) => equivalence_check_forced(&CylField3D::lift_background(p, grid)?, None)?,
            None => {
                let (ep, dec) = smooth.exact_residuals(&grid);
                equivalence_check_forced(&smooth.sample(grid), Some((&ep, &dec)))?
            }
        };
        for (k, name) in EulerPoissonResidual::NAMES.iter().enumerate() {
            t.push(vec![n.to_string(), "euler_poisson".into(), name.to_string(), num(report.euler_poisson[k])]);
        }
        for (k, name) in DecompositionResidual::NAMES.iter().enumerate() {
            t.push(vec![n.to_string(), "decomposition".into(), name.to_string(), num(report.decomposition[k])]);
        }
        maxima.push((n, report.max_euler_poisson(), report.max_decomposition()));
    }
    write(&t, out.join("check3d.csv"))?;
    let mut summary = String::new();
    for w in maxima.windows(2) {
        let ((n0, a0, b0), (n1, a1, b1)) = (w[0], w[1]);
        let h = (n0 - 1) as f64 / (n1 - 1) as f64;
        let order = |a: f64, b: f64| (a / b).ln() / (1.0 / h).ln();
        summary += &format!("{n0} -> {n1}: order {:.3} (Euler-Poisson), {:.3} (decomposition)\n", order(a0, a1), order(b0, b1));
    }
    let (n, a, b) = maxima[maxima.len() - 1];
    summary += &format!("n = {n}: max residual {a:.3e} (Euler-Poisson), {b:.3e} (decomposition)");
    Ok(summary)
}

fn residual(cfg: &RunConfig, out: &Path) -> Result<String, RunError> {
    let p = profile(cfg)?;
    let opts = cfg.solve_options()?;
    let boundary = cfg.boundary();
    let coarse = opts.grid;
    let fine = Grid2D::new(2 * coarse.nr - 1, 2 * coarse.nz - 1, coarse.r0, coarse.r1)?;
    let mut rows = Vec::new();
    for grid in [coarse, fine] {
        let ops = operators(cfg, &p, grid)?;
        let report = ops.solve(&boundary, &ep_annulus_core::SolveOptions { grid, ..opts.clone() })?;
        let lines = streamline_invariants(&grid, &ops.background, &report.field, cfg.solver.streamlines)?;
        let mut v = report.residual.sup.to_vec();
        v.extend([lines.k_variation, lines.a_variation, lines.swirl_variation]);
        rows.push(v);
    }
    let names = FullResidual::NAMES.iter().copied().chain(["streamline_K", "streamline_A", "streamline_rU2"]);
    let mut t = Table::new(&["quantity", "coarse", "fine", "ratio"]);
    let mut worst = f64::INFINITY;
    for (k, name) in names.enumerate() {
        let ratio = rows[0][k] / rows[1][k];
        if k < FullResidual::NAMES.len() {
            worst = worst.min(ratio);
        }
        t.push(vec![name.into(), num(rows[0][k]), num(rows[1][k]), num(ratio)]);
    }
    write(&t, out.join("residual_study.csv"))?;
    Ok(format!(
        "{}x{} -> {}x{}: smallest residual reduction {worst:.3}, streamline variation {:.3e}",
        coarse.nr,
        coarse.nz,
        fine.nr,
        fine.nz,
        rows[1][6..].iter().copied().fold(0.0, f64::max)
    ))
}

fn thread_count(cases: usize) -> usize {
    let available = thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_VAR).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    cap.unwrap_or(available).min(available).min(cases).max(1)
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<String, RunError> {
    let p = profile(cfg)?;
    let opts = cfg.solve_options()?;
    let ops = operators(cfg, &p, opts.grid)?;
    let eps = &cfg.solver.sweep_eps;
    let base = cfg.boundary();
    let next = AtomicUsize::new(0);
    let mut results: Vec<(usize, Result<SolveReport, RunError>)> = thread::scope(|s| {
        let workers: Vec<_> = (0..thread_count(eps.len()))
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        if k >= eps.len() {
                            return done;
                        }
                        let dir = out.join(format!("eps_{k:02}"));
                        let result = ops.solve(&base.with_eps(eps[k]), &opts).map_err(RunError::from).and_then(|r| {
                            create_dir(&dir)?;
                            write_solution(cfg, &ops, &r, &dir)?;
                            Ok(r)
                        });
                        done.push((k, result));
                    }
                })
            })
            .collect();
        workers.into_iter().flat_map(|w| w.join().expect("sweep worker panicked")).collect()
    });
    results.sort_by_key(|(k, _)| *k);

    let mut t = Table::new(&["eps", "directory", "iterations", "w_sup", "w_over_eps", "linearity_ratio", "contraction_ratio"]);
    let mut reference = None;
    let mut spread: f64 = 0.0;
    for (k, result) in results {
        let r = result?;
        let response = r.field.sup_norm() / eps[k];
        let reference = *reference.get_or_insert(response);
        let ratio = response / reference;
        spread = spread.max((ratio - 1.0).abs());
        t.push(vec![
            num(eps[k]),
            format!("eps_{k:02}"),
            r.iterations.to_string(),
            num(r.field.sup_norm()),
            num(response),
            num(ratio),
            r.contraction_ratio.map_or_else(String::new, num),
        ]);
    }
    write(&t, out.join("sweep.csv"))?;
    Ok(format!("{} cases, linearity ratios within {:.2}% of 1", eps.len(), 100.0 * spread))
}
