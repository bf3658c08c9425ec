use std::fs;
use std::path::Path;

use ksrg::backbone::{backbone_row, k_for_sk, BackboneError};
use ksrg::cover::cover;
use ksrg::experiments::output::{svg_phase, svg_scatter, write_csv, write_svg};
use ksrg::experiments::{
    estimate_cluster_decay, estimate_downward_boundary, estimate_giant_fraction, estimate_second_largest,
    fit_slope_trimmed, BoundaryMethod, ExperimentRow, SlopeFit, Transform, DEFAULT_DROP,
};
use ksrg::exponents::{exponent_report, phase_diagram, PhaseAxes};
use ksrg::model::{ModelParams, Point};
use ksrg::profile::{gamma_star, profile_count_slopes, profile_count_targets, ProfileCountConfig, DEFAULT_RHO};
use ksrg::rng;
use ksrg::sampler::{build_graph, sample_vertices, Method};
use serde::Serialize;

use crate::config::{check_grid, config_err, runtime_err, CliError, RunFile};

const LABEL_BACKBONE: u64 = 0x6261_636b_626f_6e65;

fn pow2_grid(a: i32, b: i32) -> Vec<f64> {
    (a..=b).map(|j| 2f64.powi(j)).collect()
}

fn prepare_dir(dir: &Path, run: &RunFile, params: &ModelParams) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime_err(format!("{}: {e}", dir.display())))?;
    let text = run.resolved_text(params)?;
    fs::write(dir.join("config.resolved"), text).map_err(|e| runtime_err(format!("{}: {e}", dir.display())))
}

fn csv_out<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), CliError> {
    let p = dir.join(name);
    write_csv(&p, rows).map_err(|e| runtime_err(format!("{}: {e}", p.display())))
}

fn svg_out(dir: &Path, name: &str, svg: &str) -> Result<(), CliError> {
    let p = dir.join(name);
    write_svg(&p, svg).map_err(|e| runtime_err(format!("{}: {e}", p.display())))
}

fn check_reps(reps: u32) -> Result<u32, CliError> {
    if reps == 0 {
        return Err(config_err("reps must be positive"));
    }
    Ok(reps)
}

fn check_drop(drop: f64) -> Result<f64, CliError> {
    if !(0.0..1.0).contains(&drop) {
        return Err(config_err(format!("drop_fraction must lie in [0, 1), got {drop}")));
    }
    Ok(drop)
}

fn check_positive(name: &str, x: f64) -> Result<f64, CliError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(config_err(format!("{name} must be positive and finite, got {x}")));
    }
    Ok(x)
}

#[derive(Serialize)]
struct FitRow {
    quantity: String,
    x_transform: &'static str,
    y_transform: &'static str,
    slope: Option<f64>,
    intercept: Option<f64>,
    r_squared: Option<f64>,
    points: usize,
    target: Option<f64>,
    note: String,
}

/// Trimmed fit plus the row describing it; a failed fit leaves the numbers empty.
fn fit_row(quantity: &str, pts: &[(f64, f64)], xt: Transform, yt: Transform, drop: f64, target: Option<f64>) -> (Option<SlopeFit>, FitRow) {
    let finite: Vec<(f64, f64)> =
        pts.iter().copied().filter(|&(x, y)| xt.apply(x).is_finite() && yt.apply(y).is_finite()).collect();
    let res = fit_slope_trimmed(&finite, xt, yt, drop);
    let row = FitRow {
        quantity: quantity.to_string(),
        x_transform: xt.name(),
        y_transform: yt.name(),
        slope: res.as_ref().ok().map(|f| f.slope),
        intercept: res.as_ref().ok().map(|f| f.intercept),
        r_squared: res.as_ref().ok().map(|f| f.r_squared),
        points: res.as_ref().map(|f| f.points).unwrap_or(finite.len()),
        target: target.filter(|t| t.is_finite()),
        note: res.as_ref().err().map(|e| e.to_string()).unwrap_or_default(),
    };
    (res.ok(), row)
}

fn print_fit(r: &FitRow) {
    match (r.slope, r.r_squared) {
        (Some(s), Some(r2)) => {
            let t = r.target.map(|t| format!(", target {t:.4}")).unwrap_or_default();
            println!("{}: slope {s:.4} (R^2 {r2:.4}, {} points{t})", r.quantity, r.points);
        }
        _ => println!("{}: no fit ({})", r.quantity, r.note),
    }
}

// ---------------------------------------------------------------- exponents

#[derive(Serialize)]
struct KeyValue {
    quantity: &'static str,
    value: String,
}

pub fn exponents(run: RunFile, csv: bool, out_dir: Option<&Path>) -> Result<(), CliError> {
    let params = run.model.resolve()?;
    let rep = exponent_report(&params);
    let rows: Vec<KeyValue> = rep.rows().into_iter().map(|(quantity, value)| KeyValue { quantity, value }).collect();
    if csv {
        let s = ksrg::experiments::output::csv_string(&rows).map_err(runtime_err)?;
        print!("{s}");
    } else {
        println!("params          {params}");
        print!("{rep}");
    }
    if let Some(dir) = out_dir {
        prepare_dir(dir, &run, &params)?;
        csv_out(dir, "exponents.csv", &rows)?;
    }
    Ok(())
}

pub fn phase_diagram_cmd(run: RunFile, out_dir: &Path) -> Result<(), CliError> {
    let mut run = run;
    let params = run.model.resolve()?;
    let axes = match run.axes.get_or_insert_with(|| "alpha-tau".into()).as_str() {
        "alpha-tau" => PhaseAxes::AlphaTau,
        "sigma-tau" => PhaseAxes::SigmaTau,
        other => return Err(config_err(format!("axes must be alpha-tau or sigma-tau, got {other:?}"))),
    };
    let res = *run.resolution.get_or_insert(100);
    if !(1..=2000).contains(&res) {
        return Err(config_err(format!("resolution must lie in 1..=2000, got {res}")));
    }
    let cells = phase_diagram(&params, axes, res);
    prepare_dir(out_dir, &run, &params)?;
    csv_out(out_dir, "phase.csv", &cells)?;
    let fixed = match axes {
        PhaseAxes::AlphaTau => format!("d={} sigma={}", params.d, params.sigma()),
        PhaseAxes::SigmaTau => format!("d={} alpha={}", params.d, params.alpha()),
    };
    svg_out(out_dir, "phase.svg", &svg_phase(&format!("dominant type, {fixed}"), &cells, res, axes.labels()))?;
    println!("{} cells written to {}", cells.len(), out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------- sample

pub fn sample(run: RunFile, out: &Path) -> Result<(), CliError> {
    let mut run = run;
    let params = run.model.resolve()?;
    let n = check_positive("n", *run.n.get_or_insert(1024.0))?;
    let seed = *run.seed.get_or_insert(1);
    let method = match run.method.get_or_insert_with(|| "auto".into()).as_str() {
        "auto" => None,
        "exact" => Some(Method::Exact),
        "cell_list" => Some(Method::CellList),
        other => return Err(config_err(format!("method must be auto, exact or cell_list, got {other:?}"))),
    };
    let g = build_graph(sample_vertices(&params, n, seed), &params, n, seed, method);
    fs::write(out, g.dump()).map_err(|e| runtime_err(format!("{}: {e}", out.display())))?;
    println!("{} vertices, {} edges written to {}", g.vertices.len(), g.edges.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------- cover

pub fn read_points(path: &Path, d: usize) -> Result<Vec<Point>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let xs: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let xs = xs.map_err(|e| config_err(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if xs.len() != d {
            return Err(config_err(format!("{}:{}: expected {d} coordinates, found {}", path.display(), i + 1, xs.len())));
        }
        pts.push(Point::from_vec(xs));
    }
    Ok(pts)
}

pub fn cover_cmd(run: RunFile, points: &Path, out_dir: Option<&Path>) -> Result<(), CliError> {
    let params = run.model.resolve()?;
    let n = check_positive("n", run.n.ok_or_else(|| config_err("cover needs --n"))?)?;
    let wbar = run.wbar.ok_or_else(|| config_err("cover needs --wbar"))?;
    let pts = read_points(points, params.d)?;
    // every cover error is a violated precondition on the input
    let res = cover(&pts, n, wbar, &params).map_err(config_err)?;
    let cert = res.certify(&pts);
    let mut report = String::new();
    report.push_str(&format!("kind                    {:?}\n", res.kind));
    report.push_str(&format!("points                  {}\n", res.input_size));
    report.push_str(&format!("s                       {}\n", res.s));
    report.push_str(&format!("rounds                  {}\n", res.rounds));
    report.push_str(&format!("boxes                   {}\n", res.boxes.len()));
    report.push_str(&format!("covered_region_volume   {}\n", res.covered_region_volume));
    for (name, ok) in cert.rows() {
        let v = match ok {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "n/a",
        };
        report.push_str(&format!("{name:<24}{v}\n"));
    }
    report.push_str(&format!("all                     {}\n", if cert.all() { "pass" } else { "FAIL" }));
    print!("{report}");
    if let Some(dir) = out_dir {
        prepare_dir(dir, &run, &params)?;
        fs::write(dir.join("cover_report.txt"), &report).map_err(runtime_err)?;
    }
    if !cert.all() {
        return Err(runtime_err("a certificate failed"));
    }
    Ok(())
}

// ---------------------------------------------------------------- backbone

pub fn backbone(run: RunFile, out_dir: &Path) -> Result<(), CliError> {
    let mut run = run;
    let params = run.model.resolve()?;
    let n = check_positive("n", *run.n.get_or_insert(2f64.powi(18)))?;
    let k = match run.k {
        Some(k) => check_positive("k", k)?,
        None => {
            let target = check_positive("s_k", *run.s_k.get_or_insert(4.0))?;
            k_for_sk(&params, target).map_err(config_err)?
        }
    };
    run.k = Some(k);
    let seeds = *run.seeds.get_or_insert(100);
    let seed = *run.seed.get_or_insert(1);
    let map = |e: BackboneError| match e {
        BackboneError::NoBackbone => runtime_err(e),
        _ => config_err(e),
    };
    // validate before sampling
    ksrg::backbone::backbone_constants(&params, k, n).map_err(map)?;
    let rows = (0..seeds)
        .map(|i| backbone_row(&params, n, k, rng::rep_seed(seed, LABEL_BACKBONE, i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(map)?;
    prepare_dir(out_dir, &run, &params)?;
    csv_out(out_dir, "backbone.csv", &rows)?;
    let hits = rows.iter().filter(|r| r.a_bb).count();
    let bad = rows.iter().filter(|r| r.claims_ok == Some(false)).count();
    println!("k = {k}: A_bb held on {hits}/{seeds} graphs, claim checks failed on {bad}");
    Ok(())
}

// ---------------------------------------------------------------- profile

pub fn profile_slopes(run: RunFile, out_dir: &Path) -> Result<(), CliError> {
    let mut run = run;
    let params = run.model.resolve()?;
    let k_grid = run.k_grid.get_or_insert_with(|| pow2_grid(6, 12)).clone();
    check_grid("k_grid", &k_grid)?;
    let gamma = *run.gamma.get_or_insert(gamma_star(&params));
    let reps = *run.reps.get_or_insert(30);
    if reps < 30 {
        return Err(config_err(format!("profile-slopes needs reps >= 30, got {reps}")));
    }
    let cfg = ProfileCountConfig { rho: *run.rho.get_or_insert(DEFAULT_RHO), outer: *run.outer.get_or_insert(2.0) };
    let seed = *run.seed.get_or_insert(1);
    let drop = check_drop(*run.drop_fraction.get_or_insert(DEFAULT_DROP))?;
    let rows = profile_count_slopes(&params, &k_grid, gamma, reps, seed, &cfg).map_err(config_err)?;
    let mean = |f: &dyn Fn(&ksrg::profile::ProfileCountRow) -> u64| -> Vec<(f64, f64)> {
        k_grid
            .iter()
            .map(|&k| {
                let xs: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| f(r) as f64).collect();
                (k, xs.iter().sum::<f64>() / xs.len() as f64)
            })
            .collect()
    };
    let above = mean(&|r| r.count_above);
    let edges = mean(&|r| r.edges_below_cross);
    let (ta, te) = profile_count_targets(&params, gamma);
    let (fa, ra) = fit_row("count_above", &above, Transform::Log, Transform::Log, drop, Some(ta));
    let (fe, re) = fit_row("edges_below_cross", &edges, Transform::Log, Transform::Log, drop, Some(te));
    prepare_dir(out_dir, &run, &params)?;
    csv_out(out_dir, "profile_counts.csv", &rows)?;
    print_fit(&ra);
    print_fit(&re);
    csv_out(out_dir, "profile_fit.csv", &[ra, re])?;
    svg_out(out_dir, "profile_above.svg", &svg_scatter("vertices above the profile", &above, Transform::Log, Transform::Log, fa.as_ref()))?;
    svg_out(out_dir, "profile_edges.svg", &svg_scatter("crossing edges below the profile", &edges, Transform::Log, Transform::Log, fe.as_ref()))?;
    Ok(())
}

// ---------------------------------------------------------------- experiments

pub fn experiment(name: &str, run: RunFile, out_dir: &Path) -> Result<(), CliError> {
    let mut run = run;
    let params = run.model.resolve()?;
    let seed = *run.seed.get_or_insert(1);
    let drop = check_drop(*run.drop_fraction.get_or_insert(DEFAULT_DROP))?;
    let zeta = exponent_report(&params).zeta_star;
    match name {
        "decay" => {
            let n = check_positive("n", *run.n.get_or_insert(2f64.powi(14)))?;
            let k_grid = run.k_grid.get_or_insert_with(|| pow2_grid(0, 10)).clone();
            check_grid("k_grid", &k_grid)?;
            let reps = check_reps(*run.reps.get_or_insert(1000))?;
            let res = estimate_cluster_decay(&params, n, &k_grid, reps, seed);
            let rows: Vec<ExperimentRow> = res.rows.iter().map(|r| r.to_row("decay", &params)).collect();
            let pts: Vec<(f64, f64)> = res.table.iter().filter(|r| !r.excluded).map(|r| (r.k, r.p_hat)).collect();
            let (fit, fr) = fit_row("p_hat", &pts, Transform::Log, Transform::LogNegLog, drop, Some(zeta));
            prepare_dir(out_dir, &run, &params)?;
            csv_out(out_dir, "decay_rows.csv", &rows)?;
            csv_out(out_dir, "decay.csv", &res.table)?;
            print_fit(&fr);
            println!("checks: monotone {} nested {}", res.monotone, res.nested);
            csv_out(out_dir, "decay_fit.csv", &[fr])?;
            svg_out(out_dir, "decay.svg", &svg_scatter("cluster-size decay", &pts, Transform::Log, Transform::LogNegLog, fit.as_ref()))?;
        }
        "second" | "giant" => {
            let n_grid = run.n_grid.get_or_insert_with(|| pow2_grid(14, 20)).clone();
            check_grid("n_grid", &n_grid)?;
            let reps = check_reps(*run.reps.get_or_insert(100))?;
            if name == "second" {
                let (raw, table) = estimate_second_largest(&params, &n_grid, reps, seed);
                let rows: Vec<ExperimentRow> = raw.iter().map(|r| r.to_row("second", &params)).collect();
                let pts: Vec<(f64, f64)> = table.iter().map(|r| (r.n, r.median)).collect();
                let (fit, fr) = fit_row("median_second_largest", &pts, Transform::LogLog, Transform::Log, drop, Some(1.0 / zeta));
                prepare_dir(out_dir, &run, &params)?;
                csv_out(out_dir, "second_rows.csv", &rows)?;
                csv_out(out_dir, "second.csv", &table)?;
                print_fit(&fr);
                csv_out(out_dir, "second_fit.csv", &[fr])?;
                svg_out(out_dir, "second.svg", &svg_scatter("second largest component", &pts, Transform::LogLog, Transform::Log, fit.as_ref()))?;
            } else {
                let (raw, table) = estimate_giant_fraction(&params, &n_grid, reps, seed);
                let rows: Vec<ExperimentRow> = raw.iter().map(|r| r.to_row("giant", &params)).collect();
                let pts: Vec<(f64, f64)> = table.iter().map(|r| (r.n, r.mean)).collect();
                prepare_dir(out_dir, &run, &params)?;
                csv_out(out_dir, "giant_rows.csv", &rows)?;
                csv_out(out_dir, "giant.csv", &table)?;
                for r in &table {
                    println!("n = {}: mean {:.5} stddev {:.5}", r.n, r.mean, r.stddev);
                }
                svg_out(out_dir, "giant.svg", &svg_scatter("giant fraction", &pts, Transform::Log, Transform::Identity, None))?;
            }
        }
        "boundary" => {
            let k_grid = run.k_grid.get_or_insert_with(|| pow2_grid(8, 16)).clone();
            check_grid("k_grid", &k_grid)?;
            let reps = check_reps(*run.reps.get_or_insert(200))?;
            let (samples, table) =
                estimate_downward_boundary(&params, &k_grid, reps, seed, BoundaryMethod::default()).map_err(config_err)?;
            let rows: Vec<ExperimentRow> = samples.iter().map(|s| ExperimentRow::boundary(&params, s)).collect();
            let pts: Vec<(f64, f64)> = table.iter().map(|r| (r.k, r.mean)).collect();
            let (fit, fr) = fit_row("mean_boundary", &pts, Transform::Log, Transform::Log, drop, Some(zeta));
            prepare_dir(out_dir, &run, &params)?;
            csv_out(out_dir, "boundary_rows.csv", &rows)?;
            csv_out(out_dir, "boundary.csv", &table)?;
            print_fit(&fr);
            csv_out(out_dir, "boundary_fit.csv", &[fr])?;
            svg_out(out_dir, "boundary.svg", &svg_scatter("downward vertex boundary", &pts, Transform::Log, Transform::Log, fit.as_ref()))?;
        }
        other => return Err(config_err(format!("unknown experiment {other:?}"))),
    }
    Ok(())
}
