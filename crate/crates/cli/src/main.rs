use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ksrg::model::{Ext, VertexSet};

mod commands;
mod config;

use config::{parse_grid, parse_number, ModelFile, RunFile};

#[derive(Parser, Debug)]
#[command(
    name = "ksrg",
    version,
    about = "Kernel-based spatial random graphs: exponents, sampling, cover expansion and Monte Carlo experiments",
    after_help = "Configuration: --config FILE reads a TOML file with top-level run keys \
(seed, reps, n, n_grid, k_grid, k, s_k, seeds, gamma, rho, outer, drop_fraction, method, wbar, axes, resolution) \
and a [model] table (d, tau, alpha, sigma, kernel, profile, beta, p, vertex_set). \
Flags override file values, which override defaults. tau and alpha accept \"inf\".\n\
Exit status: 0 success, 2 invalid configuration, 1 runtime failure."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Model parameters; unset values come from --config, then from the
/// reference model d=1, tau=2.2, alpha=3, sigma=1, beta=1, p=1.
#[derive(Args, Debug, Clone, Default)]
struct ModelArgs {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// dimension
    #[arg(long)]
    d: Option<usize>,
    /// power-law exponent of the marks, > 2 or "inf"
    #[arg(long)]
    tau: Option<Ext>,
    /// decay exponent of the profile, > 1 or "inf" (threshold profile)
    #[arg(long)]
    alpha: Option<Ext>,
    /// exponent of the interpolation kernel max·min^sigma
    #[arg(long)]
    sigma: Option<f64>,
    /// interpolation or sum
    #[arg(long)]
    kernel: Option<String>,
    /// polynomial or threshold
    #[arg(long)]
    profile: Option<String>,
    /// edge density constant, > 0
    #[arg(long)]
    beta: Option<f64>,
    /// maximal connection probability in (0, 1]
    #[arg(long)]
    p: Option<f64>,
    /// Poisson point process or the integer lattice
    #[arg(long, value_enum)]
    vertex_set: Option<VertexSetArg>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum VertexSetArg {
    Poisson,
    Lattice,
}

impl ModelArgs {
    fn model_file(&self) -> ModelFile {
        ModelFile {
            d: self.d,
            tau: self.tau,
            alpha: self.alpha,
            sigma: self.sigma,
            kernel: self.kernel.clone(),
            profile: self.profile.clone(),
            beta: self.beta,
            p: self.p,
            vertex_set: self.vertex_set.map(|v| match v {
                VertexSetArg::Poisson => VertexSet::Poisson,
                VertexSetArg::Lattice => VertexSet::Lattice,
            }),
        }
    }
}

const EXPONENTS_HELP: &str = "CSV columns (exponents.csv, or stdout with --csv): \
quantity, value. Quantities: zeta_short, zeta_ll, zeta_hl, zeta_hh, zeta_long, zeta_star, gamma_hl, gamma_hh, \
gamma_long, gamma_star, xi_ll, xi_hl, xi_hh, xi_star, m_long, m_star, dominant_types. \
\"n/a\" marks quantities undefined for alpha = inf, \"-inf\" diverging exponents.";

const PHASE_HELP: &str = "Outputs in --out-dir: phase.svg (heatmap of the dominant type), \
phase.csv, config.resolved.\n\
phase.csv columns: x, y (cell centre), tau, alpha, sigma (the model at that cell), \
zeta_star, m_star (number of tied dominant types), dominant (types joined by '+').";

const SAMPLE_HELP: &str = "Writes the graph dump to --out: '#' header lines (params, n, seed, sizes), \
vertex lines 'v id x_1 .. x_d mark', edge lines 'e u v' with u < v. No CSV output.";

const COVER_HELP: &str = "--points: whitespace-separated coordinates, one point per line, d columns; \
'#' starts a comment. Prints the certificate report (kind, rounds, s, covered volume, one pass/fail line \
per certificate); with --out-dir also writes cover_report.txt and config.resolved. No CSV output.";

const BACKBONE_HELP: &str = "Outputs in --out-dir: backbone.csv, config.resolved.\n\
backbone.csv columns: seed (graph seed), a_bb (backbone event holds), band_vertices (vertices with mark \
in [w_hh, 2w_hh)), min_box_count (fewest backbone-band vertices over subboxes), greedy_success, \
claims_checked (vertices with mark >= 2w_hh examined), claims_ok (all nearby-set checks passed; empty \
when a_bb is false).";

const PROFILE_HELP: &str = "Outputs in --out-dir: profile_counts.csv, profile_fit.csv, \
profile_above.svg, profile_edges.svg, config.resolved.\n\
profile_counts.csv columns: k, rep, count_above (vertices above the suppressed profile), \
edges_below_cross (edges between inside and outside vertices below the profile).\n\
profile_fit.csv columns: quantity, x_transform, y_transform, slope, intercept, r_squared, points, target, note (why a fit is missing).";

const EXPERIMENT_HELP: &str = "Outputs in --out-dir, NAME = decay|second|giant|boundary: \
NAME_rows.csv, NAME.csv, NAME.svg, NAME_fit.csv (not for giant), config.resolved.\n\
NAME_rows.csv columns: experiment, params, n, k, rep, seed, origin_cluster, largest, second_largest, \
boundary, a_bb (empty when not applicable).\n\
decay.csv columns: k, reps, hits, p_hat (fraction with |C(0)| > k and 0 outside the giant), wilson_lo, \
wilson_hi (95% Wilson interval), excluded (p_hat is 0 or 1, left out of the fit).\n\
second.csv columns: n, reps, median, q25, q75, max (of the second largest component size).\n\
giant.csv columns: n, reps, mean, stddev (of largest component size / n).\n\
boundary.csv columns: k, reps, mean, stderr (of the number of vertices of the box of volume k with a \
downward edge leaving it).\n\
NAME_fit.csv columns: quantity, x_transform, y_transform, slope, intercept, r_squared, points, target, note (why a fit is missing).";

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print every exponent of the phase diagram for one model
    #[command(after_help = EXPONENTS_HELP)]
    Exponents {
        #[command(flatten)]
        model: ModelArgs,
        /// print CSV instead of aligned text
        #[arg(long)]
        csv: bool,
        /// output directory, created if missing
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Sweep a 2-parameter grid and draw the dominant type
    #[command(after_help = PHASE_HELP)]
    PhaseDiagram {
        #[command(flatten)]
        model: ModelArgs,
        /// alpha-tau: x = 1/(tau-1), y = 1/alpha; sigma-tau: x = 1/(tau-1), y = sigma/(tau-1)
        #[arg(long)]
        axes: Option<String>,
        /// cells per side
        #[arg(long)]
        resolution: Option<usize>,
        /// output directory, created if missing
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sample one graph on the box of volume n and dump it
    #[command(after_help = SAMPLE_HELP)]
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        /// box volume, e.g. 2^18
        #[arg(long, value_parser = parse_number)]
        n: Option<f64>,
        /// top-level seed
        #[arg(long)]
        seed: Option<u64>,
        /// auto, exact or cell_list
        #[arg(long)]
        method: Option<String>,
        /// output file
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the cover-expansion algorithm on a point file and certify the result
    #[command(after_help = COVER_HELP)]
    Cover {
        #[command(flatten)]
        model: ModelArgs,
        /// point file, see below
        #[arg(long)]
        points: PathBuf,
        /// box volume, e.g. 2^18
        #[arg(long, value_parser = parse_number)]
        n: Option<f64>,
        /// mark threshold w̄ of the test vertices, > (2^d d^(d/2)/beta) ∨ 1; required
        #[arg(long)]
        wbar: Option<f64>,
        /// output directory, created if missing
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Per-seed indicator of the backbone event
    #[command(after_help = BACKBONE_HELP)]
    Backbone {
        #[command(flatten)]
        model: ModelArgs,
        /// box volume, e.g. 2^18
        #[arg(long, value_parser = parse_number)]
        n: Option<f64>,
        /// k; defaults to the smallest k with s_k >= --s-k
        #[arg(long, value_parser = parse_number)]
        k: Option<f64>,
        /// target s_k when --k is absent (default 4)
        #[arg(long)]
        s_k: Option<f64>,
        /// number of graphs
        #[arg(long)]
        seeds: Option<u64>,
        /// top-level seed
        #[arg(long)]
        seed: Option<u64>,
        /// output directory, created if missing
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Vertices above and crossing edges below the suppressed profile, against k
    #[command(after_help = PROFILE_HELP)]
    ProfileSlopes {
        #[command(flatten)]
        model: ModelArgs,
        /// e.g. 2^6..2^12 or 64,128,256
        #[arg(long, value_parser = parse_grid)]
        k_grid: Option<::std::vec::Vec<f64>>,
        /// suppression exponent; defaults to gamma_star
        #[arg(long)]
        gamma: Option<f64>,
        /// replicates per grid point
        #[arg(long)]
        reps: Option<u32>,
        /// density constant in r_k = (k/rho)^(1/d) sqrt(d)
        #[arg(long)]
        rho: Option<f64>,
        /// sampling box half side in units of r_k
        #[arg(long)]
        outer: Option<f64>,
        /// top-level seed
        #[arg(long)]
        seed: Option<u64>,
        /// fraction of the smallest grid points left out of the fit (default 0.2)
        #[arg(long)]
        drop_fraction: Option<f64>,
        /// output directory, created if missing
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Monte Carlo campaigns: decay, second, giant, boundary
    #[command(after_help = EXPERIMENT_HELP)]
    Experiment {
        #[command(subcommand)]
        which: ExperimentCmd,
    },
}

#[derive(Args, Debug, Clone)]
struct ExperimentArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// volume for decay
    #[arg(long, value_parser = parse_number)]
    n: Option<f64>,
    /// volumes for second and giant, e.g. 2^14..2^20
    #[arg(long, value_parser = parse_grid)]
    n_grid: Option<::std::vec::Vec<f64>>,
    /// cluster sizes for decay, box volumes for boundary
    #[arg(long, value_parser = parse_grid)]
    k_grid: Option<::std::vec::Vec<f64>>,
    /// replicates per grid point
    #[arg(long)]
    reps: Option<u32>,
    /// top-level seed
    #[arg(long)]
    seed: Option<u64>,
    /// fraction of the smallest grid points left out of the fit (default 0.2)
    #[arg(long)]
    drop_fraction: Option<f64>,
    /// output directory, created if missing
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum ExperimentCmd {
    /// P(|C(0)| > k, 0 outside the giant) against k (default n=2^14, k=2^0..2^10, 1000 reps)
    #[command(after_help = EXPERIMENT_HELP)]
    Decay(ExperimentArgs),
    /// Median second largest component against n (default n=2^14..2^20, 100 reps)
    #[command(after_help = EXPERIMENT_HELP)]
    Second(ExperimentArgs),
    /// Giant fraction against n (default n=2^14..2^20, 100 reps)
    #[command(after_help = EXPERIMENT_HELP)]
    Giant(ExperimentArgs),
    /// Downward vertex boundary of boxes of volume k (default k=2^8..2^16, 200 reps)
    #[command(after_help = EXPERIMENT_HELP)]
    Boundary(ExperimentArgs),
}

fn flags(model: &ModelArgs) -> RunFile {
    RunFile { model: model.model_file(), ..Default::default() }
}

fn dispatch(cli: Cli) -> Result<(), config::CliError> {
    match cli.cmd {
        Cmd::Exponents { model, csv, out_dir } => {
            let mut f = flags(&model);
            f.command = Some("exponents".into());
            commands::exponents(RunFile::merged(model.config.as_ref(), f)?, csv, out_dir.as_deref())
        }
        Cmd::PhaseDiagram { model, axes, resolution, out_dir } => {
            let mut f = flags(&model);
            f.command = Some("phase-diagram".into());
            f.axes = axes;
            f.resolution = resolution;
            commands::phase_diagram_cmd(RunFile::merged(model.config.as_ref(), f)?, &out_dir)
        }
        Cmd::Sample { model, n, seed, method, out } => {
            let mut f = flags(&model);
            f.command = Some("sample".into());
            (f.n, f.seed, f.method) = (n, seed, method);
            commands::sample(RunFile::merged(model.config.as_ref(), f)?, &out)
        }
        Cmd::Cover { model, points, n, wbar, out_dir } => {
            let mut f = flags(&model);
            f.command = Some("cover".into());
            (f.n, f.wbar) = (n, wbar);
            commands::cover_cmd(RunFile::merged(model.config.as_ref(), f)?, &points, out_dir.as_deref())
        }
        Cmd::Backbone { model, n, k, s_k, seeds, seed, out_dir } => {
            let mut f = flags(&model);
            f.command = Some("backbone".into());
            (f.n, f.k, f.s_k, f.seeds, f.seed) = (n, k, s_k, seeds, seed);
            commands::backbone(RunFile::merged(model.config.as_ref(), f)?, &out_dir)
        }
        Cmd::ProfileSlopes { model, k_grid, gamma, reps, rho, outer, seed, drop_fraction, out_dir } => {
            let mut f = flags(&model);
            f.command = Some("profile-slopes".into());
            (f.k_grid, f.gamma, f.reps, f.rho, f.outer, f.seed, f.drop_fraction) =
                (k_grid, gamma, reps, rho, outer, seed, drop_fraction);
            commands::profile_slopes(RunFile::merged(model.config.as_ref(), f)?, &out_dir)
        }
        Cmd::Experiment { which } => {
            let (name, a) = match which {
                ExperimentCmd::Decay(a) => ("decay", a),
                ExperimentCmd::Second(a) => ("second", a),
                ExperimentCmd::Giant(a) => ("giant", a),
                ExperimentCmd::Boundary(a) => ("boundary", a),
            };
            let mut f = flags(&a.model);
            f.command = Some(format!("experiment {name}"));
            (f.n, f.n_grid, f.k_grid, f.reps, f.seed, f.drop_fraction) =
                (a.n, a.n_grid, a.k_grid, a.reps, a.seed, a.drop_fraction);
            commands::experiment(name, RunFile::merged(a.model.config.as_ref(), f)?, &a.out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ksrg: {e}");
            ExitCode::from(e.code())
        }
    }
}
