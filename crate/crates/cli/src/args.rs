use clap::{Args, Parser, Subcommand, ValueEnum};
use injcap::model::{Level, QuadConfig};

#[derive(Debug, Parser)]
#[command(
    name = "injcap",
    version,
    about = "Injectivity capacity of Gaussian ReLU layers from lifted random-duality free energies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format (default: human, or csv for sweep and empirical).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Seed recorded in the output; drives the empirical scan.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(flatten)]
    pub quad: QuadArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    #[value(name = "1")]
    One,
    #[value(name = "2p")]
    TwoPartial,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
}

impl From<LevelArg> for Level {
    fn from(l: LevelArg) -> Level {
        match l {
            LevelArg::One => Level::R1,
            LevelArg::TwoPartial => Level::R2Partial,
            LevelArg::Two => Level::R2Full,
            LevelArg::Three => Level::R3,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the capacity and print the parameter row of that level.
    Table {
        #[arg(long, value_enum)]
        level: LevelArg,
    },
    /// Solve for the capacity and report residuals and the bracketing history.
    Capacity {
        #[arg(long, value_enum)]
        level: LevelArg,
    },
    /// Evaluate the free energy and its stationarity residuals at a point.
    Evaluate {
        #[arg(long, value_enum)]
        level: LevelArg,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Solve the stationarity system along a grid of alpha values.
    Sweep {
        #[arg(long, value_enum)]
        level: LevelArg,
        /// Explicit comma-separated grid (must be increasing).
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["from", "to", "steps"])]
        alphas: Option<Vec<f64>>,
        #[arg(long, requires = "to")]
        from: Option<f64>,
        #[arg(long, requires = "from")]
        to: Option<f64>,
        /// Number of grid points including both ends.
        #[arg(long, default_value_t = 11)]
        steps: usize,
    },
    /// Finite-n transition scan of the ground-state objective (heuristic).
    Empirical {
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7,9,11")]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long, default_value_t = 400)]
        iters: usize,
        /// xi_hat above this counts as infeasible.
        #[arg(long, default_value_t = injcap::lab::POSITIVE_THRESHOLD)]
        threshold: f64,
    },
}

#[derive(Debug, Args)]
pub struct PointArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long)]
    pub p3: Option<f64>,
    #[arg(long)]
    pub q2: Option<f64>,
    #[arg(long)]
    pub q3: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long)]
    pub c3: Option<f64>,
    #[arg(long)]
    pub gamma_q: Option<f64>,
    #[arg(long)]
    pub gamma_p: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
}

#[derive(Debug, Args)]
pub struct QuadArgs {
    /// Quadrature preset: fast, default or fine.
    #[arg(long, global = true, env = "INJCAP_QUAD_PROFILE", default_value = "default")]
    pub quad_profile: String,
    #[arg(long, global = true)]
    pub nodes_single: Option<usize>,
    #[arg(long, global = true)]
    pub nodes_inner: Option<usize>,
    #[arg(long, global = true)]
    pub nodes_outer: Option<usize>,
    #[arg(long, global = true)]
    pub psi_tol: Option<f64>,
    #[arg(long, global = true)]
    pub grad_tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Capacity search bracket as `lo,hi`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alpha_bracket: Option<Vec<f64>>,
}

impl QuadArgs {
    pub fn resolve(&self) -> Result<QuadConfig, String> {
        let mut cfg = QuadConfig::profile(&self.quad_profile).ok_or_else(|| {
            format!("unknown quadrature profile '{}' (expected fast, default or fine)", self.quad_profile)
        })?;
        if let Some(n) = self.nodes_single {
            cfg.nodes_single = n;
        }
        if let Some(n) = self.nodes_inner {
            cfg.nodes_inner = n;
        }
        if let Some(n) = self.nodes_outer {
            cfg.nodes_outer = n;
        }
        if let Some(t) = self.psi_tol {
            cfg.psi_tol = t;
        }
        if let Some(t) = self.grad_tol {
            cfg.grad_tol = t;
        }
        if let Some(k) = self.max_iters {
            cfg.max_iters = k;
        }
        if let Some(b) = &self.alpha_bracket {
            let [lo, hi] = b[..] else {
                return Err(format!("--alpha-bracket takes two values, got {}", b.len()));
            };
            cfg.alpha_bracket = (lo, hi);
        }
        cfg.check().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}
