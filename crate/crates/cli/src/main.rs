use std::path::PathBuf;
use std::process::ExitCode;

use attrnoise_core::harness::{run_experiment, ExperimentConfig, Subcommand};
use clap::{Args, Parser};

/// Simulate learning under attribute noise and write CSV/JSON results.
#[derive(Debug, Parser)]
#[command(name = "attrnoise", version)]
enum Cli {
    /// Run the list learner for `trials` seeded trials.
    Learn(RunArgs),
    /// Run the exhaustive maximum-agreement baseline.
    Baseline(RunArgs),
    /// Greedy cover sizes for the hybrid-pair concept families.
    Lowerbound(RunArgs),
    /// Exact independence, label-mass and round-trip checks under noise.
    IndepCheck(RunArgs),
    /// Write one noisy sample as a text dump.
    OracleDump(RunArgs),
}

/// Each override flag replaces the matching `params` field of the config.
#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    /// Scalar, JSON list, or `uniform_below:<b>`.
    #[arg(long)]
    nu: Option<String>,
    /// Kind name (`uniform`, `product:<p>`, `full_parity_extension:<free>`) or JSON object.
    #[arg(long)]
    dist: Option<String>,
    /// Target conjunction, e.g. `x1&x2&!x5`.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// `theory` or `budget:<M>`.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Also write per-trial wall times to `timing.csv`.
    #[arg(long)]
    record_timing: bool,
    /// `positive_class_mean` or `observed_mean`.
    #[arg(long)]
    orientation: Option<String>,
    /// JSON list of dimensions for `lowerbound`.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    /// `parity`, `majority` or `conjunction`.
    #[arg(long)]
    family: Option<String>,
    /// Independence order for `indep-check`.
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    search_cap: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let quoted = |v: &str| json_string(v);
        let mut out = Vec::new();
        let mut push = |key: &str, v: &Option<String>, as_text: bool| {
            if let Some(v) = v {
                out.push((key.to_string(), if as_text { quoted(v) } else { v.clone() }));
            }
        };
        push("n", &self.n, false);
        push("k", &self.k, false);
        push("eps", &self.eps, false);
        push("delta", &self.delta, false);
        push("gamma", &self.gamma, false);
        push("nu", &self.nu, false);
        push("dist", &self.dist, false);
        push("target", &self.target, true);
        push("trials", &self.trials, false);
        push("seed", &self.seed, false);
        push("mode", &self.mode, false);
        push("out", &self.out, true);
        push("orientation", &self.orientation, true);
        push("dims", &self.dims, false);
        push("rho", &self.rho, false);
        push("family", &self.family, true);
        push("order", &self.order, false);
        push("search_cap", &self.search_cap, false);
        if self.record_timing {
            out.push(("record_timing".into(), "true".into()));
        }
        out
    }
}

/// JSON string literal for values that must stay strings (paths, names).
fn json_string(v: &str) -> String {
    let escaped: String = v
        .chars()
        .flat_map(|c| match c {
            '"' => vec!['\\', '"'],
            '\\' => vec!['\\', '\\'],
            c => vec![c],
        })
        .collect();
    format!("\"{escaped}\"")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (sub, args) = match &cli {
        Cli::Learn(a) => (Subcommand::Learn, a),
        Cli::Baseline(a) => (Subcommand::Baseline, a),
        Cli::Lowerbound(a) => (Subcommand::Lowerbound, a),
        Cli::IndepCheck(a) => (Subcommand::IndepCheck, a),
        Cli::OracleDump(a) => (Subcommand::OracleDump, a),
    };
    let overrides = args.overrides();
    let cfg = match &args.config {
        Some(path) => ExperimentConfig::load_file(path, Some(sub), &overrides),
        None => ExperimentConfig::load("{}", Some(sub), &overrides),
    };
    let result = cfg.and_then(|cfg| run_experiment(&cfg));
    match result {
        Ok(summary) => {
            let frac = summary
                .success_frac
                .map_or_else(|| "NaN".to_string(), |v| format!("{v}"));
            println!(
                "{}: {} trials, {} crashed, success fraction {frac}",
                sub.name(),
                summary.trials,
                summary.crashed
            );
            for e in &summary.errors {
                eprintln!("{e}");
            }
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
