use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gnls::dynamics::{DispersionSymbol, FlowMode};
use gnls::harness::{run, ExperimentConfig, ExperimentKind, GaugeSection, VariationalSection};

#[derive(Parser)]
#[command(name = "gnls", version, about = "Exponential fractional NLS experiments on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; `GNLS_THREADS` takes precedence.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (default: the config's `output`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a weighted Gibbs ensemble.
    Sample {
        #[command(flatten)]
        common: Common,
    },
    /// Integrate one initial datum.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<FlowMode>,
        #[arg(long, value_parser = parse_symbol)]
        symbol: Option<DispersionSymbol>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        oversample: Option<f64>,
    },
    /// Weighted paired-difference invariance test.
    Invariance {
        #[command(flatten)]
        common: Common,
    },
    /// Exponential moments against the closed form.
    Moments {
        #[command(flatten)]
        common: Common,
    },
    /// Focusing divergence scan and variational objective.
    Variational {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        /// Mass cutoff.
        #[arg(long = "K")]
        mass_cutoff: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        /// Drift scales, comma separated.
        #[arg(long = "N-ladder", value_delimiter = ',')]
        n_ladder: Option<Vec<usize>>,
        /// Clip ladder, comma separated.
        #[arg(long = "L-ladder", value_delimiter = ',')]
        l_ladder: Option<Vec<f64>>,
        #[arg(long)]
        ensemble: Option<usize>,
        #[arg(long = "dt-sde")]
        dt_sde: Option<f64>,
    },
    /// Resonant/non-resonant decomposition on random sequences.
    GaugeCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        tolerance: Option<f64>,
    },
    /// Galerkin truncation convergence against a reference cutoff.
    Truncation {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_mode(s: &str) -> Result<FlowMode, String> {
    match s {
        "galerkin" => Ok(FlowMode::Galerkin),
        "collocation" => Ok(FlowMode::Collocation),
        _ => Err(format!("unknown mode `{s}` (galerkin|collocation)")),
    }
}

fn parse_symbol(s: &str) -> Result<DispersionSymbol, String> {
    match s {
        "bracket" => Ok(DispersionSymbol::Bracket),
        "pure" => Ok(DispersionSymbol::Pure),
        _ => Err(format!("unknown symbol `{s}` (bracket|pure)")),
    }
}

fn load(common: &Common, kind: ExperimentKind) -> Result<ExperimentConfig, String> {
    let text =
        std::fs::read_to_string(&common.config).map_err(|e| format!("cannot read {}: {e}", common.config.display()))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", common.config.display()))?;
    if config.kind != kind {
        return Err(format!(
            "{}: config kind `{}` does not match subcommand `{}`",
            common.config.display(),
            config.kind.name(),
            kind.name()
        ));
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn resolve(command: &Command) -> Result<(ExperimentConfig, &Common), String> {
    let (common, kind) = match command {
        Command::Sample { common } => (common, ExperimentKind::Sample),
        Command::Evolve { common, .. } => (common, ExperimentKind::Evolve),
        Command::Invariance { common } => (common, ExperimentKind::Invariance),
        Command::Moments { common } => (common, ExperimentKind::Moments),
        Command::Variational { common, .. } => (common, ExperimentKind::Variational),
        Command::GaugeCheck { common, .. } => (common, ExperimentKind::GaugeCheck),
        Command::Truncation { common } => (common, ExperimentKind::Truncation),
    };
    let mut config = load(common, kind)?;
    match command {
        Command::Evolve { mode, symbol, dt, t_final, oversample, .. } => {
            if let Some(o) = oversample {
                config.model.oversampling = *o;
            }
            let flow = config.flow.as_mut().ok_or("evolve needs a `flow` section")?;
            if let Some(m) = mode {
                flow.mode = *m;
            }
            if let Some(s) = symbol {
                flow.symbol = *s;
            }
            if let Some(v) = dt {
                flow.dt = *v;
            }
            if let Some(v) = t_final {
                flow.t_final = *v;
            }
        }
        Command::Variational { gamma, mass_cutoff, eta, n_ladder, l_ladder, ensemble, dt_sde, .. } => {
            if let Some(g) = gamma {
                config.model.gamma = *g;
            }
            if let Some(m) = ensemble {
                config.ensemble = Some(*m);
            }
            let section = config.variational.get_or_insert_with(|| VariationalSection {
                mass_cutoff: 0.0,
                clips: Vec::new(),
                eta: 1.0,
                scales: Vec::new(),
                sde_dt: None,
                scheme: Default::default(),
            });
            if let Some(k) = mass_cutoff {
                section.mass_cutoff = *k;
            }
            if let Some(e) = eta {
                section.eta = *e;
            }
            if let Some(n) = n_ladder {
                section.scales = n.clone();
            }
            if let Some(l) = l_ladder {
                section.clips = l.clone();
            }
            if dt_sde.is_some() {
                section.sde_dt = *dt_sde;
            }
        }
        Command::GaugeCheck { k, modes, trials, tolerance, .. } => {
            let section = config.gauge.get_or_insert_with(GaugeSection::default);
            if let Some(k) = k {
                section.k = k.clone();
            }
            if let Some(m) = modes {
                section.modes = *m;
            }
            if let Some(t) = trials {
                section.trials = *t;
            }
            if let Some(t) = tolerance {
                section.tolerance = *t;
            }
        }
        _ => {}
    }
    config.validate().map_err(|e| format!("{}: {e}", common.config.display()))?;
    Ok((config, common))
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, String> {
    match std::env::var("GNLS_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| format!("GNLS_THREADS must be a positive integer, got `{v}`")),
        Err(_) => Ok(flag),
    }
}

fn execute(cli: &Cli) -> Result<i32, String> {
    let (config, common) = resolve(&cli.command)?;
    let out: PathBuf = common.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    if common.dry_run {
        println!("{}", config.to_json());
        return Ok(0);
    }
    if let Some(n) = threads(common.threads)? {
        if n == 0 {
            return Err("thread count must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    let outcome = run(&config, Path::new(&out)).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("summary serializes"));
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    // Usage errors exit with 1; 2 is reserved for failed statistical tests.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
