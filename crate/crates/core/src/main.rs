use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use conereg::app::{run, Command, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    Minvar,
    Track,
    Markowitz,
    Robust,
    Equal,
    LassoReg,
    RidgeReg,
    Predict,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Minvar => Command::Minvar,
            CommandArg::Track => Command::Track,
            CommandArg::Markowitz => Command::Markowitz,
            CommandArg::Robust => Command::Robust,
            CommandArg::Equal => Command::Equal,
            CommandArg::LassoReg => Command::LassoReg,
            CommandArg::RidgeReg => Command::RidgeReg,
            CommandArg::Predict => Command::Predict,
        }
    }
}

/// Portfolio construction and return regression on price histories.
#[derive(Debug, Parser)]
#[command(name = "conereg", version)]
struct Cli {
    #[arg(value_enum)]
    command: CommandArg,
    /// Price CSV with header `Date,SYM1,...`.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated assets; defaults to every column but the index.
    #[arg(long, value_delimiter = ',')]
    symbols: Option<Vec<String>>,
    #[arg(long, default_value = "^GSPC")]
    index: String,
    /// Penalty weight for lasso-reg, ridge-reg and predict.
    #[arg(long)]
    lambda: Option<f64>,
    /// Cap on the sum of squared portfolio returns.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Treat --sigma2 as a per-period variance (multiplied by the number of periods).
    #[arg(long)]
    annualized: bool,
    /// Gross exposure limit, e.g. 1.6 for 130/30.
    #[arg(long)]
    gross: Option<f64>,
    #[arg(long)]
    lags: Option<usize>,
    /// Comma-separated moving-average windows.
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<usize>>,
    /// Emit the machine-readable report.
    #[arg(long)]
    json: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Annualise Sharpe ratios with √252 instead of 16.
    #[arg(long)]
    sqrt252: bool,
}

fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = RunConfig {
        data: cli.data,
        command: cli.command.into(),
        symbols: cli.symbols,
        index: cli.index,
        lambda: cli.lambda,
        sigma2: cli.sigma2,
        annualized: cli.annualized,
        gross: cli.gross,
        lags: cli.lags,
        windows: cli.windows,
        sqrt252: cli.sqrt252,
    };
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}", e.line());
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    eprintln!(
        "data: {} rows, {} missing cells",
        report.rows, report.missing_cells
    );
    let text = if cli.json {
        report.to_json_string()
    } else {
        report.to_text()
    };
    match cli.output {
        Some(path) => {
            if let Err(e) = write_atomic(&path, &text) {
                eprintln!("error: kind=io code=3 reason={e:#}");
                return ExitCode::from(3);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}
