//! `fuzzsync` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fuzzsync::metrics::{default_fractions, message_log_csv, samples_csv};
use fuzzsync::{
    generate_target, render_tables, run_campaign_with, CampaignConfig, CampaignReport, FuzzerParams,
    Rational, TargetShape, TargetSpec,
};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "fuzzsync", version, about = "Simulate corpus synchronization across fuzzing instances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a campaign config and list every violation.
    Validate { config: PathBuf },
    /// Run one campaign and write its samples, report and message log.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Output file prefix; defaults to the policy name.
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Print time-to-target tables for two or more reports.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Comma-separated fractions of the best coverage, e.g. 0.5,0.75,0.9 or 1/3.
        #[arg(long, value_delimiter = ',')]
        fractions: Vec<Rational>,
        /// Directory that receives compare.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a synthetic target with a regular gate forest.
    GenTarget {
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        fanout: usize,
        #[arg(long, default_value_t = 2)]
        magic_len: usize,
        #[arg(long, default_value_t = 0)]
        crash_count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{}", .0.join("\n"))]
    Usage(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(vec![msg.into()])
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn load_config(path: &Path) -> Result<CampaignConfig, CliError> {
    let cfg = CampaignConfig::from_json(&read(path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

fn load_target(path: &Path) -> Result<TargetSpec, CliError> {
    TargetSpec::from_json(&read(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn cmd_validate(config: &Path) -> Result<(), CliError> {
    load_config(config)?;
    println!("{}: ok", config.display());
    Ok(())
}

fn cmd_run(
    config: &Path,
    target: &Path,
    out: &Path,
    label: Option<String>,
    overwrite: bool,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let spec = load_target(target)?;
    let label = label.unwrap_or_else(|| cfg.policy.to_string());

    let samples_path = out.join(format!("{label}.samples.csv"));
    let report_path = out.join(format!("{label}.report.json"));
    let log_path = out.join(format!("{label}.msglog.csv"));
    let mut outputs = vec![&samples_path, &report_path];
    if cfg.log_messages {
        outputs.push(&log_path);
    }
    if !overwrite {
        let existing: Vec<String> = outputs
            .iter()
            .filter(|p| p.exists())
            .map(|p| format!("{} exists; pass --overwrite to replace it", p.display()))
            .collect();
        if !existing.is_empty() {
            return Err(CliError::Usage(existing));
        }
    }

    let report = run_campaign_with(&cfg, &spec, &FuzzerParams::default(), &label)
        .map_err(|e| CliError::usage(e.to_string()))?;
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_owned(),
        source,
    })?;
    write(&samples_path, &samples_csv(&report.samples))?;
    write(&report_path, &report.to_json())?;
    if let Some(log) = &report.message_log {
        write(&log_path, &message_log_csv(log))?;
    }
    println!(
        "{label}: coverage {} after {} ticks, {} crashes, {} messages, sync cost {}",
        report.final_coverage,
        report.total_ticks,
        report.crash_stats.max_crashes,
        report.messages.sent,
        report.sync_cost_total
    );
    Ok(())
}

fn cmd_compare(reports: &[PathBuf], fractions: Vec<Rational>, out: &Path) -> Result<(), CliError> {
    if reports.len() < 2 {
        return Err(CliError::usage(format!(
            "need >= 2 reports to compare, got {}",
            reports.len()
        )));
    }
    let loaded = reports
        .iter()
        .map(|p| {
            CampaignReport::from_json(&read(p)?)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fractions = if fractions.is_empty() {
        default_fractions()
    } else {
        fractions
    };
    let tables = render_tables(&loaded, &fractions).map_err(|e| CliError::usage(e.to_string()))?;
    for table in &tables {
        println!("{}", table.render());
    }
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_owned(),
        source,
    })?;
    let json = serde_json::to_string_pretty(&tables).expect("tables serialize") + "\n";
    write(&out.join("compare.json"), &json)
}

fn cmd_gen_target(shape: TargetShape, out: &Path) -> Result<(), CliError> {
    let spec = generate_target(&shape).map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_owned(),
            source,
        })?;
    }
    write(out, &spec.to_json())?;
    println!("{}: {} gates, id {:016x}", out.display(), spec.gates().len(), spec.target_id());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Run {
            config,
            target,
            out,
            label,
            overwrite,
        } => cmd_run(&config, &target, &out, label, overwrite),
        Command::Compare {
            reports,
            fractions,
            out,
        } => cmd_compare(&reports, fractions, &out),
        Command::GenTarget {
            depth,
            fanout,
            magic_len,
            crash_count,
            seed,
            out,
        } => cmd_gen_target(
            TargetShape {
                depth,
                fanout,
                magic_len,
                crash_count,
                seed,
            },
            &out,
        ),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
