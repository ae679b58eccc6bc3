use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sheetgate::config::{parse_document, ConfigBundle};
use sheetgate::corpus::{generate, SeedSpec};
use sheetgate::gate::{AnswerSet, ImpactAssessment, Questionnaire};
use sheetgate::inspection::RuleId;
use sheetgate::pipeline::{self, TriageOptions};
use sheetgate::report::{render_text, render_triage_text, to_machine, GenerateReport, GeneratedFile, Report};
use sheetgate::workbook::{load_path, Workbook};

const EXIT_USAGE: u8 = 2;
const EXIT_CORRUPT: u8 = 3;

#[derive(Parser)]
#[command(name = "sheetgate", version, about = "Spreadsheet risk triage and inspection")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    /// Configuration bundle (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout. For triage and generate this is a directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Subcommand)]
enum Command {
    /// Score the questionnaire and impact, and apply the two overall gates.
    Assess {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        impact: PathBuf,
        /// Questionnaire to score against instead of the configured one.
        #[arg(long)]
        questionnaire: Option<PathBuf>,
    },
    /// Size metrics, set-up risks and the effort estimate for one workbook.
    Scope { workbook: PathBuf },
    /// Run the inspection rules over one workbook.
    Inspect {
        workbook: PathBuf,
        /// Comma-separated rule ids to run; all enabled rules when omitted.
        #[arg(long, value_delimiter = ',')]
        rules: Vec<String>,
    },
    /// Assess every workbook under a directory and rank them by risk.
    Triage {
        dir: PathBuf,
        /// Answers used for workbooks without a `<stem>.answers.json` sidecar.
        #[arg(long)]
        answers: Option<PathBuf>,
        /// Impact used for workbooks without a `<stem>.impact.json` sidecar.
        #[arg(long)]
        impact: Option<PathBuf>,
        /// Worker threads (0 picks one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long, value_delimiter = ',')]
        rules: Vec<String>,
    },
    /// Generate synthetic workbooks and their ground-truth manifests.
    Generate {
        /// A seed spec, or an array of them (JSON).
        spec: PathBuf,
        /// Output directory; `--out` is accepted as well.
        dir: Option<PathBuf>,
    },
    /// Cell-by-cell comparison of two sheets.
    Compare {
        workbook: PathBuf,
        sheet_a: String,
        sheet_b: String,
    },
    /// Print the effective configuration bundle.
    Config,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_doc<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read_text(path)?;
    parse_document(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ConfigBundle, Failure> {
    match path {
        None => Ok(ConfigBundle::default()),
        Some(p) => {
            let text = read_text(p)?;
            ConfigBundle::from_json(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn load_workbook(path: &Path) -> Result<Workbook, Failure> {
    load_path(path).map_err(|e| Failure {
        code: if e.is_corrupt_workbook() { EXIT_CORRUPT } else { EXIT_USAGE },
        message: format!("{}: {e}", path.display()),
    })
}

fn apply_rules(cfg: &mut ConfigBundle, rules: &[String]) -> Result<(), Failure> {
    if rules.is_empty() {
        return Ok(());
    }
    let ids = rules
        .iter()
        .filter(|r| !r.trim().is_empty())
        .map(|r| r.parse::<RuleId>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    cfg.rules.restrict_to(&ids);
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_report(cli: &Cli, r: &Report) -> Result<(), Failure> {
    let text = match cli.format {
        Format::Machine => to_machine(r),
        Format::Text => render_text(r),
    };
    emit(cli.out.as_deref(), &text)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Assess { answers, impact, questionnaire } => {
            let q: Questionnaire = match questionnaire {
                Some(p) => read_doc(p)?,
                None => cfg.questionnaire.clone(),
            };
            let a: AnswerSet = read_doc(answers)?;
            let i: ImpactAssessment = read_doc(impact)?;
            let r = pipeline::assess_report(&q, &a, &i, &cfg).map_err(|e| usage(e.to_string()))?;
            emit_report(cli, &r)
        }
        Command::Scope { workbook } => {
            let wb = load_workbook(workbook)?;
            emit_report(cli, &pipeline::scope_report(&wb, &cfg))
        }
        Command::Inspect { workbook, rules } => {
            apply_rules(&mut cfg, rules)?;
            let wb = load_workbook(workbook)?;
            emit_report(cli, &pipeline::inspect_report(&wb, &cfg))
        }
        Command::Compare { workbook, sheet_a, sheet_b } => {
            let wb = load_workbook(workbook)?;
            let r = pipeline::compare_report(&wb, sheet_a, sheet_b).map_err(usage)?;
            emit_report(cli, &r)
        }
        Command::Triage { dir, answers, impact, jobs, rules } => {
            apply_rules(&mut cfg, rules)?;
            if !dir.is_dir() {
                return Err(usage(format!("{}: not a directory", dir.display())));
            }
            let mut opts = TriageOptions { jobs: *jobs, ..TriageOptions::default() };
            if let Some(p) = answers {
                opts.answers = read_doc(p)?;
            }
            if let Some(p) = impact {
                opts.impact = read_doc(p)?;
            }
            let outcome = pipeline::triage(dir, &cfg, &opts)
                .map_err(|e| usage(format!("{}: {e}", dir.display())))?;
            let machine = to_machine(&outcome.report);
            if let Some(out) = &cli.out {
                fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
                write_file(&out.join("triage.json"), &machine)?;
                for (rel, text) in &outcome.assessments {
                    write_file(&out.join(pipeline::assessment_file_name(rel)), text)?;
                }
            }
            match cli.format {
                Format::Machine => print!("{machine}"),
                Format::Text => print!("{}", render_triage_text(&outcome.report)),
            }
            Ok(())
        }
        Command::Generate { spec, dir } => {
            let out = dir
                .as_deref()
                .or(cli.out.as_deref())
                .ok_or_else(|| usage("generate needs an output directory"))?;
            let text = read_text(spec)?;
            let specs: Vec<SeedSpec> = if text.trim_start().starts_with('[') {
                parse_document(&text)
            } else {
                parse_document::<SeedSpec>(&text).map(|s| vec![s])
            }
            .map_err(|e| usage(format!("{}: {e}", spec.display())))?;
            fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
            let mut files = Vec::new();
            for s in &specs {
                let g = generate(s).map_err(|e| usage(e.to_string()))?;
                let id = s.workbook_id();
                let file = GeneratedFile {
                    workbook: format!("{id}.sgwb"),
                    truth: format!("{id}.truth.json"),
                    planted: g.truth.defects.len(),
                    id,
                };
                write_file(&out.join(&file.workbook), &g.canonical)?;
                write_file(&out.join(&file.truth), &to_machine(&g.truth))?;
                files.push(file);
            }
            match cli.format {
                Format::Machine => print!("{}", to_machine(&GenerateReport::new(files))),
                Format::Text => {
                    for f in &files {
                        println!("{}: {} planted defects", f.workbook, f.planted);
                    }
                }
            }
            Ok(())
        }
        Command::Config => emit(cli.out.as_deref(), &cfg.to_json()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sheetgate: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
