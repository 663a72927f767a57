use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use flowcert::certify::{analyze, check_in, leaks, Certificate, LeakReport};
use flowcert::corpus::bench::{bench_row, default_depth, to_tsv};
use flowcert::corpus::{generate, GenSpec};
use flowcert::dataflow::Context;
use flowcert::ir::{parse_program, Program};

/// Certified summary-based taint analysis.
#[derive(Debug, Parser)]
#[command(name = "flowcert", version)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json_output: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the certificate of a program and report its leaks.
    Analyze {
        #[command(flatten)]
        input: Input,
        /// Where to write the certificate (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Report only leaks visible at entry points.
        #[arg(long)]
        entry_only: bool,
        /// Write the control-flow graphs of all methods as DOT.
        #[arg(long, value_name = "FILE")]
        emit_cfg: Option<PathBuf>,
        /// Write the call graph as DOT.
        #[arg(long, value_name = "FILE")]
        emit_cg: Option<PathBuf>,
    },
    /// Validate a certificate against a program.
    Check {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        cert: PathBuf,
        /// Check methods concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Print the leaks recorded in a certificate.
    Leaks {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        entry_only: bool,
    },
    /// Time analysis against checking on generated programs.
    Bench {
        /// Method counts of the generated programs.
        #[arg(long, value_delimiter = ',', default_values_t = [200, 1000, 5000])]
        sizes: Vec<usize>,
        /// Chain depth (default: max(20, round(sqrt(methods)))).
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Emit a synthetic program.
    Gen {
        #[arg(long, default_value_t = 8)]
        methods: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[command(flatten)]
        gen: GenArgs,
        /// Where to write the program (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Where to write the taint configuration.
        #[arg(long)]
        config_out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Input {
    /// Program in the textual IR.
    program: PathBuf,
    /// Taint configuration.
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    fan_out: usize,
    #[arg(long, default_value_t = 8)]
    stmts: usize,
    #[arg(long, default_value_t = 0.2)]
    branch_density: f64,
    #[arg(long, default_value_t = 0.2)]
    array_field_density: f64,
}

impl GenArgs {
    fn spec(&self, methods: usize, depth: usize) -> GenSpec {
        GenSpec {
            method_count: methods,
            call_chain_depth: depth,
            fan_out: self.fan_out,
            stmts_per_method: self.stmts,
            branch_density: self.branch_density,
            array_field_density: self.array_field_density,
            seed: self.seed,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load(input: &Input) -> Result<Program> {
    let ir = read(&input.program)?;
    let cfg = read(&input.config)?;
    parse_program(&ir, &cfg).with_context(|| format!("in {}", input.program.display()))
}

fn print_leaks(report: &LeakReport) {
    if report.leaks.is_empty() {
        println!("no leaks");
    }
    for l in &report.leaks {
        println!("leak in {}: {} -> {}", l.method, l.source, l.sink);
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let json = cli.json_output;
    match cli.command {
        Command::Analyze {
            input,
            output,
            entry_only,
            emit_cfg,
            emit_cg,
        } => {
            let p = load(&input)?;
            let ctx = Context::new(&p)?;
            if let Some(path) = emit_cfg {
                let dot: String = p
                    .methods()
                    .map(|m| ctx.cfg(&m.id).unwrap().to_dot(m))
                    .collect();
                write(&path, &dot)?;
            }
            if let Some(path) = emit_cg {
                write(&path, &ctx.call_graph.to_dot())?;
            }
            let t = Instant::now();
            let a = analyze(&ctx);
            let elapsed = t.elapsed();
            let text = a.certificate.encode();
            let report = leaks(&a.certificate, &p, entry_only);
            if let Some(path) = &output {
                write(path, &text)?;
            }
            if json {
                let mut v = json!({
                    "leaks": report,
                    "summarise_calls": a.summarise_calls,
                    "node_evaluations": a.node_evaluations,
                    "analyze_ms": elapsed.as_secs_f64() * 1e3,
                });
                if output.is_none() {
                    v["certificate"] = serde_json::from_str(&text)?;
                }
                println!("{}", serde_json::to_string_pretty(&v)?);
            } else {
                if output.is_none() {
                    print!("{text}");
                }
                print_leaks(&report);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            input,
            cert,
            parallel,
        } => {
            let p = load(&input)?;
            let text = read(&cert)?;
            let cert = match Certificate::decode(&text) {
                Ok(c) => c,
                Err(e) => {
                    if json {
                        let v = json!({"verdict": "invalid", "reason": "malformed", "error": e.to_string()});
                        println!("{}", serde_json::to_string_pretty(&v)?);
                    } else {
                        println!("invalid: malformed certificate: {e}");
                    }
                    return Ok(ExitCode::from(1));
                }
            };
            let mut ctx = Context::new(&p)?;
            let r = check_in(&mut ctx, &cert, parallel);
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else if let Some(f) = &r.failure {
                match &f.method {
                    Some(m) => println!("invalid: {} in {m}", f.reason),
                    None => println!("invalid: {}", f.reason),
                }
                for (a, b) in &f.missing {
                    println!("  - missing ({a}, {b})");
                }
                for (a, b) in &f.unexpected {
                    println!("  + unexpected ({a}, {b})");
                }
            } else {
                println!("valid");
            }
            Ok(if r.is_valid() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Leaks {
            input,
            cert,
            entry_only,
        } => {
            let p = load(&input)?;
            let cert = Certificate::decode(&read(&cert)?)?;
            let report = leaks(&cert, &p, entry_only);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print_leaks(&report);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            sizes,
            depth,
            repetitions,
            gen,
        } => {
            let mut rows = vec![];
            for n in sizes {
                let d = depth.unwrap_or_else(|| default_depth(n));
                rows.push(bench_row(&gen.spec(n, d), repetitions)?);
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                print!("{}", to_tsv(&rows));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen {
            methods,
            depth,
            gen,
            output,
            config_out,
        } => {
            let g = generate(&gen.spec(methods, depth))?;
            if let Some(path) = &config_out {
                write(path, &g.config)?;
            }
            match &output {
                Some(path) => write(path, &g.ir)?,
                None if json => {
                    let v = json!({"ir": g.ir, "config": g.config});
                    println!("{}", serde_json::to_string_pretty(&v)?);
                }
                None => print!("{}", g.ir),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
