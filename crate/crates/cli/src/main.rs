use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gpstab::criteria::ReportSummary;
use gpstab::network::{gscr, reduced_b_matrix};
use gpstab::oracle::{closed_loop_eigs, write_eigen_csv};
use gpstab::scenario::{fixture, run, AnalysisConfig, Mode, ScenarioError, FIXTURES};

#[derive(Parser)]
#[command(name = "gpstab", version, about = "Gain-phase stability screening of converter networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the decentralized conditions and write reports.
    Analyze(AnalyzeArgs),
    /// Print the generalized short-circuit ratio of the configured network.
    Gscr {
        #[arg(long)]
        config: PathBuf,
    },
    /// Closed-loop eigenvalues of the configured system.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List or emit the built-in configurations.
    Fixtures {
        #[arg(long, conflicts_with = "name")]
        list: bool,
        #[arg(long, required_unless_present = "list")]
        name: Option<String>,
        /// Write the TOML here instead of standard output.
        #[arg(long, requires = "name")]
        emit: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    fmin_hz: Option<f64>,
    #[arg(long)]
    fmax_hz: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &Path) -> Result<(AnalysisConfig, PathBuf), ScenarioError> {
    let c = AnalysisConfig::from_path(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((c, base))
}

fn print_summary(s: &ReportSummary) {
    for st in &s.stages {
        println!("stage {}: {}", st.stage, if st.certified { "certified" } else { "not certified" });
        for (id, ok) in st.devices.iter().zip(&st.open_loop_stable) {
            if *ok != Some(true) {
                println!("  device {id}: open-loop stability {}", ok.map_or("unknown", |_| "violated"));
            }
        }
        for b in &st.undecided_bands {
            let who: Vec<&str> = b.culprits.iter().take(3).map(|c| c.device.as_str()).collect();
            println!("  undecided {:.3}..{:.3} Hz (culprits: {})", b.lo_hz, b.hi_hz, who.join(", "));
        }
        for t in &st.transitions {
            match t.freq_hz {
                Some(f) => println!("  {} sectorial above {:.3} Hz", t.device, f),
                None => println!("  {} not sectorial at the top of the grid", t.device),
            }
        }
    }
    if let Some(e) = s.equivalent_inverse_stable {
        println!("equivalent network inverse stable: {e}");
    }
    println!("verdict: {}", if s.stable { "stable (certified)" } else { "not certified" });
}

fn analyze(a: AnalyzeArgs) -> Result<ExitCode, ScenarioError> {
    let (mut c, base) = load(&a.config)?;
    if let Some(m) = a.mode {
        c.sweep.mode = m;
    }
    if a.fmin_hz.is_some() {
        c.sweep.fmin_hz = a.fmin_hz;
    }
    if a.fmax_hz.is_some() {
        c.sweep.fmax_hz = a.fmax_hz;
    }
    if let Some(p) = a.points {
        c.sweep.points = p;
    }
    let out = run(&c, &base, a.out.as_deref())?;
    print_summary(&out.summary);
    if let Some(e) = &out.eigen {
        println!("oracle: {}", if e.stable { "stable" } else { "unstable" });
    }
    Ok(ExitCode::from(out.status.code() as u8))
}

fn main_inner(cli: Cli) -> Result<ExitCode, ScenarioError> {
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Gscr { config } => {
            let (c, base) = load(&config)?;
            let sc = c.build(&base)?;
            let net_err = |e| ScenarioError::Network { path: "network".into(), source: e };
            let b_r = reduced_b_matrix(&sc.net).map_err(net_err)?;
            println!("gscr: {}", gscr(&b_r, &sc.rescaling.s).map_err(net_err)?);
            match sc.net.common_ratio() {
                Some(r) => println!("identical R/X: {r}"),
                None => println!("heterogeneous R/X (mean {})", sc.net.mean_ratio()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { config, out } => {
            let (c, base) = load(&config)?;
            let sc = c.build(&base)?;
            let e = closed_loop_eigs(&sc.devices, &sc.net)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| ScenarioError::Io { path: dir.clone(), source: e })?;
                let path = dir.join("eigenvalues.csv");
                let f = std::fs::File::create(&path).map_err(|e| ScenarioError::Io { path: path.clone(), source: e })?;
                write_eigen_csv(&e, f)?;
            }
            if let Some(d) = e.dominant() {
                println!("dominant: {:.4} {:+.4}j ({:.3} Hz)", d.re, d.im, d.im.abs() / std::f64::consts::TAU);
            }
            if !e.structural.is_empty() {
                println!("structural modes: {}", e.structural.len());
            }
            println!("verdict: {}", if e.stable { "stable" } else { "unstable" });
            Ok(ExitCode::from(if e.stable { 0 } else { 2 }))
        }
        Command::Fixtures { list, name, emit } => {
            if list {
                for n in FIXTURES {
                    println!("{n}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let c = fixture(name.as_deref().unwrap_or_default())?;
            let text = c.to_toml_string()?;
            match emit {
                Some(p) => std::fs::write(&p, text).map_err(|e| ScenarioError::Io { path: p.clone(), source: e })?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match main_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
