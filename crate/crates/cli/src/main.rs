use std::path::PathBuf;
use std::process::ExitCode;

use ambiroom_cli::config::HrtfModeName;
use ambiroom_cli::{
    category_name, cmd_bench, cmd_eval, cmd_render, cmd_rotate, cmd_simulate, exit_code, BenchArgs, Common, EvalArgs,
    RenderArgs, RotateArgs, SimulateArgs, DEFAULT_SEED,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ambiroom", version, about = "Ambisonic room impulse responses and binaural rendering")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Seed for generated dry signals.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads for parallel sections; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ls,
    Magls,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the room and write the SH signal with its sidecar.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write one ARIR file per source.
        #[arg(long)]
        per_source: bool,
    },
    /// Decode an SH signal to two ears.
    Render {
        #[command(flatten)]
        common: CommonArgs,
        /// SH WAV with sidecar; simulated from the config when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Output file name inside the output directory.
        #[arg(long)]
        output: Option<String>,
    },
    /// Rotate an SH signal by intrinsic z-y-z angles (radians).
    Rotate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        gamma: Option<f64>,
        /// Expected signal order.
        #[arg(long)]
        order: Option<usize>,
        /// Also write the binaural decode of the rotated signal.
        #[arg(long)]
        binaural: bool,
        /// Time a yaw sweep of this many frames.
        #[arg(long)]
        frames: Option<usize>,
        /// Build every frame's rotation matrix before the sweep.
        #[arg(long)]
        cache_d: bool,
    },
    /// Log-spectral distance of LS and MagLS renders, or of two files.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        estimate: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Run the timing suites.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated: sh_order, ism_order, sources, rotation.
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<String>>,
    },
}

fn common(c: &CommonArgs) -> Common {
    Common {
        config: c.config.clone(),
        out_dir: c.out_dir.clone(),
        seed: c.seed,
    }
}

fn run(cmd: Cmd) -> ambiroom::Result<()> {
    let c = match &cmd {
        Cmd::Simulate { common, .. }
        | Cmd::Render { common, .. }
        | Cmd::Rotate { common, .. }
        | Cmd::Eval { common, .. }
        | Cmd::Bench { common, .. } => common.clone(),
    };
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(ambiroom::Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ambiroom::Error::Config(e.to_string()))?;
    }
    let co = common(&c);
    match cmd {
        Cmd::Simulate { per_source, .. } => {
            for p in cmd_simulate(&co, &SimulateArgs { per_source })? {
                println!("{}", p.display());
            }
        }
        Cmd::Render {
            input, mode, output, ..
        } => {
            let mode = mode.map(|m| match m {
                Mode::Ls => HrtfModeName::Ls,
                Mode::Magls => HrtfModeName::Magls,
            });
            println!("{}", cmd_render(&co, &RenderArgs { input, mode, output })?.display());
        }
        Cmd::Rotate {
            input,
            alpha,
            beta,
            gamma,
            order,
            binaural,
            frames,
            cache_d,
            ..
        } => {
            let args = RotateArgs {
                input,
                alpha,
                beta,
                gamma,
                order,
                binaural,
                frames,
                cache_d,
            };
            for p in cmd_rotate(&co, &args)? {
                println!("{}", p.display());
            }
        }
        Cmd::Eval {
            estimate, reference, ..
        } => {
            println!("{}", cmd_eval(&co, &EvalArgs { estimate, reference })?.display());
        }
        Cmd::Bench { trials, suites, .. } => {
            let (path, table) = cmd_bench(&co, &BenchArgs { trials, suites })?;
            print!("{table}");
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", category_name(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
