use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hall_edge_lab::config::{RunConfig, Task};
use hall_edge_lab::{run, CliError};
use hall_edge_core::response::Channel;

/// Numerical laboratory for Hall edge transport.
#[derive(Debug, Parser)]
#[command(name = "hall-edge-lab", version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task to run; overrides the config's task.
    #[arg(long, value_parser = Task::parse)]
    task: Option<Task>,
    /// Output directory (default: `out` from the config, else `./out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "HALL_EDGE_LAB_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,

    /// Inverse temperature (transport, correlators, ward, ed-check).
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated, strictly decreasing epsilon sequence (transport).
    #[arg(long, value_delimiter = ',')]
    eps_seq: Option<Vec<f64>>,
    #[arg(long)]
    a: Option<usize>,
    #[arg(long)]
    a_prime: Option<usize>,
    /// `charge` or `spin`.
    #[arg(long, value_parser = parse_channel)]
    channel: Option<Channel>,
    /// Interaction strength (ed-check).
    #[arg(long)]
    lambda: Option<f64>,
    /// `L1xR` strip (ed-check).
    #[arg(long)]
    geometry: Option<String>,
}

fn parse_channel(s: &str) -> Result<Channel, String> {
    match s {
        "charge" => Ok(Channel::Charge),
        "spin" => Ok(Channel::Spin),
        _ => Err(format!("unknown channel {s:?} (expected charge or spin)")),
    }
}

fn not_for(flag: &str, task: Task) -> CliError {
    CliError::Config(format!("--{flag} does not apply to task {}", task.name()))
}

fn load(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let mut cfg = RunConfig::from_json(&text).map_err(CliError::Config)?;
            if let Some(t) = args.task {
                cfg.task = t;
            }
            cfg
        }
        None => {
            let task = args.task.ok_or_else(|| CliError::Config("need --config or --task".into()))?;
            RunConfig::new(task)
        }
    }
    .normalized();
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let task = cfg.task;
    if let Some(beta) = args.beta {
        if let Some(p) = cfg.transport.as_mut().filter(|_| task == Task::Transport) {
            p.beta = beta;
        } else if let Some(p) = cfg.correlators.as_mut().filter(|_| task == Task::Correlators) {
            p.beta = beta;
        } else if let Some(p) = cfg.ward.as_mut().filter(|_| task == Task::Ward) {
            p.beta = beta;
        } else if let Some(p) = cfg.ed_check.as_mut().filter(|_| task == Task::EdCheck) {
            p.beta = beta;
        } else {
            return Err(not_for("beta", task));
        }
    }
    if let Some(ch) = args.channel {
        match task {
            Task::Transport => cfg.transport.as_mut().expect("normalized").channel = ch,
            Task::Correlators => cfg.correlators.as_mut().expect("normalized").channel = ch,
            Task::Ward => cfg.ward.as_mut().expect("normalized").channel = ch,
            _ => return Err(not_for("channel", task)),
        }
    }
    if args.eps_seq.is_some() || args.a.is_some() || args.a_prime.is_some() {
        let Some(p) = cfg.transport.as_mut().filter(|_| task == Task::Transport) else {
            return Err(not_for("eps-seq/--a/--a-prime", task));
        };
        if let Some(e) = &args.eps_seq {
            p.eps = e.clone();
        }
        if let Some(a) = args.a {
            p.a = a;
        }
        if let Some(a) = args.a_prime {
            p.a_prime = a;
        }
    }
    if args.lambda.is_some() || args.geometry.is_some() {
        let Some(p) = cfg.ed_check.as_mut().filter(|_| task == Task::EdCheck) else {
            return Err(not_for("lambda/--geometry", task));
        };
        if let Some(l) = args.lambda {
            p.lambda = l;
        }
        if let Some(g) = &args.geometry {
            p.geometry = g.clone();
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = load(&args).and_then(|cfg| {
        let out = args.out.clone().or_else(|| cfg.out.clone().map(PathBuf::from)).unwrap_or_else(|| "out".into());
        let workers = args.workers.or(cfg.workers).unwrap_or(1);
        run(&cfg, &out, workers)
    });
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
