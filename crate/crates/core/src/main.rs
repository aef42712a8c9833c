use std::io::Cursor;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shgw::capture::{CaptureSource, SourceKind};
use shgw::collector::{CollectorServer, CollectorStore};
use shgw::mda::SignatureDb;
use shgw::pipeline::{
    evaluate_accuracy, fetch_policy, push_policy_to, Pipeline, PipelineConfig,
};
use shgw::policy::{parse_policy, PolicyDocument};
use shgw::reporter::ReporterConfig;
use shgw::trafficgen::{self, CorpusSpec, DEFAULT_SIGNATURES};

/// Smart home gateway traffic awareness toolkit.
#[derive(Parser)]
#[command(name = "shgw", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the awareness pipeline over a pcap file.
    Analyze(AnalyzeArgs),
    /// Generate synthetic load and measure pipeline throughput.
    Bench(BenchArgs),
    /// Mock cloud collector.
    Collector {
        #[command(subcommand)]
        command: CollectorCommand,
    },
    /// Synthetic traffic generation.
    Gen {
        #[command(subcommand)]
        command: GenCommand,
    },
    /// Policy operations against a collector.
    Policy {
        #[command(subcommand)]
        command: PolicyCommand,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input pcap file.
    #[arg(long)]
    pcap: PathBuf,
    /// Signature database (TOML); defaults to the built-in rules.
    #[arg(long)]
    signatures: Option<PathBuf>,
    /// Truth sidecar for accuracy evaluation.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Directory for batch files and upload state.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Collector base URL; SHGW_COLLECTOR_URL overrides.
    #[arg(long)]
    collector: Option<String>,
    /// Initial policy document (JSON).
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value = "gw-0")]
    gateway_id: String,
}

#[derive(Args)]
struct BenchArgs {
    /// Generated GET requests per second.
    #[arg(long, default_value_t = 12_000)]
    rate: u64,
    /// Seconds of traffic to generate.
    #[arg(long, default_value_t = 2.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fail (exit 1) when the sustained GET rate falls below this.
    #[arg(long)]
    min_rate: Option<f64>,
}

#[derive(Subcommand)]
enum CollectorCommand {
    /// Start the collector HTTP server.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8787")]
        addr: String,
        /// Persist uploads here; omit for in-memory operation.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Initial policy document (JSON).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GenCommand {
    /// Labeled mixed-device corpus: <out>/corpus.pcap + <out>/corpus.truth.
    Corpus {
        #[arg(long, default_value = "corpus-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 400)]
        sessions: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Web-browsing corpus with 70% blocklisted extensions instead.
        #[arg(long)]
        web: bool,
    },
    /// High-rate GET load: <out>/load.pcap.
    Load {
        #[arg(long, default_value = "load-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        rate: u64,
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum PolicyCommand {
    /// Upload a policy document to the collector.
    Push {
        #[arg(long)]
        collector: Option<String>,
        #[arg(long)]
        file: PathBuf,
    },
}

fn collector_url(flag: Option<String>) -> Option<String> {
    std::env::var("SHGW_COLLECTOR_URL").ok().or(flag)
}

fn load_policy(path: &Option<PathBuf>) -> Result<PolicyDocument, String> {
    match path {
        None => Ok(PolicyDocument::default()),
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?;
            parse_policy(&bytes).map_err(|e| e.to_string())
        }
    }
}

fn load_signatures(path: &Option<PathBuf>) -> Result<SignatureDb, String> {
    match path {
        None => SignatureDb::parse(DEFAULT_SIGNATURES).map_err(|e| e.to_string()),
        Some(p) => SignatureDb::load(p).map_err(|e| format!("{}: {e}", p.display())),
    }
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode, String> {
    let db = load_signatures(&args.signatures)?;
    let mut policy = load_policy(&args.policy)?;
    let collector = collector_url(args.collector);
    if let Some(base) = &collector {
        match fetch_policy(base, &args.gateway_id, policy.version) {
            Ok(Some(newer)) => {
                eprintln!("policy updated to version {}", newer.version);
                policy = newer;
            }
            Ok(None) => {}
            Err(e) => eprintln!("policy fetch failed ({e}); continuing with local policy"),
        }
    }
    let mut reporter_cfg = ReporterConfig::offline(args.out.clone(), &args.gateway_id);
    reporter_cfg.collector_url = collector;
    let cfg = PipelineConfig {
        gateway_id: args.gateway_id.clone(),
        collect_labels: args.truth.is_some(),
        ..PipelineConfig::default()
    };
    let mut pipeline = Pipeline::new(cfg, db, None, policy, reporter_cfg);
    let mut src = shgw::capture::open_capture(&args.pcap).map_err(|e| e.to_string())?;
    let report = pipeline.run(&mut src).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report"));
    if let Some(truth_path) = &args.truth {
        let text = std::fs::read_to_string(truth_path)
            .map_err(|e| format!("{}: {e}", truth_path.display()))?;
        let truth: Vec<trafficgen::TruthRecord> = text
            .lines()
            .map(|l| serde_json::from_str(l).map_err(|e| format!("truth line: {e}")))
            .collect::<Result<_, _>>()?;
        let acc = evaluate_accuracy(&pipeline.session_labels, &truth);
        println!("{}", serde_json::to_string_pretty(&acc).expect("accuracy"));
        if !acc.all_exact() {
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs) -> Result<ExitCode, String> {
    eprintln!(
        "generating load: {} GET/s for {:.1} s (seed {})",
        args.rate, args.duration, args.seed
    );
    let corpus = trafficgen::generate_load(args.rate, args.duration, args.seed);
    let dir = tempfile_dir()?;
    let db = SignatureDb::parse(DEFAULT_SIGNATURES).map_err(|e| e.to_string())?;
    let mut pipeline = Pipeline::new(
        PipelineConfig::default(),
        db,
        None,
        PolicyDocument::default(),
        ReporterConfig::offline(dir.clone(), "gw-bench"),
    );
    let mut src = CaptureSource::from_reader(Cursor::new(corpus.pcap), SourceKind::Synthetic)
        .map_err(|e| e.to_string())?;
    let report = pipeline.run(&mut src).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report"));
    let _ = std::fs::remove_dir_all(&dir);
    if let Some(min) = args.min_rate {
        if report.gets_per_sec < min {
            eprintln!(
                "sustained rate {:.0} GET/s below required {min:.0}",
                report.gets_per_sec
            );
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn tempfile_dir() -> Result<PathBuf, String> {
    let dir = std::env::temp_dir().join(format!("shgw-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    Ok(dir)
}

fn serve(addr: String, data_dir: Option<PathBuf>, policy: Option<PathBuf>) -> Result<ExitCode, String> {
    let initial = load_policy(&policy)?;
    let store = match data_dir {
        Some(dir) => CollectorStore::open(dir, initial).map_err(|e| e.to_string())?,
        None => CollectorStore::in_memory(initial),
    };
    let server = CollectorServer::start(&addr, store).map_err(|e| e.to_string())?;
    println!("collector listening on {}", server.local_addr());
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

fn gen(command: GenCommand) -> Result<ExitCode, String> {
    match command {
        GenCommand::Corpus {
            out,
            sessions,
            seed,
            web,
        } => {
            std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            let corpus = if web {
                trafficgen::generate_web_corpus(sessions, seed)
            } else {
                trafficgen::generate_corpus(&CorpusSpec {
                    sessions,
                    seed,
                    ..CorpusSpec::default()
                })
            };
            std::fs::write(out.join("corpus.pcap"), &corpus.pcap).map_err(|e| e.to_string())?;
            std::fs::write(out.join("corpus.truth"), &corpus.truth).map_err(|e| e.to_string())?;
            println!(
                "wrote {} sessions ({} GETs) to {}",
                corpus.sessions,
                corpus.get_count,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        GenCommand::Load {
            out,
            rate,
            duration,
            seed,
        } => {
            std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            let corpus = trafficgen::generate_load(rate, duration, seed);
            std::fs::write(out.join("load.pcap"), &corpus.pcap).map_err(|e| e.to_string())?;
            println!(
                "wrote {} GET sessions to {}",
                corpus.get_count,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn policy_cmd(command: PolicyCommand) -> Result<ExitCode, String> {
    match command {
        PolicyCommand::Push { collector, file } => {
            let base = collector_url(collector)
                .ok_or("no collector URL (use --collector or SHGW_COLLECTOR_URL)")?;
            let bytes = std::fs::read(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            // Validate locally before shipping.
            parse_policy(&bytes).map_err(|e| e.to_string())?;
            match push_policy_to(&base, &bytes) {
                Ok(body) => {
                    println!("{body}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("push rejected: {e}");
                    Ok(ExitCode::from(1))
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Bench(args) => bench(args),
        Command::Collector {
            command: CollectorCommand::Serve {
                addr,
                data_dir,
                policy,
            },
        } => serve(addr, data_dir, policy),
        Command::Gen { command } => gen(command),
        Command::Policy { command } => policy_cmd(command),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
