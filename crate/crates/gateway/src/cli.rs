//! The `polygate` command line.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use polygate_core::config::ClusterConfig;
use serde_json::{json, Value as JsonValue};

use crate::client::{Client, Reply, TransportError};
use crate::server;

#[derive(Debug, Parser)]
#[command(name = "polygate", version, about = "Polystore gateway and client")]
pub struct Cli {
    /// Gateway URL for client commands.
    #[arg(long, global = true, env = "POLYGATE_ENDPOINT", default_value = "http://127.0.0.1:7878")]
    pub endpoint: String,
    /// Cluster config for `serve`; overrides POLYGATE_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the gateway. Without a config, serves the three-engine demo cluster.
    Serve {
        /// Overrides the configured listen address.
        #[arg(long)]
        listen: Option<String>,
        /// Snapshot root for the demo cluster (ignored with a config file).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run one polystore query.
    Query {
        text: String,
        /// Print the plan instead of running it.
        #[arg(long)]
        explain: bool,
        /// Ask for JSON instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Show engine status.
    Status,
    /// Start or stop an engine.
    Engine { action: EngineAction, name: String },
    /// Generate and load the synthetic dataset.
    Load {
        #[arg(long, default_value_t = 42)]
        seed: i64,
        #[arg(long, default_value_t = 100)]
        patients: i64,
        #[arg(long, default_value_t = 1000)]
        len: i64,
        #[arg(long, default_value_t = 300)]
        notes: i64,
        #[arg(long)]
        replace: bool,
    },
    /// Read queries line by line from stdin.
    Repl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineAction {
    Start,
    Stop,
}

impl EngineAction {
    fn as_str(self) -> &'static str {
        match self {
            EngineAction::Start => "start",
            EngineAction::Stop => "stop",
        }
    }
}

/// 0 on 2xx, 1 on 4xx, 2 on 5xx, 3 when the gateway cannot be reached.
pub fn exit_code(reply: &Result<Reply, TransportError>) -> i32 {
    match reply {
        Ok(r) if r.is_success() => 0,
        Ok(r) if (400..500).contains(&r.status) => 1,
        Ok(_) => 2,
        Err(_) => 3,
    }
}

fn config_path(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os("POLYGATE_CONFIG").map(PathBuf::from))
}

fn init_logging(level: &str) {
    let mut b = env_logger::Builder::new();
    b.parse_filters(level);
    if let Ok(spec) = std::env::var("RUST_LOG") {
        b.parse_filters(&spec);
    }
    b.format(|buf, rec| writeln!(buf, "{} {} {}", buf.timestamp_millis(), rec.level(), rec.args()));
    let _ = b.try_init();
}

fn serve(config: Option<PathBuf>, listen: Option<String>, data: Option<PathBuf>) -> i32 {
    let cfg = match config_path(config) {
        Some(p) => ClusterConfig::load(&p),
        None => Ok(ClusterConfig::demo(data.as_deref())),
    };
    let mut cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    if let Some(l) = listen {
        cfg.listen = l;
    }
    init_logging(&cfg.log_level);
    match server::serve_forever(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Prints a reply body to stdout, or the error and position to stderr.
fn report(reply: &Result<Reply, TransportError>, out: &mut impl Write) {
    match reply {
        Ok(r) if r.is_success() => {
            let _ = out.write_all(r.body.as_bytes());
            if !r.body.ends_with('\n') {
                let _ = writeln!(out);
            }
        }
        Ok(r) => eprintln!("{}", describe_error(r)),
        Err(e) => eprintln!("error: {e}"),
    }
}

fn describe_error(r: &Reply) -> String {
    let Some(j) = r.json() else {
        return format!("error ({}): {}", r.status, r.body.trim());
    };
    let msg = j["error"].as_str().unwrap_or("unknown error");
    let mut s = format!("error ({}): {msg}", r.status);
    if let (Some(l), Some(c)) = (j["position"]["line"].as_u64(), j["position"]["column"].as_u64()) {
        s += &format!(" [position {l}:{c}]");
    }
    if let Some(e) = j["engine"].as_str() {
        s += &format!(" [engine {e}]");
    }
    s
}

fn status_table(j: &JsonValue) -> String {
    let mut out = format!("{:<12} {:<11} {:<6} {:>7}  {}\n", "ENGINE", "KIND", "STATUS", "OBJECTS", "ADDRESS");
    for e in j["engines"].as_array().into_iter().flatten() {
        out += &format!(
            "{:<12} {:<11} {:<6} {:>7}  {}\n",
            e["name"].as_str().unwrap_or(""),
            e["kind"].as_str().unwrap_or(""),
            e["status"].as_str().unwrap_or(""),
            e["objects"].as_u64().unwrap_or(0),
            e["address"].as_str().unwrap_or("")
        );
    }
    out += &format!(
        "uptime {:.1}s, {} queries served\n",
        j["uptime_s"].as_f64().unwrap_or(0.0),
        j["queries_served"].as_u64().unwrap_or(0)
    );
    out
}

fn print_status(client: &Client, out: &mut impl Write) -> i32 {
    let reply = client.status();
    match &reply {
        Ok(r) if r.is_success() => match r.json() {
            Some(j) => {
                let _ = out.write_all(status_table(&j).as_bytes());
            }
            None => report(&reply, out),
        },
        _ => report(&reply, out),
    }
    exit_code(&reply)
}

fn load_table(j: &JsonValue) -> String {
    j["objects"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|o| {
            format!(
                "{:<12} {:<8} {:>9}\n",
                o["name"].as_str().unwrap_or(""),
                o["engine"].as_str().unwrap_or(""),
                o["count"].as_u64().unwrap_or(0)
            )
        })
        .collect()
}

fn repl(client: &Client) -> i32 {
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    let mut explain = false;
    let mut last = 0;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let line = line.trim();
        match line {
            "" => continue,
            "\\q" | "\\quit" => break,
            "\\status" => last = print_status(client, &mut out),
            "\\explain on" => explain = true,
            "\\explain off" => explain = false,
            l if l.starts_with('\\') => {
                eprintln!("unknown command {l}; try \\status, \\explain on|off, \\q");
                last = 1;
            }
            q => {
                let reply = if explain { client.explain(q) } else { client.query(q, false) };
                report(&reply, &mut out);
                last = exit_code(&reply);
            }
        }
        let _ = out.flush();
    }
    last
}

pub fn run(cli: Cli) -> i32 {
    let client = Client::new(&cli.endpoint);
    let mut out = std::io::stdout();
    match cli.command {
        Command::Serve { listen, data } => serve(cli.config, listen, data),
        Command::Query { text, explain, json } => {
            let reply = if explain { client.explain(&text) } else { client.query(&text, json) };
            report(&reply, &mut out);
            exit_code(&reply)
        }
        Command::Status => print_status(&client, &mut out),
        Command::Engine { action, name } => {
            let reply = client.engine(action.as_str(), &name);
            match &reply {
                Ok(r) if r.is_success() => {
                    let j = r.json().unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{} {} (changed: {})",
                        j["engine"].as_str().unwrap_or(&name),
                        j["status"].as_str().unwrap_or("?"),
                        j["changed"]
                    );
                }
                _ => report(&reply, &mut out),
            }
            exit_code(&reply)
        }
        Command::Load {
            seed,
            patients,
            len,
            notes,
            replace,
        } => {
            let body = json!({ "seed": seed, "patients": patients, "len": len, "notes": notes, "replace": replace });
            let reply = client.load(&body);
            match &reply {
                Ok(r) if r.is_success() => {
                    let _ = out.write_all(load_table(&r.json().unwrap_or_default()).as_bytes());
                }
                _ => report(&reply, &mut out),
            }
            exit_code(&reply)
        }
        Command::Repl => repl(&client),
    }
}
