use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};

use layoutgen_cli::server::{serve, AppState, Bridge};
use layoutgen_cli::transport::HttpTransport;
use layoutgen_core::layout::{to_svg, LayoutDb, SvgOptions};
use layoutgen_core::llm::{BridgeConfig, ScriptedTransport};
use layoutgen_core::runner::run_script;
use layoutgen_core::Technology;

#[derive(Parser)]
#[command(name = "layoutgen", version, about = "Grid-based custom layout generation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Apply a command script to a netlist and write layout.json, layout.svg, report.json.
    Run {
        #[arg(long)]
        tech: PathBuf,
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Report DRC/LVS failures as warnings instead of failing.
        #[arg(long)]
        no_strict: bool,
    },
    /// Serve the session API.
    Serve {
        #[arg(long)]
        tech: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Chat-completion endpoint settings (JSON).
        #[arg(long)]
        llm_config: Option<PathBuf>,
        /// Canned model replies (JSON array of strings), used instead of the network.
        #[arg(long)]
        llm_fixture: Option<PathBuf>,
    },
    /// Validate a technology file.
    Check {
        #[arg(long)]
        tech: PathBuf,
    },
    /// Render a layout JSON file to SVG.
    Render {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Layer to leave out; repeatable.
        #[arg(long = "hide-layer")]
        hide_layers: Vec<String>,
    },
}

fn load_tech(path: &PathBuf) -> anyhow::Result<Technology> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Technology::from_json(&text).with_context(|| format!("loading {}", path.display()))
}

fn bridge(config: Option<PathBuf>, fixture: Option<PathBuf>) -> anyhow::Result<Option<Bridge>> {
    let config = match &config {
        Some(p) => Some(BridgeConfig::from_json(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
        None => None,
    };
    match (config, fixture) {
        (config, Some(path)) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let config = config.unwrap_or(BridgeConfig {
                endpoint_url: String::new(),
                model_id: "fixture".into(),
                api_key_ref: String::new(),
                max_retries: 3,
                temperature: 0.0,
            });
            Ok(Some(Bridge {
                transport: Arc::new(ScriptedTransport::from_json(&text)?),
                config,
            }))
        }
        (Some(config), None) => Ok(Some(Bridge {
            transport: Arc::new(HttpTransport::new()?),
            config,
        })),
        (None, None) => Ok(None),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Cmd::Run {
            tech,
            netlist,
            script,
            out,
            no_strict,
        } => {
            let report = run_script(&tech, &netlist, &script, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.is_clean() {
                Ok(ExitCode::SUCCESS)
            } else if no_strict {
                eprintln!("warning: {} DRC violation(s), LVS {:?}", report.drc_violations, report.lvs_verdict);
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: {} DRC violation(s), LVS {:?}", report.drc_violations, report.lvs_verdict);
                Ok(ExitCode::FAILURE)
            }
        }
        Cmd::Serve {
            tech,
            port,
            llm_config,
            llm_fixture,
        } => {
            let state = AppState::new(Arc::new(load_tech(&tech)?), bridge(llm_config, llm_fixture)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(state, port))?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Check { tech } => {
            let t = load_tech(&tech)?;
            println!(
                "{}: {} layers, {} via rules, {} templates, row gap {}",
                t.name,
                t.layers.len(),
                t.vias.len(),
                t.templates.len(),
                t.row_gap
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Render {
            layout,
            out,
            hide_layers,
        } => {
            let text = std::fs::read_to_string(&layout).with_context(|| format!("reading {}", layout.display()))?;
            let db = LayoutDb::from_json(&text)?;
            let svg = to_svg(
                &db,
                &SvgOptions {
                    hide_layers,
                    ..Default::default()
                },
            );
            std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
