use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use retrieval_core::harness::{evaluate, generate_scenario, score_episode};
use retrieval_core::observation::NoiseModel;
use retrieval_core::reasoner::{ExternalReasoner, HeuristicReasoner, OracleReasoner, Reasoner, DEFAULT_TIMEOUT};
use retrieval_core::supervisor::{Ablation, EpisodeConfig, Transcript};
use retrieval_core::world::{load_scenario, Category, Scenario};

#[derive(Parser)]
#[command(name = "retrieval", version, about = "Object retrieval simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a scenario file, or a directory of them with --count.
    Gen {
        #[arg(long)]
        category: Category,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write seeds seed..seed+count into the directory given by --out.
        #[arg(long)]
        count: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and write its transcript.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "heuristic")]
        reasoner: String,
        #[arg(long, default_value = "full")]
        ablation: Ablation,
        #[arg(long, default_value = "none")]
        noise: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every scenario in a directory and write metrics.
    Eval {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "heuristic")]
        reasoner: String,
        #[arg(long, default_value = "full")]
        ablation: Ablation,
        #[arg(long, default_value = "none")]
        noise: String,
        /// JSON report; per-episode and ODR tables go next to it as CSV.
        #[arg(long)]
        report: PathBuf,
    },
    /// Print the step log of a transcript.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
    },
}

enum ReasonerSpec {
    Heuristic,
    Oracle,
    External(String),
}

impl ReasonerSpec {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "heuristic" => Ok(Self::Heuristic),
            "oracle" => Ok(Self::Oracle),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(Self::External(cmd.to_string())),
                _ => bail!("unknown reasoner `{s}`; expected heuristic, oracle or external:CMD"),
            },
        }
    }

    fn build(&self) -> Result<Box<dyn Reasoner>> {
        Ok(match self {
            Self::Heuristic => Box::new(HeuristicReasoner),
            Self::Oracle => Box::new(OracleReasoner::new()),
            Self::External(cmd) => Box::new(ExternalReasoner::spawn(cmd, DEFAULT_TIMEOUT)?),
        })
    }
}

fn config(ablation: Ablation, noise: &str) -> Result<EpisodeConfig> {
    let noise = NoiseModel::profile(noise).ok_or_else(|| anyhow!("unknown noise profile `{noise}`; expected none or mild"))?;
    Ok(EpisodeConfig { ablation, noise, ..EpisodeConfig::default() })
}

fn load_suite(dir: &Path) -> Result<Vec<Scenario>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading suite directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no scenario files in {}", dir.display());
    }
    paths.iter().map(|p| load_scenario(p).with_context(|| format!("loading {}", p.display()))).collect()
}

fn sibling(report: &Path, suffix: &str) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}{suffix}"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Cmd::Gen { category, seed, count, out } => match count {
            None => {
                let s = generate_scenario(category, seed)?;
                s.save(&out).with_context(|| format!("writing {}", out.display()))?;
            }
            Some(n) => {
                fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
                for seed in seed..seed + n {
                    let s = generate_scenario(category, seed)?;
                    let path = out.join(format!("{}.json", s.name));
                    s.save(&path).with_context(|| format!("writing {}", path.display()))?;
                }
            }
        },
        Cmd::Run { scenario, reasoner, ablation, noise, out } => {
            let s = load_scenario(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            let cfg = config(ablation, &noise)?;
            let mut r = ReasonerSpec::parse(&reasoner)?.build()?;
            let (row, t) = score_episode(&s, &cfg, r.as_mut());
            fs::write(&out, t.to_json() + "\n").with_context(|| format!("writing {}", out.display()))?;
            println!("{}: {} in {} steps, final ODR {:.3}", s.name, row.status, row.steps, row.final_odr);
        }
        Cmd::Eval { suite, reasoner, ablation, noise, report } => {
            let scenarios = load_suite(&suite)?;
            let cfg = config(ablation, &noise)?;
            let spec = ReasonerSpec::parse(&reasoner)?;
            // Fail early on a reasoner that cannot start.
            drop(spec.build()?);
            let make = |_: &Scenario| spec.build().expect("reasoner started once already");
            let m = evaluate(&scenarios, &make, &cfg);
            fs::write(&report, m.to_json() + "\n").with_context(|| format!("writing {}", report.display()))?;
            fs::write(sibling(&report, ".csv"), m.rows_csv())?;
            fs::write(sibling(&report, "_odr.csv"), m.odr_csv())?;
            for c in &m.categories {
                println!(
                    "{}: {} episodes, success {:.3}, final ODR {:.3}, rollout {:.2}, GED {:.2}",
                    c.category, c.episodes, c.success_rate, c.mean_final_odr, c.mean_rollout_length, c.mean_ged
                );
            }
        }
        Cmd::Replay { transcript } => {
            let text = fs::read_to_string(&transcript).with_context(|| format!("reading {}", transcript.display()))?;
            let t = Transcript::from_json(&text).with_context(|| format!("parsing {}", transcript.display()))?;
            print!("{}", t.replay_log());
        }
    }
    Ok(())
}
