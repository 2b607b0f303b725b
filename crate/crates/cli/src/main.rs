use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use trustwatch_core::harness::{
    compute_metrics, loc_baseline, parse_scenario, parse_sweep, render_scenario, run_sweep,
    single_run_csv, sweep_svg, GroundTruth, MetricsReport,
};
use trustwatch_core::messages::inspect_frame;
use trustwatch_core::sim::{self, EventKind, EventLog};

const SEED_ENV: &str = "TRUSTWATCH_SEED";

#[derive(Debug, Parser)]
#[command(name = "trustwatch", version, about = "Reputation protocol simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run one scenario.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Beats TRUSTWATCH_SEED, which beats the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Writes events.log, metrics.csv and scenario.txt here. Without it
        /// the metrics CSV goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a one-variable sweep; writes sweep.csv and sweep.svg.
    Sweep {
        #[arg(long = "spec")]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Frame tools.
    Codec {
        #[command(subcommand)]
        cmd: CodecCmd,
    },
    /// Recompute metrics from a saved event log against a baseline.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum)]
        baseline: Baseline,
    },
}

#[derive(Debug, Subcommand)]
enum CodecCmd {
    /// Decode a hex frame and print its fields.
    Inspect { hex: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Loc,
}

/// The seed to use: flag, then environment, then file.
fn resolve_seed(flag: Option<u64>, env: Option<&str>, file: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env.map(str::trim) {
        Some(v) if !v.is_empty() => v
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        _ => Ok(file),
    }
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
}

fn run_cmd(scenario: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut cfg =
        parse_scenario(&read(scenario)?).with_context(|| format!("in {}", scenario.display()))?;
    cfg.rng_seed = resolve_seed(seed, env_seed().as_deref(), cfg.rng_seed)?;
    let seed = cfg.rng_seed;
    let text = render_scenario(&cfg);
    let output = sim::run(cfg)?;
    let report = compute_metrics(&output.log)?;
    let csv = single_run_csv(seed, &report);
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write(dir, "events.log", &output.log.render())?;
            write(dir, "metrics.csv", &csv)?;
            write(dir, "scenario.txt", &text)?;
            eprintln!("seed {seed}: wrote {}", dir.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn sweep_cmd(spec: &Path, out: &Path) -> Result<()> {
    let mut sweep = parse_sweep(&read(spec)?).with_context(|| format!("in {}", spec.display()))?;
    if let Some(v) = env_seed() {
        sweep.seeds = sweep
            .seeds
            .with_base(resolve_seed(None, Some(&v), sweep.seeds.base())?);
    }
    let res = run_sweep(&sweep)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(out, "sweep.csv", &res.to_csv())?;
    write(out, "sweep.svg", &sweep_svg(&res, &sweep.metric))?;
    for (value, mean) in res.means(&sweep.metric) {
        let shown = mean.map_or("undefined".to_string(), |m| format!("{m:.4}"));
        println!(
            "{} = {value}: mean {} = {shown}",
            res.variable, sweep.metric
        );
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

fn replay_report(log: &EventLog) -> Result<String> {
    let gt = GroundTruth::from_log(log)?;
    let m: MetricsReport = compute_metrics(log)?;
    let loc = loc_baseline(log)?;
    let window_s = gt.overhead_window_ms / 1000;
    let mut s = format!(
        "seed {}  nodes {}  malicious {}  events {}\n",
        gt.seed,
        gt.node_count,
        gt.malicious.len(),
        log.len()
    );
    s.push_str(&format!("{:<28}{:>12}{:>12}\n", "", "proposed", "loc"));
    let rows = [
        (
            format!("alarms in {window_s} s window"),
            m.comm_overhead.to_string(),
            m.loc_alarms_window.to_string(),
        ),
        (
            "alarms in total".into(),
            m.alarms_total.to_string(),
            m.loc_alarms_total.to_string(),
        ),
        (
            "false positive rate".into(),
            format!("{:.4}", m.false_positive_rate),
            format!("{:.4}", m.loc_false_positive_rate),
        ),
        (
            "detection rate".into(),
            fmt_opt(m.detection_rate),
            fmt_opt(m.loc_detection_rate),
        ),
    ];
    for (name, a, b) in rows {
        s.push_str(&format!("{name:<28}{a:>12}{b:>12}\n"));
    }
    s.push_str(&format!(
        "isolations {}  certificates {}  first loc alarm {}\n",
        log.count(EventKind::Isolated),
        m.certificates,
        loc.first()
            .map_or("-".into(), |a| format!("{} ms", a.time_ms))
    ));
    Ok(s)
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run {
            scenario,
            seed,
            out,
        } => run_cmd(&scenario, seed, out.as_deref()),
        Cmd::Sweep { spec, out } => sweep_cmd(&spec, &out),
        Cmd::Codec {
            cmd: CodecCmd::Inspect { hex },
        } => {
            println!("{}", inspect_frame(&hex)?);
            Ok(())
        }
        Cmd::Replay { log, baseline } => {
            let Baseline::Loc = baseline;
            let parsed =
                EventLog::parse(&read(&log)?).with_context(|| format!("in {}", log.display()))?;
            if parsed.is_empty() {
                bail!("{} holds no events", log.display());
            }
            print!("{}", replay_report(&parsed)?);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(3), Some("9"), 1).unwrap(), 3);
        assert_eq!(resolve_seed(None, Some(" 9 "), 1).unwrap(), 9);
        assert_eq!(resolve_seed(None, Some(""), 1).unwrap(), 1);
        assert_eq!(resolve_seed(None, None, 1).unwrap(), 1);
        assert!(resolve_seed(None, Some("seven"), 1).is_err());
    }

    #[test]
    fn cli_shape() {
        Cli::command().debug_assert();
        let c = Cli::try_parse_from(["trustwatch", "run", "--scenario", "a.txt", "--seed", "4"])
            .unwrap();
        assert!(matches!(
            c.cmd,
            Cmd::Run {
                seed: Some(4),
                out: None,
                ..
            }
        ));
        let c = Cli::try_parse_from(["trustwatch", "codec", "inspect", "00ff"]).unwrap();
        assert!(
            matches!(c.cmd, Cmd::Codec { cmd: CodecCmd::Inspect { ref hex } } if hex == "00ff")
        );
        assert!(
            Cli::try_parse_from(["trustwatch", "replay", "--log", "x", "--baseline", "other"])
                .is_err()
        );
        assert!(Cli::try_parse_from(["trustwatch", "sweep", "--spec", "s"]).is_err());
    }

    #[test]
    fn replay_table_lists_both_sides() {
        let mut cfg = trustwatch_core::sim::ScenarioConfig::table1();
        cfg.duration_s = 60;
        cfg.node_count = 15;
        cfg.malicious_count = 2;
        cfg.flow_count = 5;
        let log = sim::run(cfg).unwrap().log;
        let text = replay_report(&log).unwrap();
        assert!(text.contains("proposed"));
        assert!(text.contains("loc"));
        assert!(text
            .lines()
            .any(|l| l.starts_with("alarms in 160 s window")));
    }
}
