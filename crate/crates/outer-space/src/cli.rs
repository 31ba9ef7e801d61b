//! The `osl` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::balanced::balanced_path_with;
use crate::error::{Error, Result};
use crate::folding::{fold_path, standard_path, Custom, Greedy, PathTrace, SpeedRules, StopPolicy};
use crate::freegroup::{cyclic_reduce, ConjugacyClass};
use crate::geodesy::{ball_report, build_scene, format_checks, rigidity_report, scene_checks, verify_geodesic, Direction, Params, Status};
use crate::graph::{candidates, lipschitz_distance, MarkedGraph};
use crate::graphmap::canonical_map;
use crate::rational::{fmt_dec, fmt_q, ln_q};

#[derive(Parser, Debug)]
#[command(name = "osl", version, about = "Lipschitz distances and folding paths in Outer space")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// λ(x,y) with a witness loop.
    Dist {
        x: PathBuf,
        y: PathBuf,
        #[arg(long, value_enum)]
        report: Option<Report>,
    },
    /// Candidate loops of a graph and their lengths.
    Candidates {
        x: PathBuf,
        #[arg(long, value_enum)]
        report: Option<Report>,
    },
    /// Build a folding path from x to y.
    Path {
        x: PathBuf,
        y: PathBuf,
        #[command(flatten)]
        opts: PathOpts,
        /// Write the trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the starting map (images and stretches) as JSON.
        #[arg(long)]
        dump_map: Option<PathBuf>,
        /// Write per-segment weight and loss tables as JSON (balanced mode).
        #[arg(long)]
        dump_weights: Option<PathBuf>,
    },
    /// Run a named scene's expectation table.
    VerifyExample {
        name: String,
        /// Shorthand for --param m=<M>.
        #[arg(long)]
        m: Option<String>,
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
        #[arg(long, value_enum)]
        report: Option<Report>,
    },
    /// λ between a center and every breakpoint of the path x → y.
    Ball {
        center: PathBuf,
        x: PathBuf,
        y: PathBuf,
        #[arg(long, value_enum, default_value = "out")]
        direction: Dir,
        #[command(flatten)]
        opts: PathOpts,
        #[arg(long, value_enum)]
        report: Option<Report>,
    },
    /// Illegal turn counts and yo-yo flags along the path x → y.
    CheckRigid {
        x: PathBuf,
        y: PathBuf,
        #[command(flatten)]
        opts: PathOpts,
        #[arg(long, value_enum)]
        report: Option<Report>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct PathOpts {
    #[arg(long, value_enum, default_value = "balanced")]
    pub mode: Mode,
    /// Speed rules JSON for --mode custom.
    #[arg(long)]
    pub speeds: Option<PathBuf>,
    /// Loop to track, as a word like "a b^-1" (repeatable).
    #[arg(long = "track", value_name = "WORD")]
    pub track: Vec<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Balanced,
    Greedy,
    Standard,
    Custom,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Report {
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    Out,
    In,
}

/// What a command produced: text for stdout and whether its assertions held.
struct Outcome {
    text: String,
    ok: bool,
}

impl Outcome {
    fn ok(text: String) -> Outcome {
        Outcome { text, ok: true }
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn write(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn load(p: &Path) -> Result<MarkedGraph> {
    MarkedGraph::from_json(&read(p)?)
}

fn tracked(x: &MarkedGraph, words: &[String]) -> Result<Vec<ConjugacyClass>> {
    words.iter().map(|w| cyclic_reduce(&x.basis.parse(w)?)).collect()
}

fn build_path(x: &MarkedGraph, y: &MarkedGraph, opts: &PathOpts, dump_weights: bool) -> Result<PathTrace> {
    let tr = tracked(x, &opts.track)?;
    if opts.mode != Mode::Custom && opts.speeds.is_some() {
        return Err(Error::Parse("--speeds only applies to --mode custom".into()));
    }
    match opts.mode {
        Mode::Balanced => balanced_path_with(x, y, &tr, dump_weights),
        Mode::Greedy => fold_path(&canonical_map(x, y)?, &mut Greedy, StopPolicy::default(), &tr),
        Mode::Standard => standard_path(x, y, &tr),
        Mode::Custom => {
            let file = opts.speeds.as_ref().ok_or_else(|| Error::Parse("--mode custom needs --speeds".into()))?;
            let rules = SpeedRules::from_json(&read(file)?)?;
            fold_path(&canonical_map(x, y)?, &mut Custom { rules }, StopPolicy::default(), &tr)
        }
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

fn dist(x: &Path, y: &Path, report: Option<Report>) -> Result<Outcome> {
    let (x, y) = (load(x)?, load(y)?);
    let (l, w) = lipschitz_distance(&x, &y)?;
    let witness = x.basis.format_class(&w.class);
    let text = match report {
        Some(Report::Json) => pretty(&json!({"lambda": fmt_q(&l), "log_lambda": fmt_dec(ln_q(&l)), "witness": witness})),
        Some(Report::Csv) => format!("lambda,log_lambda,witness\n{},{},{}\n", fmt_q(&l), fmt_dec(ln_q(&l)), witness),
        None => format!("lambda={} witness={}\nlog_lambda={}\n", fmt_q(&l), witness, fmt_dec(ln_q(&l))),
    };
    Ok(Outcome::ok(text))
}

fn list_candidates(x: &Path, report: Option<Report>) -> Result<Outcome> {
    let x = load(x)?;
    let rows: Vec<(String, String, String)> = candidates(&x)
        .iter()
        .map(|c| Ok((format!("{:?}", c.kind).to_lowercase(), x.basis.format_class(&c.class), fmt_q(&x.loop_length(&c.class)?))))
        .collect::<Result<_>>()?;
    let text = match report {
        Some(Report::Json) => pretty(&Value::Array(rows.iter().map(|(k, w, l)| json!({"kind": k, "loop": w, "length": l})).collect())),
        _ => {
            let mut s = String::from("kind,loop,length\n");
            for (k, w, l) in &rows {
                s.push_str(&format!("{k},{w},{l}\n"));
            }
            s
        }
    };
    Ok(Outcome::ok(text))
}

fn path_cmd(x: &Path, y: &Path, opts: &PathOpts, trace: Option<&Path>, dump_map: Option<&Path>, dump_weights: Option<&Path>) -> Result<Outcome> {
    let (x, y) = (load(x)?, load(y)?);
    if dump_weights.is_some() && opts.mode != Mode::Balanced {
        return Err(Error::Parse("--dump-weights only applies to --mode balanced".into()));
    }
    let p = build_path(&x, &y, opts, dump_weights.is_some())?;
    if let Some(f) = dump_map {
        let m = canonical_map(&x, &y)?;
        write(f, &(serde_json::to_string_pretty(&m.dump()).unwrap() + "\n"))?;
    }
    if let Some(f) = dump_weights {
        write(f, &pretty(&Value::Array(p.reports.clone())))?;
    }
    if let Some(f) = trace {
        write(f, &p.csv())?;
    }
    let g = verify_geodesic(&p, &x, &y)?;
    let mut text = format!(
        "mode={} breakpoints={} lambda={} log_lambda={}\n",
        p.mode,
        p.breakpoints.len(),
        fmt_q(&p.total_lambda()),
        fmt_dec(ln_q(&p.total_lambda()))
    );
    for (i, bp) in p.breakpoints.iter().enumerate() {
        text.push_str(&format!("{i} s={} lambda_from_origin={} {}\n", fmt_dec(bp.arclength()), fmt_q(&bp.lambda_from_origin), bp.event.kind));
    }
    if !p.arrived() {
        text.push_str("stopped within tolerance of the target\n");
    }
    text.push_str(&format!("geodesic identity: {}\n", if g.ok { "ok" } else { "violated" }));
    Ok(Outcome { text, ok: g.ok })
}

fn verify(name: &str, m: Option<&str>, params: &[String], report: Option<Report>) -> Result<Outcome> {
    let mut p = Params::new();
    for kv in params {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("--param expects k=v, got {kv}")))?;
        p.insert(k.trim().into(), v.trim().into());
    }
    if let Some(m) = m {
        p.insert("m".into(), m.into());
    }
    let scene = build_scene(name, &p)?;
    let checks = scene_checks(&scene)?;
    let ok = checks.iter().all(|c| c.status != Status::Fail);
    let text = match report {
        Some(Report::Json) => pretty(&json!({"scene": name, "checks": checks})),
        Some(Report::Csv) => {
            let mut s = String::from("status,label,detail\n");
            for c in &checks {
                s.push_str(&format!("{},\"{}\",\"{}\"\n", c.status, c.label, c.detail));
            }
            s
        }
        None => format_checks(name, &checks),
    };
    Ok(Outcome { text, ok })
}

fn ball(center: &Path, x: &Path, y: &Path, dir: Dir, opts: &PathOpts, report: Option<Report>) -> Result<Outcome> {
    let (c, x, y) = (load(center)?, load(x)?, load(y)?);
    let p = build_path(&x, &y, opts, false)?;
    let d = if dir == Dir::Out { Direction::Out } else { Direction::In };
    let r = ball_report(&c, &p, d)?;
    let text = match report {
        Some(Report::Json) => pretty(&serde_json::to_value(&r).unwrap()),
        _ => {
            let mut s = String::from("breakpoint,lambda,log_lambda\n");
            for (i, l, ll) in &r.rows {
                s.push_str(&format!("{i},{l},{ll}\n"));
            }
            if report.is_none() {
                s.push_str(&format!("max={} at breakpoint {}\n", r.max, r.argmax));
            }
            s
        }
    };
    Ok(Outcome::ok(text))
}

fn check_rigid(x: &Path, y: &Path, opts: &PathOpts, report: Option<Report>) -> Result<Outcome> {
    let (x, y) = (load(x)?, load(y)?);
    let p = build_path(&x, &y, opts, false)?;
    let r = rigidity_report(&p);
    let text = match report {
        Some(Report::Json) => pretty(&serde_json::to_value(&r).unwrap()),
        _ => {
            let mut s = String::from("breakpoint,illegal_turns,yoyo,turns\n");
            for row in &r.rows {
                let yoyo: Vec<String> = row.yoyo.iter().map(|b| b.to_string()).collect();
                s.push_str(&format!("{},{},{},\"{}\"\n", row.breakpoint, row.illegal_turns, yoyo.join(";"), row.turns.join(";")));
            }
            if report.is_none() {
                s.push_str(&format!("rigid={}\n", r.rigid));
            }
            s
        }
    };
    Ok(Outcome { text, ok: r.rigid })
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Dist { x, y, report } => dist(x, y, *report),
        Command::Candidates { x, report } => list_candidates(x, *report),
        Command::Path { x, y, opts, trace, dump_map, dump_weights } => {
            path_cmd(x, y, opts, trace.as_deref(), dump_map.as_deref(), dump_weights.as_deref())
        }
        Command::VerifyExample { name, m, params, report } => verify(name, m.as_deref(), params, *report),
        Command::Ball { center, x, y, direction, opts, report } => ball(center, x, y, *direction, opts, *report),
        Command::CheckRigid { x, y, opts, report } => check_rigid(x, y, opts, *report),
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_certificate() {
        return 3;
    }
    match e {
        Error::Parse(_) | Error::BadParams(_) | Error::Io(_) | Error::TrivialWord | Error::NotABasis(_) | Error::NonPositiveLength(_) | Error::DisconnectedGraph | Error::MarkingMismatch(_) => 2,
        _ => 1,
    }
}

/// Runs the CLI, writing to stdout/stderr. Returns the process exit code:
/// 0 all good, 1 an assertion failed, 2 usage or input error, 3 an internal
/// certificate failed.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            print!("{}", out.text);
            if out.ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("osl: {e}");
            exit_code(&e)
        }
    }
}
