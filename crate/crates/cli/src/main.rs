//! `fraisse`: bounded weak Fraïssé experiments from the command line.
//!
//! Every command writes a JSON report (to `--report` or stdout) that records
//! the bounds it ran with. Exit status is 0 on a witness or success, 1 on a
//! bounded negative answer or failed check, and 2 on a usage error.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fraisse_core::generic::{
    build_generic_automorphism, system_back_and_forth, AutChain, AutEntry,
};
use fraisse_core::io::{class_spec_from_json, structure_from_json, structure_to_json, to_dot};
use fraisse_core::limit::{
    back_and_forth, build_limit, verify_universality, BnfBudget, Budget, Chain, ScheduleEntry,
};
use fraisse_core::space::{distance_at_depth, orbit_density_probe, PointApprox};
use fraisse_core::{ClassSpec, Elem, FinStructure, Verdict};

#[derive(Parser)]
#[command(
    name = "fraisse",
    version,
    about = "Bounded weak Fraïssé theory for finite relational structures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Class spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Where to write the JSON report; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Construction budget as JSON text or a path to a JSON file; missing
    /// fields take their defaults.
    #[arg(long, env = "FRAISSE_BUDGET")]
    budget: Option<String>,
}

#[derive(Args)]
struct BnfArgs {
    #[arg(long, default_value_t = 1_000_000)]
    nodes: u64,
    /// Absorbed sets below this size must be one-point saturated.
    #[arg(long, default_value_t = 7)]
    saturation_bound: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a spec; optionally test a structure, count types and audit
    /// hereditarity.
    Check {
        #[command(flatten)]
        common: Common,
        /// Structure to test for membership.
        #[arg(long)]
        structure: Option<PathBuf>,
        /// Count types up to this size.
        #[arg(long)]
        types: Option<usize>,
        /// Check that members up to this size have only members as induced
        /// substructures.
        #[arg(long)]
        audit: Option<usize>,
    },
    /// Joint embedding of two structures within a size bound.
    Jep {
        #[command(flatten)]
        common: Common,
        /// First structure (JSON).
        #[arg(long)]
        a: PathBuf,
        /// Second structure (JSON).
        #[arg(long)]
        b: PathBuf,
        /// Largest joint structure searched.
        #[arg(long)]
        bound: usize,
    },
    /// Weak amalgamation witnesses for one structure or every type of a size.
    Wap {
        #[command(flatten)]
        common: Common,
        /// Structure to find a witness for (JSON).
        #[arg(long, conflicts_with = "size", required_unless_present = "size")]
        a: Option<PathBuf>,
        /// Find witnesses for every type of this size instead.
        #[arg(long)]
        size: Option<usize>,
        /// Witness, extension and amalgam bounds.
        #[arg(long, value_delimiter = ',', required = true)]
        bounds: Vec<usize>,
    },
    /// Build a chain approximating the limit.
    BuildLimit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        build: BuildArgs,
        /// Also write the schedule log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Check universality up to this size.
        #[arg(long, default_value_t = 3)]
        universality: usize,
    },
    /// Replay and re-check a schedule log.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Schedule log written by a build.
        #[arg(long)]
        log: PathBuf,
        /// Read the log as one of a generic automorphism build.
        #[arg(long)]
        generic: bool,
        /// Check universality up to this size.
        #[arg(long, default_value_t = 3)]
        universality: usize,
    },
    /// Back-and-forth between the chains of two seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        build: BuildArgs,
        /// Seed of the first chain.
        #[arg(long)]
        seed_a: u64,
        /// Seed of the second chain.
        #[arg(long)]
        seed_b: u64,
        /// Both partial maps must cover `0..=depth`.
        #[arg(long)]
        depth: usize,
        #[command(flatten)]
        bnf: BnfArgs,
    },
    /// Build a chain of systems approximating a generic automorphism.
    GenericAut {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        build: BuildArgs,
        /// Also write the schedule log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Also build with this seed and compare the two at `--depth`.
        #[arg(long, requires = "depth")]
        compare_seed: Option<u64>,
        /// Depth of the comparison.
        #[arg(long)]
        depth: Option<usize>,
        #[command(flatten)]
        bnf: BnfArgs,
    },
    /// Distance between two structures on {0..d}.
    Distance {
        #[command(flatten)]
        common: Common,
        /// Structure on `{0..d}` (JSON).
        #[arg(long)]
        m: PathBuf,
        /// Structure on `{0..d}` (JSON).
        #[arg(long)]
        n: PathBuf,
    },
    /// Check that every extension of a part of a built top embeds back over
    /// a fixed set.
    Probe {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        build: BuildArgs,
        /// Elements of the top forming the pivot.
        #[arg(long, value_delimiter = ',', required = true)]
        pivot: Vec<Elem>,
        /// Elements of the pivot to keep fixed.
        #[arg(long, value_delimiter = ',')]
        fixed: Vec<Elem>,
        /// Largest extension checked.
        #[arg(long)]
        extension_bound: usize,
    },
    /// Write a structure, or the top of a build, as JSON or DOT.
    Export {
        #[command(flatten)]
        common: Common,
        /// Structure to export instead of a built top.
        #[arg(long)]
        structure: Option<PathBuf>,
        #[command(flatten)]
        build: BuildArgs,
        #[arg(long, value_enum, default_value_t = Format::Dot)]
        format: Format,
        /// Output file; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
}

/// The outcome of a command: its report and whether it succeeded.
struct Outcome {
    report: Value,
    ok: bool,
}

impl Outcome {
    /// Export to stdout keeps stdout for the export itself.
    fn prints_elsewhere(&self) -> bool {
        self.report["command"] == "export" && self.report["output"].is_null()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report_path = match &cli.command {
        Command::Check { common, .. }
        | Command::Jep { common, .. }
        | Command::Wap { common, .. }
        | Command::BuildLimit { common, .. }
        | Command::Verify { common, .. }
        | Command::Compare { common, .. }
        | Command::GenericAut { common, .. }
        | Command::Distance { common, .. }
        | Command::Probe { common, .. }
        | Command::Export { common, .. } => common.report.clone(),
    };
    let start = Instant::now();
    let outcome = match run(cli.command) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let quiet = outcome.prints_elsewhere();
    let mut report = outcome.report;
    report["elapsed_ms"] = json!(start.elapsed().as_millis() as u64);
    let text = serde_json::to_string_pretty(&report).expect("reports serialize");
    match report_path {
        Some(p) => {
            if let Err(e) = fs::write(&p, text + "\n") {
                eprintln!("error: writing {}: {e}", p.display());
                return ExitCode::from(2);
            }
        }
        None if quiet => {}
        None => println!("{text}"),
    }
    ExitCode::from(if outcome.ok { 0 } else { 1 })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_spec(path: &Path) -> Result<ClassSpec> {
    class_spec_from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_structure(spec: &ClassSpec, path: &Path) -> Result<FinStructure> {
    structure_from_json(&read(path)?, Some(spec.sig()))
        .with_context(|| format!("in {}", path.display()))
}

/// The budget from JSON text, or a path to a file holding it.
fn budget(b: &BuildArgs) -> Result<Budget> {
    let Some(arg) = b.budget.as_deref() else {
        return Ok(Budget::default());
    };
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read(Path::new(arg))?
    };
    let budget: Budget = serde_json::from_str(&text).context("reading the budget")?;
    if budget.amalgam_bound == 0 || budget.search_nodes == 0 {
        bail!("budget bounds must be positive");
    }
    Ok(budget)
}

fn bnf_budget(b: &BnfArgs) -> BnfBudget {
    BnfBudget {
        nodes: b.nodes,
        extension_bound: b.saturation_bound,
    }
}

fn verdict_ok<W>(v: &Verdict<W>) -> bool {
    v.is_witnessed()
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Check {
            common,
            structure,
            types,
            audit,
        } => {
            let spec = load_spec(&common.spec)?;
            let mut report = json!({
                "command": "check",
                "spec": spec.label(),
                "relations": spec.sig().len(),
                "forbidden": spec.forbidden().len(),
            });
            let mut ok = true;
            if let Some(p) = structure {
                let s = load_structure(&spec, &p)?;
                let member = spec.membership(&s)?;
                ok &= member;
                report["member"] = json!(member);
            }
            if let Some(n) = types {
                let mut counts = vec![0usize; n + 1];
                for t in spec.enumerate_types(n) {
                    counts[t.len()] += 1;
                }
                report["type_counts"] = json!(counts);
            }
            if let Some(n) = audit {
                let v = spec.hereditarity_violations(n);
                ok &= v.is_empty();
                report["audit"] = json!({
                    "max_size": n,
                    "violations": v.iter().map(|(m, p)| json!({"member": m, "part": p})).collect::<Vec<_>>(),
                });
            }
            Ok(Outcome { report, ok })
        }
        Command::Jep {
            common,
            a,
            b,
            bound,
        } => {
            let spec = load_spec(&common.spec)?;
            let (a, b) = (load_structure(&spec, &a)?, load_structure(&spec, &b)?);
            let v = spec.solve_jep(&a, &b, bound)?;
            Ok(Outcome {
                ok: verdict_ok(&v),
                report: json!({
                    "command": "jep",
                    "spec": spec.label(),
                    "bounds": {"size": bound},
                    "result": v,
                }),
            })
        }
        Command::Wap {
            common,
            a,
            size,
            bounds,
        } => {
            let spec = load_spec(&common.spec)?;
            let [w, e, m] = bounds[..] else {
                bail!("--bounds takes three numbers");
            };
            let sources = match (a, size) {
                (Some(p), _) => vec![load_structure(&spec, &p)?],
                (None, Some(n)) => spec
                    .enumerate_types(n)
                    .into_iter()
                    .filter(|t| t.len() == n)
                    .collect(),
                (None, None) => bail!("give --a or --size"),
            };
            let mut results = Vec::new();
            let mut ok = true;
            for s in &sources {
                let v = spec.find_wap_witness(s, w, e, m)?;
                ok &= verdict_ok(&v);
                results.push(json!({"source": s, "result": v}));
            }
            Ok(Outcome {
                ok,
                report: json!({
                    "command": "wap",
                    "spec": spec.label(),
                    "bounds": {"witness": w, "extension": e, "amalgam": m},
                    "results": results,
                }),
            })
        }
        Command::BuildLimit {
            common,
            build,
            log,
            universality,
        } => {
            let spec = load_spec(&common.spec)?;
            let budget = budget(&build)?;
            let chain = build_limit(&spec, build.steps, &budget, build.seed)?;
            if let Some(p) = log {
                write_with(&p, |f| chain.write_log(f))?;
            }
            chain.validate()?;
            let u = verify_universality(&chain, universality)?;
            Ok(Outcome {
                ok: u.is_complete(),
                report: json!({
                    "command": "build-limit",
                    "spec": spec.label(),
                    "steps": build.steps,
                    "seed": build.seed,
                    "budget": budget,
                    "top": chain.top(),
                    "stage_sizes": chain.stage_sizes(),
                    "open_tasks": chain.open_tasks().len(),
                    "stalled": stalled(&chain),
                    "universality": u,
                    "log": chain.log(),
                }),
            })
        }
        Command::Verify {
            common,
            log,
            generic,
            universality,
        } => {
            let spec = load_spec(&common.spec)?;
            let file =
                fs::File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let input = BufReader::new(file);
            let (valid, u, size) = if generic {
                let chain = AutChain::replay(spec.clone(), AutChain::read_log(input)?)?;
                let valid = chain.validate();
                (
                    valid,
                    chain.verify_universality(universality)?,
                    chain.carrier().len(),
                )
            } else {
                let chain = Chain::replay(spec.clone(), Chain::read_log(input)?)?;
                let valid = chain.validate();
                (
                    valid,
                    verify_universality(&chain, universality)?,
                    chain.top().len(),
                )
            };
            Ok(Outcome {
                ok: valid.is_ok() && u.is_complete(),
                report: json!({
                    "command": "verify",
                    "spec": spec.label(),
                    "top_size": size,
                    "valid": valid.is_ok(),
                    "error": valid.err().map(|e| e.to_string()),
                    "universality": u,
                }),
            })
        }
        Command::Compare {
            common,
            build,
            seed_a,
            seed_b,
            depth,
            bnf,
        } => {
            let spec = load_spec(&common.spec)?;
            let budget = budget(&build)?;
            let m = build_limit(&spec, build.steps, &budget, seed_a)?;
            let n = build_limit(&spec, build.steps, &budget, seed_b)?;
            let b = bnf_budget(&bnf);
            let out = back_and_forth(&m, &n, depth, &b)?;
            Ok(Outcome {
                ok: out.is_ok(),
                report: json!({
                    "command": "compare",
                    "spec": spec.label(),
                    "steps": build.steps,
                    "seeds": [seed_a, seed_b],
                    "depth": depth,
                    "budget": budget,
                    "bnf_budget": b,
                    "result": match &out {
                        Ok(iso) => json!({"success": iso}),
                        Err(f) => json!({"failure": f}),
                    },
                }),
            })
        }
        Command::GenericAut {
            common,
            build,
            log,
            compare_seed,
            depth,
            bnf,
        } => {
            let spec = load_spec(&common.spec)?;
            let budget = budget(&build)?;
            let chain = build_generic_automorphism(&spec, build.steps, &budget, build.seed)?;
            if let Some(p) = log {
                write_with(&p, |f| chain.write_log(f))?;
            }
            chain.validate()?;
            let mut report = json!({
                "command": "generic-aut",
                "spec": spec.label(),
                "steps": build.steps,
                "seed": build.seed,
                "budget": budget,
                "carrier": chain.carrier(),
                "map": chain.pairs(),
                "total_prefix": chain.total_prefix(),
                "stage_sizes": chain.stage_sizes(),
                "stalled": chain.log().iter().filter(|e| matches!(e, AutEntry::Stalled { .. })).count(),
                "log": chain.log(),
            });
            let mut ok = true;
            if let (Some(other), Some(d)) = (compare_seed, depth) {
                let second = build_generic_automorphism(&spec, build.steps, &budget, other)?;
                let b = bnf_budget(&bnf);
                let out = system_back_and_forth(&chain, &second, d, &b)?;
                ok = out.is_ok();
                report["compare"] = json!({
                    "seed": other,
                    "depth": d,
                    "bnf_budget": b,
                    "result": match &out {
                        Ok(iso) => json!({"success": iso}),
                        Err(f) => json!({"failure": f}),
                    },
                });
            }
            Ok(Outcome { report, ok })
        }
        Command::Distance { common, m, n } => {
            let spec = load_spec(&common.spec)?;
            let m = PointApprox::new(load_structure(&spec, &m)?)?;
            let n = PointApprox::new(load_structure(&spec, &n)?)?;
            let d = distance_at_depth(&m, &n)?;
            Ok(Outcome {
                ok: true,
                report: json!({
                    "command": "distance",
                    "spec": spec.label(),
                    "depths": [m.depth(), n.depth()],
                    "distance": d,
                    "value": d.value(),
                }),
            })
        }
        Command::Probe {
            common,
            build,
            pivot,
            fixed,
            extension_bound,
        } => {
            let spec = load_spec(&common.spec)?;
            let budget = budget(&build)?;
            let chain = build_limit(&spec, build.steps, &budget, build.seed)?;
            let p = chain.top().induced(&pivot)?;
            let r = orbit_density_probe(&spec, chain.top(), &fixed, &p, extension_bound)?;
            Ok(Outcome {
                ok: r.dense_up_to_bound(),
                report: json!({
                    "command": "probe",
                    "spec": spec.label(),
                    "steps": build.steps,
                    "seed": build.seed,
                    "budget": budget,
                    "result": r,
                }),
            })
        }
        Command::Export {
            common,
            structure,
            build,
            format,
            output,
        } => {
            let spec = load_spec(&common.spec)?;
            let s = match structure {
                Some(p) => load_structure(&spec, &p)?,
                None => build_limit(&spec, build.steps, &budget(&build)?, build.seed)?
                    .top()
                    .clone(),
            };
            let text = match format {
                Format::Dot => to_dot(&s, spec.label())?,
                Format::Json => structure_to_json(&s) + "\n",
            };
            match &output {
                Some(p) => {
                    fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{text}"),
            }
            Ok(Outcome {
                ok: true,
                report: json!({
                    "command": "export",
                    "spec": spec.label(),
                    "elements": s.len(),
                    "output": output.map(|p| p.display().to_string()),
                }),
            })
        }
    }
}

fn stalled(chain: &Chain) -> usize {
    chain
        .log()
        .iter()
        .filter(|e| matches!(e, ScheduleEntry::Stalled { .. }))
        .count()
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut fs::File) -> fraisse_core::Result<()>,
) -> Result<()> {
    let mut file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f(&mut file).map_err(|e| anyhow!(e))
}
