use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use csplab_core::algebra::{element_subset, find_nu_polymorphism_budget, verify_polymorphism, DEFAULT_STEP_BUDGET};
use csplab_core::consistency::{
    ac_solves, arc_consistency, establish_lk_consistency, establish_with, ConsistencyOptions, Scope,
};
use csplab_core::generate::{digraphs_up_to, graphs_up_to, TreeSampler};
use csplab_core::mmsnp::{connectivity_report, find_expansion, obstruction_structures, parse_mmsnp, DEFAULT_EXPANSION_BITS};
use csplab_core::pebble::{duplicator_wins, line_transcript};
use csplab_core::treewidth::{canonical_query_lk, find_decomposition};
use csplab_core::xcheck::{sound_program, xcheck_instance, XCheckReport, SCHEMA};
use csplab_core::{Error, Structure, TemplateHandle};

/// Writes a line to stdout; a closed pipe is not an error worth a panic.
macro_rules! emit {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "csplab", version, about = "Constraint satisfaction, Datalog and pebble-game toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Seed for sampled corpora.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Largest arity for which assignment classes are enumerated.
    #[arg(long, global = true)]
    cap_classes: Option<usize>,
    /// Search budget (steps or rules, depending on the command).
    #[arg(long, global = true, env = "CSPLAB_BUDGET")]
    budget: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct Width {
    #[arg(long, default_value_t = 2)]
    l: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Decide CSP(template) for an instance with the ground-truth oracle.
    Solve {
        #[arg(long)]
        template: String,
        #[arg(long)]
        instance: PathBuf,
    },
    /// Establish (l,k)-consistency.
    Consistency {
        #[arg(long)]
        template: String,
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        width: Width,
    },
    /// Solve the existential (l,k)-pebble game.
    Pebble {
        #[arg(long)]
        template: String,
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        width: Width,
        /// Print Spoiler's move transcript when Spoiler wins.
        #[arg(long)]
        emit_line: bool,
    },
    /// Arc consistency and the power-structure test.
    Ac {
        #[arg(long)]
        template: String,
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Report whether arc consistency decides CSP(template).
        #[arg(long)]
        check_solves: bool,
    },
    /// Search a tree decomposition of width (l,k).
    Treewidth {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        width: Width,
        /// Print the canonical query along the decomposition.
        #[arg(long)]
        emit_formula: bool,
    },
    /// Search a polymorphism that is near-unanimous on a subset.
    Nu {
        #[arg(long)]
        template: String,
        #[arg(long, default_value_t = 3)]
        arity: usize,
        /// Comma-separated template elements; all elements when omitted.
        #[arg(long)]
        on: Option<String>,
    },
    /// Model-check an MMSNP sentence.
    Mmsnp {
        #[arg(long)]
        sentence: PathBuf,
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Cross-validate consistency, pebble game, oracle and obstructions on a corpus.
    Xcheck {
        #[arg(long)]
        template: String,
        #[command(flatten)]
        width: Width,
        /// Instance files; when absent a generated corpus is used.
        #[arg(long)]
        instance: Vec<PathBuf>,
        /// Generated corpus: all digraphs or graphs up to isomorphism, or seeded trees.
        #[arg(long, value_enum, default_value_t = Corpus::Digraphs)]
        corpus: Corpus,
        #[arg(long, default_value_t = 4)]
        max_n: usize,
        /// Number of instances in the `trees` corpus.
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// Exclude loops from the generated corpus.
        #[arg(long)]
        no_loops: bool,
        /// Edge symbol for generated corpora.
        #[arg(long, default_value = "E")]
        symbol: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Corpus {
    Digraphs,
    Graphs,
    /// Seeded random oriented partial (l,k)-trees on up to `--max-n` vertices.
    Trees,
}

/// A verdict plus its renderings.
struct Report {
    verdict: bool,
    json: Value,
    text: String,
}

#[derive(Debug)]
struct CliError(String);

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

fn load_structure(path: &Path) -> CliResult<Structure> {
    Structure::parse(&read(path)?).map_err(|e| CliError(format!("{}: {e}", path.display())))
}

/// The only binary symbol of a signature, for naming oracle templates.
fn binary_symbol(s: &Structure) -> CliResult<String> {
    match s.signature().symbols() {
        [sym] if sym.arity == 2 => Ok(sym.name.clone()),
        _ => Err(CliError(
            "oracle templates need instances over exactly one binary symbol".into(),
        )),
    }
}

fn load_template(selector: &str, instance: Option<&Structure>, common: &Common) -> CliResult<TemplateHandle> {
    let t = match selector {
        "qorder" | "henson" => {
            let base = if selector == "qorder" {
                TemplateHandle::qorder()
            } else {
                TemplateHandle::henson()
            };
            match instance {
                Some(s) => base.renamed(&binary_symbol(s)?)?,
                None => base,
            }
        }
        other => {
            let path = other
                .strip_prefix("finite:")
                .ok_or_else(|| CliError(format!("unknown template `{other}`; use qorder, henson or finite:<path>")))?;
            TemplateHandle::finite(load_structure(Path::new(path))?)?
        }
    };
    Ok(match common.cap_classes {
        Some(cap) => t.with_class_cap(cap),
        None => t,
    })
}

fn names(s: &Structure, elements: &[usize]) -> Vec<String> {
    elements.iter().map(|&e| s.element(e).to_string()).collect()
}

fn cmd_solve(template: &str, instance: &Path, common: &Common) -> CliResult<Report> {
    let s = load_structure(instance)?;
    let t = load_template(template, Some(&s), common)?;
    let d = t.decide_csp(&s)?;
    let text = if d.satisfiable { "satisfiable" } else { "unsatisfiable" };
    Ok(Report {
        verdict: d.satisfiable,
        json: json!({"satisfiable": d.satisfiable, "witness": d.witness}),
        text: text.to_string(),
    })
}

fn cmd_consistency(template: &str, instance: &Path, w: &Width, common: &Common) -> CliResult<Report> {
    let s = load_structure(instance)?;
    let t = load_template(template, Some(&s), common)?;
    let store = establish_lk_consistency(&s, &t, w.l, w.k)?;
    let mut text = format!(
        "{} after {} revisions\n",
        if store.accepted() { "accepted" } else { "rejected" },
        store.iterations()
    );
    if store.accepted() {
        for (&mask, classes) in store.entries().iter().filter(|(&m, _)| m != 0) {
            let vars: Vec<usize> = (0..s.size()).filter(|v| mask >> v & 1 == 1).collect();
            let described: Vec<String> = classes.iter().map(|c| t.describe(c)).collect();
            text.push_str(&format!("  ({}): {}\n", names(&s, &vars).join(","), described.join(" | ")));
        }
    }
    Ok(Report {
        verdict: store.accepted(),
        json: store.to_json(&s, &t),
        text: text.trim_end().to_string(),
    })
}

fn cmd_pebble(template: &str, instance: &Path, w: &Width, emit_line: bool, common: &Common) -> CliResult<Report> {
    let s = load_structure(instance)?;
    let t = load_template(template, Some(&s), common)?;
    let out = duplicator_wins(&s, &t, w.l, w.k)?;
    let (json, mut text) = match (&out.strategy, &out.line) {
        (Some(f), _) => (
            json!({"wins": true, "strategy_size": f.len()}),
            format!("Duplicator wins; strategy family of {} positions", f.len()),
        ),
        (None, Some(line)) => (
            json!({"wins": false, "line_length": line.length}),
            format!("Spoiler wins in {} rounds", line.length),
        ),
        _ => return Err(CliError("game produced neither strategy nor line".into())),
    };
    let mut json = json;
    if emit_line {
        if let Some(line) = &out.line {
            let transcript = line_transcript(line, &s, &t);
            json["transcript"] = Value::String(transcript.clone());
            text.push('\n');
            text.push_str(transcript.trim_end());
        }
    }
    Ok(Report {
        verdict: out.wins,
        json,
        text,
    })
}

fn cmd_ac(template: &str, instance: Option<&Path>, check_solves: bool, common: &Common) -> CliResult<Report> {
    let s = instance.map(load_structure).transpose()?;
    let t = load_template(template, s.as_ref(), common)?;
    if check_solves {
        let solves = ac_solves(&t)?;
        return Ok(Report {
            verdict: solves,
            json: json!({"ac_solves": solves}),
            text: if solves { "AC solves" } else { "AC does not solve" }.to_string(),
        });
    }
    let s = s.ok_or_else(|| CliError("ac needs --instance or --check-solves".into()))?;
    let accepted = if t.as_finite().is_some() {
        !arc_consistency(&s, &t)?.failed
    } else {
        let k = t.signature().max_arity().max(2);
        let options = ConsistencyOptions {
            scope: Scope::PerFact,
            ..ConsistencyOptions::default()
        };
        establish_with(&s, &t, 1, k, options)?.accepted()
    };
    Ok(Report {
        verdict: accepted,
        json: json!({"accepted": accepted}),
        text: if accepted { "arc consistent" } else { "arc consistency fails" }.to_string(),
    })
}

fn cmd_treewidth(instance: &Path, w: &Width, emit_formula: bool) -> CliResult<Report> {
    let s = load_structure(instance)?;
    let Some(d) = find_decomposition(&s, w.l, w.k)? else {
        return Ok(Report {
            verdict: false,
            json: json!({"decomposition": null}),
            text: format!("no decomposition of width ({},{})", w.l, w.k),
        });
    };
    let mut json = json!({"decomposition": {
        "bags": d.bags.iter().map(|b| names(&s, b)).collect::<Vec<_>>(),
        "parent": d.parent,
        "l": d.l,
        "k": d.k,
    }});
    let mut text = d.to_text(&s).trim_end().to_string();
    if emit_formula {
        let f = canonical_query_lk(&s, &d)?;
        json["formula"] = Value::String(f.to_string());
        json["formula_tree"] = serde_json::to_value(&f.formula).map_err(|e| CliError(e.to_string()))?;
        text.push_str(&format!("\nformula: {f}\n{}", f.to_text().trim_end()));
    }
    Ok(Report {
        verdict: true,
        json,
        text,
    })
}

fn cmd_nu(template: &str, arity: usize, on: Option<&str>, common: &Common) -> CliResult<Report> {
    let t = load_template(template, None, common)?;
    let g = t
        .as_finite()
        .ok_or_else(|| CliError("nu needs a finite template".into()))?;
    let subset = match on {
        Some(list) => {
            let wanted: Vec<&str> = list.split(',').map(str::trim).filter(|x| !x.is_empty()).collect();
            element_subset(g, &wanted)?
        }
        None => (0..g.size()).collect(),
    };
    let budget = common.budget.unwrap_or(DEFAULT_STEP_BUDGET);
    match find_nu_polymorphism_budget(&t, arity, &subset, budget)? {
        Some(f) => {
            let csv = f.to_csv(g);
            Ok(Report {
                verdict: true,
                json: json!({"found": true, "verified": verify_polymorphism(&f, &t), "csv": csv}),
                text: csv.trim_end().to_string(),
            })
        }
        None => Ok(Report {
            verdict: false,
            json: json!({"found": false}),
            text: format!("no {arity}-ary near-unanimity polymorphism"),
        }),
    }
}

fn cmd_mmsnp(sentence: &Path, instance: Option<&Path>, common: &Common) -> CliResult<Report> {
    let phi = parse_mmsnp(&read(sentence)?).map_err(|e| CliError(format!("{}: {e}", sentence.display())))?;
    let obs = obstruction_structures(&phi);
    let connected = connectivity_report(&obs);
    let Some(path) = instance else {
        let all = connected.iter().all(|&c| c);
        let mut text = String::new();
        for (s, c) in obs.structures.iter().zip(&connected) {
            text.push_str(&format!("obstruction ({})\n{}\n", if *c { "connected" } else { "disconnected" }, s.to_text().trim_end()));
        }
        return Ok(Report {
            verdict: all,
            json: json!({
                "obstructions": obs.structures.iter().map(|s| s.to_text()).collect::<Vec<_>>(),
                "connected": connected,
            }),
            text: text.trim_end().to_string(),
        });
    };
    let s = load_structure(path)?;
    let bits = common
        .budget
        .map_or(DEFAULT_EXPANSION_BITS, |b| (64 - b.max(1).leading_zeros() as usize).saturating_sub(1));
    let expansion = find_expansion(&phi, &s, bits)?;
    let holds = expansion.is_some();
    let mut json = json!({"holds": holds, "connected": connected});
    if let Some(masks) = &expansion {
        let sets: Vec<Vec<String>> = phi
            .monadic
            .iter()
            .enumerate()
            .map(|(p, _)| (0..s.size()).filter(|&e| masks[e] >> p & 1 == 1).map(|e| s.element(e).to_string()).collect())
            .collect();
        json["expansion"] = json!(phi.monadic.iter().cloned().zip(sets).collect::<std::collections::BTreeMap<_, _>>());
    }
    Ok(Report {
        verdict: holds,
        json,
        text: if holds { "true" } else { "false" }.to_string(),
    })
}

struct XcheckArgs<'a> {
    template: &'a str,
    width: &'a Width,
    instances: &'a [PathBuf],
    corpus: Corpus,
    max_n: usize,
    samples: usize,
    loops: bool,
    symbol: &'a str,
}

fn cmd_xcheck(args: XcheckArgs<'_>, common: &Common) -> CliResult<Report> {
    let corpus: Vec<Structure> = if args.instances.is_empty() {
        match args.corpus {
            Corpus::Digraphs => digraphs_up_to(args.symbol, args.max_n.min(5), args.loops),
            Corpus::Graphs => graphs_up_to(args.symbol, args.max_n.min(6), args.loops),
            Corpus::Trees => {
                let mut sampler = TreeSampler::new(common.seed);
                let (l, k) = (args.width.l, args.width.k);
                (0..args.samples)
                    .map(|_| {
                        let n = 1 + sampler.uniform(args.max_n.clamp(1, 12));
                        let edges = sampler.partial_tree(n, l, k, 0.8);
                        let oriented = sampler.orient(&edges);
                        Structure::from_edges(args.symbol, n, &oriented)
                    })
                    .collect()
            }
        }
    } else {
        args.instances.iter().map(|p| load_structure(p)).collect::<CliResult<_>>()?
    };
    let t = load_template(args.template, corpus.first(), common)?;
    let program = sound_program(&t);
    let (l, k) = (args.width.l, args.width.k);
    let records = corpus
        .par_iter()
        .enumerate()
        .map(|(i, s)| xcheck_instance(i, s, &t, l, k, program.as_ref()))
        .collect::<csplab_core::Result<Vec<_>>>()?;
    let report = XCheckReport::new(&t, l, k, records);
    let clean = report.violations.is_empty();
    let summary = json!({
        "instances": report.records.len(),
        "violations": report.violations,
        "incomplete": report.incomplete(),
        "obstructions": report.records.iter().filter(|r| r.obstruction.is_some()).count(),
    });
    let text = format!(
        "{} instances, {} violations, {} accepted but unsatisfiable, template {} at ({l},{k})",
        report.records.len(),
        report.violations.len(),
        report.incomplete(),
        report.template
    );
    let json = json!({"records": report.records, "summary": summary});
    Ok(Report {
        verdict: clean,
        json,
        text,
    })
}

fn run(cli: &Cli) -> CliResult<(&'static str, Report)> {
    let c = &cli.common;
    Ok(match &cli.command {
        Command::Solve { template, instance } => ("solve", cmd_solve(template, instance, c)?),
        Command::Consistency {
            template,
            instance,
            width,
        } => ("consistency", cmd_consistency(template, instance, width, c)?),
        Command::Pebble {
            template,
            instance,
            width,
            emit_line,
        } => ("pebble", cmd_pebble(template, instance, width, *emit_line, c)?),
        Command::Ac {
            template,
            instance,
            check_solves,
        } => ("ac", cmd_ac(template, instance.as_deref(), *check_solves, c)?),
        Command::Treewidth {
            instance,
            width,
            emit_formula,
        } => ("treewidth", cmd_treewidth(instance, width, *emit_formula)?),
        Command::Nu { template, arity, on } => ("nu", cmd_nu(template, *arity, on.as_deref(), c)?),
        Command::Mmsnp { sentence, instance } => ("mmsnp", cmd_mmsnp(sentence, instance.as_deref(), c)?),
        Command::Xcheck {
            template,
            width,
            instance,
            corpus,
            max_n,
            samples,
            no_loops,
            symbol,
        } => (
            "xcheck",
            cmd_xcheck(
                XcheckArgs {
                    template,
                    width,
                    instances: instance,
                    corpus: *corpus,
                    max_n: *max_n,
                    samples: *samples,
                    loops: !no_loops,
                    symbol,
                },
                c,
            )?,
        ),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((command, report)) => {
            match cli.common.format {
                Format::Text => emit!("{}", report.text),
                Format::Json if command == "xcheck" => {
                    // one line per instance, then the summary, in instance order
                    for r in report.json["records"].as_array().into_iter().flatten() {
                        emit!("{}", json!({"schema": SCHEMA, "command": command, "record": r}));
                    }
                    emit!(
                        "{}",
                        json!({"schema": SCHEMA, "command": command, "verdict": report.verdict, "summary": report.json["summary"]})
                    );
                }
                Format::Json => {
                    let mut out = json!({"schema": SCHEMA, "command": command, "verdict": report.verdict});
                    if let (Some(o), Value::Object(extra)) = (out.as_object_mut(), report.json) {
                        o.extend(extra);
                    }
                    emit!("{out}");
                }
            }
            if report.verdict {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(CliError(message)) => {
            match cli.common.format {
                Format::Text => eprintln!("error: {message}"),
                Format::Json => emit!("{}", json!({"schema": SCHEMA, "error": message})),
            }
            ExitCode::from(2)
        }
    }
}
