//! Batch front-end over the `docalc` library.
//!
//! Reads scenario JSON, runs relation generation and classification, computes
//! per-branch interventional evolution maps, combs, steering states, two-step
//! composition checks and tomography, and replays the bundled example corpus.
//!
//! Exit codes are part of the contract:
//!
//! * `0` — the command ran; classification outcomes (even "no map exists")
//!   are results, not failures
//! * `1` — a corpus fixture mismatched its stored expectations
//! * `2` — unreadable input: I/O, JSON syntax (with line context) or schema
//! * `3` — input parsed but violates a domain invariant (the message names
//!   the offending field)
//! * `4` — unknown label or fixture id
//!
//! All JSON output goes through a 17-significant-digit float formatter, so
//! identical inputs and seeds produce byte-identical reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::exit;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use docalc::analyzer::{classify_with, ClassifyOptions, Feasibility, RelationReport};
use docalc::causal::{
    build_comb, causal_tomography, classical_do_maps_for_scenario, compose_and_check,
    do_maps_for_scenario, quantum_do_map, TwoStepCircuit,
};
use docalc::classical::{classical_do_map, ProbDist, StochasticMatrix};
use docalc::corpus::{all_examples, check_fixture, find_example, FixtureReport};
use docalc::emit::json_string;
use docalc::mat::{tensor, ComplexMatrix};
use docalc::quantum::{
    ic_povm, ic_preparations, DensityOperator, QuantumChannel, UnitaryOperator,
};
use docalc::scenarios::{
    field_error, scenario_from_json, Label, QuantumScenario, Relation, Scenario,
    ScenarioLoadError,
};
use docalc::Error;

#[derive(Parser)]
#[command(name = "docalc", version, about = "Interventional evolution maps and input-output relation analysis", long_about = None)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Numerical tolerance (default: the DOCALC_TOL environment variable,
    /// else 1e-9).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for randomized stages (finite-sample tomography).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Iteration cap for the alternating-projection feasibility search.
    #[arg(long, global = true)]
    dykstra_max_iter: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

/// Effective per-run settings, resolved from flags and environment.
struct RunConfig {
    tolerance: f64,
    dykstra_max_iter: usize,
    tomography_samples: Option<usize>,
    seed: u64,
    output_format: Format,
}

impl RunConfig {
    fn resolve(opts: &GlobalOpts, samples: Option<usize>) -> RunConfig {
        let tolerance = match opts.tol {
            Some(t) => t,
            None => match std::env::var("DOCALC_TOL") {
                Ok(s) => s.trim().parse().unwrap_or_else(|_| {
                    bail(2, format_args!("DOCALC_TOL must parse as a float, got {s:?}"))
                }),
                Err(_) => 1e-9,
            },
        };
        if !(tolerance > 0.0) {
            bail(2, format_args!("tolerance must be positive, got {tolerance}"));
        }
        if samples == Some(0) {
            bail(2, format_args!("--samples must be positive"));
        }
        RunConfig {
            tolerance,
            dykstra_max_iter: opts
                .dykstra_max_iter
                .unwrap_or_else(|| docalc::analyzer::DykstraOptions::default().max_iter),
            tomography_samples: samples,
            seed: opts.seed,
            output_format: opts.format,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Inspect an input-output relation.
    #[command(subcommand)]
    Relation(RelationCmd),
    /// Per-branch evolution maps fixed by intervention (plus the
    /// unconditional map), each with its environment marginal and a printed
    /// physicality self-check.
    Domap(DomapArgs),
    /// The circuit fragment with one open intervention slot.
    Comb(ScenarioArg),
    /// Steering state of the comb; flags factorizing fiducials, whose
    /// steering output is effect-independent (no common cause).
    Steering(ScenarioArg),
    /// Gaps of the two composition strategies for a two-step circuit.
    Compose(CircuitArg),
    /// Reconstruct the comb and the evolution map from (simulated)
    /// measurement statistics and report the error against ground truth.
    Tomography(TomographyArgs),
    /// Bundled example corpus.
    #[command(subcommand)]
    Corpus(CorpusCmd),
}

#[derive(Subcommand)]
enum RelationCmd {
    /// Generate the scenario's relation and classify it.
    Classify(ScenarioArg),
}

#[derive(Args)]
struct ScenarioArg {
    /// Path to a scenario JSON file.
    scenario: PathBuf,
}

#[derive(Args)]
struct DomapArgs {
    /// Path to a scenario JSON file.
    scenario: PathBuf,
    /// Restrict to one branch label (`j` or `j,k`) or `unconditional`.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct CircuitArg {
    /// Path to a two-step circuit JSON file with fields `env`, `first`,
    /// `second`, `d_s` and `reference_input`.
    circuit: PathBuf,
}

#[derive(Args)]
struct TomographyArgs {
    /// Path to a scenario JSON file.
    scenario: PathBuf,
    /// Shots per preparation; omit for exact statistics.
    #[arg(long)]
    samples: Option<usize>,
    /// Project the reconstructed Choi matrix back onto the PSD cone.
    #[arg(long)]
    project_psd: bool,
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// List bundled fixture ids with one-line descriptions.
    List,
    /// Replay fixtures and diff every stored expectation.
    Run(CorpusRunArgs),
}

#[derive(Args)]
struct CorpusRunArgs {
    /// Fixture id (see `corpus list`).
    #[arg(required_unless_present = "all", conflicts_with = "all")]
    id: Option<String>,
    /// Run every fixture.
    #[arg(long)]
    all: bool,
}

fn main() {
    let cli = Cli::parse();
    let samples = match &cli.command {
        Command::Tomography(args) => args.samples,
        _ => None,
    };
    let cfg = RunConfig::resolve(&cli.global, samples);

    match cli.command {
        Command::Relation(RelationCmd::Classify(args)) => cmd_relation_classify(&cfg, &args),
        Command::Domap(args) => cmd_domap(&cfg, &args),
        Command::Comb(args) => cmd_comb(&cfg, &args),
        Command::Steering(args) => cmd_steering(&cfg, &args),
        Command::Compose(args) => cmd_compose(&cfg, &args),
        Command::Tomography(args) => cmd_tomography(&cfg, &args),
        Command::Corpus(CorpusCmd::List) => cmd_corpus_list(&cfg),
        Command::Corpus(CorpusCmd::Run(args)) => cmd_corpus_run(&cfg, &args),
    }
}

fn bail(code: i32, msg: impl std::fmt::Display) -> ! {
    eprintln!("error: {msg}");
    exit(code);
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::UnknownLabel(_) => 4,
        Error::Schema(_) => 2,
        _ => 3,
    }
}

fn or_bail<T>(r: docalc::Result<T>) -> T {
    r.unwrap_or_else(|e| bail(exit_code_for(&e), e))
}

fn load_scenario(path: &Path) -> Scenario {
    let text = fs::read_to_string(path)
        .unwrap_or_else(|e| bail(2, format_args!("{}: {e}", path.display())));
    match scenario_from_json(&text) {
        Ok(sc) => sc,
        Err(ScenarioLoadError::Syntax {
            line,
            column,
            message,
        }) => bail(
            2,
            format_args!("{}:{line}:{column}: {message}", path.display()),
        ),
        Err(ScenarioLoadError::Schema { message }) => {
            bail(2, format_args!("{}: {message}", path.display()))
        }
        Err(ScenarioLoadError::Domain(e)) => {
            bail(exit_code_for(&e), format_args!("{}: {e}", path.display()))
        }
    }
}

fn print_report<T: Serialize>(cfg: &RunConfig, value: &T, text: impl FnOnce() -> String) {
    let line = match cfg.output_format {
        Format::Json => json_string(value),
        Format::Text => text(),
    };
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    // A consumer that stops reading (e.g. `| head`) is not our failure.
    if writeln!(out, "{line}").is_err() || out.flush().is_err() {
        exit(0);
    }
}

// ---------------------------------------------------------------------------
// relation classify

#[derive(Serialize)]
struct ClassifyOutput {
    relation: Relation,
    report: RelationReport,
}

fn cmd_relation_classify(cfg: &RunConfig, args: &ScenarioArg) {
    let scenario = load_scenario(&args.scenario);
    let name = scenario.name().to_string();
    let relation = or_bail(scenario.generate_relation());
    let mut opts = ClassifyOptions {
        tol: cfg.tolerance,
        ..ClassifyOptions::default()
    };
    opts.dykstra.max_iter = cfg.dykstra_max_iter;
    let report = or_bail(classify_with(&relation, &opts));
    let out = ClassifyOutput { relation, report };
    print_report(cfg, &out, || classify_text(&name, &out));
}

fn classify_text(name: &str, out: &ClassifyOutput) -> String {
    let r = &out.report;
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {name} ({} relation, {} branches)", r.kind, out.relation.len());
    let _ = writeln!(s, "classification: {}", r.classification);
    let _ = writeln!(s, "functional: {}", r.functional);
    let _ = writeln!(
        s,
        "span rank: {} (informationally complete: {})",
        r.span_rank, r.informationally_complete
    );
    if let Some(w) = &r.one_to_many_witness {
        let _ = writeln!(
            s,
            "one-to-many witness: branches {} vs {} (input distance {:.6e}, output distance {:.6e})",
            w.label_a, w.label_b, w.input_distance, w.output_distance
        );
    }
    if let Some(f) = &r.linear_fit {
        let _ = writeln!(s, "linear fit: residual {:.6e}, unique: {}", f.residual, f.unique);
    }
    if let Some(w) = &r.distinguishability_witness {
        let _ = writeln!(
            s,
            "distinguishability witness: branches {} vs {} (input distance {:.6e}, output distance {:.6e})",
            w.label_a, w.label_b, w.input_distance, w.output_distance
        );
    }
    if let Some(feas) = &r.cp_or_stochastic {
        let verdict = match feas {
            Feasibility::Feasible { .. } => "FEASIBLE".to_string(),
            Feasibility::Infeasible { evidence, certified } => format!(
                "INFEASIBLE (evidence {:.6e}, {})",
                evidence,
                if *certified { "certified" } else { "numerical" }
            ),
            Feasibility::Undetermined => "UNDETERMINED".to_string(),
        };
        let _ = writeln!(s, "physical-map feasibility: {verdict}");
    }
    if let Some(scan) = &r.positivity_scan {
        let _ = writeln!(
            s,
            "positivity scan: {} states probed, worst eigenvalue {:.6e}{}",
            scan.states_probed,
            scan.worst_eigenvalue,
            if scan.violation.is_some() { " (violation found)" } else { "" }
        );
    }
    s.pop();
    s
}

// ---------------------------------------------------------------------------
// domap

#[derive(Serialize)]
struct QuantumDoMapEntry {
    label: String,
    channel: QuantumChannel,
    env_marginal: DensityOperator,
    completely_positive: bool,
    min_choi_eigenvalue: f64,
    trace_preserving: bool,
    trace_deviation: f64,
}

#[derive(Serialize)]
struct ClassicalDoMapEntry {
    label: String,
    matrix: StochasticMatrix,
    env_marginal: ProbDist,
    column_stochastic: bool,
    min_entry: f64,
    column_sum_deviation: f64,
}

#[derive(Serialize)]
#[serde(untagged)]
enum DoMapOutput {
    Quantum(Vec<QuantumDoMapEntry>),
    Classical(Vec<ClassicalDoMapEntry>),
}

fn cmd_domap(cfg: &RunConfig, args: &DomapArgs) {
    // Validate the label's format up front so typos surface as exit 4 before
    // any heavy lifting.
    if let Some(l) = &args.label {
        if l != "unconditional" {
            if let Err(e) = l.parse::<Label>() {
                bail(4, e);
            }
        }
    }

    let out = match load_scenario(&args.scenario) {
        Scenario::Quantum(q) => {
            let mut entries = Vec::new();
            let env = or_bail(q.fiducial.reduce(&[1]));
            let unconditional = or_bail(quantum_do_map(&q.interaction, &env, q.d_s1(), q.d_s2));
            entries.push(quantum_entry(cfg, unconditional.label.to_string(), unconditional));
            for (_, dm) in or_bail(do_maps_for_scenario(&q)) {
                entries.push(quantum_entry(cfg, dm.label.to_string(), dm));
            }
            if let Some(l) = &args.label {
                entries.retain(|e| &e.label == l);
                if entries.is_empty() {
                    bail(4, format_args!("unknown label {l:?} for this scenario"));
                }
            }
            DoMapOutput::Quantum(entries)
        }
        Scenario::Classical(cl) => {
            let mut entries = Vec::new();
            let env = or_bail(cl.fiducial.marginal(&[1])).flatten();
            let unconditional =
                or_bail(classical_do_map(&cl.interaction, &env, cl.d_s1(), cl.d_s2));
            entries.push(classical_entry("unconditional".into(), unconditional, env));
            for (_, dm) in or_bail(classical_do_maps_for_scenario(&cl)) {
                entries.push(classical_entry(dm.label.to_string(), dm.matrix, dm.env_marginal));
            }
            if let Some(l) = &args.label {
                entries.retain(|e| &e.label == l);
                if entries.is_empty() {
                    bail(4, format_args!("unknown label {l:?} for this scenario"));
                }
            }
            DoMapOutput::Classical(entries)
        }
    };
    print_report(cfg, &out, || domap_text(&out));
}

fn quantum_entry(cfg: &RunConfig, label: String, dm: docalc::causal::DoMap) -> QuantumDoMapEntry {
    let (completely_positive, min_choi_eigenvalue) =
        dm.channel.is_completely_positive(cfg.tolerance);
    let (trace_preserving, trace_deviation) = dm.channel.is_trace_preserving(cfg.tolerance);
    QuantumDoMapEntry {
        label,
        channel: dm.channel,
        env_marginal: dm.env_marginal,
        completely_positive,
        min_choi_eigenvalue,
        trace_preserving,
        trace_deviation,
    }
}

fn classical_entry(label: String, matrix: StochasticMatrix, env: ProbDist) -> ClassicalDoMapEntry {
    ClassicalDoMapEntry {
        label,
        min_entry: matrix.matrix().min_entry(),
        column_sum_deviation: matrix.matrix().column_sum_deviation(),
        column_stochastic: true,
        matrix,
        env_marginal: env,
    }
}

fn domap_text(out: &DoMapOutput) -> String {
    let mut s = String::new();
    match out {
        DoMapOutput::Quantum(entries) => {
            for e in entries {
                let _ = writeln!(
                    s,
                    "{}: completely positive: {} (min Choi eigenvalue {:.6e}); trace preserving: {} (deviation {:.6e})",
                    e.label, e.completely_positive, e.min_choi_eigenvalue,
                    e.trace_preserving, e.trace_deviation
                );
            }
        }
        DoMapOutput::Classical(entries) => {
            for e in entries {
                let _ = writeln!(
                    s,
                    "{}: column-stochastic: {} (min entry {:.6e}, column-sum deviation {:.6e})",
                    e.label, e.column_stochastic, e.min_entry, e.column_sum_deviation
                );
            }
        }
    }
    s.pop();
    s
}

// ---------------------------------------------------------------------------
// comb / steering

fn require_quantum(sc: Scenario, what: &str) -> QuantumScenario {
    match sc {
        Scenario::Quantum(q) => q,
        Scenario::Classical(_) => bail(
            3,
            format_args!("scenario: {what} requires a quantum scenario"),
        ),
    }
}

fn cmd_comb(cfg: &RunConfig, args: &ScenarioArg) {
    let q = require_quantum(load_scenario(&args.scenario), "a comb");
    let comb = or_bail(build_comb(&q));
    print_report(cfg, &comb, || {
        format!(
            "comb: slot dimension {} -> retained {} x final {}\nChoi matrix: {} x {}",
            comb.d_s1(),
            comb.d_s1(),
            comb.d_s2(),
            comb.channel().choi().rows(),
            comb.channel().choi().cols(),
        )
    });
}

#[derive(Serialize)]
struct SteeringOutput {
    state: DensityOperator,
    /// True when the fiducial state factorizes: steering then carries no
    /// common-cause information and the conditional output is
    /// effect-independent.
    no_common_cause: bool,
}

fn cmd_steering(cfg: &RunConfig, args: &ScenarioArg) {
    let q = require_quantum(load_scenario(&args.scenario), "a steering state");
    let comb = or_bail(build_comb(&q));
    let state = or_bail(docalc::causal::steering_state(&comb));
    let sys = or_bail(q.fiducial.reduce(&[0]));
    let env = or_bail(q.fiducial.reduce(&[1]));
    let product = tensor(sys.matrix(), env.matrix());
    let no_common_cause = q.fiducial.matrix().max_abs_diff(&product) <= cfg.tolerance;
    let out = SteeringOutput {
        state,
        no_common_cause,
    };
    print_report(cfg, &out, || {
        if out.no_common_cause {
            "no common cause: fiducial state factorizes; steering output is effect-independent"
                .to_string()
        } else {
            "common cause present: steering output depends on the chosen effect".to_string()
        }
    });
}

// ---------------------------------------------------------------------------
// compose

fn cmd_compose(cfg: &RunConfig, args: &CircuitArg) {
    let text = fs::read_to_string(&args.circuit)
        .unwrap_or_else(|e| bail(2, format_args!("{}: {e}", args.circuit.display())));
    let value: serde_json::Value = serde_json::from_str(&text).unwrap_or_else(|e| {
        bail(
            2,
            format_args!(
                "{}:{}:{}: {e}",
                args.circuit.display(),
                e.line(),
                e.column()
            ),
        )
    });
    let Some(obj) = value.as_object() else {
        bail(2, format_args!("{}: circuit file must be a JSON object", args.circuit.display()));
    };

    fn field<T: serde::de::DeserializeOwned>(
        obj: &serde_json::Map<String, serde_json::Value>,
        name: &str,
    ) -> T {
        let Some(v) = obj.get(name) else {
            bail(2, format_args!("circuit file: missing field {name:?}"));
        };
        serde_json::from_value(v.clone()).unwrap_or_else(|e| {
            let e = field_error(name, e);
            bail(exit_code_for(&e), e)
        })
    }

    let first: ComplexMatrix = field(obj, "first");
    let second: ComplexMatrix = field(obj, "second");
    let circuit = TwoStepCircuit {
        env: field(obj, "env"),
        first: or_bail(UnitaryOperator::new(first, 1e-8)),
        second: or_bail(UnitaryOperator::new(second, 1e-8)),
        d_s: field(obj, "d_s"),
        reference_input: field(obj, "reference_input"),
    };
    let report = or_bail(compose_and_check(&circuit));
    print_report(cfg, &report, || {
        format!(
            "naive composition gap: {:.6e}\njoint-mediary gap: {:.6e}",
            report.naive_gap, report.mediary_gap
        )
    });
}

// ---------------------------------------------------------------------------
// tomography

fn cmd_tomography(cfg: &RunConfig, args: &TomographyArgs) {
    let q = require_quantum(load_scenario(&args.scenario), "tomography");
    let preps = ic_preparations(q.d_s1());
    let povm = or_bail(ic_povm(q.d_s1() * q.d_s2));
    let report = or_bail(causal_tomography(
        &q,
        &preps,
        &povm,
        cfg.tomography_samples,
        cfg.seed,
        args.project_psd,
    ));
    print_report(cfg, &report, || {
        let shots = match report.comb.samples {
            Some(n) => n.to_string(),
            None => "exact".to_string(),
        };
        format!(
            "comb reconstruction error (Frobenius): {:.6e}\nevolution-map reconstruction error (Frobenius): {:.6e}\nsamples: {shots}; seed: {}; psd projection: {}",
            report.comb.choi_error_frobenius,
            report.do_map.choi_error_frobenius,
            report.comb.seed,
            report.comb.psd_projected
        )
    });
}

// ---------------------------------------------------------------------------
// corpus

#[derive(Serialize)]
struct CorpusListEntry {
    id: String,
    origin: String,
    expected_classification: String,
}

fn cmd_corpus_list(cfg: &RunConfig) {
    let entries: Vec<CorpusListEntry> = or_bail(all_examples())
        .into_iter()
        .map(|f| CorpusListEntry {
            id: f.id,
            origin: f.origin,
            expected_classification: f.expected_classification.to_string(),
        })
        .collect();
    print_report(cfg, &entries, || {
        let mut s = String::new();
        for e in &entries {
            let _ = writeln!(s, "{}: {} [{}]", e.id, e.origin, e.expected_classification);
        }
        s.pop();
        s
    });
}

fn cmd_corpus_run(cfg: &RunConfig, args: &CorpusRunArgs) {
    let fixtures = if args.all {
        or_bail(all_examples())
    } else {
        let id = args.id.as_deref().expect("clap enforces id xor --all");
        vec![or_bail(find_example(id))]
    };

    let mut reports: Vec<FixtureReport> = Vec::new();
    for fixture in &fixtures {
        reports.push(or_bail(check_fixture(fixture, cfg.tolerance)));
    }

    print_report(cfg, &reports, || {
        let mut s = String::new();
        for r in &reports {
            let verdict = if r.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "{verdict} {} ({})", r.id, r.classification);
            for failure in &r.failures {
                let _ = writeln!(s, "  - {failure}");
            }
        }
        let _ = write!(
            s,
            "{} of {} fixtures passed",
            reports.iter().filter(|r| r.passed).count(),
            reports.len()
        );
        s
    });

    if reports.iter().any(|r| !r.passed) {
        exit(1);
    }
}
