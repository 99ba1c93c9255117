use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use trace_contam_core::corpus::{self, CorpusError};
use trace_contam_core::perturb::{self, DocumentArtifact, Modality, PerturbError, TableArtifact};
use trace_contam_core::report::{aggregate, analyze_all, sort_analyses, PairFailure};
use trace_contam_core::taxonomy::AnalysisError;
use trace_contam_core::{analyze_pair, generate_corpus, validate_trace, Trace};

use crate::config::AnalysisArgs;
use crate::error::CliError;
use crate::output::write_atomic;

pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

fn read_trace(path: &Path) -> Result<Trace, CliError> {
    corpus::read_trace(path).map_err(|e| CliError::Parse(e.to_string()))
}

fn analysis_error(e: AnalysisError) -> CliError {
    CliError::Analysis(e.to_string())
}

pub fn analyze(clean: &Path, perturbed: &Path, out: Option<&Path>, args: &AnalysisArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let (c, p) = (read_trace(clean)?, read_trace(perturbed)?);
    let record = analyze_pair(&c, &p, &cfg).map_err(analysis_error)?;
    let body = serde_json::to_string_pretty(&record).expect("pair record serializes") + "\n";
    match out {
        Some(path) => write_atomic(path, body.as_bytes()),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

pub fn batch(corpus_dir: &Path, out: &Path, args: &AnalysisArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let dirs = corpus::task_dirs(corpus_dir).map_err(|e| CliError::Parse(e.to_string()))?;

    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for dir in &dirs {
        let task = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match corpus::read_pair(dir) {
            Ok(pair) => pairs.push(pair),
            Err(e) => failures.push(PairFailure { task, message: failure_message(&e) }),
        }
    }
    let mut analyses = Vec::with_capacity(pairs.len());
    for r in analyze_all(&pairs, &cfg) {
        match r {
            Ok(a) => analyses.push(a),
            Err(f) => failures.push(f),
        }
    }
    sort_analyses(&mut analyses);
    let failed = failures.len();
    let report = aggregate(&analyses, failures, &cfg);

    let mut lines = String::new();
    for a in &analyses {
        lines.push_str(&serde_json::to_string(a).expect("pair record serializes"));
        lines.push('\n');
    }
    write_atomic(&out.join(PAIRS_FILE), lines.as_bytes())?;
    write_atomic(&out.join(REPORT_JSON), report.to_json().as_bytes())?;
    let text = report.render_text();
    write_atomic(&out.join(REPORT_TEXT), text.as_bytes())?;
    print!("{text}");

    if failed > 0 {
        return Err(CliError::PartialBatch { failed, total: dirs.len() });
    }
    Ok(())
}

fn failure_message(e: &CorpusError) -> String {
    if e.is_not_found() {
        format!("missing input: {e}")
    } else {
        e.to_string()
    }
}

pub struct PerturbRequest {
    pub artifact: PathBuf,
    pub op: String,
    pub seed: u64,
    pub params: Vec<String>,
    pub affected_ids: Vec<String>,
    pub out: Option<PathBuf>,
    pub record: Option<PathBuf>,
}

fn parse_params(raw: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for kv in raw {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param expects NAME=VALUE, got `{kv}`")))?;
        if out.insert(k.trim().to_string(), v.to_string()).is_some() {
            return Err(CliError::Usage(format!("parameter `{}` given twice", k.trim())));
        }
    }
    Ok(out)
}

fn perturb_error(e: PerturbError) -> CliError {
    match e {
        PerturbError::InapplicableOperator { .. } => CliError::Analysis(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

fn default_out(artifact: &Path, op: &str, seed: u64) -> PathBuf {
    let stem = artifact.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "artifact".into());
    let name = match artifact.extension() {
        Some(ext) => format!("{stem}.{op}.{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{op}.{seed}"),
    };
    artifact.with_file_name(name)
}

pub fn perturb(req: PerturbRequest) -> Result<(), CliError> {
    let spec = perturb::lookup(&req.op).ok_or_else(|| perturb_error(PerturbError::UnknownOperator(req.op.clone())))?;
    let params = parse_params(&req.params)?;
    let is_csv = req.artifact.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let modality = if is_csv { Modality::Tabular } else { Modality::Document };
    if modality != spec.modality {
        return Err(perturb_error(PerturbError::WrongModality { op: spec.name.to_string(), expected: spec.modality }));
    }
    let text = std::fs::read_to_string(&req.artifact)
        .map_err(|e| CliError::Parse(format!("{}: {e}", req.artifact.display())))?;
    let parse_err = |e: perturb::ArtifactError| CliError::Parse(format!("{}: {e}", req.artifact.display()));
    let (body, mut record) = match spec.modality {
        Modality::Tabular => {
            let t = TableArtifact::from_csv(&text).map_err(parse_err)?;
            let (out, rec) = perturb::apply_tabular(&t, spec.name, &params, req.seed).map_err(perturb_error)?;
            (out.to_csv(), rec)
        }
        Modality::Document => {
            let d = DocumentArtifact::parse(&text).map_err(parse_err)?;
            let (out, rec) = perturb::apply_document(&d, spec.name, &params, req.seed).map_err(perturb_error)?;
            (out.render(), rec)
        }
    };
    record.affected_ids = req.affected_ids;
    let out = req.out.unwrap_or_else(|| default_out(&req.artifact, spec.name, req.seed));
    let record_path = req.record.unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".record.json");
        PathBuf::from(s)
    });
    write_atomic(&out, body.as_bytes())?;
    write_atomic(&record_path, (record.to_json() + "\n").as_bytes())?;
    println!("{}\n{}", out.display(), record_path.display());
    Ok(())
}

pub fn generate(count: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let pairs = generate_corpus(count, seed);
    corpus::write_corpus(out, &pairs).map_err(|e| match e {
        CorpusError::Io { path, source } => CliError::Output { path, source },
        other => CliError::Parse(other.to_string()),
    })?;
    println!("wrote {} pairs to {}", pairs.len(), out.display());
    Ok(())
}

pub fn validate(path: &Path) -> Result<(), CliError> {
    let trace = read_trace(path)?;
    let violations = validate_trace(&trace);
    if violations.is_empty() {
        println!("ok: {} events", trace.len());
        return Ok(());
    }
    for v in &violations {
        match v.event_index {
            Some(i) => println!("event {i}: {}", v.rule),
            None => println!("trace: {}", v.rule),
        }
    }
    Err(CliError::Analysis(format!("{} rule violation(s)", violations.len())))
}

pub fn list_catalog() -> Result<(), CliError> {
    for spec in perturb::catalog() {
        let params: Vec<String> = spec.params.iter().map(|p| format!("{}={}", p.name, p.default)).collect();
        let line = format!("{:<24} {:<9} {}", spec.name, spec.modality, params.join(" "));
        println!("{}", line.trim_end());
    }
    Ok(())
}
