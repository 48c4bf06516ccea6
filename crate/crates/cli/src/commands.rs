//! Command bodies. Each builds all of its output files in memory first, so
//! a failing command leaves nothing behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rica::distcorr::{dcor_n, DependenceStats, PairSample};
use rica::evalsim::{
    run_benchmark, summarize, write_trials_csv, BenchConfig, MethodKind, SummaryTable,
};
use rica::ica::{dcovica_fit, rica_fit, UnmixResult};
use rica::par::Execution;
use rica::transforms::{biloop_dcor_stats, bowl_dcor_stats, BiloopParams, MadScale};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::input::{matrix_csv, read_bytes, read_table, Table};
use crate::manifest::{
    BenchSettings, DcorSettings, InputDigest, Invocation, RunManifest, Transform, UnmixSettings,
    MANIFEST_FILE,
};

/// Files to write plus text for stdout.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub stdout: String,
}

impl Outcome {
    /// Adds the manifest (listing every file) and writes all files into `dir`.
    pub fn commit(
        mut self,
        dir: &Path,
        invocation: Invocation,
        inputs: Vec<InputDigest>,
    ) -> CliResult<String> {
        let mut outputs: Vec<String> = self.files.iter().map(|f| f.0.clone()).collect();
        outputs.push(MANIFEST_FILE.to_string());
        let manifest = RunManifest {
            seed: invocation.seed(),
            invocation,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            outputs,
        };
        self.files
            .push((MANIFEST_FILE.to_string(), manifest.to_json()));
        let io = |e: std::io::Error| CliError::Input(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body).map_err(io)?;
        }
        Ok(self.stdout)
    }
}

/// Absolute form of a user path, used as its identity in manifests.
pub fn canonical(path: &Path) -> CliResult<String> {
    let abs = std::fs::canonicalize(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(abs.to_string_lossy().into_owned())
}

fn load_input(path: &str, expected: Option<&InputDigest>) -> CliResult<(Table, InputDigest)> {
    let digest = InputDigest::of(path, &read_bytes(Path::new(path))?);
    if let Some(want) = expected {
        if want.sha256 != digest.sha256 {
            return Err(CliError::Input(format!(
                "{path}: contents changed since the manifest was written"
            )));
        }
    }
    Ok((read_table(Path::new(path))?, digest))
}

fn expected<'a>(digests: Option<&'a [InputDigest]>, path: &str) -> Option<&'a InputDigest> {
    digests.and_then(|ds| ds.iter().find(|d| d.path == path))
}

#[derive(Debug, Serialize)]
struct UnmixReport {
    method: MethodKind,
    n: usize,
    d: usize,
    objective: f64,
    evaluations: usize,
    degenerate_terms: usize,
    amari: Option<f64>,
}

fn trace_csv(fit: &UnmixResult) -> String {
    let stages = fit.sources.ncols().saturating_sub(1);
    let mut out = String::from("sweep,accepted,objective,permutation");
    for k in 1..=stages {
        let _ = write!(out, ",stage_{k}");
    }
    out.push('\n');
    for t in &fit.objective_trace {
        let perm: Vec<String> = t.permutation.iter().map(|p| p.to_string()).collect();
        let _ = write!(
            out,
            "{},{},{},{}",
            t.sweep,
            t.accepted,
            t.objective,
            perm.join(" ")
        );
        for v in &t.stage_values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn unmix(
    settings: &UnmixSettings,
    json: bool,
    digests: Option<&[InputDigest]>,
) -> CliResult<(Outcome, Vec<InputDigest>)> {
    let (table, digest) = load_input(&settings.input, expected(digests, &settings.input))?;
    let mut inputs = vec![digest];
    let x = table.data;
    let d = x.ncols();
    if d < 2 {
        return Err(CliError::Input(format!(
            "{}: need at least 2 columns, found {d}",
            settings.input
        )));
    }
    let mixing = match &settings.true_mixing {
        Some(path) => {
            let (t, digest) = load_input(path, expected(digests, path))?;
            if t.data.shape() != (d, d) {
                return Err(CliError::Input(format!(
                    "{path}: true mixing must be {d}x{d}, found {}x{}",
                    t.data.nrows(),
                    t.data.ncols()
                )));
            }
            inputs.push(digest);
            Some(t.data)
        }
        None => None,
    };
    if settings.mcd_starts == 0 {
        return Err(CliError::Config("mcd-starts: must be positive".into()));
    }
    let bench = BenchConfig {
        sweeps: settings.sweeps,
        mcd_starts: settings.mcd_starts,
        ..BenchConfig::default()
    };
    let cfg = bench.fit_config(settings.method, settings.seed);
    let fit = match settings.method {
        MethodKind::Dcovica => dcovica_fit(&x, &cfg)?,
        MethodKind::Rica | MethodKind::RicaNoSweeps => rica_fit(&x, &cfg)?,
    };
    let amari = mixing.as_ref().map(|a| fit.amari_against(a)).transpose()?;

    let names: Vec<String> = (1..=d).map(|k| format!("s{k}")).collect();
    let report = UnmixReport {
        method: settings.method,
        n: x.nrows(),
        d,
        objective: fit.objective,
        evaluations: fit.evaluations,
        degenerate_terms: fit.degenerate_terms,
        amari,
    };
    let stdout = if json {
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        let mut s = format!(
            "method {}\nobjective {}\nevaluations {}\n",
            settings.method.label(),
            fit.objective,
            fit.evaluations
        );
        if let Some(a) = amari {
            let _ = writeln!(s, "amari {a}");
        }
        s
    };
    let outcome = Outcome {
        files: vec![
            ("sources.csv".into(), matrix_csv(&fit.sources, Some(&names))),
            ("unmixing.csv".into(), matrix_csv(&fit.unmixing, None)),
            ("trace.csv".into(), trace_csv(&fit)),
        ],
        stdout,
    };
    Ok((outcome, inputs))
}

#[derive(Debug, Serialize)]
struct BenchReport<'a> {
    trials: usize,
    failures: usize,
    summary: &'a SummaryTable,
}

pub fn bench(settings: &BenchSettings, json: bool) -> CliResult<Outcome> {
    settings
        .bench
        .validate()
        .map_err(|e| CliError::Config(strip_kind(e)))?;
    let trials = run_benchmark(&settings.bench, Execution::Parallel)?;
    let table = summarize(&trials, &settings.bench.methods);
    let mut trials_csv = Vec::new();
    write_trials_csv(&mut trials_csv, &trials, settings.timing).expect("in-memory write");
    let mut summary_csv = Vec::new();
    table.write_csv(&mut summary_csv).expect("in-memory write");
    let summary_csv = String::from_utf8(summary_csv).expect("ascii");
    let stdout = if json {
        let report = BenchReport {
            trials: trials.len(),
            failures: table.failures,
            summary: &table,
        };
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        let mut s = format!(
            "Amari error (x100), {} trials, {} failed\n",
            trials.len(),
            table.failures
        );
        s.push_str(&summary_csv);
        s
    };
    Ok(Outcome {
        files: vec![
            (
                "trials.csv".into(),
                String::from_utf8(trials_csv).expect("ascii"),
            ),
            ("summary.csv".into(), summary_csv),
        ],
        stdout,
    })
}

fn strip_kind(e: rica::Error) -> String {
    match e {
        rica::Error::Validation(msg) => msg,
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Moments {
    pub dcov: f64,
    pub dvar_x: f64,
    pub dvar_y: f64,
    pub dcor: f64,
}

impl From<&DependenceStats> for Moments {
    fn from(s: &DependenceStats) -> Self {
        Moments {
            dcov: s.dcov,
            dvar_x: s.dvar_x,
            dvar_y: s.dvar_y,
            dcor: s.dcor,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DcorReport {
    pub n: usize,
    pub cols_x: Vec<usize>,
    pub cols_y: Vec<usize>,
    pub transform: Transform,
    pub raw: Moments,
    pub transformed: Option<Moments>,
}

fn columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    x.select_columns(cols)
}

pub fn dcor(
    settings: &DcorSettings,
    digests: Option<&[InputDigest]>,
) -> CliResult<(DcorReport, InputDigest)> {
    let (table, digest) = load_input(&settings.input, expected(digests, &settings.input))?;
    let p = table.data.ncols();
    for (flag, cols) in [("cols-x", &settings.cols_x), ("cols-y", &settings.cols_y)] {
        if cols.is_empty() {
            return Err(CliError::Config(format!("{flag}: no columns selected")));
        }
        if let Some(c) = cols.iter().find(|&&c| c >= p) {
            return Err(CliError::Config(format!(
                "{flag}: column {c} out of range, the file has {p} columns (0-based)"
            )));
        }
        let mut sorted = cols.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config(format!("{flag}: repeated column")));
        }
    }
    if let Some(c) = settings.cols_x.iter().find(|c| settings.cols_y.contains(c)) {
        return Err(CliError::Config(format!(
            "cols-y: column {c} is also in cols-x"
        )));
    }
    let x = columns(&table.data, &settings.cols_x);
    let y = columns(&table.data, &settings.cols_y);
    let raw = dcor_n(&PairSample::new(&x, &y)?);
    let transformed = match settings.transform {
        Transform::None => None,
        Transform::Bowl => Some(bowl_dcor_stats(&x, &y)?),
        Transform::Biloop => Some(biloop_dcor_stats(
            &x,
            &y,
            &BiloopParams::default(),
            MadScale::Raw,
        )?),
    };
    let report = DcorReport {
        n: x.nrows(),
        cols_x: settings.cols_x.clone(),
        cols_y: settings.cols_y.clone(),
        transform: settings.transform,
        raw: (&raw).into(),
        transformed: transformed.as_ref().map(Into::into),
    };
    Ok((report, digest))
}

pub fn dcor_text(report: &DcorReport, json: bool) -> String {
    if json {
        return serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    }
    let mut s = String::new();
    let mut block = |prefix: &str, m: &Moments| {
        let _ = writeln!(s, "{prefix}dcov {}", m.dcov);
        let _ = writeln!(s, "{prefix}dvar_x {}", m.dvar_x);
        let _ = writeln!(s, "{prefix}dvar_y {}", m.dvar_y);
        let _ = writeln!(s, "{prefix}dcor {}", m.dcor);
    };
    block("", &report.raw);
    if let Some(t) = &report.transformed {
        let prefix = match report.transform {
            Transform::Bowl => "bowl_",
            _ => "biloop_",
        };
        block(prefix, t);
    }
    s
}

/// Runs the command recorded in a manifest, writing into `out_dir`.
pub fn replay(manifest_path: &Path, out_dir: Option<PathBuf>) -> CliResult<String> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = match out_dir {
        Some(d) => d,
        None => manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
    };
    let digests = Some(manifest.inputs.as_slice());
    match manifest.invocation.clone() {
        Invocation::Unmix(s) => {
            let (outcome, inputs) = unmix(&s, false, digests)?;
            outcome.commit(&dir, Invocation::Unmix(s), inputs)
        }
        Invocation::Bench(s) => bench(&s, false)?.commit(&dir, Invocation::Bench(s), Vec::new()),
        Invocation::Dcor(s) => {
            let (report, digest) = dcor(&s, digests)?;
            let outcome = Outcome {
                files: vec![("report.json".into(), dcor_text(&report, true))],
                stdout: dcor_text(&report, false),
            };
            outcome.commit(&dir, Invocation::Dcor(s), vec![digest])
        }
    }
}
