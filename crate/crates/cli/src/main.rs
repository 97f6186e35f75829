//! `dssyk`: batch front end for the moment laboratory.
//!
//! Every output carries its parameters: CSV files start with `#` lines, JSON
//! documents with a `meta` object. Exit codes: 0 success, 2 validation error,
//! 3 numerical non-convergence, 4 regression-guard trip.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dssyk_core::edlab::{self, ModelParams, PhaseScanOptions};
use dssyk_core::freeconv;
use dssyk_core::mixed::{mixed_moment, Word};
use dssyk_core::moments::{self, MomentTable};
use dssyk_core::qcore::{f64_to_rational, rational_to_f64, MultiPoly, Rational, Var};
use dssyk_core::qhermite::QGaussianQuadrature;
use dssyk_core::LabError;
use serde::Serialize;
use serde_json::{json, Value};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest |z| tolerated by `compare` for n <= 6.
const GUARD_Z: f64 = 5.0;

#[derive(Parser, Debug)]
#[command(name = "dssyk", version, about = "Moments, spectra and free convolutions for SYK with a diagonal perturbation")]
struct Cli {
    /// Output file; standard output when omitted.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Omit the timestamp so identical runs produce identical bytes.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reduced moments m_1..m_n, symbolic (JSON) or numeric (CSV).
    Moments(MomentsArgs),
    /// Mixed moment of a word in x and d.
    Mixed(MixedArgs),
    /// Exact-diagonalization spectra, histograms or a gap scan.
    Ed(EdArgs),
    /// Analytic reduced moments against exact diagonalization.
    Compare(CompareArgs),
    /// Density of the q-Gaussian measure.
    Density(DensityArgs),
    /// Semicircle convolved with (1-r)δ_0 + rδ_θ.
    Freeconv(FreeconvArgs),
    /// Finite-N crossing and wall weights.
    Qtilde(QtildeArgs),
    /// Z_n from the conditional kernel.
    Zn(ZnArgs),
}

/// Either (q, q̃) directly or (N, p, k) to derive them.
#[derive(Args, Debug, Serialize, Clone)]
struct WeightArgs {
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    qtilde: Option<f64>,
    #[arg(long = "N")]
    n_majorana: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct MomentsArgs {
    /// Largest moment order.
    #[arg(long)]
    n: usize,
    /// Emit polynomials in (q, q̃, θ); excludes numeric flags.
    #[arg(long)]
    symbolic: bool,
    #[arg(long)]
    theta: Option<f64>,
    #[command(flatten)]
    weights: WeightArgs,
}

#[derive(Args, Debug, Serialize)]
struct MixedArgs {
    /// Word over {x, d}, e.g. xdxd.
    #[arg(long)]
    word: String,
    #[arg(long)]
    theta: Option<f64>,
    #[command(flatten)]
    weights: WeightArgs,
}

#[derive(Args, Debug, Serialize, Clone)]
struct ModelArgs {
    #[arg(long = "N")]
    n_majorana: usize,
    #[arg(long, default_value_t = 4)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 20240601)]
    seed: u64,
}

impl ModelArgs {
    fn params(&self) -> ModelParams {
        ModelParams {
            n_majorana: self.n_majorana,
            p: self.p,
            theta: self.theta,
            k: self.k,
            seed: self.seed,
            samples: self.samples,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct EdArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Emit a histogram with this many bins instead of raw spectra.
    #[arg(long)]
    bins: Option<usize>,
    /// Comma-separated θ values: emit a gap scan instead of spectra.
    #[arg(long, value_delimiter = ',')]
    scan: Option<Vec<f64>>,
    /// Gap threshold in units of the median level spacing.
    #[arg(long, default_value_t = 10.0)]
    threshold: f64,
}

#[derive(Args, Debug, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 6)]
    n_max: usize,
}

#[derive(Args, Debug, Serialize)]
struct DensityArgs {
    #[arg(long)]
    q: f64,
    /// Number of grid points across the support.
    #[arg(long, default_value_t = 200)]
    grid: usize,
}

#[derive(Args, Debug, Serialize)]
struct FreeconvArgs {
    #[arg(long)]
    r: f64,
    #[arg(long)]
    theta: f64,
    #[arg(long, default_value_t = freeconv::DEFAULT_GRID)]
    grid: usize,
    /// Write the support intervals and outliers as JSON to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct QtildeArgs {
    #[arg(long = "N")]
    n_majorana: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    k: usize,
}

#[derive(Args, Debug, Serialize)]
struct ZnArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    qtilde: f64,
}

/// Failure with its exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        let code = match e {
            LabError::Domain(_) | LabError::Parse(_) | LabError::Truncation(_) => 2,
            LabError::NonConvergence(_) | LabError::Inconsistency(_) => 3,
            LabError::Io(_) | LabError::Json(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Header data shared by every output.
struct Meta {
    command: &'static str,
    params: Value,
    extra: Vec<(String, Value)>,
    deterministic: bool,
}

impl Meta {
    fn new(command: &'static str, params: &impl Serialize, deterministic: bool) -> Self {
        Meta {
            command,
            params: serde_json::to_value(params).unwrap_or(Value::Null),
            extra: Vec::new(),
            deterministic,
        }
    }

    fn note(&mut self, key: &str, value: Value) {
        self.extra.push((key.to_string(), value));
    }

    fn timestamp(&self) -> Option<u64> {
        if self.deterministic {
            return None;
        }
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs())
    }

    fn csv_header(&self) -> String {
        let mut s = format!("# dssyk {VERSION}\n# command: {}\n# params: {}\n", self.command, self.params);
        for (k, v) in &self.extra {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        if let Some(t) = self.timestamp() {
            s.push_str(&format!("# timestamp: {t}\n"));
        }
        s
    }

    fn json(&self) -> Value {
        let mut m = json!({
            "version": VERSION,
            "command": self.command,
            "params": self.params,
        });
        for (k, v) in &self.extra {
            m[k] = v.clone();
        }
        if let Some(t) = self.timestamp() {
            m["timestamp"] = json!(t);
        }
        m
    }
}

fn emit(path: &Option<PathBuf>, body: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, body)?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializing a JSON value");
    s.push('\n');
    s
}

fn rational_json(r: &Rational) -> Value {
    json!({ "exact": r.to_string(), "value": rational_to_f64(r) })
}

/// Resolved numeric weights and how they were obtained.
struct Weights {
    q: Option<f64>,
    qt: Option<f64>,
    source: &'static str,
}

fn resolve_weights(w: &WeightArgs) -> CliResult<Weights> {
    let direct = w.q.is_some() || w.qtilde.is_some();
    let derived = w.n_majorana.is_some() || w.p.is_some() || w.k.is_some();
    if direct && derived {
        return Err(invalid("give either --q/--qtilde or --N/--p/--k, not both"));
    }
    if derived {
        let (Some(n), Some(p), Some(k)) = (w.n_majorana, w.p, w.k) else {
            return Err(invalid("--N, --p and --k must be given together"));
        };
        let q = edlab::qn_finite(p, n)?;
        let qt = edlab::qtilde_weight(p, n, k)?;
        return Ok(Weights {
            q: Some(rational_to_f64(&q)),
            qt: Some(rational_to_f64(&qt)),
            source: "derived from N, p, k",
        });
    }
    Ok(Weights {
        q: w.q,
        qt: w.qtilde,
        source: "given directly",
    })
}

/// Substitutes the supplied values; fails if a needed variable is missing.
fn specialize(poly: &MultiPoly, q: Option<f64>, qt: Option<f64>, theta: Option<f64>) -> CliResult<f64> {
    let mut p = poly.clone();
    for (var, value, flag) in [(Var::Q, q, "--q"), (Var::Qt, qt, "--qtilde"), (Var::Theta, theta, "--theta")] {
        match value {
            Some(v) => p = p.substitute(var, &f64_to_rational(v)?),
            None if p.max_degree(var).unwrap_or(0) > 0 => {
                return Err(invalid(format!("{flag} is required to evaluate {poly}")));
            }
            None => {}
        }
    }
    Ok(p.eval_f64(0.0, 0.0, 0.0))
}

fn run_moments(a: &MomentsArgs, meta: &mut Meta, out: &Option<PathBuf>) -> CliResult<()> {
    let numeric = a.theta.is_some()
        || a.weights.q.is_some()
        || a.weights.qtilde.is_some()
        || a.weights.n_majorana.is_some()
        || a.weights.p.is_some()
        || a.weights.k.is_some();
    if a.symbolic && numeric {
        return Err(invalid("--symbolic excludes numeric parameters"));
    }
    let table = MomentTable::compute(a.n)?;
    if !numeric {
        let values: Vec<Value> = table
            .values
            .iter()
            .enumerate()
            .map(|(i, p)| json!({ "n": i + 1, "text": p.to_string(), "poly": p }))
            .collect();
        return emit(out, &json_text(&json!({ "meta": meta.json(), "moments": values })));
    }
    let w = resolve_weights(&a.weights)?;
    meta.note("q", json!(w.q));
    meta.note("qtilde", json!(w.qt));
    meta.note("weights", json!(w.source));
    let mut body = String::from("n,m_n\n");
    for (i, p) in table.values.iter().enumerate() {
        body.push_str(&format!("{},{}\n", i + 1, specialize(p, w.q, w.qt, a.theta)?));
    }
    emit(out, &format!("{}{body}", meta.csv_header()))
}

fn run_mixed(a: &MixedArgs, meta: &mut Meta, out: &Option<PathBuf>) -> CliResult<()> {
    let word: Word = a.word.parse()?;
    let res = mixed_moment(&word);
    let mut doc = json!({
        "word": word.to_string(),
        "text": res.value.to_string(),
        "poly": res.value,
        "partition_count": res.partition_count,
    });
    let has_numbers = a.theta.is_some() || a.weights.q.is_some() || a.weights.qtilde.is_some() || a.weights.n_majorana.is_some();
    if has_numbers {
        let w = resolve_weights(&a.weights)?;
        meta.note("weights", json!(w.source));
        doc["value"] = json!(specialize(&res.value, w.q, w.qt, a.theta)?);
    }
    doc["meta"] = meta.json();
    emit(out, &json_text(&doc))
}

fn run_ed(a: &EdArgs, meta: &mut Meta, out: &Option<PathBuf>) -> CliResult<()> {
    let params = a.model.params();
    params.validate()?;
    if let Some(thetas) = &a.scan {
        let opts = PhaseScanOptions {
            threshold: a.threshold,
            ..PhaseScanOptions::default()
        };
        let cells = edlab::phase_scan(&params, thetas, &opts)?;
        let mut body = String::from("theta,k,gap,gap_center,median_gap,bimodal\n");
        for c in cells {
            body.push_str(&format!("{},{},{},{},{},{}\n", c.theta, c.k, c.gap, c.gap_center, c.median_gap, c.bimodal));
        }
        return emit(out, &format!("{}{body}", meta.csv_header()));
    }
    let spectra = edlab::sample_spectra(&params)?;
    let body = match a.bins {
        Some(bins) => {
            let all: Vec<f64> = spectra.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect();
            let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = String::from("left_edge,count,density\n");
            for (edge, count, density) in edlab::histogram(&all, lo, hi, bins)? {
                s.push_str(&format!("{edge},{count},{density}\n"));
            }
            s
        }
        None => {
            let mut s = String::from("sample_index,eigenvalue\n");
            for sample in &spectra {
                for e in &sample.eigenvalues {
                    s.push_str(&format!("{},{e}\n", sample.sample_index));
                }
            }
            s
        }
    };
    emit(out, &format!("{}{body}", meta.csv_header()))
}

/// Orders n <= 6 whose |z| exceeds the guard.
fn guard_violations(rows: &[edlab::CompareRow]) -> Vec<usize> {
    rows.iter()
        .filter(|r| r.n <= 6 && r.zscore.abs() > GUARD_Z)
        .map(|r| r.n)
        .collect()
}

fn run_compare(a: &CompareArgs, meta: &mut Meta, out: &Option<PathBuf>) -> CliResult<()> {
    let params = a.model.params();
    let (rows, q, qt) = edlab::compare_moments(&params, a.n_max)?;
    meta.note("q", json!(q));
    meta.note("qtilde", json!(qt));
    if params.k >= 1 {
        let printed = edlab::qtilde_weight_printed(params.p, params.n_majorana, params.k)?;
        meta.note("qtilde_printed_weighting", json!(rational_to_f64(&printed)));
    }
    if params.k == 3 {
        let short = edlab::qtilde_k3_short(params.p, params.n_majorana)?;
        meta.note("qtilde_k3_short", json!(rational_to_f64(&short)));
    }
    let mut body = String::from("n,analytic,empirical,stderr,zscore\n");
    for r in &rows {
        body.push_str(&format!("{},{},{},{},{}\n", r.n, r.analytic, r.empirical, r.stderr, r.zscore));
    }
    emit(out, &format!("{}{body}", meta.csv_header()))?;
    let tripped = guard_violations(&rows);
    if !tripped.is_empty() {
        return Err(Failure {
            code: 4,
            message: format!("regression guard: |z| > {GUARD_Z} at n = {tripped:?}"),
        });
    }
    Ok(())
}

fn run_density(a: &DensityArgs, meta: &mut Meta, out: &Option<PathBuf>) -> CliResult<()> {
    if a.grid < 2 {
        return Err(invalid("--grid must be at least 2"));
    }
    let quad = QGaussianQuadrature::new(a.q)?;
    let edge = quad.edge();
    meta.note("edge", json!(edge));
    let mut body = String::from("x,density\n");
    for i in 0..a.grid {
        let x = -edge + 2.0 * edge * i as f64 / (a.grid - 1) as f64;
        body.push_str(&format!("{x},{}\n", quad.density(x)?));
    }
    emit(out, &format!("{}{body}", meta.csv_header()))
}

fn run_freeconv(a: &FreeconvArgs, meta: &mut Meta, out: &Option<PathBuf>) -> CliResult<()> {
    let res = freeconv::semicircle_plus_atomic(a.r, a.theta, a.grid)?;
    let spike = freeconv::semicircle_outlier(a.theta);
    meta.note("mass", json!(res.measure.mass()));
    meta.note("support_intervals", json!(res.support_intervals));
    let mut body = String::from("x,density\n");
    for (x, d) in res.measure.grid.iter().zip(&res.measure.density) {
        body.push_str(&format!("{x},{d}\n"));
    }
    emit(out, &format!("{}{body}", meta.csv_header()))?;
    if let Some(path) = &a.summary {
        let doc = json!({
            "meta": meta.json(),
            "support_intervals": res.support_intervals,
            "outliers": res.outliers,
            "small_r_outlier": spike,
            "mass": res.measure.mass(),
        });
        std::fs::write(path, json_text(&doc))?;
    }
    Ok(())
}

fn run_qtilde(a: &QtildeArgs, meta: &mut Meta, out: &Option<PathBuf>) -> CliResult<()> {
    let qn = edlab::qn_finite(a.p, a.n_majorana)?;
    let qt = edlab::qtilde_weight(a.p, a.n_majorana, a.k)?;
    let printed = edlab::qtilde_weight_printed(a.p, a.n_majorana, a.k)?;
    let qj = (0..a.k)
        .map(|j| edlab::q_j(a.p, a.n_majorana, j).map(|r| rational_json(&r)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut doc = json!({
        "meta": meta.json(),
        "q_n": rational_json(&qn),
        "q_j": qj,
        "qtilde": rational_json(&qt),
        "qtilde_printed_weighting": rational_json(&printed),
    });
    if a.k == 3 {
        doc["qtilde_k3_short"] = rational_json(&edlab::qtilde_k3_short(a.p, a.n_majorana)?);
    }
    emit(out, &json_text(&doc))
}

fn run_zn(a: &ZnArgs, meta: &mut Meta, out: &Option<PathBuf>) -> CliResult<()> {
    let z = moments::z_n(a.n, a.beta, a.q, a.qtilde)?;
    emit(out, &format!("{}n,beta,z\n{},{},{z}\n", meta.csv_header(), a.n, a.beta))
}

fn run(cli: &Cli) -> CliResult<()> {
    let d = cli.deterministic;
    let out = &cli.output;
    match &cli.command {
        Command::Moments(a) => run_moments(a, &mut Meta::new("moments", a, d), out),
        Command::Mixed(a) => run_mixed(a, &mut Meta::new("mixed", a, d), out),
        Command::Ed(a) => run_ed(a, &mut Meta::new("ed", a, d), out),
        Command::Compare(a) => run_compare(a, &mut Meta::new("compare", a, d), out),
        Command::Density(a) => run_density(a, &mut Meta::new("density", a, d), out),
        Command::Freeconv(a) => run_freeconv(a, &mut Meta::new("freeconv", a, d), out),
        Command::Qtilde(a) => run_qtilde(a, &mut Meta::new("qtilde", a, d), out),
        Command::Zn(a) => run_zn(a, &mut Meta::new("zn", a, d), out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dssyk: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, zscore: f64) -> edlab::CompareRow {
        edlab::CompareRow {
            n,
            analytic: 0.0,
            empirical: 0.0,
            stderr: 1.0,
            zscore,
        }
    }

    #[test]
    fn guard_only_watches_low_orders() {
        let rows = [row(1, 0.1), row(3, -5.5), row(6, 5.0), row(7, 40.0)];
        assert_eq!(guard_violations(&rows), vec![3]);
        assert!(guard_violations(&[row(2, f64::NAN)]).is_empty());
    }

    #[test]
    fn exit_codes() {
        let code = |e: LabError| Failure::from(e).code;
        assert_eq!(code(LabError::Domain("x".into())), 2);
        assert_eq!(code(LabError::Parse("x".into())), 2);
        assert_eq!(code(LabError::Truncation("x".into())), 2);
        assert_eq!(code(LabError::NonConvergence("x".into())), 3);
        assert_eq!(code(LabError::Inconsistency("x".into())), 3);
    }

    #[test]
    fn weight_flags_are_exclusive() {
        let w = WeightArgs {
            q: Some(0.5),
            qtilde: None,
            n_majorana: Some(26),
            p: Some(4),
            k: Some(2),
        };
        assert_eq!(resolve_weights(&w).err().unwrap().code, 2);
        let partial = WeightArgs {
            q: None,
            qtilde: None,
            n_majorana: Some(26),
            p: None,
            k: Some(2),
        };
        assert_eq!(resolve_weights(&partial).err().unwrap().code, 2);
    }

    #[test]
    fn specialize_requires_needed_values() {
        let m4 = dssyk_core::moments::reduced_moment(4).unwrap();
        assert!(specialize(&m4, None, None, Some(1.0)).is_err());
        assert_eq!(specialize(&m4, None, Some(0.5), Some(1.0)).unwrap(), 6.0);
    }
}
