//! Experiment drivers: stability sweeps, singular-value comparison tables,
//! RF training runs and Kaon histograms, with CSV output and a JSON
//! manifest per run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SpecError};
use crate::iterations::{self, IterationPlan, Scheme};
use crate::kaon::{self, MapConfig};
use crate::linalg::{eps_sv, haar_factor_matrix, log_spaced_spectrum, singular_values, Precision};
use crate::rfmodel::{self, Activation, RfMethod};

/// Literal written in place of `eps_sv` for a diverged run.
pub const DIVERGED: &str = "diverged";
/// Literal written when a grid point has no valid plan.
pub const NOT_APPLICABLE: &str = "n/a";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<(usize, usize)>,
    pub kappas: Vec<f64>,
    pub precisions: Vec<Precision>,
    pub exponents: Vec<(u32, u32)>,
    pub methods: Vec<(Scheme, usize)>,
    #[serde(default)]
    pub regularized: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| Err(SpecError::Config { path: path.into(), msg });
        if let Some(k) = self.kappas.iter().find(|&&k| !(k >= 1.0)) {
            return bad("kappas", format!("{k} < 1"));
        }
        if let Some((s, _)) = self.methods.iter().find(|(_, t)| *t == 0) {
            return bad("methods", format!("{s} has zero steps"));
        }
        if let Some(&(a, b)) = self.exponents.iter().find(|(_, b)| *b == 0) {
            return bad("exponents", format!("{a}/{b} has zero denominator"));
        }
        if let Some(&(m, n)) = self.sizes.iter().find(|(m, n)| *m == 0 || *n == 0) {
            return bad("sizes", format!("{m}x{n}"));
        }
        Ok(())
    }

    /// Grid points in output order.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &(m, n) in &self.sizes {
            for &kappa in &self.kappas {
                for &precision in &self.precisions {
                    for &(a, b) in &self.exponents {
                        for &(scheme, steps) in &self.methods {
                            out.push(GridPoint { m, n, kappa, precision, a, b, scheme, steps });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub m: usize,
    pub n: usize,
    pub kappa: f64,
    pub precision: Precision,
    pub a: u32,
    pub b: u32,
    pub scheme: Scheme,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SweepOutcome {
    Finite(f64),
    Diverged,
    /// The scheme does not support this exponent; carries the reason.
    NotApplicable(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: GridPoint,
    pub regularized: bool,
    pub outcome: SweepOutcome,
    pub wall_time: f64,
    pub g_mm: u64,
    pub s_mm: u64,
    pub qr: u64,
    /// Whether the recorded counts equal the closed-form prediction.
    pub ledger_matches: bool,
}

impl SweepRow {
    pub fn eps_sv(&self) -> Option<f64> {
        match self.outcome {
            SweepOutcome::Finite(e) => Some(e),
            _ => None,
        }
    }

    pub fn eps_field(&self) -> String {
        match &self.outcome {
            SweepOutcome::Finite(e) => format!("{e:.6e}"),
            SweepOutcome::Diverged => DIVERGED.into(),
            SweepOutcome::NotApplicable(_) => NOT_APPLICABLE.into(),
        }
    }
}

/// SplitMix64 step, used to derive one seed per grid point.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the test matrix for a grid point. Points that differ only in
/// exponent, method or precision share their matrix.
fn matrix_seed(seed: u64, p: &GridPoint) -> u64 {
    let key = (p.m as u64) << 40 ^ (p.n as u64) << 20 ^ p.kappa.to_bits().rotate_left(7);
    split_seed(seed, key)
}

pub fn run_point(p: &GridPoint, regularized: bool, seed: u64) -> SweepRow {
    let start = Instant::now();
    let k = p.m.min(p.n);
    let spectrum = log_spaced_spectrum(k, p.kappa);
    let mut row = SweepRow {
        point: *p,
        regularized,
        outcome: SweepOutcome::Diverged,
        wall_time: 0.0,
        g_mm: 0,
        s_mm: 0,
        qr: 0,
        ledger_matches: true,
    };
    let plan = match IterationPlan::new(p.a, p.b, p.scheme, p.steps) {
        Ok(plan) if regularized => plan.with_epsilon(IterationPlan::auto_epsilon(p.precision)),
        Ok(plan) => plan,
        Err(e) => {
            row.outcome = SweepOutcome::NotApplicable(e.to_string());
            return row;
        }
    };
    // The reference spectrum is that of the input as cast, so rounding of
    // the input itself is not charged to the scheme.
    let outcome = haar_factor_matrix(p.m, p.n, &spectrum, matrix_seed(seed, p), p.precision)
        .and_then(|g| Ok((singular_values(&g)?, iterations::run(&g, &plan, p.precision)?)));
    match outcome {
        Ok((input_s, res)) => {
            row.g_mm = res.ledger.g_mm;
            row.s_mm = res.ledger.s_mm;
            row.qr = res.ledger.qr;
            row.ledger_matches = res.diverged || res.ledger == plan.expected_ledger();
            if !res.diverged {
                row.outcome = match singular_values(&res.output) {
                    Ok(s) => {
                        let e = eps_sv(&s, &input_s, plan.a, plan.b);
                        if e.is_finite() {
                            SweepOutcome::Finite(e)
                        } else {
                            SweepOutcome::Diverged
                        }
                    }
                    Err(_) => SweepOutcome::Diverged,
                };
            }
        }
        Err(SpecError::NonFinite) => {}
        Err(e) => row.outcome = SweepOutcome::NotApplicable(e.to_string()),
    }
    row.wall_time = start.elapsed().as_secs_f64();
    row
}

/// Runs every grid point; failures become rows, never errors.
pub fn stability_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    Ok(cfg.points().iter().map(|p| run_point(p, cfg.regularized, cfg.seed)).collect())
}

pub const SWEEP_HEADER: [&str; 13] =
    ["m", "n", "kappa", "precision", "a", "b", "scheme", "steps", "regularized", "eps_sv", "g_mm", "s_mm", "qr"];

pub fn write_sweep_csv(w: impl Write, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        let p = &r.point;
        out.write_record([
            p.m.to_string(),
            p.n.to_string(),
            format!("{:e}", p.kappa),
            p.precision.to_string(),
            p.a.to_string(),
            p.b.to_string(),
            p.scheme.to_string(),
            p.steps.to_string(),
            r.regularized.to_string(),
            r.eps_field(),
            r.g_mm.to_string(),
            r.s_mm.to_string(),
            r.qr.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvCompareConfig {
    pub m: usize,
    pub n: usize,
    pub kappa: f64,
    pub a: u32,
    pub b: u32,
    pub methods: Vec<Scheme>,
    pub steps: usize,
    #[serde(default = "default_precision")]
    pub precision: Precision,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_precision() -> Precision {
    Precision::F64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvTable {
    pub sigma: Vec<f64>,
    pub exact: Vec<f64>,
    pub regularized: Vec<f64>,
    /// One column per method; `None` for a diverged or unsupported run.
    pub methods: Vec<(Scheme, Option<Vec<f64>>)>,
    pub epsilon: f64,
}

impl SvTable {
    /// Largest `|out/exact − 1|` for a method column.
    pub fn max_rel_dev(&self, scheme: Scheme) -> Option<f64> {
        let (_, col) = self.methods.iter().find(|(s, _)| *s == scheme)?;
        let col = col.as_ref()?;
        Some(col.iter().zip(&self.exact).fold(0.0_f64, |m, (o, t)| m.max((o / t - 1.0).abs())))
    }
}

/// Output spectra next to the exact and regularised targets. The
/// regularised target uses `ε` in the units of `G` itself.
pub fn sv_comparison(cfg: &SvCompareConfig) -> Result<SvTable> {
    if !(cfg.kappa >= 1.0) {
        return Err(SpecError::Config { path: "kappa".into(), msg: format!("{} < 1", cfg.kappa) });
    }
    let k = cfg.m.min(cfg.n);
    let sigma = log_spaced_spectrum(k, cfg.kappa);
    let g = haar_factor_matrix(cfg.m, cfg.n, &sigma, cfg.seed, cfg.precision)?;
    let c = cfg.a as f64 / cfg.b as f64;
    let epsilon = cfg.epsilon.unwrap_or(0.0);
    let nu = g.frob_norm() + epsilon;
    // The iterations regularise the normalised Gram by ε; in G units that is ε·ν².
    let eps_g = epsilon * nu * nu;
    let exact = sigma.iter().map(|s| s.powf(1.0 - 2.0 * c)).collect();
    let regularized: Vec<f64> = sigma.iter().map(|s| s * (s * s + eps_g).powf(-c)).collect();
    // Sorted output values go to the indices ranked the same in the target,
    // since the map reverses the order of σ once a/b > 1/2.
    let mut rank: Vec<usize> = (0..k).collect();
    rank.sort_by(|&i, &j| regularized[j].total_cmp(&regularized[i]));
    let mut methods = Vec::with_capacity(cfg.methods.len());
    for &scheme in &cfg.methods {
        let col = IterationPlan::new(cfg.a, cfg.b, scheme, cfg.steps)
            .map(|p| p.with_epsilon(epsilon))
            .and_then(|plan| iterations::run(&g, &plan, cfg.precision))
            .ok()
            .filter(|r| !r.diverged)
            .and_then(|r| singular_values(&r.output).ok())
            .map(|s| {
                let mut col = vec![0.0; k];
                for (&i, v) in rank.iter().zip(s) {
                    col[i] = v;
                }
                col
            });
        methods.push((scheme, col));
    }
    Ok(SvTable { sigma, exact, regularized, methods, epsilon })
}

pub fn write_sv_csv(w: impl Write, t: &SvTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["index".to_string(), "sigma".into(), "exact".into(), "regularized".into()];
    header.extend(t.methods.iter().map(|(s, _)| s.to_string()));
    out.write_record(&header)?;
    for i in 0..t.sigma.len() {
        let mut rec = vec![i.to_string(), format!("{:.12e}", t.sigma[i]), format!("{:.12e}", t.exact[i])];
        rec.push(format!("{:.12e}", t.regularized[i]));
        for (_, col) in &t.methods {
            rec.push(col.as_ref().map_or(DIVERGED.to_string(), |c| format!("{:.12e}", c[i])));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfConfig {
    #[serde(default = "default_o")]
    pub o: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

fn default_o() -> usize {
    120
}
fn default_d() -> usize {
    100
}
fn default_n() -> usize {
    400
}
fn default_activation() -> Activation {
    Activation::Relu
}

impl Default for RfConfig {
    fn default() -> Self {
        Self { o: default_o(), d: default_d(), n: default_n(), activation: default_activation(), seed: 0 }
    }
}

impl RfConfig {
    pub fn build(&self) -> Result<rfmodel::RfProblem> {
        rfmodel::make_rf_problem(self.o, self.d, self.n, self.activation, self.seed)
    }
}

pub fn write_trace_csv(w: impl Write, trace: &rfmodel::RfTrace) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "loss", "eta", "c", "gamma", "phi"])?;
    for r in &trace.rows {
        out.write_record([
            r.step.to_string(),
            format!("{:.12e}", r.loss),
            format!("{:.12e}", r.eta),
            format!("{:.6}", r.c),
            format!("{:.12e}", r.gamma),
            format!("{:.12e}", r.phi),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_histogram_csv(w: impl Write, h: &kaon::Histogram) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_left", "bin_right", "count"])?;
    for (i, c) in h.counts.iter().enumerate() {
        let (l, r) = h.edges(i);
        out.write_record([format!("{l:.6}"), format!("{r:.6}"), c.to_string()])?;
    }
    out.write_record(["overflow".to_string(), "overflow".to_string(), h.overflow.to_string()])?;
    out.flush()?;
    Ok(())
}

/// Experiment file: `{"kind": "sweep" | "svcomp" | "rf" | "kaon", ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Experiment {
    Sweep(SweepConfig),
    Svcomp(SvCompareConfig),
    Rf {
        #[serde(default)]
        problem: RfConfig,
        methods: Vec<RfMethod>,
        steps: usize,
        #[serde(default = "default_lr")]
        lr: f64,
    },
    Kaon(MapConfig),
}

fn default_lr() -> f64 {
    rfmodel::DEFAULT_LR
}

impl Experiment {
    pub fn seed(&self) -> u64 {
        match self {
            Experiment::Sweep(c) => c.seed,
            Experiment::Svcomp(c) => c.seed,
            Experiment::Rf { problem, .. } => problem.seed,
            Experiment::Kaon(c) => c.seed,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Sweep(_) => "sweep",
            Experiment::Svcomp(_) => "svcomp",
            Experiment::Rf { .. } => "rf",
            Experiment::Kaon(_) => "kaon",
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RfBody {
    #[serde(default)]
    problem: RfConfig,
    methods: Vec<RfMethod>,
    steps: usize,
    #[serde(default = "default_lr")]
    lr: f64,
}

fn body<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(v)
        .map_err(|e| SpecError::Config { path: e.path().to_string(), msg: e.inner().to_string() })
}

/// Parses an experiment, reporting the JSON path of the offending field.
/// The `kind` tag is read first so the body keeps its full path.
pub fn parse_experiment(text: &str) -> Result<Experiment> {
    let mut v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| SpecError::Config { path: ".".into(), msg: e.to_string() })?;
    let kind = v
        .as_object_mut()
        .and_then(|o| o.remove("kind"))
        .ok_or_else(|| SpecError::Config { path: "kind".into(), msg: "missing experiment kind".into() })?;
    match kind.as_str() {
        Some("sweep") => Ok(Experiment::Sweep(body(v)?)),
        Some("svcomp") => Ok(Experiment::Svcomp(body(v)?)),
        Some("kaon") => Ok(Experiment::Kaon(body(v)?)),
        Some("rf") => {
            let RfBody { problem, methods, steps, lr } = body(v)?;
            Ok(Experiment::Rf { problem, methods, steps, lr })
        }
        _ => Err(SpecError::Config {
            path: "kind".into(),
            msg: format!("unknown kind {kind}; expected sweep, svcomp, rf or kaon"),
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    /// Per-output notes such as failed rows or diverged runs.
    pub notes: Vec<String>,
    pub wall_time_s: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(dir: &Path, name: &str, body: &[u8], outputs: &mut Vec<String>) -> Result<()> {
    fs::write(dir.join(name), body)?;
    outputs.push(name.to_string());
    Ok(())
}

/// Runs the experiment in `config_path`, writing CSV files and
/// `manifest.json` into `out_dir`.
pub fn run_experiment(config_path: &Path, out_dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(config_path)?;
    let exp = parse_experiment(&text)?;
    run_parsed(&exp, text.as_bytes(), out_dir)
}

pub fn run_parsed(exp: &Experiment, raw_config: &[u8], out_dir: &Path) -> Result<Manifest> {
    let start = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    let mut notes = Vec::new();
    match exp {
        Experiment::Sweep(cfg) => {
            let rows = stability_sweep(cfg)?;
            for r in &rows {
                if let SweepOutcome::NotApplicable(msg) = &r.outcome {
                    notes.push(format!("{} {}/{}: {msg}", r.point.scheme, r.point.a, r.point.b));
                }
                if !r.ledger_matches {
                    notes.push(format!(
                        "{} {}/{}: ledger differs from closed form",
                        r.point.scheme, r.point.a, r.point.b
                    ));
                }
            }
            let mut body = Vec::new();
            write_sweep_csv(&mut body, &rows)?;
            write_file(out_dir, "sweep.csv", &body, &mut outputs)?;
        }
        Experiment::Svcomp(cfg) => {
            let table = sv_comparison(cfg)?;
            let mut body = Vec::new();
            write_sv_csv(&mut body, &table)?;
            write_file(out_dir, "svcomp.csv", &body, &mut outputs)?;
        }
        Experiment::Rf { problem, methods, steps, lr } => {
            let p = problem.build()?;
            for &m in methods {
                let trace = rfmodel::rf_train(&p, m, *steps, *lr)?;
                if trace.diverged {
                    notes.push(format!("{m}: diverged after {} steps", trace.rows.len()));
                }
                let mut body = Vec::new();
                write_trace_csv(&mut body, &trace)?;
                write_file(out_dir, &format!("rf_{m}.csv"), &body, &mut outputs)?;
            }
        }
        Experiment::Kaon(cfg) => {
            let h = kaon::stationary_histogram(cfg)?;
            let mut body = Vec::new();
            write_histogram_csv(&mut body, &h)?;
            write_file(out_dir, "kaon_hist.csv", &body, &mut outputs)?;
        }
    }
    let manifest = Manifest {
        kind: exp.kind().into(),
        config_sha256: sha256_hex(raw_config),
        seed: exp.seed(),
        version: env!("CARGO_PKG_VERSION").into(),
        outputs,
        notes,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Path of an output listed in a manifest.
pub fn output_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(name)
}
