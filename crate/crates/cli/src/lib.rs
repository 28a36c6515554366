//! Batch experiment runner: reads one TOML config, runs a subcommand of the
//! `conjclt` library and writes CSV tables, `summary.json` and a
//! `manifest.json` with digests of every data file.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use conjclt::conjugacy::{class_sphere_size, enumerate_class_sphere};
use conjclt::stats::{self, SampleMode};
use conjclt::symbolic::{check_symmetry, holder_seminorm};
use conjclt::thermo::{self, perron, TransferMatrix};
use conjclt::words::sphere_size;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{Experiment, ExperimentConfig};
use output::{real, OutputDir, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] conjclt::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        use conjclt::Error as E;
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Output(_) => "output",
            CliError::Library(e) => match e {
                E::InvalidRank(_) | E::LetterOutOfRange { .. } | E::NotReduced(_) | E::Parse { .. } => "config",
                E::NotCyclicallyReduced | E::TrivialClass | E::EmptyCylinder => "config",
                E::InvalidWeight(_) | E::MissingBlock(_) | E::DepthTooLarge(_) | E::RankMismatch { .. } => "config",
                E::NotInRestrictedSphere(_) | E::InvalidArgument(_) => "invalid_argument",
                E::SpectralIterationFailed(_) => "spectral_iteration_failed",
                E::CapExceeded { .. } => "cap_exceeded",
                E::DegenerateWeight(_) => "degenerate_weight",
                E::EmptySample => "empty_sample",
            },
        }
    }

    /// One-line JSON rendering for stderr.
    pub fn to_line(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Class sphere sizes, enumerated and by formula.
    Count,
    /// Pressure curve `P(tf)` with Perron data.
    Pressure,
    /// `λ`, `σ²` and their cross-checks.
    Derivatives,
    /// Convergence of `F / (k+2m)` to `λ`.
    Mean,
    /// Standardized distribution against `N(0, 2σ²)`.
    Clt,
    /// Class variance over sphere variance.
    Ratio,
    /// Characteristic functions against `exp(-σ² t²)`.
    Charfn,
    /// Raw values of `F` over the class spheres.
    Sample,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Count => "count",
            Command::Pressure => "pressure",
            Command::Derivatives => "derivatives",
            Command::Mean => "mean",
            Command::Clt => "clt",
            Command::Ratio => "ratio",
            Command::Charfn => "charfn",
            Command::Sample => "sample",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub summary: Value,
    pub files: Vec<String>,
}

/// Loads the config at `path`, runs `cmd` and writes all artifacts.
pub fn execute(cmd: Command, path: &Path, output_dir: Option<&Path>) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut config = ExperimentConfig::load(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir.to_path_buf();
    }
    let experiment = config.build()?;
    let load = Stage { name: "load", seconds: start.elapsed().as_secs_f64() };
    run(cmd, &experiment, vec![load])
}

/// Runs `cmd` on a built experiment, writing into its `output_dir`.
pub fn run(cmd: Command, exp: &Experiment, mut stages: Vec<Stage>) -> Result<RunReport, CliError> {
    let mut out = OutputDir::create(&exp.config.output_dir)?;

    let start = Instant::now();
    let results = match cmd {
        Command::Count => count(exp, &mut out)?,
        Command::Pressure => pressure(exp, &mut out)?,
        Command::Derivatives => derivatives(exp, &mut out)?,
        Command::Mean => mean(exp, &mut out)?,
        Command::Clt => clt(exp, &mut out)?,
        Command::Ratio => ratio(exp, &mut out)?,
        Command::Charfn => charfn(exp, &mut out)?,
        Command::Sample => sample(exp, &mut out)?,
    };
    stages.push(Stage { name: cmd.name(), seconds: start.elapsed().as_secs_f64() });

    let c = &exp.config;
    let summary = json!({
        "subcommand": cmd.name(),
        "p": c.p,
        "class_rep": c.class_rep,
        "class_representative": exp.class.representative().to_string(),
        "k": exp.class.k(),
        "orbit_size": exp.class.orbit().len(),
        "m_grid": c.m_grid,
        "mode": mode_json(c.class_mode()),
        "seed": c.seed,
        "enumeration_cap": c.enumeration_cap,
        "tolerances": c.tolerances,
        "results": results,
    });
    out.write_json("summary.json", &summary)?;

    let manifest = json!({
        "library": { "name": "conjclt", "version": env!("CARGO_PKG_VERSION") },
        "subcommand": cmd.name(),
        "config": c,
        "stages": stages,
        "files": out.files(),
    });
    let files = out.files().iter().map(|f| f.path.clone()).collect();
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    std::fs::write(out.root().join("manifest.json"), text)?;

    Ok(RunReport { output_dir: out.root().to_path_buf(), summary, files })
}

fn mode_json(mode: SampleMode) -> Value {
    match mode {
        SampleMode::Exact { cap } => json!({ "kind": "exact", "cap": cap as u64 }),
        SampleMode::Sampled { count, seed } => json!({ "kind": "sampled", "count": count, "seed": seed }),
    }
}

fn count(exp: &Experiment, out: &mut OutputDir) -> Result<Value, CliError> {
    let cap = exp.config.enumeration_cap as u128;
    let mut table = Table::new(&["m", "length", "enumerated", "formula", "equal"]);
    let mut all_equal = true;
    for &m in &exp.config.m_grid {
        let formula = class_sphere_size(&exp.class, m);
        if formula > cap {
            return Err(conjclt::Error::CapExceeded { population: formula, cap }.into());
        }
        let enumerated = enumerate_class_sphere(&exp.class, m).count() as u128;
        all_equal &= enumerated == formula;
        table.row(&[
            m.to_string(),
            exp.class.length_at(m).to_string(),
            enumerated.to_string(),
            formula.to_string(),
            (enumerated == formula).to_string(),
        ]);
    }
    out.write_table("counts.csv", &table)?;
    Ok(json!({ "all_equal": all_equal }))
}

fn pressure(exp: &Experiment, out: &mut OutputDir) -> Result<Value, CliError> {
    let mut table = Table::new(&["t", "pressure", "beta", "gap"]);
    for &t in &exp.config.grids.pressure {
        let data = perron(&TransferMatrix::real(&exp.weight, t))?;
        table.row(&[real(t), real(data.beta.ln()), real(data.beta), real(data.gap)]);
    }
    out.write_table("pressure.csv", &table)?;
    let p0 = thermo::pressure(&exp.weight, 0.0)?;
    Ok(json!({ "pressure_at_zero": p0, "entropy": thermo::topological_entropy(exp.rank) }))
}

fn derivatives(exp: &Experiment, out: &mut OutputDir) -> Result<Value, CliError> {
    let f = &exp.weight;
    let tol = exp.config.tolerances.derivative_tol;
    let lambda = thermo::lambda(f);
    let lambda_fd = thermo::lambda_finite_difference(f)?;
    let sigma2 = thermo::sigma2(f)?;
    let sigma2_gk = thermo::sigma2_green_kubo(f);
    // largest length whose sphere stays small
    let n_max = (1..=6).take_while(|&n| sphere_size(exp.rank, n) <= 100_000).last().unwrap_or(1);
    let quantities = [
        ("lambda", lambda),
        ("lambda_finite_difference", lambda_fd),
        ("sigma2", sigma2),
        ("sigma2_green_kubo", sigma2_gk),
        ("lambda_discrepancy", (lambda - lambda_fd).abs()),
        ("sigma2_discrepancy", (sigma2 - sigma2_gk).abs()),
        ("entropy", thermo::topological_entropy(exp.rank)),
        ("holder_seminorm", holder_seminorm(f)),
        ("kappa_bound", thermo::kappa_bound(f)),
        ("spectral_projection_sum", thermo::spectral_projection_sum(f, &exp.class)?),
        ("symmetry_deviation", check_symmetry(f, n_max)),
    ];
    let mut table = Table::new(&["quantity", "value"]);
    for (name, v) in quantities {
        table.row(&[name.to_string(), real(v)]);
    }
    out.write_table("derivatives.csv", &table)?;
    let mut results: serde_json::Map<String, Value> =
        quantities.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    results.insert("lambda_agrees".into(), json!(quantities[4].1 <= tol));
    results.insert("sigma2_agrees".into(), json!(quantities[5].1 <= tol));
    results.insert("degenerate".into(), json!(sigma2 <= stats::DEGENERACY_THRESHOLD));
    results.insert("symmetry_checked_to_length".into(), json!(n_max));
    Ok(Value::Object(results))
}

fn mean(exp: &Experiment, out: &mut OutputDir) -> Result<Value, CliError> {
    let r = stats::mean_convergence(&exp.class, &exp.weight, &exp.config.m_grid, exp.config.class_mode())?;
    let mut table = Table::new(&["m", "length", "mean", "lambda", "discrepancy", "standard_error"]);
    for row in &r.rows {
        table.row(&[
            row.m.to_string(),
            row.n.to_string(),
            real(row.mean),
            real(r.lambda),
            real(row.discrepancy),
            real(row.standard_error),
        ]);
    }
    out.write_table("convergence.csv", &table)?;
    serde_json::to_value(&r).map_err(|e| CliError::Output(e.to_string()))
}

fn clt(exp: &Experiment, out: &mut OutputDir) -> Result<Value, CliError> {
    let c = &exp.config;
    let mut summary_table =
        Table::new(&["m", "length", "ks", "target_variance", "mean", "variance", "third_abs_moment"]);
    let mut cdf_table = Table::new(&["m", "y", "empirical", "reference"]);
    let mut per_m = Vec::new();
    for &m in &c.m_grid {
        let r = stats::clt_experiment(&exp.class, &exp.weight, m, c.class_mode(), &c.grids.cdf)?;
        summary_table.row(&[
            m.to_string(),
            r.n.to_string(),
            real(r.comparison.ks),
            real(r.comparison.target_variance),
            real(r.summary.mean),
            real(r.summary.variance),
            real(r.summary.third_abs_moment),
        ]);
        for row in &r.cdf {
            cdf_table.row(&[m.to_string(), real(row.y), real(row.empirical), real(row.reference)]);
        }
        per_m.push(json!({
            "m": m,
            "ks": r.comparison.ks,
            "target_variance": r.comparison.target_variance,
            "ks_within_tolerance": r.comparison.ks <= c.tolerances.ks_max,
        }));
    }
    out.write_table("clt.csv", &summary_table)?;
    out.write_table("cdf.csv", &cdf_table)?;
    let sigma2 = thermo::sigma2(&exp.weight)?;
    Ok(json!({ "lambda": thermo::lambda(&exp.weight), "sigma2": sigma2, "per_m": per_m }))
}

fn ratio(exp: &Experiment, out: &mut OutputDir) -> Result<Value, CliError> {
    let c = &exp.config;
    let [lo, hi] = c.tolerances.ratio_band;
    let mut table = Table::new(&[
        "m",
        "length",
        "class_variance",
        "sphere_variance",
        "ratio",
        "class_variance_over_length_sigma2",
        "sphere_variance_over_length_sigma2",
        "sphere_mode",
    ]);
    let mut per_m = Vec::new();
    for &m in &c.m_grid {
        let n = exp.class.length_at(m);
        let sphere_mode = c.sphere_mode(exp.rank, n);
        let r = stats::variance_ratio(&exp.class, &exp.weight, m, c.class_mode(), sphere_mode)?;
        let scale = n as f64 * r.sigma2;
        table.row(&[
            m.to_string(),
            n.to_string(),
            real(r.class_variance),
            real(r.sphere_variance),
            real(r.ratio),
            real(r.class_variance / scale),
            real(r.sphere_variance / scale),
            match sphere_mode {
                SampleMode::Exact { .. } => "exact".into(),
                SampleMode::Sampled { .. } => "sampled".into(),
            },
        ]);
        per_m.push(json!({
            "m": m,
            "ratio": r.ratio,
            "sphere_mode": mode_json(sphere_mode),
            "ratio_within_band": lo <= r.ratio && r.ratio <= hi,
        }));
    }
    out.write_table("ratio.csv", &table)?;
    Ok(json!({ "sigma2": thermo::sigma2(&exp.weight)?, "per_m": per_m }))
}

fn charfn(exp: &Experiment, out: &mut OutputDir) -> Result<Value, CliError> {
    let c = &exp.config;
    let mut table = Table::new(&["m", "t", "re", "im", "target", "deviation"]);
    let mut per_m = Vec::new();
    for &m in &c.m_grid {
        let r = stats::characteristic_function(&exp.class, &exp.weight, m, &c.grids.charfn, c.class_mode())?;
        for p in &r.points {
            table.row(&[m.to_string(), real(p.t), real(p.phi.re), real(p.phi.im), real(p.target), real(p.deviation)]);
        }
        let worst = r.points.iter().map(|p| p.deviation).fold(0.0, f64::max);
        per_m.push(json!({ "m": m, "max_deviation": worst }));
    }
    out.write_table("charfn.csv", &table)?;
    Ok(json!({ "sigma2": thermo::sigma2(&exp.weight)?, "per_m": per_m }))
}

fn sample(exp: &Experiment, out: &mut OutputDir) -> Result<Value, CliError> {
    let c = &exp.config;
    let mut table = Table::new(&["m", "index", "value"]);
    let mut per_m = Vec::new();
    for &m in &c.m_grid {
        let s = stats::collect_class_sample(&exp.class, &exp.weight, m, c.class_mode())?;
        for (i, v) in s.values.iter().enumerate() {
            table.row(&[m.to_string(), i.to_string(), real(*v)]);
        }
        per_m.push(json!({ "m": m, "length": s.n, "size": s.len(), "summary": s.summary()? }));
    }
    out.write_table("samples.csv", &table)?;
    Ok(json!({ "per_m": per_m }))
}
