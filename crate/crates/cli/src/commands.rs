use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use funlasso::bench::{dataset_diagnostics, diagnostics, prepare, run_campaign, PipelineConfig};
use funlasso::io::{format_f64, grid_header, CsvMatrix, KeyValue};
use funlasso::plot::{render_svg, Series, Style};
use funlasso::simgen::{generate_scenario, ScenarioConfig};
use funlasso::solver::{fit_afsl, fit_fsl};
use funlasso::tuning::{select_fsl_afsl, Criterion, Mode, PathResult};
use funlasso::{Basis, CoefficientMatrix, Error, FitResult};

use crate::{BenchArgs, DiagnoseArgs, FitArgs, PlotArgs, SimulateArgs, SmoothArgs};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError { code: 1, message: msg.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::MissingKey(_) | Error::Parse(_) | Error::InvalidInput(_) => CliError::config(e.to_string()),
            other => CliError::runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

pub struct Context {
    pub threads: usize,
    pub timing: bool,
}

impl Context {
    fn secs(&self, s: f64) -> String {
        format_f64(if self.timing { s } else { 0.0 })
    }
}

fn read_kv(path: &Path) -> CliResult<KeyValue> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(KeyValue::parse(&text)?)
}

fn read_csv(path: &Path, numeric_header: bool) -> CliResult<CsvMatrix> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    CsvMatrix::from_text(&text, numeric_header)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn out_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn named_header(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn join_indices(idx: &[usize]) -> String {
    idx.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_indices(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::config(format!("bad index `{}`", t.trim())))
        })
        .collect()
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> CliResult {
    let kv = read_kv(&a.config)?;
    let mut cfg = ScenarioConfig::from_key_value(&kv)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let ds = generate_scenario(&cfg, a.replication)?;
    out_dir(&a.out)?;
    let gh = grid_header(&ds.grid);
    write(&a.out.join("Y.csv"), &CsvMatrix::new(Some(gh.clone()), ds.y.clone()).to_text())?;
    write(
        &a.out.join("X.csv"),
        &CsvMatrix::new(Some(named_header("x", cfg.i)), ds.x.clone()).to_text(),
    )?;
    write(&a.out.join("beta_true.csv"), &CsvMatrix::new(Some(gh), ds.beta_true.clone()).to_text())?;
    let mut meta = cfg.to_key_value();
    meta.set("replication", a.replication);
    meta.set("seed_used", ds.seed_used);
    meta.set("support_true", join_indices(&ds.support_true));
    meta.set("threads", ctx.threads);
    if cfg.i0 > 0 {
        let d = dataset_diagnostics(&ds)?;
        meta.set("irrepresentable_phi", format_f64(d.irrepresentable_phi));
        meta.set("b_n", format_f64(d.b_n));
    }
    write(&a.out.join("meta"), &meta.to_text())
}

fn pipeline(config: Option<&Path>) -> CliResult<PipelineConfig> {
    match config {
        Some(p) => Ok(PipelineConfig::from_key_value(&read_kv(p)?)?),
        None => Ok(PipelineConfig::default()),
    }
}

pub fn smooth(ctx: &Context, a: &SmoothArgs) -> CliResult {
    let pipe = pipeline(a.config.as_deref())?;
    let y = read_csv(&a.y, true)?;
    let grid = y.numeric_header()?;
    let prep = prepare(&y.data, &grid, &pipe)?;
    out_dir(&a.out)?;
    write(
        &a.out.join("coeffs.csv"),
        &CsvMatrix::new(Some(named_header("b", prep.bspline.dim())), prep.coeffs.clone()).to_text(),
    )?;
    write(&a.out.join("basis_bspline.txt"), &prep.bspline.to_text())?;
    write(
        &a.out.join("scores.csv"),
        &CsvMatrix::new(Some(named_header("pc", prep.fpc_basis.dim())), prep.fpc.scores.clone()).to_text(),
    )?;
    write(&a.out.join("basis_fpc.txt"), &prep.fpc_basis.to_text())?;
    let mut meta = KeyValue::new();
    meta.set("n_curves", y.data.nrows());
    meta.set("grid_points", grid.len());
    meta.set("n_basis", prep.bspline.dim());
    meta.set("mu", format_f64(prep.mu));
    meta.set("n_components", prep.fpc_basis.dim());
    let k = prep.fpc_basis.dim();
    meta.set(
        "variance_explained",
        format_f64(if k > 0 { prep.fpc.result.variance_explained[k - 1] } else { 0.0 }),
    );
    meta.set("threads", ctx.threads);
    write(&a.out.join("smooth_meta"), &meta.to_text())
}

/// Outcome coefficients, fitting basis and a map from fitted coefficients to
/// values on the output grid.
struct FitInput {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    basis: Arc<Basis>,
    grid: Vec<f64>,
    to_grid: Box<dyn Fn(&DMatrix<f64>) -> DMatrix<f64>>,
    notes: KeyValue,
}

fn fit_input(a: &FitArgs, pipe: &PipelineConfig) -> CliResult<FitInput> {
    let mut x = read_csv(&a.x, false)?.data;
    let mut notes = KeyValue::new();
    if let Some(bp) = &a.basis {
        let text = fs::read_to_string(bp).map_err(|e| CliError::runtime(format!("{}: {e}", bp.display())))?;
        let basis = Arc::new(Basis::from_text(&text)?);
        let y = read_csv(&a.y, false)?.data;
        let b = basis.clone();
        notes.set("preprocess", "basis_file");
        return Ok(FitInput {
            y,
            x,
            grid: basis.grid().to_vec(),
            basis,
            to_grid: Box::new(move |c| c * b.eval_matrix().transpose()),
            notes,
        });
    }
    let raw = read_csv(&a.y, true)?;
    let grid = raw.numeric_header()?;
    if raw.data.nrows() != x.nrows() {
        return Err(CliError::runtime(format!(
            "Y has {} rows but X has {}",
            raw.data.nrows(),
            x.nrows()
        )));
    }
    match a.preprocess.as_str() {
        "none" => {
            notes.set("preprocess", "none");
            Ok(FitInput {
                y: raw.data,
                x,
                basis: Arc::new(Basis::raw_grid(grid.clone())?),
                grid,
                to_grid: Box::new(|c| c.clone()),
                notes,
            })
        }
        "fpca" => {
            let prep = prepare(&raw.data, &grid, pipe)?;
            // Scores are centered, so the design is centered too.
            let mean = x.row_mean();
            for mut r in x.row_iter_mut() {
                r -= &mean;
            }
            notes.set("preprocess", "fpca");
            notes.set("mu", format_f64(prep.mu));
            notes.set("n_components", prep.fpc_basis.dim());
            let fpc = prep.fpc.result.clone();
            let bs = prep.bspline.clone();
            Ok(FitInput {
                y: prep.fpc.scores,
                x,
                basis: prep.fpc_basis,
                grid,
                to_grid: Box::new(move |c| fpc.back_project(c) * bs.eval_matrix().transpose()),
                notes,
            })
        }
        other => Err(CliError::config(format!("unknown preprocess `{other}`"))),
    }
}

fn fit_block(meta: &mut KeyValue, ctx: &Context, prefix: &str, f: &FitResult) {
    meta.set(&format!("{prefix}.lambda"), format_f64(f.lambda));
    meta.set(&format!("{prefix}.df"), f.df());
    meta.set(&format!("{prefix}.support"), join_indices(&f.support));
    meta.set(&format!("{prefix}.objective"), format_f64(f.objective));
    meta.set(&format!("{prefix}.rss"), format_f64(f.rss));
    meta.set(&format!("{prefix}.max_active_residual"), format_f64(f.kkt.max_active_residual));
    meta.set(
        &format!("{prefix}.max_inactive_slack_violation"),
        format_f64(f.kkt.max_inactive_slack_violation),
    );
    meta.set(&format!("{prefix}.iterations"), f.iterations);
    meta.set(&format!("{prefix}.converged"), f.converged);
    meta.set(&format!("{prefix}.seconds"), ctx.secs(f.wall_time));
}

fn write_path(ctx: &Context, path: &Path, p: &PathResult) -> CliResult {
    write(path, &p.to_csv(ctx.timing))
}

pub fn fit(ctx: &Context, a: &FitArgs) -> CliResult {
    let mode = Mode::parse(&a.mode)?;
    let mut pipe = pipeline(a.config.as_deref())?;
    if let Some(c) = &a.criterion {
        pipe.path.criterion = Criterion::parse(c)?;
    }
    if let Some(g) = a.ebic_gamma {
        pipe.path.ebic_gamma = g;
    }
    pipe.path.validate()?;
    if a.lambda.is_some_and(|l| !(l >= 0.0 && l.is_finite())) {
        return Err(CliError::config("--lambda must be finite and >= 0"));
    }
    let input = fit_input(a, &pipe)?;
    if input.y.nrows() != input.x.nrows() {
        return Err(CliError::runtime(format!(
            "Y has {} rows but X has {}",
            input.y.nrows(),
            input.x.nrows()
        )));
    }
    out_dir(&a.out)?;
    let mut meta = KeyValue::new();
    meta.set("mode", mode.as_str());
    meta.set("n", input.x.nrows());
    meta.set("p", input.x.ncols());
    meta.set("basis", input.basis.kind().as_str());
    meta.set("basis_dim", input.basis.dim());
    for (k, v) in input.notes.entries() {
        meta.set(k, v);
    }
    meta.set("threads", ctx.threads);

    let (fsl, afsl) = match a.lambda {
        Some(l) => {
            meta.set("tuning", "fixed");
            match mode {
                Mode::Fsl => (fit_fsl(&input.y, &input.x, input.basis.clone(), l)?, None),
                Mode::Afsl => {
                    let la = a.lambda_afsl.unwrap_or(l);
                    let (f, af) = fit_afsl(&input.y, &input.x, input.basis.clone(), l, la)?;
                    (f, Some(af))
                }
            }
        }
        None => {
            meta.set("tuning", pipe.path.criterion.as_str());
            meta.set("ebic_gamma", format_f64(pipe.path.ebic_gamma));
            meta.set("n_lambda", pipe.path.n_lambda);
            meta.set("lambda_min_ratio", format_f64(pipe.path.lambda_min_ratio));
            match mode {
                Mode::Fsl => {
                    let path = funlasso::tuning::fsl_path(&input.y, &input.x, input.basis.clone(), &pipe.path)?;
                    write_path(ctx, &a.out.join("path.csv"), &path)?;
                    meta.set("fsl.path_truncated", path.truncated);
                    (path.selected().clone(), None)
                }
                Mode::Afsl => {
                    let sel = select_fsl_afsl(&input.y, &input.x, input.basis.clone(), &pipe.path)?;
                    write_path(ctx, &a.out.join("path.csv"), &sel.fsl_path)?;
                    meta.set("fsl.path_truncated", sel.fsl_path.truncated);
                    if let Some(p) = &sel.afsl_path {
                        write_path(ctx, &a.out.join("path_afsl.csv"), p)?;
                        meta.set("afsl.path_truncated", p.truncated);
                    }
                    meta.set("fsl.stage_seconds", ctx.secs(sel.fsl_seconds));
                    meta.set("afsl.stage_seconds", ctx.secs(sel.afsl_seconds));
                    (sel.fsl().clone(), Some(sel.afsl))
                }
            }
        }
    };
    fit_block(&mut meta, ctx, "fsl", &fsl);
    if let Some(af) = &afsl {
        fit_block(&mut meta, ctx, "afsl", af);
    }
    let chosen = afsl.as_ref().unwrap_or(&fsl);
    let gh = grid_header(&input.grid);
    write(
        &a.out.join("beta_hat.csv"),
        &CsvMatrix::new(Some(gh.clone()), (input.to_grid)(&chosen.b_hat.coeffs)).to_text(),
    )?;
    if afsl.is_some() {
        write(
            &a.out.join("beta_hat_fsl.csv"),
            &CsvMatrix::new(Some(gh), (input.to_grid)(&fsl.b_hat.coeffs)).to_text(),
        )?;
    }
    write(
        &a.out.join("beta_hat_coeffs.csv"),
        &CsvMatrix::new(Some(named_header("c", input.basis.dim())), chosen.b_hat.coeffs.clone()).to_text(),
    )?;
    write(&a.out.join("basis.txt"), &input.basis.to_text())?;
    write(&a.out.join("fit_meta"), &meta.to_text())
}

pub fn bench(ctx: &Context, a: &BenchArgs) -> CliResult {
    let kv = read_kv(&a.config)?;
    let mut scen = ScenarioConfig::from_key_value(&kv)?;
    if let Some(s) = a.seed {
        scen.seed = s;
    }
    if let Some(r) = a.replications {
        scen.replications = r;
    }
    let pipe = PipelineConfig::from_key_value(&kv)?;
    let res = run_campaign(&scen, &pipe)?;
    out_dir(&a.out)?;
    write(&a.out.join("campaign.csv"), &res.campaign_csv(ctx.timing))?;
    write(&a.out.join("summary.csv"), &res.summary_csv(ctx.timing))?;
    write(&a.out.join("diagnostics.csv"), &res.diagnostics_csv())?;
    let mut meta = scen.to_key_value();
    for (k, v) in pipe.to_key_value().entries() {
        meta.set(k, v);
    }
    meta.set("threads", ctx.threads);
    write(&a.out.join("bench_meta"), &meta.to_text())
}

pub fn diagnose(_ctx: &Context, a: &DiagnoseArgs) -> CliResult {
    let x = read_csv(&a.x, false)?.data;
    let beta = read_csv(&a.beta_true, true)?;
    let grid = beta.numeric_header()?;
    let support = match &a.support {
        Some(s) => parse_indices(s)?,
        None => (0..beta.data.nrows()).collect(),
    };
    let basis = Arc::new(Basis::raw_grid(grid)?);
    let b = CoefficientMatrix::new(beta.data, basis)?;
    let d = diagnostics(&x, &support, &b)?;
    let mut kv = KeyValue::new();
    kv.set("n", x.nrows());
    kv.set("p", x.ncols());
    kv.set("support", join_indices(&support));
    kv.set("sigma_min", format_f64(d.sigma_min));
    kv.set("sigma_max", format_f64(d.sigma_max));
    kv.set("irrepresentable_phi", format_f64(d.irrepresentable_phi));
    kv.set("b_n", format_f64(d.b_n));
    kv.set("signal_ratio", format_f64(d.signal_ratio));
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    write(&a.out, &kv.to_text())
}

pub fn plot(_ctx: &Context, a: &PlotArgs) -> CliResult {
    let load = |p: &Option<std::path::PathBuf>| -> CliResult<Option<CsvMatrix>> {
        p.as_ref().map(|p| read_csv(p, true)).transpose()
    };
    let truth = load(&a.truth)?;
    let fsl = load(&a.fsl)?;
    let afsl = load(&a.afsl)?;
    let Some(reference) = fsl.as_ref().or(afsl.as_ref()).or(truth.as_ref()) else {
        return Err(CliError::config("plot needs at least one of --fsl, --afsl, --truth"));
    };
    let grid = reference.numeric_header()?;
    for m in [&truth, &fsl, &afsl].into_iter().flatten() {
        if m.numeric_header()? != grid {
            return Err(CliError::runtime("coefficient files use different grids"));
        }
    }
    let n_rows = [&fsl, &afsl]
        .into_iter()
        .flatten()
        .map(|m| m.data.nrows())
        .max()
        .unwrap_or_else(|| truth.as_ref().map_or(0, |t| t.data.nrows()));
    let indices = match &a.index {
        Some(s) => parse_indices(s)?,
        None => (0..truth.as_ref().map_or(n_rows, |t| t.data.nrows())).collect(),
    };
    let limit = n_rows.max(truth.as_ref().map_or(0, |t| t.data.nrows()));
    if let Some(&bad) = indices.iter().find(|&&i| i >= limit) {
        return Err(CliError::config(format!(
            "unknown coefficient index {bad} (files have {limit} rows)"
        )));
    }
    out_dir(&a.out)?;
    let row = |m: &CsvMatrix, i: usize| -> Vec<f64> {
        if i < m.data.nrows() {
            m.data.row(i).iter().copied().collect()
        } else {
            vec![0.0; grid.len()]
        }
    };
    for &i in &indices {
        let mut series = Vec::new();
        if let Some(t) = &truth {
            series.push(Series { label: "true".into(), style: Style::Truth, values: row(t, i) });
        }
        if let Some(f) = &fsl {
            series.push(Series { label: "FSL".into(), style: Style::Fsl, values: row(f, i) });
        }
        if let Some(f) = &afsl {
            series.push(Series { label: "AFSL".into(), style: Style::Afsl, values: row(f, i) });
        }
        let svg = render_svg(&format!("beta_{i}"), &grid, &series)?;
        write(&a.out.join(format!("beta_{i}.svg")), &svg)?;
    }
    Ok(())
}
