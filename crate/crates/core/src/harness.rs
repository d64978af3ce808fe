//! Experiment plumbing: traces, reference optima, multi-config runs and CSV/SVG output.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::fmt_shortest;
use crate::linalg::{axpy, norm, DenseVector};
use crate::problem::{ErmProblem, IfoCounter};
use crate::solvers::{self, SolverConfig, SolverError};

/// Environment variable overriding the reference-optimum cache directory.
pub const CACHE_DIR_ENV: &str = "TUNEFREE_CACHE_DIR";
/// Exact CSV header written by [`emit_csv`].
pub const TRACE_CSV_HEADER: &str = "config_id,s,eta_s,m_s,M_s,ifo_total,sample_passes,gap,grad_sq";
/// Default gradient-norm tolerance for reference optima.
pub const DEFAULT_REFERENCE_TOL: f64 = 1e-12;
pub const REFERENCE_MAX_ITERS: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config {id}: {source}")]
    Solver {
        id: u64,
        #[source]
        source: SolverError,
    },
    #[error("reference solver stopped at ‖∇f‖ = {grad_norm} after {iters} iterations (tol {tol})")]
    ReferenceNotConverged { grad_norm: f64, iters: usize, tol: f64 },
    #[error("malformed trace CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// State after one outer loop (or the initial point, `s = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub s: usize,
    pub eta_s: f64,
    pub m_s: usize,
    pub snapshot_index: usize,
    pub ifo_total: u64,
    pub gap: Option<f64>,
    pub grad_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub label: String,
    pub n: usize,
    pub points: Vec<TracePoint>,
    pub final_x: DenseVector,
}

impl Trace {
    pub fn first(&self) -> &TracePoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TracePoint {
        self.points.last().expect("trace has an initial point")
    }

    pub fn outer_loops(&self) -> usize {
        self.points.len() - 1
    }

    pub fn sample_passes(&self, point: &TracePoint) -> f64 {
        point.ifo_total as f64 / self.n as f64
    }

    /// First sample-pass count at which `grad_sq ≤ threshold`, if ever.
    pub fn passes_to_grad_sq(&self, threshold: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.grad_sq.is_some_and(|g| g <= threshold))
            .map(|p| self.sample_passes(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOptimum {
    pub x_star: DenseVector,
    pub f_star: f64,
    pub grad_norm: f64,
}

fn grad_norm<P: ErmProblem + ?Sized>(problem: &P, x: &[f64], g: &mut [f64]) -> f64 {
    problem.full_grad_into(x, g, &mut IfoCounter::new());
    norm(g)
}

/// Minimizer of `problem` to `‖∇f‖ ≤ tol`: the problem's exact solve when it has one,
/// then full-gradient descent with step `1/L` until the tolerance is met.
pub fn compute_reference<P: ErmProblem + ?Sized>(problem: &P, tol: f64) -> Result<ReferenceOptimum, HarnessError> {
    compute_reference_capped(problem, tol, REFERENCE_MAX_ITERS)
}

pub fn compute_reference_capped<P: ErmProblem + ?Sized>(
    problem: &P,
    tol: f64,
    max_iters: usize,
) -> Result<ReferenceOptimum, HarnessError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(HarnessError::Invalid(format!("reference tolerance {tol}")));
    }
    let mut x = problem.exact_minimizer().unwrap_or_else(|| vec![0.0; problem.dim()]);
    let eta = 1.0 / problem.smoothness();
    let mut g = vec![0.0; problem.dim()];
    let mut gn = grad_norm(problem, &x, &mut g);
    let mut iters = 0;
    while gn > tol {
        if iters == max_iters || !gn.is_finite() {
            return Err(HarnessError::ReferenceNotConverged { grad_norm: gn, iters, tol });
        }
        axpy(-eta, &g, &mut x);
        gn = grad_norm(problem, &x, &mut g);
        iters += 1;
    }
    Ok(ReferenceOptimum { f_star: problem.value_unchecked(&x), x_star: x, grad_norm: gn })
}

pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("tunefree-cache"))
}

fn cache_path(dir: &Path, fingerprint: &str, tol: f64) -> PathBuf {
    dir.join(format!("{fingerprint}-{}.csv", tol.to_bits()))
}

fn write_cache(path: &Path, r: &ReferenceOptimum) -> io::Result<()> {
    let mut text = format!(
        "# f_star={} grad_norm={} dim={}\nindex,x\n",
        fmt_shortest(r.f_star),
        fmt_shortest(r.grad_norm),
        r.x_star.len()
    );
    for (i, v) in r.x_star.iter().enumerate() {
        let _ = writeln!(text, "{i},{}", fmt_shortest(*v));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, text)?;
    fs::rename(tmp, path)
}

fn read_cache(path: &Path, dim: usize) -> Option<ReferenceOptimum> {
    let text = fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let meta = lines.next()?.strip_prefix("# ")?;
    let mut f_star = None;
    let mut gn = None;
    let mut cached_dim = None;
    for kv in meta.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "f_star" => f_star = v.parse::<f64>().ok(),
            "grad_norm" => gn = v.parse::<f64>().ok(),
            "dim" => cached_dim = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    if cached_dim? != dim || lines.next()? != "index,x" {
        return None;
    }
    let x: Option<Vec<f64>> = lines.map(|l| l.split_once(',').and_then(|(_, v)| v.parse().ok())).collect();
    let x = x?;
    (x.len() == dim).then(|| ReferenceOptimum { x_star: x, f_star: f_star.unwrap(), grad_norm: gn.unwrap() })
}

/// [`compute_reference`] with an on-disk cache in `dir`, keyed by the problem fingerprint.
/// Problems without a fingerprint are always recomputed.
pub fn cached_reference_in<P: ErmProblem + ?Sized>(problem: &P, tol: f64, dir: &Path) -> Result<ReferenceOptimum, HarnessError> {
    let Some(fp) = problem.fingerprint() else {
        return compute_reference(problem, tol);
    };
    let path = cache_path(dir, &fp, tol);
    if let Some(hit) = read_cache(&path, problem.dim()) {
        return Ok(hit);
    }
    let r = compute_reference(problem, tol)?;
    // A cache that cannot be written only costs a recomputation next time.
    let _ = write_cache(&path, &r);
    Ok(r)
}

/// [`cached_reference_in`] using [`cache_dir`].
pub fn cached_reference<P: ErmProblem + ?Sized>(problem: &P, tol: f64) -> Result<ReferenceOptimum, HarnessError> {
    cached_reference_in(problem, tol, &cache_dir())
}

/// A solver configuration with its numeric id (used for seeding and in CSV output).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentEntry {
    pub id: u64,
    pub label: String,
    pub config: SolverConfig,
}

impl ExperimentEntry {
    pub fn new(id: u64, config: SolverConfig) -> Self {
        Self { id, label: config.label(), config }
    }

    pub fn labelled(id: u64, label: impl Into<String>, config: SolverConfig) -> Self {
        Self { id, label: label.into(), config }
    }
}

/// Runs every entry to the shared budget of `passes · n` IFO calls, concurrently.
///
/// Each entry's RNG is seeded with `config.seed ^ id`, and any outer-loop cap on the
/// entry is dropped so that only the budget stops it.
pub fn run_experiment<P: ErmProblem + ?Sized>(
    problem: &P,
    entries: &[ExperimentEntry],
    passes: f64,
    f_star: Option<f64>,
) -> Result<Vec<Trace>, HarnessError> {
    if !(passes >= 0.0 && passes.is_finite()) {
        return Err(HarnessError::Invalid(format!("budget of {passes} sample passes")));
    }
    let budget = (passes * problem.n() as f64).round() as u64;
    let results: Vec<Result<Trace, HarnessError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = entries
            .iter()
            .map(|e| {
                scope.spawn(move || {
                    let mut cfg = e.config.clone();
                    cfg.seed ^= e.id;
                    cfg.ifo_budget = Some(budget);
                    cfg.max_outer_loops = None;
                    cfg.evaluate = true;
                    solvers::run_with_reference(problem, &cfg, f_star)
                        .map(|mut t| {
                            t.label = e.label.clone();
                            t
                        })
                        .map_err(|source| HarnessError::Solver { id: e.id, source })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    results.into_iter().collect()
}

/// Writes traces in the fixed CSV schema; `config_id` comes from the paired id.
pub fn emit_csv<W: Write>(traces: &[(u64, &Trace)], mut out: W) -> io::Result<()> {
    if traces.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no traces to write"));
    }
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    let opt = |v: Option<f64>| v.map(fmt_shortest).unwrap_or_default();
    for (id, t) in traces {
        for p in &t.points {
            writeln!(
                out,
                "{id},{},{},{},{},{},{},{},{}",
                p.s,
                fmt_shortest(p.eta_s),
                p.m_s,
                p.snapshot_index,
                p.ifo_total,
                fmt_shortest(t.sample_passes(p)),
                opt(p.gap),
                opt(p.grad_sq)
            )?;
        }
    }
    Ok(())
}

pub fn emit_csv_string(traces: &[(u64, &Trace)]) -> String {
    let mut buf = Vec::new();
    emit_csv(traces, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// One parsed row of a trace CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub config_id: u64,
    pub point: TracePoint,
    pub sample_passes: f64,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, HarnessError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TRACE_CSV_HEADER => {}
        _ => return Err(HarnessError::Csv { line: 1, message: "missing or wrong header".into() }),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let err = |message: String| HarnessError::Csv { line: lineno, message };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 9 {
            return Err(err(format!("expected 9 cells, found {}", cells.len())));
        }
        fn num<T: std::str::FromStr>(cell: &str, name: &str) -> Result<T, String> {
            cell.parse().map_err(|_| format!("bad {name} {cell:?}"))
        }
        fn opt(cell: &str, name: &str) -> Result<Option<f64>, String> {
            if cell.is_empty() { Ok(None) } else { num(cell, name).map(Some) }
        }
        let parsed = (|| -> Result<CsvRow, String> {
            Ok(CsvRow {
                config_id: num(cells[0], "config_id")?,
                point: TracePoint {
                    s: num(cells[1], "s")?,
                    eta_s: num(cells[2], "eta_s")?,
                    m_s: num(cells[3], "m_s")?,
                    snapshot_index: num(cells[4], "M_s")?,
                    ifo_total: num(cells[5], "ifo_total")?,
                    gap: opt(cells[7], "gap")?,
                    grad_sq: opt(cells[8], "grad_sq")?,
                },
                sample_passes: num(cells[6], "sample_passes")?,
            })
        })();
        rows.push(parsed.map_err(err)?);
    }
    Ok(rows)
}

/// Grid search over `eta_grid` (multiples of `1/L`): returns the multiplier whose run ends
/// with the smallest `grad_sq`, together with its trace. Diverging candidates are skipped.
pub fn tune_step<P: ErmProblem + ?Sized>(
    problem: &P,
    make_config: impl Fn(f64) -> SolverConfig,
    eta_grid: &[f64],
    passes: f64,
) -> Option<(f64, Trace)> {
    let l = problem.smoothness();
    let mut best: Option<(f64, Trace)> = None;
    for &mult in eta_grid {
        let cfg = make_config(mult / l).with_passes(problem.n(), passes);
        let Ok(trace) = solvers::run(problem, &cfg) else { continue };
        let score = trace.last().grad_sq.unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(_, b)| score < b.last().grad_sq.unwrap_or(f64::INFINITY)) {
            best = Some((mult, trace));
        }
    }
    best
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Standalone SVG line plot with a log-scaled y axis. Non-positive y values are dropped.
pub fn svg_plot(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (720.0, 460.0, 60.0);
    let pts = series.iter().flat_map(|(_, s)| s.iter().filter(|(x, y)| x.is_finite() && *y > 0.0 && y.is_finite()));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |ly: f64| h - pad - (ly - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for e in (y0.ceil() as i64)..=(y1.floor() as i64) {
        let y = sy(e as f64);
        let _ = writeln!(svg, r##"<line x1="{pad}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##, w - pad);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"#, pad - 5.0, y + 4.0);
    }
    for i in 0..=4 {
        let x = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(x), h - pad + 16.0, short(x));
    }
    for (k, (label, data)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = data
            .iter()
            .filter(|(x, y)| x.is_finite() && *y > 0.0 && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y.log10())))
            .collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#, path.join(" "));
        let ly = pad + 16.0 + 16.0 * k as f64;
        let _ = writeln!(svg, r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - pad - 170.0, w - pad - 150.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, w - pad - 145.0, ly + 4.0, escape(label));
    }
    svg.push_str("</svg>\n");
    svg
}

fn short(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `grad_sq` against sample passes for each trace.
pub fn grad_sq_series(traces: &[Trace]) -> Vec<(String, Vec<(f64, f64)>)> {
    traces
        .iter()
        .map(|t| {
            let pts = t.points.iter().filter_map(|p| p.grad_sq.map(|g| (t.sample_passes(p), g))).collect();
            (t.label.clone(), pts)
        })
        .collect()
}
