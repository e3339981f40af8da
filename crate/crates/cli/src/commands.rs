use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use lcpmf::experiments::{ci_length_experiment, knot_recovery, rate_check, run_comparison, DistSpec, Estimator};
use lcpmf::fenchel::{verify_kl, verify_mle};
use lcpmf::io::{self, PlotData};
use lcpmf::limit::{pointwise_ci, LimitDrawConfig};
use lcpmf::mixture::{fit_inflated, MixtureOptions};
use lcpmf::pmf::empirical_pmf;
use lcpmf::projection::{kl_divergence, kl_project};
use lcpmf::{fit_mle, SolverOptions};

use crate::{Command, Common, Format};

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn with_path<T>(path: &Path, r: lcpmf::Result<T>) -> Result<T> {
    r.map_err(anyhow::Error::new).with_context(|| format!("reading {}", path.display()))
}

fn solver_options(c: &Common) -> Result<SolverOptions> {
    if !(c.tol > 0.0 && c.tol.is_finite()) {
        bail!(lcpmf::Error::InvalidInput(format!("--tol must be positive, got {}", c.tol)));
    }
    Ok(SolverOptions { tol: c.tol, max_outer: c.max_iter, ..SolverOptions::default() })
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| lcpmf::Error::InvalidInput(format!("bad {what} {t:?}")).into()))
        .collect()
}

fn parse_range(s: &str) -> Result<Vec<i64>> {
    let bad = || anyhow::Error::new(lcpmf::Error::InvalidInput(format!("expected lo:hi, got {s:?}")));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let (lo, hi): (i64, i64) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
    if lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

/// Writes the artifact to `--out` (summary to stdout) or, without `--out`,
/// the artifact to stdout and the summary to stderr.
fn emit(common: &Common, artifact: &[u8], summary: &str) -> Result<()> {
    match &common.out {
        Some(path) => {
            std::fs::write(path, artifact).with_context(|| format!("cannot write {}", path.display()))?;
            println!("{summary}");
        }
        None => {
            std::io::stdout().write_all(artifact)?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn emit_plot(common: &Common, plot: &PlotData) -> Result<()> {
    if let Some(path) = &common.plot_data {
        let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        plot.write(f)?;
    }
    Ok(())
}

fn to_json(value: &impl serde::Serialize) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner()?)
}

/// Replication rows, then a `# summary` line and the summary table.
fn two_blocks(mut rows: Vec<u8>, summary: Vec<u8>) -> Vec<u8> {
    rows.extend_from_slice(b"# summary\n");
    rows.extend(summary);
    rows
}

/// Runs one command. `Ok(false)` means a verification did not pass.
pub fn run(command: Command, c: &Common) -> Result<bool> {
    let opts = solver_options(c)?;
    match command {
        Command::Fit { counts } => {
            let data = with_path(&counts, io::read_counts(open(&counts)?))?;
            let fit = fit_mle(&data, &opts)?;
            let artifact = match c.format.unwrap_or(Format::Json) {
                Format::Json => {
                    let mut buf = Vec::new();
                    io::write_fit(&fit, &mut buf)?;
                    buf.push(b'\n');
                    buf
                }
                Format::Csv => {
                    let mut buf = Vec::new();
                    io::write_pmf(&fit.to_pmf(), &mut buf)?;
                    buf
                }
            };
            let mut plot = PlotData::new();
            plot.extend_pmf("empirical", &empirical_pmf(&data)?);
            plot.extend_pmf("mle", &fit.to_pmf());
            for (z, p) in fit.psi.iter().enumerate() {
                plot.push("log_mle", (fit.origin + z as i64) as f64, *p);
            }
            emit_plot(c, &plot)?;
            emit(
                c,
                &artifact,
                &format!(
                    "fit: n={} objective={:.10} gap={:.3e} iterations={} knots={:?}",
                    data.n(),
                    fit.objective,
                    fit.fenchel_gap,
                    fit.iterations,
                    fit.knots
                ),
            )?;
        }
        Command::Project { pmf } => {
            let p0 = with_path(&pmf, io::read_pmf(open(&pmf)?))?;
            let fit = kl_project(&p0, &opts)?;
            let artifact = match c.format.unwrap_or(Format::Json) {
                Format::Json => to_json(&fit)?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    io::write_pmf(&fit.to_pmf(), &mut buf)?;
                    buf
                }
            };
            let mut plot = PlotData::new();
            plot.extend_pmf("target", &p0);
            plot.extend_pmf("projection", &fit.to_pmf());
            emit_plot(c, &plot)?;
            emit(
                c,
                &artifact,
                &format!(
                    "project: kl={:.10} gap={:.3e} iterations={} knots={:?}",
                    kl_divergence(&fit.to_pmf(), &p0),
                    fit.fenchel_gap,
                    fit.iterations,
                    fit.knots
                ),
            )?;
        }
        Command::Verify { fit, data, pmf } => {
            let f = with_path(&fit, io::read_fit(open(&fit)?))?;
            let report = if pmf {
                let p0 = with_path(&data, io::read_pmf(open(&data)?))?;
                verify_kl(&f, &p0, c.tol)?
            } else {
                let counts = with_path(&data, io::read_counts(open(&data)?))?;
                verify_mle(&f, &counts, c.tol)?
            };
            emit(
                c,
                &to_json(&report)?,
                &format!("verify: passed={} gap={:.3e} tol={:e}", report.passed, report.gap(), report.tol),
            )?;
            return Ok(report.passed);
        }
        Command::Ci { counts, level, draws } => {
            let data = with_path(&counts, io::read_counts(open(&counts)?))?;
            let fit = fit_mle(&data, &opts)?;
            let config = LimitDrawConfig::plug_in(&fit, draws, c.seed, level);
            let band = pointwise_ci(&fit, data.n(), &config)?;
            for w in &band.warnings {
                eprintln!("warning: {w}");
            }
            let artifact = match c.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut buf = Vec::new();
                    io::write_band(&band, &mut buf)?;
                    buf
                }
                Format::Json => to_json(&band)?,
            };
            let mut plot = PlotData::new();
            for p in &band.points {
                plot.push("estimate", p.x as f64, p.estimate);
                plot.push("lower", p.x as f64, p.lower);
                plot.push("upper", p.x as f64, p.upper);
            }
            emit_plot(c, &plot)?;
            let mean_len = band.points.iter().map(|p| p.length()).sum::<f64>() / band.points.len() as f64;
            emit(
                c,
                &artifact,
                &format!(
                    "ci: n={} level={} draws={} seed={} points={} mean_length={:.6}",
                    data.n(),
                    level,
                    draws,
                    c.seed,
                    band.points.len(),
                    mean_len
                ),
            )?;
        }
        Command::Mixture { counts, inflate, max_em } => {
            let data = with_path(&counts, io::read_counts(open(&counts)?))?;
            let mix =
                fit_inflated(&data, inflate, &MixtureOptions { solver: opts, max_em, ..MixtureOptions::default() })?;
            if !mix.converged {
                eprintln!("warning: EM stopped after {} iterations without converging", mix.em_iterations);
            }
            let json = serde_json::json!({
                "pi": mix.pi,
                "z0": mix.z0,
                "loglik": mix.loglik,
                "em_iterations": mix.em_iterations,
                "loglik_trace_len": mix.loglik_trace.len(),
                "converged": mix.converged,
                "mean": mix.mean(),
                "component_mean": mix.component_mean(),
                "component": mix.component,
            });
            let mut plot = PlotData::new();
            plot.extend_pmf("empirical", &empirical_pmf(&data)?);
            plot.extend_pmf("mixture", &mix.pmf());
            plot.extend_pmf("component", &mix.component.to_pmf());
            emit_plot(c, &plot)?;
            emit(
                c,
                &to_json(&json)?,
                &format!(
                    "mixture: pi={:.6} z0={} p(z0)={:.6} loglik={:.8} em_iterations={} converged={}",
                    mix.pi,
                    mix.z0,
                    mix.prob(mix.z0),
                    mix.loglik,
                    mix.em_iterations,
                    mix.converged
                ),
            )?;
        }
        Command::Simulate { dist, n, reps, estimators } => {
            let d: DistSpec = dist.parse()?;
            let est = Estimator::parse_list(&estimators)?;
            let rep = run_comparison(&d, n, reps, &est, c.seed, &opts)?;
            let artifact = match c.format.unwrap_or(Format::Csv) {
                Format::Json => to_json(&rep)?,
                Format::Csv => two_blocks(
                    csv_bytes(
                        &["rep", "estimator", "l2", "hellinger"],
                        rep.rows.iter().map(|r| {
                            vec![r.rep.to_string(), r.estimator.to_string(), r.l2.to_string(), r.hellinger.to_string()]
                        }),
                    )?,
                    csv_bytes(
                        &[
                            "estimator",
                            "successes",
                            "failures",
                            "mean_l2",
                            "q1_l2",
                            "median_l2",
                            "q3_l2",
                            "median_hellinger",
                        ],
                        rep.summary.iter().map(|s| {
                            vec![
                                s.estimator.to_string(),
                                s.successes.to_string(),
                                s.failures.to_string(),
                                s.mean_l2.to_string(),
                                s.q1_l2.to_string(),
                                s.median_l2.to_string(),
                                s.q3_l2.to_string(),
                                s.median_hellinger.to_string(),
                            ]
                        }),
                    )?,
                ),
            };
            let mut plot = PlotData::new();
            for (i, s) in rep.summary.iter().enumerate() {
                for r in rep.rows.iter().filter(|r| r.estimator == s.estimator) {
                    plot.push(&format!("l2_{}", s.estimator), i as f64, r.l2);
                }
            }
            emit_plot(c, &plot)?;
            let medians: Vec<String> =
                rep.summary.iter().map(|s| format!("{}={:.5}", s.estimator, s.median_l2)).collect();
            emit(
                c,
                &artifact,
                &format!(
                    "simulate: dist={} n={} reps={} seed={} median_l2 {}",
                    rep.dist,
                    n,
                    reps,
                    c.seed,
                    medians.join(" ")
                ),
            )?;
        }
        Command::Cilen { a, n, reps, draws, x, level } => {
            let a_values = parse_range(&a)?;
            let t = ci_length_experiment(&a_values, n, reps, draws, x, level, c.seed, &opts)?;
            let artifact = match c.format.unwrap_or(Format::Csv) {
                Format::Json => to_json(&t)?,
                Format::Csv => two_blocks(
                    csv_bytes(
                        &["a", "rep", "endpoint", "length"],
                        t.replications.iter().map(|r| {
                            vec![r.a.to_string(), r.rep.to_string(), r.endpoint.to_string(), r.length.to_string()]
                        }),
                    )?,
                    csv_bytes(
                        &["a", "log_concave", "intervals", "skipped", "mean_length", "sd_length", "mean_endpoint"],
                        t.rows.iter().map(|r| {
                            vec![
                                r.a.to_string(),
                                r.log_concave.to_string(),
                                r.intervals.to_string(),
                                r.skipped.to_string(),
                                r.mean_length.to_string(),
                                r.sd_length.to_string(),
                                r.mean_endpoint.to_string(),
                            ]
                        }),
                    )?,
                ),
            };
            let mut plot = PlotData::new();
            for r in &t.rows {
                plot.push("mean_length_vs_endpoint", r.mean_endpoint, r.mean_length);
                plot.push("mean_length_vs_a", r.a as f64, r.mean_length);
            }
            emit_plot(c, &plot)?;
            let fmt = |v: Option<f64>| v.map_or("none".to_string(), |r| format!("{r:.4}"));
            emit(
                c,
                &artifact,
                &format!(
                    "cilen: x={} n={} reps={} draws={} seed={} spearman_vs_a={} spearman_vs_endpoint={}",
                    x,
                    n,
                    reps,
                    draws,
                    c.seed,
                    fmt(t.trend_vs_a),
                    fmt(t.trend_vs_endpoint)
                ),
            )?;
        }
        Command::Rate { pmf, dist, n, reps } => {
            let p0 = match (pmf, dist) {
                (Some(path), None) => with_path(&path, io::read_pmf(open(&path)?))?,
                (None, Some(d)) => d.parse::<DistSpec>()?.pmf().clone(),
                _ => bail!(lcpmf::Error::InvalidInput("give exactly one of --pmf or --dist".into())),
            };
            let grid: Vec<usize> = parse_list(&n, "sample size")?;
            let r = rate_check(&p0, &grid, reps, c.seed, &opts)?;
            let artifact = match c.format.unwrap_or(Format::Csv) {
                Format::Json => to_json(&r)?,
                Format::Csv => two_blocks(
                    csv_bytes(
                        &["n", "median_hellinger", "median_cdf_sup"],
                        r.rows.iter().map(|row| {
                            vec![row.n.to_string(), row.median_hellinger.to_string(), row.median_cdf_sup.to_string()]
                        }),
                    )?,
                    csv_bytes(
                        &["slope", "reps", "truth_log_concave", "high_variance"],
                        [vec![
                            r.slope.to_string(),
                            r.reps.to_string(),
                            r.truth_log_concave.to_string(),
                            r.high_variance.to_string(),
                        ]],
                    )?,
                ),
            };
            let mut plot = PlotData::new();
            for row in &r.rows {
                plot.push("log_median_hellinger", (row.n as f64).ln(), row.median_hellinger.ln());
            }
            emit_plot(c, &plot)?;
            if r.high_variance {
                eprintln!("warning: few replications; the slope is highly variable");
            }
            emit(c, &artifact, &format!("rate: slope={:.4} reps={} seed={}", r.slope, reps, c.seed))?;
        }
        Command::Knots { dist, knots, n, reps } => {
            let d: DistSpec = dist.parse()?;
            let targets = match knots {
                Some(k) => parse_list::<i64>(&k, "knot")?,
                None => d.interior_knots(),
            };
            if targets.is_empty() {
                bail!(lcpmf::Error::InvalidInput("no knots to track; pass --knots".into()));
            }
            let grid: Vec<usize> = parse_list(&n, "sample size")?;
            let rec = knot_recovery(&d, &targets, &grid, reps, c.seed, &opts)?;
            let artifact = match c.format.unwrap_or(Format::Csv) {
                Format::Json => to_json(&rec)?,
                Format::Csv => csv_bytes(
                    &["n", "knot", "rate", "endpoint_rate", "failures"],
                    rec.rows.iter().flat_map(|row| {
                        targets.iter().zip(&row.rates).map(move |(k, rate)| {
                            vec![
                                row.n.to_string(),
                                k.to_string(),
                                rate.to_string(),
                                row.endpoint_rate.to_string(),
                                row.failures.to_string(),
                            ]
                        })
                    }),
                )?,
            };
            let mut plot = PlotData::new();
            for row in &rec.rows {
                for (k, rate) in targets.iter().zip(&row.rates) {
                    plot.push(&format!("knot_{k}"), row.n as f64, *rate);
                }
            }
            emit_plot(c, &plot)?;
            let last: Vec<String> = rec.rows.iter().map(|row| format!("n={}:{:?}", row.n, row.rates)).collect();
            emit(
                c,
                &artifact,
                &format!("knots: dist={} knots={:?} seed={} {}", rec.dist, targets, c.seed, last.join(" ")),
            )?;
        }
    }
    Ok(true)
}
