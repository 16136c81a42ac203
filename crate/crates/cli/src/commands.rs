//! One function per subcommand. Each returns the JSON outputs of its report
//! and, where the data is tabular, a CSV rendering.

use std::f64::consts::PI;
use std::fmt::Write as _;

use anderson_dos::dos::{check_feasible, dos_at, dos_sweep, regime_report, sharp_regime};
use anderson_dos::expansion::{
    convergence_ratio, correlation_element, diagonal_exclusion_width, resolvent_element,
    SeriesResult,
};
use anderson_dos::moments::MomentTable;
use anderson_dos::oracle::{mc_correlation, mc_resolvent, sturm_dos, McEstimate};
use anderson_dos::walks::{count_paths, enumerate_paths, LatticeSite};
use log::info;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, ValidateTarget};
use crate::error::CliError;
use crate::Command;

pub struct Outcome {
    pub outputs: Value,
    pub csv: Option<String>,
    /// `Some(false)` when a validation comparison failed.
    pub verdict: Option<bool>,
}

/// Seventeen significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report data serializes")
}

pub fn execute(command: Command, config: &RunConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Dos => dos(config),
        Command::Resolvent => resolvent(config),
        Command::Correlation => correlation(config),
        Command::Validate => validate(config),
        Command::Paths => paths(config),
        Command::Moments => moments(config),
        Command::Regime => regime(config),
    }
}

fn series_csv(series: &SeriesResult, two_orders: bool) -> String {
    let mut out = String::from(if two_orders {
        "k,l,re,im,bound\n"
    } else {
        "k,re,im,bound\n"
    });
    for t in &series.terms {
        if two_orders {
            let _ = write!(out, "{},{},", t.k, t.l);
        } else {
            let _ = write!(out, "{},", t.k);
        }
        let _ = writeln!(out, "{},{},{}", num(t.value.re), num(t.value.im), num(t.bound));
    }
    out
}

fn dos(config: &RunConfig) -> Result<Outcome, CliError> {
    let params = config.params()?;
    let win = config.window()?;
    let opts = config.options();
    let grid = config.grid()?;
    check_feasible(&params, &win, &opts, config.series.max_ratio)?;
    info!(
        "dos: {} points, ratio {:.6}, C = {:.6}",
        grid.len(),
        convergence_ratio(&params, &win),
        win.bound_constant()
    );
    let curve = dos_sweep(&params, &win, &grid, &opts)?;
    let mut csv = String::from("lambda,n,tail_bound,k_used\n");
    for i in 0..curve.len() {
        let p = curve.point(i);
        let _ = writeln!(csv, "{},{},{},{}", num(p.lambda), num(p.value), num(p.tail_bound), p.k_used);
    }
    let reached = curve.tails.iter().all(|t| *t * PI <= opts.tol);
    Ok(Outcome {
        outputs: json!({
            "curve": curve,
            "tolerance_reached": reached,
            "regime": regime_report(&params, &win),
        }),
        csv: Some(csv),
        verdict: None,
    })
}

fn resolvent(config: &RunConfig) -> Result<Outcome, CliError> {
    let params = config.params()?;
    let win = config.window()?;
    let opts = config.options();
    let z = config.z()?;
    let (n, m) = config.sites()?;
    let series = resolvent_element(&params, &win, &n, &m, z, &opts)?;
    info!("resolvent: K = {}, tail {:.3e}", series.k_used, series.tail_bound);
    Ok(Outcome {
        csv: Some(series_csv(&series, false)),
        outputs: json!({
            "z": z,
            "n": n,
            "m": m,
            "tolerance_reached": series.reached(opts.tol),
            "series": series,
        }),
        verdict: None,
    })
}

fn correlation_series(config: &RunConfig) -> Result<(SeriesResult, Value), CliError> {
    let params = config.params()?;
    let contour = config.mixed_contour()?;
    let c = config.correlation.as_ref().expect("checked by mixed_contour");
    let a1 = config.operator("correlation.a1", &c.a1)?;
    let a2 = config.operator("correlation.a2", &c.a2)?;
    let series = correlation_element(&params, &contour, &a1, &a2, c.z1, c.z2, &config.options())?;
    info!("correlation: N = {}, tail {:.3e}", series.k_used, series.tail_bound);
    let extra = json!({
        "z1": c.z1,
        "z2": c.z2,
        "bound_constant": contour.bound_constant(),
        "diagonal_exclusion_width": diagonal_exclusion_width(&params, contour.bound_constant()),
    });
    Ok((series, extra))
}

fn correlation(config: &RunConfig) -> Result<Outcome, CliError> {
    let (series, mut outputs) = correlation_series(config)?;
    outputs["tolerance_reached"] = json!(series.reached(config.series.tol));
    let csv = series_csv(&series, true);
    outputs["series"] = to_value(&series);
    Ok(Outcome {
        outputs,
        csv: Some(csv),
        verdict: None,
    })
}

#[derive(Serialize)]
struct Comparison {
    label: String,
    expansion_value: Complex64,
    tail_bound: f64,
    k_used: usize,
    ratio: f64,
    mc: McEstimate,
    /// Histogram bin bias, zero for resolvent comparisons.
    bias: f64,
    difference: Complex64,
    /// Allowed deviation per component.
    tolerance: f64,
    pass: bool,
}

impl Comparison {
    fn new(label: String, series: &SeriesResult, mc: McEstimate, bias: f64) -> Self {
        let expansion = series.value;
        let tail = series.tail_bound;
        let difference = expansion - mc.mean;
        let tolerance = tail + 3.0 * mc.stderr + bias;
        let pass = difference.re.abs() <= tolerance && difference.im.abs() <= tolerance;
        Self {
            label,
            expansion_value: expansion,
            tail_bound: tail,
            k_used: series.k_used,
            ratio: series.ratio,
            mc,
            bias,
            difference,
            tolerance,
            pass,
        }
    }
}

fn validate(config: &RunConfig) -> Result<Outcome, CliError> {
    let seed = config.seed()?;
    let (spec, b) = config.box_spec()?;
    let target = config
        .validate
        .as_ref()
        .map(|v| v.target)
        .unwrap_or_default();
    let params = config.params()?;
    let opts = config.options();
    let mut comparisons = Vec::new();
    match target {
        ValidateTarget::Resolvent => {
            let win = config.window()?;
            let z = config.z()?;
            let o = LatticeSite::origin(params.d())?;
            let series = resolvent_element(&params, &win, &o, &o, z, &opts)?;
            let mc = mc_resolvent(&spec, &params, z, b.samples, seed)?;
            comparisons.push(Comparison::new(format!("G(0,0;{z})"), &series, mc, 0.0));
        }
        ValidateTarget::Correlation => {
            let (series, _) = correlation_series(config)?;
            let c = config.correlation.as_ref().expect("checked");
            let a1 = config.operator("correlation.a1", &c.a1)?;
            let a2 = config.operator("correlation.a2", &c.a2)?;
            let mc = mc_correlation(&spec, &params, &a1, &a2, c.z1, c.z2, b.samples, seed)?;
            comparisons.push(Comparison::new(
                format!("F({}, {})", c.z1, c.z2),
                &series,
                mc,
                0.0,
            ));
        }
        ValidateTarget::Dos => {
            let win = config.window()?;
            let v = config.validate.as_ref().expect("target set");
            if v.lambdas.is_empty() {
                return Err(CliError::Config {
                    field: Some("validate.lambdas".into()),
                    message: "the dos target needs at least one energy".into(),
                });
            }
            for &lambda in &v.lambdas {
                let point = dos_at(&params, &win, lambda, &opts)?;
                let density = SeriesResult {
                    value: Complex64::new(point.value, 0.0),
                    tail_bound: point.tail_bound,
                    k_used: point.k_used,
                    ratio: convergence_ratio(&params, &win),
                    terms: Vec::new(),
                };
                let hist = sturm_dos(&spec, &params, lambda, v.bin_width, b.samples, seed)?;
                comparisons.push(Comparison::new(
                    format!("n({lambda})"),
                    &density,
                    hist.estimate,
                    hist.bias,
                ));
            }
        }
    }
    let pass = comparisons.iter().all(|c| c.pass);
    for c in &comparisons {
        info!(
            "{}: expansion {} vs mc {} ± {:.3e} -> {}",
            c.label,
            c.expansion_value,
            c.mc.mean,
            c.mc.stderr,
            if c.pass { "pass" } else { "fail" }
        );
    }
    Ok(Outcome {
        outputs: json!({
            "target": target,
            "params": {"d": params.d(), "h": params.h(), "distribution": params.dist().spec()},
            "z": config.z,
            "comparisons": comparisons,
            "verdict": if pass { "pass" } else { "fail" },
        }),
        csv: None,
        verdict: Some(pass),
    })
}

fn paths(config: &RunConfig) -> Result<Outcome, CliError> {
    let p = config.paths.as_ref().ok_or_else(|| CliError::Config {
        field: Some("paths".into()),
        message: "required for this command".into(),
    })?;
    let d = config.model.d;
    let origin = vec![0; d];
    let start = LatticeSite::new(p.start.as_deref().unwrap_or(&origin))?;
    let end = LatticeSite::new(p.end.as_deref().unwrap_or(&origin))?;
    let limits = config.limits();
    let count = count_paths(d, p.k, &start, &end, &limits)?;
    let mut csv = String::from("index,sites,distinct\n");
    let mut walks = Vec::new();
    if count <= p.list_limit {
        enumerate_paths(d, p.k, &start, &end, &limits, |sites, profile| {
            let line: Vec<String> = sites.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(csv, "{},{},{}", walks.len(), line.join(" "), profile.distinct());
            walks.push(sites.to_vec());
        })?;
    }
    Ok(Outcome {
        outputs: json!({
            "d": d,
            "k": p.k,
            "start": start,
            "end": end,
            "count": count,
            "walks": (count <= p.list_limit).then_some(walks),
        }),
        csv: (count <= p.list_limit).then_some(csv),
        verdict: None,
    })
}

fn moments(config: &RunConfig) -> Result<Outcome, CliError> {
    let m = config.moments.as_ref().ok_or_else(|| CliError::Config {
        field: Some("moments".into()),
        message: "required for this command".into(),
    })?;
    let dist = config.distribution()?;
    let win = config.window()?;
    let z = config.z()?;
    let table = MomentTable::build(&dist, &win, z, m.sheet, m.max_ell)?;
    let mut csv = String::from("ell,re,im,method\n");
    for (ell, (v, how)) in table.values.iter().zip(&table.methods).enumerate() {
        let _ = writeln!(csv, "{ell},{},{},{}", num(v.re), num(v.im), how.as_str());
    }
    Ok(Outcome {
        outputs: json!({
            "table": table,
            "bound_constant": win.bound_constant(),
            "in_window": win.contains(z),
        }),
        csv: Some(csv),
        verdict: None,
    })
}

/// Without a window only the sharp uniform regime is reported.
fn regime(config: &RunConfig) -> Result<Outcome, CliError> {
    let params = config.params()?;
    let outputs = if config.window.is_some() {
        to_value(&regime_report(&params, &config.window()?))
    } else {
        let sharp = params
            .dist()
            .uniform_half_width()
            .and_then(|a| sharp_regime(params.d(), a, params.h()));
        json!({"d": params.d(), "h": params.h(), "sharp": sharp})
    };
    Ok(Outcome {
        outputs,
        csv: None,
        verdict: None,
    })
}
