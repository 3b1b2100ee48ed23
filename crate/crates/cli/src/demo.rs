//! Parameter sweeps. Rows are computed in parallel and collected in grid order.

use std::f64::consts::FRAC_PI_4;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use untrusted_selftest::hardy::{canonical_realization, check_conditions, q_of_w};
use untrusted_selftest::npa::seesaw::{hardy_lower_bound, SeesawConfig};
use untrusted_selftest::npa::{max_value, SolverConfig};
use untrusted_selftest::qmath::trace_distance;
use untrusted_selftest::scenario::{
    behavior_of, chsh_counterexample, chsh_value, observed, residual_bounds, IMPOSSIBLE_EVENT_FLOOR,
};
use untrusted_selftest::selftest::verify_qubit;

use crate::{builtin_spec, check_level, check_w, CliError, DemoArgs, DemoName, Expression, Format, Result, Sources, THREADS_ENV};

/// Allowed slack of the see-saw lower bound below `q(w)`.
pub const SEESAW_TOL: f64 = 1e-6;
/// Allowed slack of the relaxation above `q(w)`.
pub const SDP_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChshRow {
    pub alpha: f64,
    pub chsh_value: f64,
    pub l: f64,
    pub u: f64,
    #[serde(rename = "traceDistance_rho00_rho11")]
    pub trace_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HardyRow {
    pub w: f64,
    pub q_formula: f64,
    pub seesaw: f64,
    pub sdp_bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoDoc<R> {
    pub schema: String,
    pub name: String,
    pub rows: Vec<R>,
}

pub const DEMO: &str = "demo.v1";

/// `π/4 + span·(2k/(n−1) − 1)` for `k = 0..n`; the midpoint of an odd grid is exactly `π/4`.
pub fn alpha_grid(points: usize, span: f64) -> Vec<f64> {
    if points <= 1 {
        return vec![FRAC_PI_4];
    }
    (0..points)
        .map(|k| FRAC_PI_4 + span * (2.0 * k as f64 / (points - 1) as f64 - 1.0))
        .collect()
}

pub fn chsh_row(alpha: f64, beta: f64) -> Result<ChshRow> {
    let r = chsh_counterexample(alpha, beta)?;
    let b = behavior_of(&r);
    let (l, u) = residual_bounds(&b, IMPOSSIBLE_EVENT_FLOOR);
    let trace_distance = trace_distance(r.cq.state(0, 0), r.cq.state(1, 1)).map_err(untrusted_selftest::scenario::ScenarioError::from)?;
    Ok(ChshRow { alpha, chsh_value: chsh_value(&b)?, l, u, trace_distance })
}

/// Canonical device checks, see-saw lower bound and single-source relaxation at `level`.
pub fn hardy_row(w: f64, level: usize, seed: u64) -> Result<HardyRow> {
    let q = q_of_w(w)?;
    let canon = canonical_realization(w)?;
    let o = observed(&behavior_of(&canon.realization))?;
    let conditions = check_conditions(&o, (0, 0), &canon.test, 1e-9)?;
    let qubit = verify_qubit(&canon.realization, w, 1e-7)?;
    let lower = hardy_lower_bound(w, &SeesawConfig { seed, ..SeesawConfig::default() })?;
    let (upper, _) = max_value(&builtin_spec(Expression::Hardy, Sources::Single, w, level, None), &SolverConfig::default())?;
    let pass = conditions.pass && qubit.pass && lower.value >= q - SEESAW_TOL && upper <= q + SDP_TOL;
    Ok(HardyRow { w, q_formula: q, seesaw: lower.value, sdp_bound: upper, pass })
}

/// Worker count from the environment, when set to a positive integer.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got \"{v}\""))),
        },
    }
}

fn sweep<T: Send, R: Send>(items: Vec<T>, f: impl Fn(T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| items.into_par_iter().map(f).collect())
}

pub fn to_csv<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn from_csv<R: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<R>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<R>, _>>()
        .map_err(|e| CliError::Schema { file: "csv".into(), pointer: String::new(), message: e.to_string() })
}

fn render<R: Serialize>(name: &str, rows: Vec<R>, format: Format) -> Result<String> {
    match format {
        Format::Csv => to_csv(&rows),
        Format::Json => Ok(crate::io::to_string(&DemoDoc { schema: DEMO.into(), name: name.into(), rows })),
    }
}

pub fn run(a: DemoArgs) -> Result<bool> {
    let (text, pass) = match a.name {
        DemoName::ChshCounterexample => {
            let beta = a.beta;
            let rows = sweep(alpha_grid(a.points, a.span), |alpha| chsh_row(alpha, beta))?;
            (render("chsh-counterexample", rows, a.format)?, true)
        }
        DemoName::HardySelftest => {
            check_level(a.level)?;
            for &w in &a.w {
                check_w(w)?;
            }
            let (level, seed) = (a.level, a.seed);
            let rows = sweep(a.w.clone(), |w| hardy_row(w, level, seed))?;
            let pass = rows.iter().all(|r| r.pass);
            (render("hardy-selftest", rows, a.format)?, pass)
        }
    };
    match &a.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io { file: path.display().to_string(), message: e.to_string() })?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io { file: "stdout".into(), message: e.to_string() })?,
    }
    Ok(pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_midpoint_is_exact() {
        let g = alpha_grid(13, 0.3);
        assert_eq!(g[6], FRAC_PI_4);
        assert!((g[0] - (FRAC_PI_4 - 0.3)).abs() < 1e-15);
        assert!((g[12] - (FRAC_PI_4 + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn chsh_rows() {
        let r = chsh_row(FRAC_PI_4, FRAC_PI_4).unwrap();
        assert_eq!(format!("{:.8}", r.chsh_value), "0.70710678");
        assert!((r.l - 0.25).abs() < 1e-12 && (r.u - 0.25).abs() < 1e-12);
        let r = chsh_row(FRAC_PI_4 + 0.1, FRAC_PI_4).unwrap();
        assert!(r.l < 0.25 && r.u > 0.25 && r.trace_distance > 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![chsh_row(0.6, 0.8).unwrap(), chsh_row(0.7, 0.8).unwrap()];
        let text = to_csv(&rows).unwrap();
        assert!(text.starts_with("alpha,chshValue,l,u,traceDistance_rho00_rho11\n"));
        assert_eq!(from_csv::<ChshRow>(&text).unwrap(), rows);
        let h = vec![HardyRow { w: 0.0, q_formula: 0.1, seesaw: 0.1, sdp_bound: 0.1, pass: true }];
        assert_eq!(from_csv::<HardyRow>(&to_csv(&h).unwrap()).unwrap(), h);
    }

    #[test]
    fn hardy_row_at_zero() {
        let r = hardy_row(0.0, 2, untrusted_selftest::hardy::OPTIMIZER_SEED).unwrap();
        assert_eq!(format!("{:.8}", r.q_formula), "0.09016994");
        assert!(r.pass, "{r:?}");
    }
}
