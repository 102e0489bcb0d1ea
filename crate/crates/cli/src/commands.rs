//! Subcommand implementations. Each returns whether its verification passed.

use crate::checks::{self, Check};
use crate::config::ExperimentConfig;
use anyhow::Result;
use clap::Args;
use lowlying::density::{self, asymptotic_caps, FamilyConfig, UNCAPPED};
use lowlying::eisenstein::{cusps, verify_coefficient_bounds, CoefficientGrid};
use lowlying::kuznetsov::{verify_hplus_bounds, BoundGrid};
use lowlying::petersson::{delta_q, delta_q_star, FamilyParams, TruncationPolicy};
use lowlying::testfn::{make_pair, make_weight, TestFunctionPair, WeightFunction};
use serde::Serialize;
use std::io::Write;
use std::time::Instant;

/// Header of the density CSV.
pub const DENSITY_HEADER: &str = "Q,k,sigma,phi_kind,statistic,prediction,abs_err,tail_bound,prime_cutoff,seconds";

/// Header of the Σ₁ CSV.
pub const SIGMA1_HEADER: &str =
    "Q,k,sigma,phi_kind,direct,direct_tail,expanded,expanded_tail,discarded_bound,seconds";

/// A float with 17 significant digits, enough to round-trip.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Args)]
pub struct DeltaArgs {
    /// Level q.
    #[arg(long)]
    pub q: u64,
    #[arg(long, default_value_t = 1)]
    pub m: u64,
    #[arg(long, default_value_t = 1)]
    pub n: u64,
    /// Average over newforms only (requires gcd(mn, q) = 1).
    #[arg(long)]
    pub star: bool,
}

#[derive(Debug, Clone, Args)]
pub struct Sigma1Args {
    /// Also evaluate the sieve expansion.
    #[arg(long)]
    pub expanded: bool,
    /// Cap the expansion at the asymptotic scale (log Q)⁶ and (log Q)³.
    #[arg(long = "asymptotic-caps")]
    pub asymptotic_caps: bool,
}

#[derive(Debug, Clone, Args)]
pub struct KuznetsovArgs {
    /// Grid refinement level; the check compares it with the next level.
    #[arg(long, default_value_t = 0)]
    pub level: u32,
    /// Drop grid points with X above this value.
    #[arg(long = "x-max", default_value_t = 8.0)]
    pub x_max: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EisensteinArgs {
    /// Levels N of the grid.
    #[arg(long = "levels", value_delimiter = ',', default_value = "6,12,24")]
    pub levels: Vec<u64>,
    /// Spectral parameters t.
    #[arg(long = "ts", value_delimiter = ',', default_value = "0.5,1.3,3")]
    pub ts: Vec<f64>,
    /// Square roots e of the square indices.
    #[arg(long = "es", value_delimiter = ',', default_value = "1,2,3")]
    pub es: Vec<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ArithArgs {
    /// Largest modulus checked.
    #[arg(long = "c-max", default_value_t = 100)]
    pub c_max: u64,
}

fn policy(cfg: &ExperimentConfig) -> TruncationPolicy {
    let mut p = TruncationPolicy::budgeted(cfg.eps, cfg.modulus_cap);
    p.parallel = cfg.workers() > 1;
    p
}

fn inputs(cfg: &ExperimentConfig) -> Result<(TestFunctionPair, WeightFunction)> {
    Ok((make_pair(cfg.phi, cfg.sigma)?, make_weight(cfg.psi_a, cfg.psi_b)?))
}

fn emit(cfg: &ExperimentConfig, text: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(cfg: &ExperimentConfig, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(cfg, &text)
}

/// Seconds column: wall time, or 0 in deterministic mode so that output is
/// byte-identical between runs.
fn seconds(cfg: &ExperimentConfig, start: Instant) -> String {
    if cfg.deterministic {
        fmt17(0.0)
    } else {
        fmt17(start.elapsed().as_secs_f64())
    }
}

#[derive(Serialize)]
struct DeltaOutput {
    k: u32,
    q: u64,
    m: u64,
    n: u64,
    star: bool,
    value: f64,
    tail_bound: f64,
    c_terms: u64,
    e_terms: u64,
}

pub fn delta(cfg: &ExperimentConfig, args: &DeltaArgs) -> Result<bool> {
    let params = FamilyParams::new(cfg.k, args.q)?;
    let r = if args.star {
        delta_q_star(params, args.m, args.n, cfg.eps)?
    } else {
        delta_q(params, args.m, args.n, cfg.eps)?
    };
    emit_json(
        cfg,
        &DeltaOutput {
            k: cfg.k,
            q: args.q,
            m: args.m,
            n: args.n,
            star: args.star,
            value: r.value,
            tail_bound: r.tail_bound,
            c_terms: r.c_terms,
            e_terms: r.e_terms,
        },
    )?;
    Ok(true)
}

pub fn density(cfg: &ExperimentConfig) -> Result<bool> {
    let (phi, psi) = inputs(cfg)?;
    let family = FamilyConfig::new(cfg.k, policy(cfg));
    let mut csv = String::from(DENSITY_HEADER);
    csv.push('\n');
    for &big_q in &cfg.big_q {
        let start = Instant::now();
        let r = density::one_level_density(big_q, &phi, &psi, &family)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            big_q,
            cfg.k,
            fmt17(cfg.sigma),
            phi.kind.as_str(),
            fmt17(r.statistic),
            fmt17(r.prediction),
            fmt17(r.abs_err()),
            fmt17(r.tail_bound),
            r.prime_cutoff,
            seconds(cfg, start),
        ));
    }
    emit(cfg, &csv)?;
    Ok(true)
}

pub fn sigma1(cfg: &ExperimentConfig, args: &Sigma1Args) -> Result<bool> {
    let (phi, psi) = inputs(cfg)?;
    let family = FamilyConfig::new(cfg.k, policy(cfg));
    let mut csv = String::from(SIGMA1_HEADER);
    csv.push('\n');
    let mut agree = true;
    for &big_q in &cfg.big_q {
        let start = Instant::now();
        let direct = density::sigma1_direct(big_q, &phi, &psi, &family)?;
        let (expanded, expanded_tail, discarded) = if args.expanded {
            let (l0, e) = if args.asymptotic_caps { asymptotic_caps(big_q) } else { (UNCAPPED, UNCAPPED) };
            let x = density::sigma1_expanded(big_q, &phi, &psi, &family, l0, e)?;
            let tol = direct.tail_bound + x.tail_bound + x.discarded_bound + 1e-6;
            agree &= (x.value - direct.value).abs() <= tol;
            (fmt17(x.value), fmt17(x.tail_bound), fmt17(x.discarded_bound))
        } else {
            (String::new(), String::new(), String::new())
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            big_q,
            cfg.k,
            fmt17(cfg.sigma),
            phi.kind.as_str(),
            fmt17(direct.value),
            fmt17(direct.tail_bound),
            expanded,
            expanded_tail,
            discarded,
            seconds(cfg, start),
        ));
    }
    emit(cfg, &csv)?;
    Ok(agree)
}

fn truncated_grid(k: u32, level: u32, x_max: f64) -> BoundGrid {
    let mut g = BoundGrid::standard(k, level);
    g.xs.retain(|&x| x <= x_max);
    g
}

#[derive(Serialize)]
struct StabilityOutput<T: Serialize> {
    coarse: T,
    fine: T,
    factor: f64,
    stable: bool,
}

pub fn kuznetsov_check(cfg: &ExperimentConfig, args: &KuznetsovArgs) -> Result<bool> {
    let coarse_grid = truncated_grid(cfg.k, args.level, args.x_max);
    if coarse_grid.xs.is_empty() {
        anyhow::bail!("--x-max {} leaves no grid points", args.x_max);
    }
    let coarse = verify_hplus_bounds(&coarse_grid)?;
    let fine = verify_hplus_bounds(&truncated_grid(cfg.k, args.level + 1, args.x_max))?;
    let stable = coarse.stable_against(&fine, 2.0);
    emit_json(cfg, &StabilityOutput { coarse, fine, factor: 2.0, stable })?;
    Ok(stable)
}

#[derive(Serialize)]
struct EisensteinOutput<T: Serialize> {
    cusp_counts_ok: bool,
    bounds: StabilityOutput<T>,
}

pub fn eisenstein_check(cfg: &ExperimentConfig, args: &EisensteinArgs) -> Result<bool> {
    if args.levels.iter().any(|&n| n == 0) || args.es.iter().any(|&e| e == 0) {
        anyhow::bail!("levels and e values must be positive");
    }
    let mut counts = true;
    for &n in &args.levels {
        let want: u64 = lowlying::arith::divisors(n)
            .into_iter()
            .map(|b| lowlying::arith::euler_phi(lowlying::arith::gcd(b, n / b)))
            .sum();
        counts &= cusps(n)?.len() as u64 == want;
    }
    let grid = CoefficientGrid {
        levels: args.levels.clone(),
        ts: args.ts.clone(),
        es: args.es.clone(),
    };
    // Refinement: insert the midpoint of each consecutive pair of t values.
    let mut ts = args.ts.clone();
    ts.extend(args.ts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    ts.sort_by(f64::total_cmp);
    let fine_grid = CoefficientGrid { ts, ..grid.clone() };
    let coarse = verify_coefficient_bounds(&grid)?;
    let fine = verify_coefficient_bounds(&fine_grid)?;
    let stable = coarse.stable_against(&fine, 2.0);
    emit_json(
        cfg,
        &EisensteinOutput {
            cusp_counts_ok: counts,
            bounds: StabilityOutput { coarse, fine, factor: 2.0, stable },
        },
    )?;
    Ok(counts && stable)
}

fn report_checks(cfg: &ExperimentConfig, checks: &[Check]) -> Result<bool> {
    for c in checks {
        eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    emit_json(cfg, &checks)?;
    Ok(checks.iter().all(|c| c.pass))
}

pub fn arith_check(cfg: &ExperimentConfig, args: &ArithArgs) -> Result<bool> {
    if args.c_max == 0 {
        anyhow::bail!("--c-max must be positive");
    }
    report_checks(cfg, &checks::arith_suite(args.c_max))
}

pub fn selftest(cfg: &ExperimentConfig) -> Result<bool> {
    report_checks(cfg, &checks::self_suite(&policy(cfg)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn headers_have_ten_columns() {
        assert_eq!(DENSITY_HEADER.split(',').count(), 10);
        assert_eq!(SIGMA1_HEADER.split(',').count(), 10);
    }
}
