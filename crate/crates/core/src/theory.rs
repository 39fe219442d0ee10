//! Closed-form expected performance of the actor-critic loop.
//!
//! The actor is modelled as a Bernoulli generator that is correct with
//! probability `p`. The critic accepts a wrong candidate with probability `q`
//! (false negative rate) and rejects a correct one with probability `s` (false
//! positive rate). The loop runs at most `z` generations; verdicts are taken
//! after generations `1..z-1` and the `z`-th generation is emitted unchecked.
//!
//! With `A = ps + (1-p)(1-q)`:
//!
//! ```text
//! prob = p(1-s) * (1 - A^(z-1)) / (1 - A) + p * A^(z-1)
//! ```
//!
//! `1 - A` simplifies to `p(1-s) + q(1-p)`, which is what [`continue_gap`]
//! returns. Evaluating it directly avoids the cancellation in `1 - A` when the
//! parameters sit close to the degenerate corner.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when deciding that `q + s` lies exactly on the boundary.
pub const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("iteration budget z must be >= 1, got {0}")]
    ZeroBudget(u32),
    #[error("contour resolution must be >= 2, got {0}")]
    Resolution(usize),
    #[error("limit undefined: ps + (1-p)(1-q) = 1 (p = {p}, q = {q}, s = {s})")]
    DegenerateLimit { p: f64, q: f64, s: f64 },
}

fn check_prob(name: &'static str, value: f64) -> Result<f64, TheoryError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(TheoryError::OutOfRange { name, value })
    }
}

/// Actor accuracy, critic error rates and the generation budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcParams {
    pub p: f64,
    pub q: f64,
    pub s: f64,
    pub z: u32,
}

impl AcParams {
    pub fn new(p: f64, q: f64, s: f64, z: u32) -> Result<Self, TheoryError> {
        let params = AcParams { p, q, s, z };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), TheoryError> {
        check_prob("p", self.p)?;
        check_prob("q", self.q)?;
        check_prob("s", self.s)?;
        if self.z == 0 {
            return Err(TheoryError::ZeroBudget(self.z));
        }
        Ok(())
    }

    /// `A = ps + (1-p)(1-q)`: probability that one checked round does not end
    /// the loop.
    pub fn continue_mass(&self) -> f64 {
        self.p * self.s + (1.0 - self.p) * (1.0 - self.q)
    }

    /// `1 - A`, computed without cancellation.
    pub fn continue_gap(&self) -> f64 {
        continue_gap(self.p, self.q, self.s)
    }
}

/// `1 - A = p(1-s) + q(1-p)`.
pub fn continue_gap(p: f64, q: f64, s: f64) -> f64 {
    p * (1.0 - s) + q * (1.0 - p)
}

/// Where a critic with error rates `(q, s)` sits relative to the bare actor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainRegion {
    /// `q + s < 1`: the loop never does worse than the actor.
    Gain,
    /// `q + s = 1`: the loop reproduces the actor exactly.
    Neutral,
    /// `q + s > 1`: the loop never does better than the actor.
    Loss,
}

/// Probability that the loop emits a correct SQL.
pub fn expected_prob(params: &AcParams) -> Result<f64, TheoryError> {
    params.validate()?;
    let AcParams { p, s, z, .. } = *params;
    let checked_rounds = z - 1;
    let gap = params.continue_gap();

    if gap == 0.0 {
        // A = 1: the geometric form is 0/0, sum the series term by term.
        let a = params.continue_mass();
        let mut total = 0.0;
        let mut a_pow = 1.0;
        for _ in 0..checked_rounds {
            total += p * (1.0 - s) * a_pow;
            a_pow *= a;
        }
        return Ok(total + p * a_pow);
    }

    // ln(A) = ln(1 - gap); A^k = exp(k ln A); 1 - A^k = -expm1(k ln A).
    let ln_a = (-gap).ln_1p();
    let k = f64::from(checked_rounds);
    let a_pow = (k * ln_a).exp();
    let geometric = if ln_a == f64::NEG_INFINITY {
        // A = 0: only the i = 1 term survives.
        if checked_rounds == 0 {
            0.0
        } else {
            1.0
        }
    } else {
        -(k * ln_a).exp_m1() / gap
    };
    let a_pow = if checked_rounds == 0 { 1.0 } else { a_pow };
    Ok(p * (1.0 - s) * geometric + p * a_pow)
}

/// Limit of [`expected_prob`] as `z` grows without bound.
pub fn limit_prob(p: f64, q: f64, s: f64) -> Result<f64, TheoryError> {
    check_prob("p", p)?;
    check_prob("q", q)?;
    check_prob("s", s)?;
    let gap = continue_gap(p, q, s);
    if gap == 0.0 {
        return Err(TheoryError::DegenerateLimit { p, q, s });
    }
    Ok(p * (1.0 - s) / gap)
}

/// Gain, neutral or loss region for a critic, independent of `p` and `z`.
pub fn classify_gain(q: f64, s: f64) -> Result<GainRegion, TheoryError> {
    check_prob("q", q)?;
    check_prob("s", s)?;
    let total = q + s;
    Ok(if (total - 1.0).abs() <= BOUNDARY_EPS {
        GainRegion::Neutral
    } else if total < 1.0 {
        GainRegion::Gain
    } else {
        GainRegion::Loss
    })
}

/// Exact expected performance obtained by walking every outcome path.
///
/// Each checked round branches into (correct, accept), (wrong, accept),
/// (correct, reject) and (wrong, reject); accepting branches terminate, the two
/// rejecting branches recurse. After `z-1` rejections the last generation is
/// emitted as is. Cost is `O(2^(z-1))`, intended for `z <= 20`.
pub fn enumerate_prob(params: &AcParams) -> Result<f64, TheoryError> {
    params.validate()?;

    fn walk(p: f64, q: f64, s: f64, remaining_checks: u32, path_mass: f64) -> f64 {
        if remaining_checks == 0 {
            return path_mass * p;
        }
        let correct_accept = path_mass * p * (1.0 - s);
        // (wrong, accept) ends the path with an incorrect output: no mass.
        let correct_reject = path_mass * p * s;
        let wrong_reject = path_mass * (1.0 - p) * (1.0 - q);
        correct_accept
            + walk(p, q, s, remaining_checks - 1, correct_reject)
            + walk(p, q, s, remaining_checks - 1, wrong_reject)
    }

    Ok(walk(params.p, params.q, params.s, params.z - 1, 1.0))
}

/// One lattice point of a `q`-`s` contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    pub q: f64,
    pub s: f64,
    pub prob: f64,
}

/// `resolution x resolution` lattice over `[0,1]^2`, `q` varying slowest.
pub fn contour_grid(p: f64, z: u32, resolution: usize) -> Result<Vec<ContourPoint>, TheoryError> {
    check_prob("p", p)?;
    if z == 0 {
        return Err(TheoryError::ZeroBudget(z));
    }
    if resolution < 2 {
        return Err(TheoryError::Resolution(resolution));
    }
    let step = (resolution - 1) as f64;
    let mut grid = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let q = i as f64 / step;
        for j in 0..resolution {
            let s = j as f64 / step;
            let prob = expected_prob(&AcParams { p, q, s, z })?;
            grid.push(ContourPoint { q, s, prob });
        }
    }
    Ok(grid)
}

/// Rounds `value` to `digits` significant digits in plain notation, without
/// trailing zeros.
fn format_significant(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let text = format!("{value:.decimals$}");
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text
    }
}

/// Writes a contour as CSV with header `q,s,prob`.
pub fn write_contour_csv<W: Write>(grid: &[ContourPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "q,s,prob")?;
    for point in grid {
        writeln!(
            out,
            "{},{},{}",
            format_significant(point.q, 12),
            format_significant(point.s, 12),
            format_significant(point.prob, 12)
        )?;
    }
    out.flush()
}
