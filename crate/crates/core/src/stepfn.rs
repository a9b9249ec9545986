//! Right-continuous monotone step functions on the real line.
//!
//! Every spectral distribution in this crate (normalized eigenvalue counting
//! functions, weighted singular-value distributions, limits of approximants)
//! is a [`StepFunction`]. Values are stored at their breakpoints and all
//! queries are binary searches, so sup-norm distances are computed exactly
//! on the merged breakpoint set rather than on a grid.

use std::fmt::Write as _;

use thiserror::Error;

/// Breakpoints closer than this are treated as a single jump.
pub const MERGE_TOL: f64 = 1e-9;

/// Slack allowed when checking that masses or weights sum to one.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("values and masses differ in length ({values} vs {masses})")]
    LengthMismatch { values: usize, masses: usize },
    #[error("no samples given")]
    Empty,
    #[error("negative mass {mass} at index {index}")]
    NegativeMass { index: usize, mass: f64 },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("total mass {0} exceeds 1")]
    MassOverflow(f64),
    #[error("mixture weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// A nondecreasing right-continuous step function with values in `[0, 1]`.
///
/// The value at `λ` is `cumulative[m]` for the largest breakpoint `≤ λ`, and
/// `0` below the first breakpoint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    cumulative: Vec<f64>,
}

/// The nonincreasing complement `λ ↦ 1 − f(λ)` of a [`StepFunction`],
/// sharing its breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TailFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    /// The identically zero function.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Cumulative function `λ ↦ Σ{masses[m] : values[m] ≤ λ}`.
    pub fn from_samples(values: &[f64], masses: &[f64]) -> Result<Self, StepError> {
        if values.len() != masses.len() {
            return Err(StepError::LengthMismatch {
                values: values.len(),
                masses: masses.len(),
            });
        }
        if values.is_empty() {
            return Err(StepError::Empty);
        }
        for (index, (&v, &m)) in values.iter().zip(masses).enumerate() {
            if !v.is_finite() || !m.is_finite() {
                return Err(StepError::NonFinite(index));
            }
            if m < 0.0 {
                return Err(StepError::NegativeMass { index, mass: m });
            }
        }
        let total = neumaier_sum(masses.iter().copied());
        if total > 1.0 + MASS_TOL {
            return Err(StepError::MassOverflow(total));
        }
        // Uniform 1/n masses go through exact counting so the total is exactly 1.
        let n = masses.len();
        let uniform = 1.0 / n as f64;
        if masses.iter().all(|&m| m == uniform) {
            return Ok(Self::from_counts(values.to_vec(), n));
        }
        Ok(Self::from_jumps(
            values.iter().copied().zip(masses.iter().copied()).collect(),
        ))
    }

    /// Counting function of `values` normalized by `denominator`; the value
    /// after the last breakpoint is `values.len() / denominator` exactly.
    pub(crate) fn from_counts(mut values: Vec<f64>, denominator: usize) -> Self {
        values.sort_by(f64::total_cmp);
        let denom = denominator as f64;
        let mut breakpoints = Vec::new();
        let mut cumulative = Vec::new();
        let mut count = 0usize;
        let mut idx = 0;
        while idx < values.len() {
            let head = values[idx];
            let mut last = head;
            while idx < values.len() && values[idx] - last <= MERGE_TOL {
                last = values[idx];
                count += 1;
                idx += 1;
            }
            breakpoints.push(head);
            cumulative.push(count as f64 / denom);
        }
        Self {
            breakpoints,
            cumulative,
        }
    }

    /// Builds the function from `(location, jump)` pairs, coalescing
    /// locations within [`MERGE_TOL`] onto the leftmost one.
    pub(crate) fn from_jumps(mut jumps: Vec<(f64, f64)>) -> Self {
        jumps.retain(|&(_, m)| m > 0.0);
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breakpoints = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = Neumaier::default();
        let mut idx = 0;
        while idx < jumps.len() {
            let head = jumps[idx].0;
            let mut last = head;
            while idx < jumps.len() && jumps[idx].0 - last <= MERGE_TOL {
                last = jumps[idx].0;
                acc.add(jumps[idx].1);
                idx += 1;
            }
            breakpoints.push(head);
            cumulative.push(acc.value().clamp(0.0, 1.0));
        }
        Self {
            breakpoints,
            cumulative,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Value at `+∞`.
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.breakpoints.is_empty()
    }

    /// Height of the jump at each breakpoint.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mut prev = 0.0;
        self.breakpoints
            .iter()
            .zip(&self.cumulative)
            .map(move |(&b, &c)| {
                let jump = c - prev;
                prev = c;
                (b, jump)
            })
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let pos = self.breakpoints.partition_point(|&b| b <= lambda);
        if pos == 0 {
            0.0
        } else {
            self.cumulative[pos - 1]
        }
    }

    /// Left limit `f(λ−)`.
    pub fn eval_left(&self, lambda: f64) -> f64 {
        let pos = self.breakpoints.partition_point(|&b| b < lambda);
        if pos == 0 {
            0.0
        } else {
            self.cumulative[pos - 1]
        }
    }

    /// Pointwise `1 − f`.
    pub fn complement(&self) -> TailFunction {
        TailFunction {
            breakpoints: self.breakpoints.clone(),
            values: self.cumulative.iter().map(|&c| 1.0 - c).collect(),
        }
    }

    /// CSV with header `lambda,value`, a leading `-inf,0` row and one row per
    /// breakpoint carrying the post-jump value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,value\n-inf,0\n");
        for (b, c) in self.breakpoints.iter().zip(&self.cumulative) {
            let _ = writeln!(out, "{b:?},{c:?}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, StepError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "lambda,value")) => {}
            _ => {
                return Err(StepError::Csv {
                    line: 1,
                    reason: "expected header `lambda,value`".into(),
                })
            }
        }
        match lines.next() {
            Some((_, "-inf,0")) => {}
            _ => {
                return Err(StepError::Csv {
                    line: 2,
                    reason: "expected leading row `-inf,0`".into(),
                })
            }
        }
        let mut breakpoints = Vec::new();
        let mut cumulative = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| StepError::Csv {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let (l, v) = line.split_once(',').ok_or_else(|| bad("missing comma"))?;
            let l: f64 = l.parse().map_err(|_| bad("bad lambda"))?;
            let v: f64 = v.parse().map_err(|_| bad("bad value"))?;
            if breakpoints.last().is_some_and(|&p| l <= p) {
                return Err(bad("breakpoints not increasing"));
            }
            if cumulative.last().is_some_and(|&p| v < p) || !(0.0..=1.0).contains(&v) {
                return Err(bad("values not monotone in [0,1]"));
            }
            breakpoints.push(l);
            cumulative.push(v);
        }
        Ok(Self {
            breakpoints,
            cumulative,
        })
    }
}

impl TailFunction {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let pos = self.breakpoints.partition_point(|&b| b <= lambda);
        if pos == 0 {
            1.0
        } else {
            self.values[pos - 1]
        }
    }
}

/// Pointwise convex combination `Σ w·f`.
pub fn mix(parts: &[(f64, &StepFunction)]) -> Result<StepFunction, StepError> {
    for (index, &(w, _)) in parts.iter().enumerate() {
        if !w.is_finite() {
            return Err(StepError::NonFinite(index));
        }
        if w < 0.0 {
            return Err(StepError::NegativeMass { index, mass: w });
        }
    }
    let sum = neumaier_sum(parts.iter().map(|p| p.0));
    if (sum - 1.0).abs() > MASS_TOL {
        return Err(StepError::WeightSum(sum));
    }
    if let [(_, f)] = parts {
        return Ok((*f).clone());
    }
    let jumps = parts
        .iter()
        .flat_map(|&(w, f)| f.jumps().map(move |(b, j)| (b, w * j)))
        .collect();
    Ok(StepFunction::from_jumps(jumps))
}

/// Groups the union of both breakpoint sets into clusters whose consecutive
/// gaps are at most [`MERGE_TOL`]; returns `(min, max)` per cluster.
fn merged_clusters(f: &[f64], g: &[f64]) -> Vec<(f64, f64)> {
    let mut all: Vec<f64> = f.iter().chain(g).copied().collect();
    all.sort_by(f64::total_cmp);
    let mut clusters: Vec<(f64, f64)> = Vec::new();
    for x in all {
        match clusters.last_mut() {
            Some(c) if x - c.1 <= MERGE_TOL => c.1 = x,
            _ => clusters.push((x, x)),
        }
    }
    clusters
}

/// `sup_{λ≥0} |f(λ) − g(λ)|`.
///
/// Both functions are constant between breakpoints, so the supremum is a
/// maximum over the states right after each breakpoint. Breakpoints of `f`
/// and `g` closer than [`MERGE_TOL`] are read as the same spectral value, so
/// slivers narrower than the eigensolver accuracy do not register.
pub fn sup_distance(f: &StepFunction, g: &StepFunction) -> f64 {
    let clusters = merged_clusters(&f.breakpoints, &g.breakpoints);
    let mut best: f64 = 0.0;
    for (idx, &(_, hi)) in clusters.iter().enumerate() {
        if hi < 0.0 {
            // Only the state on [hi, next_lo) matters, and only if it reaches λ = 0.
            let next_lo = clusters.get(idx + 1).map_or(f64::INFINITY, |c| c.0);
            if next_lo <= 0.0 {
                continue;
            }
        }
        best = best.max((f.eval(hi) - g.eval(hi)).abs());
    }
    best
}

/// `sup_{λ≥0} |f(λ) − F(λ)|` for a continuous nondecreasing `F`.
///
/// The supremum is attained at the one-sided limits at breakpoints of `f`
/// (or at `λ = 0`).
pub fn sup_distance_continuous<F: Fn(f64) -> f64>(f: &StepFunction, cdf: F) -> f64 {
    let mut best = (f.eval(0.0) - cdf(0.0)).abs();
    for (&b, &c) in f.breakpoints.iter().zip(&f.cumulative) {
        if b < 0.0 {
            continue;
        }
        let target = cdf(b);
        best = best.max((c - target).abs());
        best = best.max((f.eval_left(b) - target).abs());
    }
    best
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = Neumaier::default();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point_mass(at: f64) -> StepFunction {
        StepFunction::from_samples(&[at], &[1.0]).unwrap()
    }

    #[test]
    fn two_point_distribution() {
        let f = StepFunction::from_samples(&[0.0, 2.0], &[0.5, 0.5]).unwrap();
        assert_eq!(f.breakpoints(), &[0.0, 2.0]);
        assert_eq!(f.cumulative(), &[0.5, 1.0]);
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(f.eval(1.999), 0.5);
        assert_eq!(f.eval(2.0), 1.0);
    }

    #[test]
    fn point_mass_jumps_once() {
        let f = point_mass(5.0);
        assert_eq!(f.breakpoints(), &[5.0]);
        assert_eq!(f.total(), 1.0);
        assert_eq!(f.eval(4.999_999), 0.0);
    }

    #[test]
    fn equal_values_coalesce() {
        let f = StepFunction::from_samples(&[1.0, 1.0, 3.0], &[0.25, 0.25, 0.5]).unwrap();
        assert_eq!(f.breakpoints(), &[1.0, 3.0]);
        assert_eq!(f.cumulative(), &[0.5, 1.0]);
        let g = StepFunction::from_samples(&[1.0, 1.0 + 1e-12, 3.0], &[0.25, 0.25, 0.5]).unwrap();
        assert_eq!(g.breakpoints(), &[1.0, 3.0]);
    }

    #[test]
    fn from_samples_rejects_bad_input() {
        assert_eq!(
            StepFunction::from_samples(&[1.0], &[0.5, 0.5]),
            Err(StepError::LengthMismatch {
                values: 1,
                masses: 2
            })
        );
        assert!(matches!(
            StepFunction::from_samples(&[1.0, 2.0], &[-0.1, 0.5]),
            Err(StepError::NegativeMass { index: 0, .. })
        ));
        assert!(matches!(
            StepFunction::from_samples(&[1.0, 2.0], &[0.6, 0.5]),
            Err(StepError::MassOverflow(_))
        ));
        assert_eq!(StepFunction::from_samples(&[], &[]), Err(StepError::Empty));
    }

    #[test]
    fn uniform_masses_total_exactly_one() {
        for n in [3usize, 7, 10, 49, 100, 1000] {
            let values: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
            let masses = vec![1.0 / n as f64; n];
            let f = StepFunction::from_samples(&values, &masses).unwrap();
            assert_eq!(f.total(), 1.0, "n = {n}");
        }
    }

    #[test]
    fn mix_identity_and_symmetry() {
        let f = StepFunction::from_samples(&[0.0, 2.0], &[0.3, 0.7]).unwrap();
        assert_eq!(mix(&[(1.0, &f)]).unwrap(), f);

        let a = point_mass(0.0);
        let b = point_mass(2.0);
        let m = mix(&[(0.5, &a), (0.5, &b)]).unwrap();
        assert_eq!(m.breakpoints(), &[0.0, 2.0]);
        assert_eq!(m.cumulative(), &[0.5, 1.0]);
    }

    #[test]
    fn mix_of_site_configuration_spectra() {
        // Level-1 blocks of the d = 1 model with J = {2, 3}: the 2x2 matrices
        // [[a, -1], [-1, b]] have eigenvalues (a+b)/2 ± sqrt(((a-b)/2)^2 + 1).
        let closed_form = |a: f64, b: f64| {
            let m = 0.5 * (a + b);
            let r = (0.25 * (a - b) * (a - b) + 1.0).sqrt();
            StepFunction::from_samples(&[m - r, m + r], &[0.5, 0.5]).unwrap()
        };
        let parts: Vec<StepFunction> = [(2.0, 2.0), (2.0, 3.0), (3.0, 2.0), (3.0, 3.0)]
            .iter()
            .map(|&(a, b)| closed_form(a, b))
            .collect();
        let weighted: Vec<(f64, &StepFunction)> = parts.iter().map(|f| (0.25, f)).collect();
        let m = mix(&weighted).unwrap();

        let s5 = 5f64.sqrt();
        let expected = StepFunction::from_samples(
            &[1.0, 2.0, 3.0, 4.0, (5.0 - s5) / 2.0, (5.0 + s5) / 2.0],
            &[0.125, 0.125, 0.125, 0.125, 0.25, 0.25],
        )
        .unwrap();
        assert_eq!(m.breakpoints().len(), 6);
        assert!(sup_distance(&m, &expected) < 1e-15);
    }

    #[test]
    fn mix_rejects_bad_weights() {
        let f = point_mass(1.0);
        assert!(matches!(
            mix(&[(0.5, &f), (0.4, &f)]),
            Err(StepError::WeightSum(_))
        ));
        assert!(matches!(
            mix(&[(1.5, &f), (-0.5, &f)]),
            Err(StepError::NegativeMass { index: 1, .. })
        ));
    }

    #[test]
    fn sup_distance_examples() {
        let f = StepFunction::from_samples(&[0.0, 2.0], &[0.5, 0.5]).unwrap();
        assert_eq!(sup_distance(&f, &f), 0.0);
        assert_eq!(sup_distance(&StepFunction::zero(), &point_mass(1.0)), 1.0);
        assert_eq!(sup_distance(&point_mass(0.0), &point_mass(2.0)), 1.0);
    }

    #[test]
    fn sup_distance_ignores_roundoff_slivers() {
        let a = point_mass(1.0);
        let b = point_mass(1.0 + 1e-14);
        assert_eq!(sup_distance(&a, &b), 0.0);
        // Distinct-looking zero eigenvalues on either side of zero.
        let c = StepFunction::from_samples(&[-1e-16, 2.0], &[0.5, 0.5]).unwrap();
        let d = StepFunction::from_samples(&[1e-16, 2.0], &[0.5, 0.5]).unwrap();
        assert_eq!(sup_distance(&c, &d), 0.0);
    }

    #[test]
    fn sup_distance_restricted_to_nonnegative_axis() {
        // Both reach 1 before zero; the difference on (-2, -1) is invisible.
        let a = point_mass(-2.0);
        let b = point_mass(-1.0);
        assert_eq!(sup_distance(&a, &b), 0.0);
        let c = point_mass(1.0);
        assert_eq!(sup_distance(&a, &c), 1.0);
    }

    #[test]
    fn continuous_distance_against_uniform_cdf() {
        let n = 10;
        let values: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        let f = StepFunction::from_samples(&values, &vec![0.1; n]).unwrap();
        let d = sup_distance_continuous(&f, |x: f64| x.clamp(0.0, 1.0));
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn complement_sums_to_one() {
        let f = StepFunction::from_samples(&[0.1, 0.7, 2.0], &[0.3, 0.3, 0.4]).unwrap();
        let t = f.complement();
        assert_eq!(t.eval(-1.0), 1.0);
        for &b in f.breakpoints() {
            assert_eq!(f.eval(b) + t.eval(b), 1.0);
        }
    }

    #[test]
    fn csv_layout() {
        let f = StepFunction::from_samples(&[0.0, 2.0], &[0.5, 0.5]).unwrap();
        assert_eq!(f.to_csv(), "lambda,value\n-inf,0\n0.0,0.5\n2.0,1.0\n");
        assert_eq!(StepFunction::zero().to_csv(), "lambda,value\n-inf,0\n");
        assert!(StepFunction::from_csv("x,y\n").is_err());
    }

    fn grid_step_function() -> impl Strategy<Value = StepFunction> {
        // Breakpoints on a 0.01 grid keep clusters trivially separated.
        prop::collection::vec((0u32..400, 0.0f64..1.0), 1..12).prop_map(|pts| {
            let values: Vec<f64> = pts.iter().map(|p| p.0 as f64 * 0.01).collect();
            let raw: Vec<f64> = pts.iter().map(|p| p.1 + 1e-3).collect();
            let sum: f64 = raw.iter().sum();
            let masses: Vec<f64> = raw.iter().map(|m| m / sum * 0.999).collect();
            StepFunction::from_samples(&values, &masses).unwrap()
        })
    }

    proptest! {
        #[test]
        fn triangle_inequality(f in grid_step_function(), g in grid_step_function(), h in grid_step_function()) {
            let lhs = sup_distance(&f, &h);
            let rhs = sup_distance(&f, &g) + sup_distance(&g, &h);
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn mixing_is_contractive(
            f1 in grid_step_function(), f2 in grid_step_function(),
            g1 in grid_step_function(), g2 in grid_step_function(),
            w in 0.0f64..1.0,
        ) {
            let mf = mix(&[(w, &f1), (1.0 - w, &f2)]).unwrap();
            let mg = mix(&[(w, &g1), (1.0 - w, &g2)]).unwrap();
            let bound = w * sup_distance(&f1, &g1) + (1.0 - w) * sup_distance(&f2, &g2);
            prop_assert!(sup_distance(&mf, &mg) <= bound + 1e-12);
        }

        #[test]
        fn csv_round_trip(f in grid_step_function()) {
            let back = StepFunction::from_csv(&f.to_csv()).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
