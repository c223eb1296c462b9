//! Recovering the expected image from `A x = b`.
//!
//! The direct path is Gaussian elimination with partial pivoting on the
//! banded explicit matrix. The iterative path is conjugate gradients on the
//! normal equations `(AᵀA + λI) x = Aᵀb` in the CGLS arrangement, which only
//! needs products with `A` and `Aᵀ` and never forms `AᵀA`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SedsError};
use crate::grid::ImageGrid;
use crate::io::format_f64;
use crate::system::{ExplicitMatrix, LinearSystem, Operator};

/// Relative pivot threshold for declaring the system singular.
pub const PIVOT_EPSILON: f64 = 1e-12;
/// Largest explicit system that `Auto` sends to the direct solver.
pub const DIRECT_THRESHOLD: usize = 4096;
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Auto,
    Direct,
    Iterative,
}

impl FromStr for Method {
    type Err = SedsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "direct" => Ok(Self::Direct),
            "iterative" => Ok(Self::Iterative),
            other => Err(SedsError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    /// `None` means `10 · n`.
    pub max_iterations: Option<usize>,
    pub method: Method,
    pub regularization_lambda: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
            method: Method::Auto,
            regularization_lambda: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(SedsError::NonPositiveParam {
                name: "tolerance",
                value: self.tolerance,
            });
        }
        if self.max_iterations == Some(0) {
            return Err(SedsError::NonPositiveParam {
                name: "max_iterations",
                value: 0.0,
            });
        }
        if !(self.regularization_lambda >= 0.0 && self.regularization_lambda.is_finite()) {
            return Err(SedsError::InvalidGrid(format!(
                "regularization_lambda must be nonnegative, got {}",
                self.regularization_lambda
            )));
        }
        Ok(())
    }

    pub fn iteration_limit(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(10 * n).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Iterative,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Iterative => "iterative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub method: SolveMethod,
    pub iterations: usize,
    /// `‖A x − b‖₂` of the returned solution.
    pub residual_norm: f64,
    pub converged: bool,
    /// Ratio of largest to smallest pivot magnitude (direct solves only).
    pub condition_hint: Option<f64>,
}

impl SolveReport {
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("method", self.method.to_string()),
            ("iterations", self.iterations.to_string()),
            ("residual_norm", format_f64(self.residual_norm)),
            ("converged", self.converged.to_string()),
            (
                "condition_hint",
                self.condition_hint.map_or_else(|| "none".to_string(), format_f64),
            ),
        ]
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Sequential dot product; summation order is fixed.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn residual_norm(system: &LinearSystem, x: &[f64]) -> Result<f64> {
    let ax = system.apply(x)?;
    Ok(ax
        .iter()
        .zip(&system.rhs)
        .fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b))
        .sqrt())
}

fn to_image(system: &LinearSystem, x: Vec<f64>) -> Result<ImageGrid> {
    ImageGrid::from_solution(system.roi_rows, system.roi_cols, x)
}

/// One row of the matrix being factored, stored over a sliding column
/// window `[start, start + vals.len())`.
struct BandRow {
    start: usize,
    vals: Vec<f64>,
}

impl BandRow {
    #[inline]
    fn get(&self, c: usize) -> f64 {
        if c >= self.start && c - self.start < self.vals.len() {
            self.vals[c - self.start]
        } else {
            0.0
        }
    }

    /// Moves the window to start at column `k`; columns left of `k` are
    /// already eliminated.
    fn rebase(&mut self, k: usize) {
        if self.start < k {
            let d = (k - self.start).min(self.vals.len());
            debug_assert!(self.vals[..d].iter().all(|v| *v == 0.0));
            self.vals.copy_within(d.., 0);
            let len = self.vals.len();
            self.vals[len - d..].fill(0.0);
            self.start = k;
        }
    }
}

struct Factored {
    x: Vec<f64>,
    condition_hint: f64,
}

/// Banded Gaussian elimination with partial pivoting. Fill from row
/// interchanges stays within `kl + ku` columns right of the diagonal.
fn band_gepp(a: &ExplicitMatrix, b: &[f64]) -> Result<Factored> {
    let n = a.n();
    let (kl, ku) = a.bandwidths();
    let width = 2 * kl + ku + 1;
    let mut scale: f64 = 0.0;
    let mut rows: Vec<BandRow> = (0..n)
        .map(|r| {
            let start = r.saturating_sub(kl);
            let mut vals = vec![0.0; width];
            let (cols, coeffs) = a.row(r);
            for (c, v) in cols.iter().zip(coeffs) {
                vals[c - start] = *v;
                scale = scale.max(v.abs());
            }
            BandRow { start, vals }
        })
        .collect();
    let mut rhs = b.to_vec();
    let threshold = PIVOT_EPSILON * scale;
    let (mut piv_min, mut piv_max) = (f64::INFINITY, 0.0f64);

    for k in 0..n {
        let last = (k + kl).min(n - 1);
        let mut p = k;
        let mut best = rows[k].get(k).abs();
        for i in k + 1..=last {
            let v = rows[i].get(k).abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if !(best >= threshold) || best == 0.0 {
            return Err(SedsError::Singular {
                column: k,
                pivot: best,
                threshold,
            });
        }
        piv_min = piv_min.min(best);
        piv_max = piv_max.max(best);
        rows.swap(k, p);
        rhs.swap(k, p);

        let reach = (k + kl + ku).min(n - 1);
        let span = reach - k + 1;
        rows[k].rebase(k);
        let (head, tail) = rows.split_at_mut(k + 1);
        let pivot_row = &head[k].vals[..span];
        let pivot = pivot_row[0];
        for (offset, row) in tail[..last - k].iter_mut().enumerate() {
            row.rebase(k);
            let factor = row.vals[0] / pivot;
            if factor == 0.0 {
                continue;
            }
            for (dst, src) in row.vals[..span].iter_mut().zip(pivot_row) {
                *dst -= factor * src;
            }
            row.vals[0] = 0.0;
            rhs[k + 1 + offset] -= factor * rhs[k];
        }
    }

    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let reach = (k + kl + ku).min(n - 1);
        let row = &rows[k];
        let mut acc = rhs[k];
        for c in k + 1..=reach {
            acc -= row.get(c) * x[c];
        }
        x[k] = acc / row.get(k);
    }
    Ok(Factored {
        x,
        condition_hint: piv_max / piv_min,
    })
}

/// Direct solve of an explicitly assembled system.
pub fn solve_direct(system: &LinearSystem) -> Result<(ImageGrid, SolveReport)> {
    solve_direct_with_tolerance(system, DEFAULT_TOLERANCE)
}

fn solve_direct_with_tolerance(system: &LinearSystem, tolerance: f64) -> Result<(ImageGrid, SolveReport)> {
    let Operator::Explicit(matrix) = &system.operator else {
        return Err(SedsError::NotExplicit);
    };
    let Factored { x, condition_hint } = band_gepp(matrix, &system.rhs)?;
    let residual = residual_norm(system, &x)?;
    let report = SolveReport {
        method: SolveMethod::Direct,
        iterations: 0,
        residual_norm: residual,
        converged: residual <= tolerance * norm(&system.rhs).max(1.0),
        condition_hint: Some(condition_hint),
    };
    Ok((to_image(system, x)?, report))
}

/// Matrix-free CGLS. Stops once `‖Aᵀ(b − Ax) − λx‖ ≤ tol·‖Aᵀb‖` and, for
/// the unregularised problem, `‖Ax − b‖ ≤ tol·max(1, ‖b‖)`.
///
/// On hitting the iteration limit returns [`SedsError::NotConverged`]
/// carrying the iterate with the smallest normal-equation residual.
pub fn solve_iterative(system: &LinearSystem, config: &SolverConfig) -> Result<(ImageGrid, SolveReport)> {
    config.validate()?;
    let n = system.n();
    let b = &system.rhs;
    let lambda = config.regularization_lambda;
    let tol = config.tolerance;
    let limit = config.iteration_limit(n);
    let b_norm = norm(b);
    let residual_target = tol * b_norm.max(1.0);

    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut s = system.apply_transpose(&r)?;
    let atb_norm = norm(&s);
    let gradient_target = tol * atb_norm;

    let finish = |x: Vec<f64>, iterations: usize, converged: bool| -> Result<(ImageGrid, SolveReport)> {
        let report = SolveReport {
            method: SolveMethod::Iterative,
            iterations,
            residual_norm: residual_norm(system, &x)?,
            converged,
            condition_hint: None,
        };
        let image = to_image(system, x)?;
        if converged {
            Ok((image, report))
        } else {
            Err(SedsError::NotConverged {
                image: Box::new(image),
                report,
            })
        }
    };

    if atb_norm == 0.0 {
        // x = 0 already solves the normal equations.
        return finish(x, 0, b_norm <= residual_target || lambda > 0.0);
    }

    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let mut best = (gamma, x.clone());

    for it in 1..=limit {
        let q = system.apply(&p)?;
        let delta = dot(&q, &q) + lambda * dot(&p, &p);
        if delta == 0.0 || !delta.is_finite() {
            break;
        }
        let alpha = gamma / delta;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        s = system.apply_transpose(&r)?;
        if lambda > 0.0 {
            for (si, xi) in s.iter_mut().zip(&x) {
                *si -= lambda * xi;
            }
        }
        let gamma_next = dot(&s, &s);
        if gamma_next < best.0 {
            best.0 = gamma_next;
            best.1.copy_from_slice(&x);
        }

        if gamma_next.sqrt() <= gradient_target && (lambda > 0.0 || norm(&r) <= residual_target) {
            // Confirm against the true residual before accepting.
            let true_r: Vec<f64> = system
                .apply(&x)?
                .iter()
                .zip(b)
                .map(|(ax, bi)| bi - ax)
                .collect();
            if lambda > 0.0 || norm(&true_r) <= residual_target {
                return finish(x, it, true);
            }
            // Recursive residual drifted; restart from the true one.
            r = true_r;
            s = system.apply_transpose(&r)?;
            gamma = dot(&s, &s);
            p.copy_from_slice(&s);
            continue;
        }

        let beta = gamma_next / gamma;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
        gamma = gamma_next;
    }
    finish(best.1, limit, false)
}

/// Dispatches per `config.method`; `Auto` picks the direct solver for
/// explicit systems up to [`DIRECT_THRESHOLD`] unknowns.
pub fn solve(system: &LinearSystem, config: &SolverConfig) -> Result<(ImageGrid, SolveReport)> {
    config.validate()?;
    match resolve_method(system, config.method) {
        SolveMethod::Direct => solve_direct_with_tolerance(system, config.tolerance),
        SolveMethod::Iterative => solve_iterative(system, config),
    }
}

pub fn resolve_method(system: &LinearSystem, method: Method) -> SolveMethod {
    match method {
        Method::Direct => SolveMethod::Direct,
        Method::Iterative => SolveMethod::Iterative,
        Method::Auto if system.is_explicit() && system.n() <= DIRECT_THRESHOLD => SolveMethod::Direct,
        Method::Auto => SolveMethod::Iterative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{make_gaussian_spot, make_phantom, PhantomKind, SpotKernel};
    use crate::scan::{scan_seds, BoundaryCondition};
    use crate::system::{assemble_explicit, build_system, ImplicitOperator, Representation};

    fn system_from(spot: &SpotKernel, rhs: Vec<f64>, rows: usize, cols: usize, explicit: bool) -> LinearSystem {
        let operator = if explicit {
            Operator::Explicit(assemble_explicit(spot, rows, cols).unwrap())
        } else {
            Operator::Implicit(ImplicitOperator::new(spot, rows, cols))
        };
        LinearSystem {
            operator,
            rhs,
            roi_rows: rows,
            roi_cols: cols,
        }
    }

    fn mad(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    }

    /// Plain dense Gaussian elimination with partial pivoting, the textbook
    /// version, as an oracle for the banded factorisation.
    fn dense_solve(a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m = a.to_vec();
        let mut y = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs())).unwrap();
            for c in 0..n {
                m.swap(k * n + c, p * n + c);
            }
            y.swap(k, p);
            for i in k + 1..n {
                let f = m[i * n + k] / m[k * n + k];
                for c in k..n {
                    m[i * n + c] -= f * m[k * n + c];
                }
                y[i] -= f * y[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|c| m[k * n + c] * x[c]).sum();
            x[k] = (y[k] - s) / m[k * n + k];
        }
        x
    }

    #[test]
    fn identity_system() {
        let spot = SpotKernel::new(1, vec![1.0]).unwrap();
        let b = vec![3.0, -1.0, 2.0, 0.5];
        let sys = system_from(&spot, b.clone(), 2, 2, true);
        let (img, report) = solve_direct(&sys).unwrap();
        assert_eq!(img.values(), &b[..]);
        assert_eq!(report.method, SolveMethod::Direct);
        assert_eq!(report.iterations, 0);
        assert!(report.converged);
    }

    #[test]
    fn all_ones_2x2_is_singular() {
        let spot = SpotKernel::new(3, vec![1.0; 9]).unwrap();
        let sys = system_from(&spot, vec![4.0; 4], 2, 2, true);
        assert!(matches!(solve_direct(&sys), Err(SedsError::Singular { column: 1, .. })));
        assert!(matches!(solve(&sys, &SolverConfig::default()), Err(SedsError::Singular { .. })));
    }

    #[test]
    fn direct_requires_explicit() {
        let spot = SpotKernel::new(1, vec![1.0]).unwrap();
        let sys = system_from(&spot, vec![1.0; 4], 2, 2, false);
        assert!(matches!(solve_direct(&sys), Err(SedsError::NotExplicit)));
        let cfg = SolverConfig {
            method: Method::Direct,
            ..Default::default()
        };
        assert!(matches!(solve(&sys, &cfg), Err(SedsError::NotExplicit)));
    }

    #[test]
    fn banded_matches_dense_oracle() {
        for (k, rows, cols, seed) in [(3, 5, 6, 1u64), (5, 6, 4, 2), (3, 7, 7, 3), (5, 3, 9, 4)] {
            let mut rng = crate::optics::SplitMix64::new(seed);
            // Random spots exercise pivoting (no diagonal dominance).
            let spot = SpotKernel::new(k, (0..k * k).map(|_| rng.next_f64()).collect()).unwrap();
            let n = rows * cols;
            let b: Vec<f64> = (0..n).map(|_| rng.next_f64() * 10.0).collect();
            let a = assemble_explicit(&spot, rows, cols).unwrap();
            let want = dense_solve(&a.to_dense(), &b);
            let sys = system_from(&spot, b, rows, cols, true);
            let (img, _) = solve_direct(&sys).unwrap();
            for (got, want) in img.values().iter().zip(&want) {
                assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn phantom_round_trip_8x8() {
        let e = make_phantom(8, 8, PhantomKind::UniformRandom, 8, 255.0).unwrap();
        let spot = make_gaussian_spot(3, 1.0, 1.0).unwrap();
        let s = scan_seds(&e, &spot, BoundaryCondition::Zero);
        let sys = build_system(&s, &spot, BoundaryCondition::Zero, Representation::Explicit).unwrap();
        let (img, report) = solve_direct(&sys).unwrap();
        assert!(mad(img.values(), e.values()) <= 1e-10);
        assert!(report.condition_hint.unwrap() >= 1.0);
    }

    #[test]
    fn iterative_zero_rhs() {
        let spot = make_gaussian_spot(3, 1.0, 1.0).unwrap();
        let sys = system_from(&spot, vec![0.0; 9], 3, 3, false);
        let (img, report) = solve_iterative(&sys, &SolverConfig::default()).unwrap();
        assert_eq!(img.values(), &[0.0; 9]);
        assert_eq!(report.iterations, 0);
        assert!(report.converged);
        assert_eq!(report.residual_norm, 0.0);
    }

    #[test]
    fn iterative_agrees_with_direct_6x6() {
        let e = make_phantom(6, 6, PhantomKind::UniformRandom, 66, 255.0).unwrap();
        let spot = make_gaussian_spot(3, 0.8, 1.0).unwrap();
        let s = scan_seds(&e, &spot, BoundaryCondition::Zero);
        let explicit = build_system(&s, &spot, BoundaryCondition::Zero, Representation::Explicit).unwrap();
        let implicit = build_system(&s, &spot, BoundaryCondition::Zero, Representation::Implicit).unwrap();
        let (d, _) = solve_direct(&explicit).unwrap();
        let (it, report) = solve_iterative(&implicit, &SolverConfig::default()).unwrap();
        assert!(report.converged);
        assert!(report.iterations > 0);
        assert!(report.residual_norm <= DEFAULT_TOLERANCE * norm(&implicit.rhs).max(1.0));
        for (a, b) in d.values().iter().zip(it.values()) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn iterative_reports_not_converged_with_best_iterate() {
        let e = make_phantom(10, 10, PhantomKind::UniformRandom, 5, 255.0).unwrap();
        let spot = make_gaussian_spot(5, 1.5, 1.0).unwrap();
        let s = scan_seds(&e, &spot, BoundaryCondition::Zero);
        let sys = build_system(&s, &spot, BoundaryCondition::Zero, Representation::Implicit).unwrap();
        let cfg = SolverConfig {
            max_iterations: Some(3),
            ..Default::default()
        };
        match solve_iterative(&sys, &cfg) {
            Err(SedsError::NotConverged { image, report }) => {
                assert!(!report.converged);
                assert_eq!(report.iterations, 3);
                assert_eq!(image.dims(), (10, 10));
                assert!(report.residual_norm < norm(&sys.rhs));
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn tiny_regularization_barely_moves_solution() {
        let e = make_phantom(6, 6, PhantomKind::UniformRandom, 12, 255.0).unwrap();
        let spot = make_gaussian_spot(3, 0.8, 1.0).unwrap();
        let s = scan_seds(&e, &spot, BoundaryCondition::Zero);
        let sys = build_system(&s, &spot, BoundaryCondition::Zero, Representation::Implicit).unwrap();
        let (plain, _) = solve_iterative(&sys, &SolverConfig::default()).unwrap();
        let cfg = SolverConfig {
            regularization_lambda: 1e-12,
            ..Default::default()
        };
        let (reg, report) = solve_iterative(&sys, &cfg).unwrap();
        assert!(report.converged);
        for (a, b) in plain.values().iter().zip(reg.values()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn auto_dispatch() {
        let spot = make_gaussian_spot(3, 1.0, 1.0).unwrap();
        let small = system_from(&spot, vec![1.0; 4], 2, 2, true);
        assert_eq!(resolve_method(&small, Method::Auto), SolveMethod::Direct);
        let (_, report) = solve(&small, &SolverConfig::default()).unwrap();
        assert_eq!(report.method, SolveMethod::Direct);
        let big = system_from(&spot, vec![1.0; 3600], 60, 60, false);
        assert_eq!(resolve_method(&big, Method::Auto), SolveMethod::Iterative);
        let big_explicit = system_from(&spot, vec![1.0; 4900], 70, 70, true);
        assert_eq!(resolve_method(&big_explicit, Method::Auto), SolveMethod::Iterative);
    }

    #[test]
    fn residual_norm_examples() {
        // A = [[2, 1], [1, 2]] from a 1×3 row kernel [1, 2, 1] on a 1×2 ROI.
        let spot = SpotKernel::new(3, vec![0., 0., 0., 1., 2., 1., 0., 0., 0.]).unwrap();
        let sys = system_from(&spot, vec![3.0, 4.0], 1, 2, true);
        // x = (1, -1): Ax = (1, -1), r = (-2, -5)
        let got = residual_norm(&sys, &[1.0, -1.0]).unwrap();
        assert!((got - 29f64.sqrt()).abs() < 1e-15);
        assert_eq!(residual_norm(&sys, &[0.0, 0.0]).unwrap(), 5.0);
        // exact solution: x = (2/3, 5/3)
        assert!(residual_norm(&sys, &[2.0 / 3.0, 5.0 / 3.0]).unwrap() <= 1e-10 * 5.0);
        assert!(matches!(residual_norm(&sys, &[1.0]), Err(SedsError::LengthMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        let bad = [
            SolverConfig { tolerance: 0.0, ..Default::default() },
            SolverConfig { max_iterations: Some(0), ..Default::default() },
            SolverConfig { regularization_lambda: -1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        assert_eq!(SolverConfig::default().iteration_limit(3600), 36000);
    }

    #[test]
    fn report_kv() {
        let r = SolveReport {
            method: SolveMethod::Iterative,
            iterations: 12,
            residual_norm: 0.5,
            converged: true,
            condition_hint: None,
        };
        let kv = crate::io::format_kv(&r.to_kv());
        assert_eq!(
            kv,
            "method=iterative\niterations=12\nresidual_norm=5.0000000000000000e-1\nconverged=true\ncondition_hint=none\n"
        );
    }
}
