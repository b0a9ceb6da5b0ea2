//! Small dense log-barrier interior-point method.
//!
//! Minimizes a smooth convex objective subject to smooth convex inequality
//! constraints `c_j(x) < 0` and optional linear equalities `A x = b`. Every
//! Hessian in this crate is diagonal per term, so terms report the diagonal
//! only; the barrier's rank-one terms make the Newton matrix dense.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Value, gradient and diagonal Hessian of one smooth term.
#[derive(Debug, Clone)]
pub struct Term {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess_diag: Vec<f64>,
}

impl Term {
    pub fn zeros(n: usize) -> Self {
        Term {
            value: 0.0,
            grad: vec![0.0; n],
            hess_diag: vec![0.0; n],
        }
    }
}

pub trait ConvexProgram {
    fn dim(&self) -> usize;

    /// `false` when logs or other terms are undefined at `x`.
    fn in_domain(&self, x: &[f64]) -> bool;

    fn objective(&self, x: &[f64]) -> Term;

    fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective(x).value
    }

    fn constraints(&self, x: &[f64]) -> Vec<Term>;

    fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.constraints(x).into_iter().map(|c| c.value).collect()
    }

    /// Rows `(a, b)` of `a . x = b`.
    fn equalities(&self) -> Vec<(Vec<f64>, f64)> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    pub t0: f64,
    /// Barrier weight growth per outer step (mu reduction 0.2).
    pub growth: f64,
    /// Stop when the duality-gap bound m/t falls below this.
    pub gap_tol: f64,
    pub max_newton: usize,
    pub max_outer: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            t0: 1.0,
            growth: 5.0,
            gap_tol: 1e-10,
            max_newton: 200,
            max_outer: 80,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub newton_steps: usize,
    pub multipliers: Vec<f64>,
}

fn strictly_feasible<P: ConvexProgram + ?Sized>(p: &P, x: &[f64]) -> bool {
    p.in_domain(x) && p.constraint_values(x).iter().all(|&c| c < 0.0)
}

fn barrier_value<P: ConvexProgram + ?Sized>(p: &P, x: &[f64], t: f64) -> Option<f64> {
    if !p.in_domain(x) {
        return None;
    }
    let mut v = t * p.objective_value(x);
    for c in p.constraint_values(x) {
        if !(c < 0.0) {
            return None;
        }
        v -= (-c).ln();
    }
    v.is_finite().then_some(v)
}

fn barrier_gradient<P: ConvexProgram + ?Sized>(p: &P, x: &[f64], t: f64) -> DVector<f64> {
    let n = x.len();
    let obj = p.objective(x);
    let mut g = DVector::from_iterator(n, obj.grad.iter().map(|v| t * v));
    for (c, v) in p.constraints(x).into_iter().zip(p.constraint_values(x)) {
        let s = -v;
        for i in 0..n {
            g[i] += c.grad[i] / s;
        }
    }
    g
}

/// Gradient and Newton matrix of `t f(x) - sum log(-c_j(x))`.
fn barrier_derivatives<P: ConvexProgram + ?Sized>(p: &P, x: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.len();
    let obj = p.objective(x);
    let mut g = DVector::from_iterator(n, obj.grad.iter().map(|v| t * v));
    let mut h = DMatrix::from_diagonal(&DVector::from_iterator(n, obj.hess_diag.iter().map(|v| t * v)));
    // slacks come from constraint_values so they match what the line search
    // accepted; an active constraint can sit within a few ulps of zero
    for (c, v) in p.constraints(x).into_iter().zip(p.constraint_values(x)) {
        let s = -v;
        for i in 0..n {
            g[i] += c.grad[i] / s;
            h[(i, i)] += c.hess_diag[i] / s;
        }
        let gi = DVector::from_column_slice(&c.grad);
        h.ger(1.0 / (s * s), &gi, &gi, 1.0);
    }
    (g, h)
}

fn solve_scaled(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    eq: &[(Vec<f64>, f64)],
    d: &DVector<f64>,
    reg: f64,
) -> Option<DVector<f64>> {
    let n = g.len();
    let mut hs = DMatrix::from_fn(n, n, |i, j| h[(i, j)] * d[i] * d[j]);
    for i in 0..n {
        hs[(i, i)] += reg;
    }
    let gs = g.component_mul(d);
    let y = if eq.is_empty() {
        hs.cholesky()?.solve(&(-gs))
    } else {
        let p = eq.len();
        let mut k = DMatrix::zeros(n + p, n + p);
        k.view_mut((0, 0), (n, n)).copy_from(&hs);
        for (r, (a, _)) in eq.iter().enumerate() {
            for i in 0..n {
                k[(n + r, i)] = a[i] * d[i];
                k[(i, n + r)] = a[i] * d[i];
            }
        }
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(&(-gs));
        k.lu().solve(&rhs)?.rows(0, n).into_owned()
    };
    let dx = y.component_mul(d);
    dx.iter().all(|v| v.is_finite()).then_some(dx)
}

/// Newton step from a Jacobi-equilibrated system. Large barrier weights make
/// the matrix nearly rank-deficient; a growing diagonal shift keeps the step
/// a descent direction when the plain solve breaks down.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>, eq: &[(Vec<f64>, f64)]) -> Result<DVector<f64>> {
    let d = DVector::from_iterator(
        g.len(),
        h.diagonal().iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }),
    );
    for reg in [0.0, 1e-14, 1e-12, 1e-10, 1e-8, 1e-6] {
        if let Some(dx) = solve_scaled(h, g, eq, &d, reg) {
            return Ok(dx);
        }
    }
    Err(Error::Numerical(
        if eq.is_empty() {
            "singular Newton system"
        } else {
            "singular KKT system"
        }
        .into(),
    ))
}

/// Minimizes `p` from a strictly feasible `x0`.
pub fn solve<P: ConvexProgram + ?Sized>(p: &P, x0: &[f64], opts: &BarrierOptions) -> Result<BarrierSolution> {
    solve_until(p, x0, opts, |_| false)
}

/// As [`solve`], returning early after any centering step where `stop(x)` holds.
pub fn solve_until<P, F>(p: &P, x0: &[f64], opts: &BarrierOptions, mut stop: F) -> Result<BarrierSolution>
where
    P: ConvexProgram + ?Sized,
    F: FnMut(&[f64]) -> bool,
{
    if !strictly_feasible(p, x0) {
        return Err(Error::Numerical("barrier start point is not strictly feasible".into()));
    }
    let eq = p.equalities();
    let m = p.constraint_values(x0).len().max(1) as f64;
    let mut x = x0.to_vec();
    let mut t = opts.t0;
    let mut steps = 0;

    for _ in 0..opts.max_outer {
        for _ in 0..opts.max_newton {
            let (g, h) = barrier_derivatives(p, &x, t);
            let dx = newton_direction(&h, &g, &eq)?;
            let decrement = -g.dot(&dx);
            if !(decrement.is_finite()) {
                return Err(Error::Numerical("non-finite Newton decrement".into()));
            }
            if decrement / 2.0 <= 1e-12 {
                break;
            }
            let f0 = barrier_value(p, &x, t).expect("iterate stays feasible");
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
                // bisect back onto the strictly feasible region, then Armijo;
                // a non-positive slope at the trial point also certifies descent
                // when the values are too large to compare in floating point
                if let Some(f1) = barrier_value(p, &trial, t) {
                    if f1 <= f0 - 0.25 * step * decrement || barrier_gradient(p, &trial, t).dot(&dx) <= 0.0 {
                        x = trial;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            steps += 1;
            if !accepted {
                break;
            }
        }
        if stop(&x) || m / t <= opts.gap_tol {
            break;
        }
        t *= opts.growth;
    }

    let (multipliers, kkt_residual) = kkt_certificate(p, &x, t, &eq);
    let objective = p.objective_value(&x);
    Ok(BarrierSolution {
        objective,
        x,
        kkt_residual,
        newton_steps: steps,
        multipliers,
    })
}

/// Multipliers and KKT residual at the final iterate.
///
/// Barrier multipliers `1/(t s_j)` inherit the cancellation error of tiny
/// slacks, so the multipliers of the active set are refit by least squares
/// against the objective gradient. The residual is the larger of the scaled
/// stationarity error and the complementarity sum.
fn kkt_certificate<P: ConvexProgram + ?Sized>(p: &P, x: &[f64], t: f64, eq: &[(Vec<f64>, f64)]) -> (Vec<f64>, f64) {
    let n = x.len();
    let mut cons = p.constraints(x);
    for (c, v) in cons.iter_mut().zip(p.constraint_values(x)) {
        c.value = v;
    }
    let obj = p.objective(x);
    let barrier_mult: Vec<f64> = cons.iter().map(|c| 1.0 / (t * -c.value)).collect();
    let top = barrier_mult.iter().cloned().fold(0.0, f64::max);
    let active: Vec<usize> = (0..cons.len())
        .filter(|&j| barrier_mult[j] > 1e-6 * (1.0 + top) && barrier_mult[j] * t > 1e3)
        .collect();
    let grad_f = DVector::from_column_slice(&obj.grad);
    let scale = 1.0 + grad_f.amax();

    let residual_of = |mult: &[f64]| {
        let mut r = grad_f.clone();
        let mut comp = 0.0;
        for (j, c) in cons.iter().enumerate() {
            if mult[j] != 0.0 {
                for i in 0..n {
                    r[i] += mult[j] * c.grad[i];
                }
                comp += mult[j] * c.value.abs();
            }
        }
        (r, comp)
    };

    let k = active.len() + eq.len();
    let mut fitted = None;
    if k > 0 {
        let m = DMatrix::from_fn(n, k, |i, col| {
            if col < active.len() {
                cons[active[col]].grad[i]
            } else {
                eq[col - active.len()].0[i]
            }
        });
        if let Ok(sol) = m.svd(true, true).solve(&(-&grad_f), 1e-14) {
            let mut mult = vec![0.0; cons.len()];
            let mut ok = true;
            for (col, &j) in active.iter().enumerate() {
                if sol[col] < -1e-10 * (1.0 + top) {
                    ok = false;
                }
                mult[j] = sol[col].max(0.0);
            }
            if ok {
                let (mut r, comp) = residual_of(&mult);
                for (col, (a, _)) in eq.iter().enumerate() {
                    for i in 0..n {
                        r[i] += sol[active.len() + col] * a[i];
                    }
                }
                fitted = Some((mult, r.amax() / scale, comp));
            }
        }
    }
    let (mult, stat, comp) = fitted.unwrap_or_else(|| {
        let (mut r, comp) = residual_of(&barrier_mult);
        if !eq.is_empty() {
            let a = DMatrix::from_fn(eq.len(), n, |row, i| eq[row].0[i]);
            if let Some(nu) = (&a * a.transpose()).lu().solve(&(&a * &r)) {
                r -= a.transpose() * nu;
            }
        }
        (barrier_mult.clone(), r.amax() / scale, comp)
    });
    (mult, stat.max(comp))
}

/// Phase-I problem: minimize s subject to `c_j(x) <= s` on the elastic rows
/// and `c_j(x) < 0` on the rest. Rows already satisfied at the start stay
/// hard, so box rows keep the iterates away from the domain edge.
struct PhaseOne<'a, P: ?Sized> {
    inner: &'a P,
    elastic: Vec<bool>,
}

impl<P: ConvexProgram + ?Sized> ConvexProgram for PhaseOne<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn in_domain(&self, z: &[f64]) -> bool {
        self.inner.in_domain(&z[..z.len() - 1])
    }

    fn objective(&self, z: &[f64]) -> Term {
        let n = z.len();
        let mut t = Term::zeros(n);
        t.value = z[n - 1];
        t.grad[n - 1] = 1.0;
        t
    }

    fn objective_value(&self, z: &[f64]) -> f64 {
        z[z.len() - 1]
    }

    fn constraints(&self, z: &[f64]) -> Vec<Term> {
        let n = z.len() - 1;
        let s = z[n];
        self.inner
            .constraints(&z[..n])
            .into_iter()
            .zip(&self.elastic)
            .map(|(mut c, &e)| {
                if e {
                    c.value -= s;
                    c.grad.push(-1.0);
                } else {
                    c.grad.push(0.0);
                }
                c.hess_diag.push(0.0);
                c
            })
            .collect()
    }

    fn constraint_values(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len() - 1;
        let s = z[n];
        self.inner
            .constraint_values(&z[..n])
            .into_iter()
            .zip(&self.elastic)
            .map(|(c, &e)| if e { c - s } else { c })
            .collect()
    }

    fn equalities(&self) -> Vec<(Vec<f64>, f64)> {
        self.inner
            .equalities()
            .into_iter()
            .map(|(mut a, b)| {
                a.push(0.0);
                (a, b)
            })
            .collect()
    }
}

/// Minimizes the largest violated constraint value from an in-domain `x0` that
/// satisfies the equalities, stopping as soon as it turns negative. Returns
/// the point reached and its constraint values.
pub fn phase_one<P: ConvexProgram + ?Sized>(p: &P, x0: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if !p.in_domain(x0) {
        return Err(Error::Numerical("phase-I start point outside the domain".into()));
    }
    let vals = p.constraint_values(x0);
    if vals.iter().all(|&c| c < 0.0) {
        return Ok((x0.to_vec(), vals));
    }
    let elastic: Vec<bool> = vals.iter().map(|&c| c >= 0.0).collect();
    let worst = vals.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let mut z0 = x0.to_vec();
    z0.push(worst + 1.0 + worst.abs());
    let phase = PhaseOne { inner: p, elastic };
    let opts = BarrierOptions {
        gap_tol: 1e-12,
        ..BarrierOptions::default()
    };
    let n = x0.len();
    let sol = solve_until(&phase, &z0, &opts, |z| z[n] < 0.0)?;
    let x = sol.x[..n].to_vec();
    let vals = p.constraint_values(&x);
    Ok((x, vals))
}

/// Error naming the constraint with the largest value.
pub fn infeasibility_error(values: &[f64], names: &[&str]) -> Error {
    let (j, v) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, v)| (j, *v))
        .unwrap_or((0, 0.0));
    let name = names.get(j).copied().unwrap_or("constraint");
    Error::Infeasible(format!("{name} cannot be satisfied (best residual {v:.3e})"))
}

/// Finds a strictly feasible point, or names the constraint that blocks it.
pub fn find_strictly_feasible<P: ConvexProgram + ?Sized>(p: &P, x0: &[f64], names: &[&str]) -> Result<Vec<f64>> {
    let (x, vals) = phase_one(p, x0)?;
    if p.in_domain(&x) && vals.iter().all(|&c| c < 0.0) {
        return Ok(x);
    }
    Err(infeasibility_error(&vals, names))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x-3)^2 + (y-3)^2  s.t.  x + y <= 2,  x >= 0,  y >= 0
    struct Quad;

    impl ConvexProgram for Quad {
        fn dim(&self) -> usize {
            2
        }
        fn in_domain(&self, _: &[f64]) -> bool {
            true
        }
        fn objective(&self, x: &[f64]) -> Term {
            Term {
                value: (x[0] - 3.0).powi(2) + (x[1] - 3.0).powi(2),
                grad: vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] - 3.0)],
                hess_diag: vec![2.0, 2.0],
            }
        }
        fn constraints(&self, x: &[f64]) -> Vec<Term> {
            vec![
                Term {
                    value: x[0] + x[1] - 2.0,
                    grad: vec![1.0, 1.0],
                    hess_diag: vec![0.0, 0.0],
                },
                Term {
                    value: -x[0],
                    grad: vec![-1.0, 0.0],
                    hess_diag: vec![0.0, 0.0],
                },
                Term {
                    value: -x[1],
                    grad: vec![0.0, -1.0],
                    hess_diag: vec![0.0, 0.0],
                },
            ]
        }
    }

    #[test]
    fn projects_onto_halfspace() {
        let s = solve(&Quad, &[0.1, 0.2], &BarrierOptions::default()).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-8 && (s.x[1] - 1.0).abs() < 1e-8, "{:?}", s.x);
        assert!(s.kkt_residual < 1e-8, "{} {}", s.kkt_residual, s.newton_steps);
    }

    #[test]
    fn phase_one_recovers_interior_point() {
        let x = find_strictly_feasible(&Quad, &[5.0, -3.0], &["sum", "x", "y"]).unwrap();
        assert!(x[0] > 0.0 && x[1] > 0.0 && x[0] + x[1] < 2.0);
    }

    struct Empty;
    impl ConvexProgram for Empty {
        fn dim(&self) -> usize {
            1
        }
        fn in_domain(&self, _: &[f64]) -> bool {
            true
        }
        fn objective(&self, x: &[f64]) -> Term {
            Term {
                value: x[0],
                grad: vec![1.0],
                hess_diag: vec![0.0],
            }
        }
        fn constraints(&self, x: &[f64]) -> Vec<Term> {
            vec![
                Term {
                    value: x[0] - 1.0,
                    grad: vec![1.0],
                    hess_diag: vec![0.0],
                },
                Term {
                    value: 2.0 - x[0],
                    grad: vec![-1.0],
                    hess_diag: vec![0.0],
                },
            ]
        }
    }

    #[test]
    fn phase_one_reports_infeasibility() {
        let err = find_strictly_feasible(&Empty, &[0.0], &["upper", "lower"]).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
    }

    /// min x^2 + 2 y^2 s.t. x + y = 1, x,y >= 0  => x = 2/3, y = 1/3
    struct WithEquality;
    impl ConvexProgram for WithEquality {
        fn dim(&self) -> usize {
            2
        }
        fn in_domain(&self, _: &[f64]) -> bool {
            true
        }
        fn objective(&self, x: &[f64]) -> Term {
            Term {
                value: x[0] * x[0] + 2.0 * x[1] * x[1],
                grad: vec![2.0 * x[0], 4.0 * x[1]],
                hess_diag: vec![2.0, 4.0],
            }
        }
        fn constraints(&self, x: &[f64]) -> Vec<Term> {
            vec![
                Term {
                    value: -x[0],
                    grad: vec![-1.0, 0.0],
                    hess_diag: vec![0.0, 0.0],
                },
                Term {
                    value: -x[1],
                    grad: vec![0.0, -1.0],
                    hess_diag: vec![0.0, 0.0],
                },
            ]
        }
        fn equalities(&self) -> Vec<(Vec<f64>, f64)> {
            vec![(vec![1.0, 1.0], 1.0)]
        }
    }

    #[test]
    fn equality_constrained_newton() {
        let s = solve(&WithEquality, &[0.5, 0.5], &BarrierOptions::default()).unwrap();
        assert!((s.x[0] - 2.0 / 3.0).abs() < 1e-8, "{:?}", s.x);
        assert!((s.x[0] + s.x[1] - 1.0).abs() < 1e-12);
        assert!(s.kkt_residual < 1e-8);
    }
}
