use std::collections::HashMap;

use crate::engine::DynSys;
use crate::expr::{Compiled, Expr, FunctionTable, Symbol, ZeroStatus, ZeroVerdict};
use crate::Scalar;

use super::{VerifyError, VerifyVerdict};

/// Fixed-step samples `u(t0 + k h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub t0: T,
    pub h: T,
    pub states: Vec<Vec<T>>,
    pub method: &'static str,
    /// `|u_h(T) − u_2h(T)| / 15`, the Richardson estimate of the final error.
    pub error_estimate: Option<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> T {
        self.t0 + self.h * T::from_usize(k).unwrap()
    }

    pub fn last(&self) -> &[T] {
        self.states.last().expect("nonempty trajectory")
    }
}

struct Rhs {
    comps: Vec<Compiled>,
    tail: Vec<f64>,
}

impl Rhs {
    fn new(exprs: &[Expr], state: &[Symbol], env: &HashMap<Symbol, f64>, funcs: &FunctionTable) -> Result<Self, VerifyError> {
        let mut rest: Vec<(&Symbol, &f64)> = env.iter().filter(|(s, _)| !state.contains(s)).collect();
        rest.sort_by(|a, b| a.0.cmp(b.0));
        let mut vars = state.to_vec();
        vars.extend(rest.iter().map(|(s, _)| (*s).clone()));
        Ok(Rhs {
            comps: exprs.iter().map(|e| e.compile(&vars, funcs)).collect::<Result<_, _>>()?,
            tail: rest.iter().map(|(_, v)| **v).collect(),
        })
    }

    fn eval<T: Scalar>(&self, u: &[T], out: &mut Vec<T>) -> bool {
        let mut buf = u.to_vec();
        buf.extend(self.tail.iter().map(|v| T::from_f64(*v).unwrap()));
        out.clear();
        for c in &self.comps {
            match c.eval(&buf) {
                Ok(v) => out.push(v),
                Err(_) => return false,
            }
        }
        true
    }
}

fn rk4_step<T: Scalar>(f: &impl Fn(&[T], &mut Vec<T>) -> bool, u: &[T], h: T) -> Option<Vec<T>> {
    let two = T::from_f64(2.0).unwrap();
    let six = T::from_f64(6.0).unwrap();
    let (mut k1, mut k2, mut k3, mut k4) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    if !f(u, &mut k1) {
        return None;
    }
    let s: Vec<T> = u.iter().zip(&k1).map(|(a, k)| *a + *k * h / two).collect();
    if !f(&s, &mut k2) {
        return None;
    }
    let s: Vec<T> = u.iter().zip(&k2).map(|(a, k)| *a + *k * h / two).collect();
    if !f(&s, &mut k3) {
        return None;
    }
    let s: Vec<T> = u.iter().zip(&k3).map(|(a, k)| *a + *k * h).collect();
    if !f(&s, &mut k4) {
        return None;
    }
    let out: Vec<T> = (0..u.len()).map(|i| u[i] + h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i])).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

fn steps_for<T: Scalar>(span: (T, T), h: T) -> Result<usize, VerifyError> {
    if !(h > T::zero()) || span.1 < span.0 {
        return Err(VerifyError::Contract("integration needs h > 0 and an increasing span".into()));
    }
    Ok(((span.1 - span.0) / h).round().to_usize().unwrap_or(0))
}

fn run<T: Scalar>(f: &impl Fn(&[T], &mut Vec<T>) -> bool, u0: &[T], t0: T, h: T, n: usize) -> Result<Vec<Vec<T>>, VerifyError> {
    let mut states = Vec::with_capacity(n + 1);
    states.push(u0.to_vec());
    for k in 0..n {
        let next = rk4_step(f, &states[k], h).ok_or_else(|| VerifyError::BlowUp {
            time: (t0 + h * T::from_usize(k).unwrap()).to_f64().unwrap_or(f64::NAN),
        })?;
        states.push(next);
    }
    Ok(states)
}

/// Classical fixed-step RK4 for `u̇ = f(u)`, symbols other than the state
/// bound by `env`.
pub fn integrate_ds<T: Scalar>(sys: &DynSys, env: &HashMap<Symbol, f64>, funcs: &FunctionTable, u0: &[T], span: (T, T), h: T) -> Result<Trajectory<T>, VerifyError> {
    let state: Vec<Symbol> = (0..sys.f.len()).map(|a| sys.ctx.dependent(a)).collect();
    if u0.len() != state.len() {
        return Err(VerifyError::Contract(format!("initial state has {} components, the system {}", u0.len(), state.len())));
    }
    let rhs = Rhs::new(&sys.f, &state, env, funcs)?;
    let f = |u: &[T], out: &mut Vec<T>| rhs.eval(u, out);
    let n = steps_for(span, h)?;
    let states = run(&f, u0, span.0, h, n)?;
    let error_estimate = if n % 2 == 0 && n > 0 {
        let coarse = run(&f, u0, span.0, h + h, n / 2)?;
        let a = states.last().unwrap();
        let b = coarse.last().unwrap();
        Some(a.iter().zip(b).fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs())) / T::from_f64(15.0).unwrap())
    } else {
        None
    };
    Ok(Trajectory {
        t0: span.0,
        h,
        states,
        method: "rk4",
        error_estimate,
    })
}

/// Applies the point map `u ↦ to_u(u)` to every state of a trajectory.
pub fn map_states<T: Scalar>(sys: &DynSys, to_u: &[Expr], env: &HashMap<Symbol, f64>, funcs: &FunctionTable, traj: &Trajectory<T>) -> Result<Vec<Vec<T>>, VerifyError> {
    let state: Vec<Symbol> = (0..sys.f.len()).map(|a| sys.ctx.dependent(a)).collect();
    let m = Rhs::new(to_u, &state, env, funcs)?;
    let mut out = Vec::with_capacity(traj.len());
    let mut buf = Vec::new();
    for (k, s) in traj.states.iter().enumerate() {
        if !m.eval(s, &mut buf) {
            return Err(VerifyError::BlowUp {
                time: traj.time(k).to_f64().unwrap_or(f64::NAN),
            });
        }
        out.push(buf.clone());
    }
    Ok(out)
}

/// Co-integrates `u̇ = f(u)`, `v̇ = ∇f(u) v` and compares `v` with the
/// tangent field along the trajectory, once with `v(0) = φ(u0)` and once
/// with `v(0) = f(u0)`.
#[allow(clippy::too_many_arguments)]
pub fn variational_check<T: Scalar>(
    sys: &DynSys,
    phi: &[Expr],
    env: &HashMap<Symbol, f64>,
    funcs: &FunctionTable,
    u0: &[T],
    span: (T, T),
    h: T,
    tol: f64,
) -> Result<VerifyVerdict, VerifyError> {
    let n = sys.f.len();
    if phi.len() != n {
        return Err(VerifyError::Contract("tangent field has the wrong number of components".into()));
    }
    let state: Vec<Symbol> = (0..n).map(|a| sys.ctx.dependent(a)).collect();
    let rhs = Rhs::new(&sys.f, &state, env, funcs)?;
    let jac: Vec<Expr> = sys.jacobian().into_iter().flatten().collect();
    let jac = Rhs::new(&jac, &state, env, funcs)?;
    let phi_c = Rhs::new(phi, &state, env, funcs)?;
    let steps = steps_for(span, h)?;

    let coupled = |w: &[T], out: &mut Vec<T>| -> bool {
        let (u, v) = w.split_at(n);
        let mut fu = Vec::new();
        let mut j = Vec::new();
        if !rhs.eval(u, &mut fu) || !jac.eval(u, &mut j) {
            return false;
        }
        out.clear();
        out.extend(fu);
        for a in 0..n {
            let mut acc = T::zero();
            for b in 0..n {
                acc = acc + j[a * n + b] * v[b];
            }
            out.push(acc);
        }
        true
    };

    let mut verdict = VerifyVerdict {
        checks: Vec::new(),
        max_residual: 0.0,
        samples: steps + 1,
        notes: vec![format!("rk4, h = {}", h.to_f64().unwrap_or(f64::NAN))],
    };
    let tangents: [(&str, &Rhs); 2] = [("d/dlambda", &phi_c), ("d/dt", &rhs)];
    for (label, field) in tangents {
        let mut v0 = Vec::new();
        if !field.eval(u0, &mut v0) {
            return Err(VerifyError::Contract(format!("tangent `{label}` is not finite at the initial state")));
        }
        let mut w0 = u0.to_vec();
        w0.extend(v0);
        let states = run(&coupled, &w0, span.0, h, steps)?;
        let mut worst = 0.0f64;
        let mut at = 0usize;
        let mut expect = Vec::new();
        for (k, w) in states.iter().enumerate() {
            let (u, v) = w.split_at(n);
            if !field.eval(u, &mut expect) {
                return Err(VerifyError::BlowUp {
                    time: (span.0 + h * T::from_usize(k).unwrap()).to_f64().unwrap_or(f64::NAN),
                });
            }
            let d = v.iter().zip(&expect).fold(0.0f64, |m, (a, b)| m.max((*a - *b).abs().to_f64().unwrap_or(f64::INFINITY)));
            if d > worst {
                worst = d;
                at = k;
            }
        }
        verdict.max_residual = verdict.max_residual.max(worst);
        let t_at = (span.0 + h * T::from_usize(at).unwrap()).to_f64().unwrap_or(f64::NAN);
        let status = if worst <= tol {
            ZeroStatus {
                verdict: ZeroVerdict::NumericallyZero,
                witness: None,
                residual: None,
                max_abs: worst,
            }
        } else {
            ZeroStatus {
                verdict: ZeroVerdict::Nonzero,
                witness: Some((vec![("t".to_string(), t_at)], worst)),
                residual: None,
                max_abs: worst,
            }
        };
        verdict.checks.push((label.to_string(), status));
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::JetContext;

    fn rotation_ds() -> DynSys {
        let c = JetContext::new(&["t"], &["x", "y"]);
        DynSys::new(&c, vec![-c.u(1), c.u(0)]).unwrap()
    }

    #[test]
    fn zero_field_gives_a_constant_trajectory() {
        let c = JetContext::new(&["t"], &["x"]);
        let s = DynSys::new(&c, vec![Expr::zero()]).unwrap();
        let tr = integrate_ds(&s, &HashMap::new(), &FunctionTable::new(), &[0.3f64], (0.0, 1.0), 0.1).unwrap();
        assert!(tr.states.iter().all(|u| u[0] == 0.3));
    }

    #[test]
    fn rotation_keeps_the_radius() {
        let s = rotation_ds();
        let tr = integrate_ds(&s, &HashMap::new(), &FunctionTable::new(), &[1.0f64, 0.0], (0.0, 6.0), 1e-2).unwrap();
        let u = tr.last();
        assert!((u[0] - 6.0f64.cos()).abs() < 1e-8 && (u[1] - 6.0f64.sin()).abs() < 1e-8);
        assert!(tr.error_estimate.unwrap() < 1e-8);
    }

    #[test]
    fn time_evolution_is_always_a_symmetry() {
        let s = rotation_ds();
        let v = variational_check(&s, &s.f.clone(), &HashMap::new(), &FunctionTable::new(), &[0.4f64, -0.2], (0.0, 3.0), 1e-3, 1e-9).unwrap();
        assert!(v.passed(), "{v:?}");
    }

    #[test]
    fn single_precision_runs() {
        let s = rotation_ds();
        let tr = integrate_ds(&s, &HashMap::new(), &FunctionTable::new(), &[1.0f32, 0.0], (0.0, 1.0), 0.01).unwrap();
        assert!((tr.last()[0] - 1.0f32.cos()).abs() < 1e-4);
    }
}
