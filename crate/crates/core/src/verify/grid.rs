use std::collections::HashMap;

use crate::engine::DiffSystem;
use crate::expr::{Compiled, Expr, FunctionTable, MultiIndex, Symbol};
use crate::jet::{JetContext, VectorField};
use crate::Scalar;

use super::VerifyError;

/// A uniform axis `lo, lo + h, …, hi` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    pub n: usize,
}

impl<T: Scalar> Axis<T> {
    pub fn new(lo: T, hi: T, n: usize) -> Self {
        Axis { lo, hi, n }
    }

    pub fn h(&self) -> T {
        (self.hi - self.lo) / T::from_usize(self.n - 1).unwrap()
    }

    pub fn node(&self, k: usize) -> T {
        self.lo + self.h() * T::from_usize(k).unwrap()
    }
}

/// Samples of the dependent variables on a tensor grid. Values are stored
/// per dependent variable in row-major order, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub axes: Vec<Axis<T>>,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> Grid<T> {
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.n + i)
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            idx[k] = flat % a.n;
            flat /= a.n;
        }
        idx
    }

    pub fn point(&self, idx: &[usize]) -> Vec<T> {
        idx.iter().zip(&self.axes).map(|(&i, a)| a.node(i)).collect()
    }

    /// Samples `f` at every node.
    pub fn from_fn(axes: Vec<Axis<T>>, deps: usize, mut f: impl FnMut(&[T]) -> Vec<T>) -> Self {
        let mut g = Grid {
            axes,
            values: vec![Vec::new(); deps],
        };
        for k in 0..g.len() {
            let x = g.point(&g.multi(k));
            for (a, v) in f(&x).into_iter().enumerate().take(deps) {
                g.values[a].push(v);
            }
        }
        g
    }

    /// Samples closed-form components `u` over the independents of `ctx`,
    /// with the remaining symbols bound by `env`.
    pub fn sample(axes: Vec<Axis<T>>, ctx: &JetContext, u: &[Expr], env: &HashMap<Symbol, f64>, funcs: &FunctionTable) -> Result<Self, VerifyError> {
        let (vars, fixed) = slots(ctx.independents(), env);
        let comp = u.iter().map(|e| e.compile(&vars, funcs)).collect::<Result<Vec<_>, _>>()?;
        let mut g = Grid {
            axes,
            values: vec![Vec::new(); u.len()],
        };
        let mut buf: Vec<T> = vec![T::zero(); vars.len()];
        buf[ctx.dim()..].copy_from_slice(&fixed_values::<T>(&fixed));
        for k in 0..g.len() {
            let x = g.point(&g.multi(k));
            buf[..x.len()].copy_from_slice(&x);
            for (a, c) in comp.iter().enumerate() {
                g.values[a].push(c.eval(&buf)?);
            }
        }
        Ok(g)
    }

    /// Tensor-product cubic interpolation; `None` outside the grid hull.
    pub fn interpolate(&self, dep: usize, x: &[T]) -> Option<T> {
        let mut base = Vec::with_capacity(x.len());
        let mut weights = Vec::with_capacity(x.len());
        for (xi, a) in x.iter().zip(&self.axes) {
            let h = a.h();
            let s = (*xi - a.lo) / h;
            let eps = T::from_f64(1e-9).unwrap();
            if s < -eps || s > T::from_usize(a.n - 1).unwrap() + eps {
                return None;
            }
            let k0 = s.floor().to_isize().unwrap().clamp(1, a.n as isize - 3) - 1;
            let nodes: Vec<T> = (0..4).map(|j| T::from_isize(k0 + j).unwrap()).collect();
            let w: Vec<T> = (0..4)
                .map(|j| {
                    let mut w = T::one();
                    for m in 0..4 {
                        if m != j {
                            w = w * (s - nodes[m]) / (nodes[j] - nodes[m]);
                        }
                    }
                    w
                })
                .collect();
            base.push(k0 as usize);
            weights.push(w);
        }
        let d = x.len();
        let mut acc = T::zero();
        let mut idx = vec![0usize; d];
        for combo in 0..4usize.pow(d as u32) {
            let mut c = combo;
            let mut w = T::one();
            for k in (0..d).rev() {
                let j = c % 4;
                c /= 4;
                idx[k] = base[k] + j;
                w = w * weights[k][j];
            }
            acc = acc + w * self.values[dep][self.flat(&idx)];
        }
        Some(acc)
    }
}

fn slots(first: &[Symbol], env: &HashMap<Symbol, f64>) -> (Vec<Symbol>, Vec<f64>) {
    let mut rest: Vec<(&Symbol, &f64)> = env.iter().filter(|(s, _)| !first.contains(s)).collect();
    rest.sort_by(|a, b| a.0.cmp(b.0));
    let mut vars = first.to_vec();
    vars.extend(rest.iter().map(|(s, _)| (*s).clone()));
    (vars, rest.iter().map(|(_, v)| **v).collect())
}

fn fixed_values<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::from_f64(*x).unwrap()).collect()
}

/// Finite-difference weights for derivatives `0..=m` at `z` on the nodes `x`
/// (Fornberg's recursion). `w[k][j]` multiplies `f(x_j)` for the `k`-th
/// derivative.
pub fn fornberg_weights<T: Scalar>(z: T, x: &[T], m: usize) -> Vec<Vec<T>> {
    let n = x.len();
    let mut c = vec![vec![T::zero(); n]; m + 1];
    c[0][0] = T::one();
    let mut c1 = T::one();
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = T::one();
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 = c2 * c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    let kk = T::from_usize(k).unwrap();
                    c[k][i] = c1 * (kk * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                let kk = T::from_usize(k).unwrap();
                c[k][j] = (c4 * c[k][j] - kk * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Half-width of the central fourth-order stencil for a `k`-th derivative.
fn half_width(k: u32) -> usize {
    if k == 0 {
        0
    } else {
        (k as usize).div_ceil(2) + 1
    }
}

fn stencil<T: Scalar>(k: u32) -> Vec<T> {
    let p = half_width(k) as isize;
    if p == 0 {
        return vec![T::one()];
    }
    let nodes: Vec<T> = (-p..=p).map(|j| T::from_isize(j).unwrap()).collect();
    fornberg_weights(T::zero(), &nodes, k as usize).swap_remove(k as usize)
}

/// Largest absolute residual of the equations of `sys` at interior nodes,
/// with derivatives from fourth-order central differences.
pub fn residual_on_grid<T: Scalar>(grid: &Grid<T>, sys: &DiffSystem, env: &HashMap<Symbol, f64>, funcs: &FunctionTable) -> Result<T, VerifyError> {
    let ctx = sys.ctx();
    if grid.axes.len() != ctx.dim() || grid.values.len() != ctx.dependents().len() {
        return Err(VerifyError::Contract("grid does not match the declared variables".into()));
    }
    let mut jets: Vec<Symbol> = Vec::new();
    for eq in sys.equations() {
        for s in eq.expr.jet_symbols() {
            if !jets.contains(&s) {
                jets.push(s);
            }
        }
    }
    let mut reach = vec![0usize; ctx.dim()];
    for s in &jets {
        let (_, j) = s.jet_parts().expect("jet");
        for (i, &k) in j.counts().iter().enumerate() {
            reach[i] = reach[i].max(half_width(k));
        }
    }
    for (i, a) in grid.axes.iter().enumerate() {
        if a.n < 7 || a.n < 2 * reach[i] + 1 {
            return Err(VerifyError::Contract(format!("axis {} has {} nodes; the stencils need at least {}", ctx.independent(i), a.n, (2 * reach[i] + 1).max(7))));
        }
    }
    let mut lead: Vec<Symbol> = ctx.independents().to_vec();
    lead.extend(jets.iter().cloned());
    let (vars, fixed) = slots(&lead, env);
    let fixed: Vec<T> = fixed_values(&fixed);
    let comp: Vec<Compiled> = sys.equations().iter().map(|eq| eq.expr.compile(&vars, funcs)).collect::<Result<_, _>>()?;

    // per jet: per axis stencil weights scaled by h^-k
    let weights: Vec<(usize, Vec<Vec<T>>)> = jets
        .iter()
        .map(|s| {
            let (dep, j): (usize, &MultiIndex) = s.jet_parts().expect("jet");
            let w = j
                .counts()
                .iter()
                .zip(&grid.axes)
                .map(|(&k, a)| {
                    let scale = a.h().powi(k as i32);
                    stencil::<T>(k).into_iter().map(|w| w / scale).collect()
                })
                .collect();
            (dep, w)
        })
        .collect();

    let mut buf = vec![T::zero(); vars.len()];
    let nd = ctx.dim();
    buf[nd + jets.len()..].copy_from_slice(&fixed);
    let mut worst = T::zero();
    let mut idx2 = vec![0usize; nd];
    'nodes: for flat in 0..grid.len() {
        let idx = grid.multi(flat);
        for (i, a) in grid.axes.iter().enumerate() {
            if idx[i] < reach[i] || idx[i] + reach[i] >= a.n {
                continue 'nodes;
            }
        }
        buf[..nd].copy_from_slice(&grid.point(&idx));
        for (k, (dep, w)) in weights.iter().enumerate() {
            let sizes: Vec<usize> = w.iter().map(Vec::len).collect();
            let total: usize = sizes.iter().product();
            let mut acc = T::zero();
            for combo in 0..total {
                let mut c = combo;
                let mut wt = T::one();
                for a in (0..nd).rev() {
                    let j = c % sizes[a];
                    c /= sizes[a];
                    let off = j as isize - (sizes[a] / 2) as isize;
                    idx2[a] = (idx[a] as isize + off) as usize;
                    wt = wt * w[a][j];
                }
                acc = acc + wt * grid.values[*dep][grid.flat(&idx2)];
            }
            buf[nd + k] = acc;
        }
        for c in &comp {
            let r = c.eval(&buf)?.abs();
            if r > worst {
                worst = r;
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct TransformOptions {
    /// Local-group bound on `|λ|`.
    pub lambda_max: f64,
    /// Local error tolerance of the adaptive integrator.
    pub tol: f64,
    pub env: HashMap<Symbol, f64>,
    pub funcs: FunctionTable,
}

impl Default for TransformOptions {
    fn default() -> Self {
        TransformOptions {
            lambda_max: 1.0,
            tol: 1e-11,
            env: HashMap::new(),
            funcs: FunctionTable::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Transformed<T> {
    /// The transformed sample; clipped nodes hold NaN.
    pub grid: Grid<T>,
    pub valid: Vec<bool>,
    pub clipped: usize,
}

impl<T: Scalar> Transformed<T> {
    /// Largest deviation from `other` over the unclipped nodes.
    pub fn max_deviation(&self, other: &Grid<T>) -> T {
        let mut worst = T::zero();
        for (a, vals) in self.grid.values.iter().enumerate() {
            for (k, v) in vals.iter().enumerate() {
                if self.valid[k] {
                    worst = worst.max((*v - other.values[a][k]).abs());
                }
            }
        }
        worst
    }
}

struct Flow<T> {
    rhs: Vec<Compiled>,
    buf_tail: Vec<T>,
    tol: T,
}

impl<T: Scalar> Flow<T> {
    fn eval(&self, s: &[T]) -> Option<Vec<T>> {
        let mut buf = s.to_vec();
        buf.extend_from_slice(&self.buf_tail);
        self.rhs.iter().map(|c| c.eval(&buf).ok()).collect()
    }

    fn rk4(&self, s: &[T], h: T) -> Option<Vec<T>> {
        let two = T::from_f64(2.0).unwrap();
        let six = T::from_f64(6.0).unwrap();
        let k1 = self.eval(s)?;
        let s2: Vec<T> = s.iter().zip(&k1).map(|(a, k)| *a + *k * h / two).collect();
        let k2 = self.eval(&s2)?;
        let s3: Vec<T> = s.iter().zip(&k2).map(|(a, k)| *a + *k * h / two).collect();
        let k3 = self.eval(&s3)?;
        let s4: Vec<T> = s.iter().zip(&k3).map(|(a, k)| *a + *k * h).collect();
        let k4 = self.eval(&s4)?;
        Some((0..s.len()).map(|i| s[i] + h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i])).collect())
    }

    /// Adaptive RK4 with step doubling from 0 to `lam`.
    fn run(&self, s0: &[T], lam: T) -> Option<Vec<T>> {
        if lam == T::zero() {
            return Some(s0.to_vec());
        }
        let mut s = s0.to_vec();
        let mut done = T::zero();
        let total = lam.abs();
        let sign = lam.signum();
        let mut h = total / T::from_f64(4.0).unwrap();
        let half = T::from_f64(0.5).unwrap();
        for _ in 0..10_000 {
            if done >= total {
                return Some(s);
            }
            h = h.min(total - done);
            let one = self.rk4(&s, sign * h)?;
            let mid = self.rk4(&s, sign * h * half)?;
            let two = self.rk4(&mid, sign * h * half)?;
            let scale = T::one() + s.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let err = one.iter().zip(&two).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
            let fifteen = T::from_f64(15.0).unwrap();
            let factor = if err == T::zero() {
                T::from_f64(2.0).unwrap()
            } else {
                (T::from_f64(0.9).unwrap() * (self.tol * scale / err).powf(T::from_f64(0.2).unwrap())).min(T::from_f64(2.0).unwrap()).max(T::from_f64(0.2).unwrap())
            };
            if err <= self.tol * scale {
                s = two.iter().zip(&one).map(|(b, a)| *b + (*b - *a) / fifteen).collect();
                done = done + h;
            }
            h = h * factor;
        }
        None
    }
}

fn solve_small<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if a[p][col] == T::zero() {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[r][c] = a[r][c] - f * v;
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc = acc - a[r][c] * x[c];
        }
        x[r] = acc / a[r][r];
    }
    Some(x)
}

/// The image of a sampled solution under the finite transformation
/// `exp(λX)`: each graph point is pushed along the characteristic flow and
/// the image graph is read back on the same grid through a Newton search for
/// preimages on the cubic interpolant.
pub fn finite_transform<T: Scalar>(field: &VectorField, ctx: &JetContext, grid: &Grid<T>, lambda: T, opts: &TransformOptions) -> Result<Transformed<T>, VerifyError> {
    if !field.is_point() {
        return Err(VerifyError::Contract(format!("`{}` is not a point field", field.name)));
    }
    if lambda.abs() > T::from_f64(opts.lambda_max).unwrap() {
        return Err(VerifyError::Contract(format!("|lambda| exceeds the local-group bound {}", opts.lambda_max)));
    }
    let p = ctx.dim();
    let q = ctx.dependents().len();
    if grid.axes.len() != p || grid.values.len() != q {
        return Err(VerifyError::Contract("grid does not match the declared variables".into()));
    }
    let crate::jet::FieldKind::Point { xi, phi } = &field.kind else { unreachable!() };
    let mut lead: Vec<Symbol> = ctx.independents().to_vec();
    lead.extend((0..q).map(|a| ctx.dependent(a)));
    let (vars, fixed) = slots(&lead, &opts.env);
    let rhs = xi.iter().chain(phi).map(|e| e.compile(&vars, &opts.funcs)).collect::<Result<Vec<_>, _>>()?;
    let flow = Flow {
        rhs,
        buf_tail: fixed_values(&fixed),
        tol: T::from_f64(opts.tol).unwrap(),
    };

    let lift = |x: &[T]| -> Option<Vec<T>> {
        let mut s = x.to_vec();
        for a in 0..q {
            s.push(grid.interpolate(a, x)?);
        }
        Some(s)
    };
    let push = |x: &[T]| -> Option<Vec<T>> { flow.run(&lift(x)?, lambda) };

    let mut out = Grid {
        axes: grid.axes.clone(),
        values: vec![Vec::with_capacity(grid.len()); q],
    };
    let mut valid = Vec::with_capacity(grid.len());
    let newton_tol = T::from_f64(1e-12).unwrap();
    let xi_moves = !xi.iter().all(Expr::is_zero);
    for k in 0..grid.len() {
        let y = grid.point(&grid.multi(k));
        let mut found = None;
        if !xi_moves {
            found = push(&y);
        } else {
            // one backward step of the pushed node is a good first guess
            let mut x = match push(&y) {
                Some(img) => (0..p).map(|i| y[i] + y[i] - img[i]).collect(),
                None => y.clone(),
            };
            for _ in 0..30 {
                let Some(img) = push(&x) else { break };
                let f: Vec<T> = (0..p).map(|i| img[i] - y[i]).collect();
                let scale = T::one() + y.iter().fold(T::zero(), |m, v| m.max(v.abs()));
                if f.iter().all(|v| v.abs() <= newton_tol * scale) {
                    found = Some(img);
                    break;
                }
                let mut jac = vec![vec![T::zero(); p]; p];
                let mut ok = true;
                for j in 0..p {
                    let d = T::from_f64(1e-6).unwrap() * (T::one() + x[j].abs());
                    let mut xp = x.clone();
                    xp[j] = xp[j] + d;
                    let mut xm = x.clone();
                    xm[j] = xm[j] - d;
                    match (push(&xp), push(&xm)) {
                        (Some(a), Some(b)) => {
                            for i in 0..p {
                                jac[i][j] = (a[i] - b[i]) / (d + d);
                            }
                        }
                        _ => ok = false,
                    }
                }
                if !ok {
                    // one-sided fallback near the hull: give up on this node
                    break;
                }
                let Some(dx) = solve_small(jac, f) else { break };
                for i in 0..p {
                    x[i] = x[i] - dx[i];
                }
            }
        }
        match found {
            Some(img) => {
                for a in 0..q {
                    out.values[a].push(img[p + a]);
                }
                valid.push(true);
            }
            None => {
                for a in 0..q {
                    out.values[a].push(T::nan());
                }
                valid.push(false);
            }
        }
    }
    let clipped = valid.iter().filter(|v| !**v).count();
    Ok(Transformed { grid: out, valid, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_reproduces_classic_stencils() {
        let nodes: Vec<f64> = (-2..=2).map(f64::from).collect();
        let w = fornberg_weights(0.0, &nodes, 2);
        let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for j in 0..5 {
            assert!((w[1][j] - d1[j]).abs() < 1e-14);
            assert!((w[2][j] - d2[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let g = Grid::from_fn(vec![Axis::new(0.0f64, 1.0, 9), Axis::new(-1.0, 1.0, 9)], 1, |x: &[f64]| vec![x[0].powi(3) - 2.0 * x[0] * x[1] * x[1] + x[1]]);
        let v = g.interpolate(0, &[0.33, -0.71]).unwrap();
        let exact = 0.33f64.powi(3) - 2.0 * 0.33 * 0.71 * 0.71 - 0.71;
        assert!((v - exact).abs() < 1e-12);
        assert!(g.interpolate(0, &[1.2, 0.0]).is_none());
    }

    #[test]
    fn zero_function_has_zero_kdv_residual() {
        let c = JetContext::new(&["x", "t"], &["u"]);
        let e = Expr::add([c.jet_expr(0, &[0, 1]), c.jet_expr(0, &[3, 0]), &c.u(0) * &c.jet_expr(0, &[1, 0])]);
        let mut s = DiffSystem::new(&c);
        s.add_equation("kdv", e, None, 0).unwrap();
        let g = Grid::from_fn(vec![Axis::new(0.0, 1.0, 16), Axis::new(1.0, 2.0, 16)], 1, |_| vec![0.0]);
        assert_eq!(residual_on_grid(&g, &s, &HashMap::new(), &FunctionTable::new()).unwrap(), 0.0);
        let coarse = Grid::from_fn(vec![Axis::new(0.0, 1.0, 6), Axis::new(1.0, 2.0, 16)], 1, |_| vec![0.0]);
        assert!(residual_on_grid(&coarse, &s, &HashMap::new(), &FunctionTable::new()).is_err());
    }

    #[test]
    fn zero_parameter_is_the_identity() {
        let c = JetContext::new(&["x", "y"], &["u"]);
        let f = VectorField::point("X", vec![c.x(1), -c.x(0)], vec![Expr::zero()]).unwrap();
        let g = Grid::from_fn(vec![Axis::new(-1.0, 1.0, 9), Axis::new(-1.0, 1.0, 9)], 1, |x| vec![x[0] * x[1]]);
        let t = finite_transform(&f, &c, &g, 0.0, &TransformOptions::default()).unwrap();
        assert_eq!(t.clipped, 0);
        assert!(t.max_deviation(&g) < 1e-14);
    }
}
