use std::collections::HashMap;

use psym::engine::{DiffSystem, DynSys};
use psym::expr::{rat, ElemFn, Expr, FunctionTable, Symbol, SymbolKind, ZeroOptions};
use psym::jet::{JetContext, VectorField};
use psym::verify::{finite_transform, integrate_ds, map_states, residual_on_grid, variational_check, verify_ansatz, Ansatz, Axis, Grid, TransformOptions};

fn lam() -> Symbol {
    Symbol::new("lambda", SymbolKind::GroupParameter)
}

fn f(e: ElemFn, a: Expr) -> Expr {
    Expr::func(e, a)
}

fn kdv(c: &JetContext) -> DiffSystem {
    let e = Expr::add([c.jet_expr(0, &[0, 1]), c.jet_expr(0, &[3, 0]), &c.u(0) * &c.jet_expr(0, &[1, 0])]);
    let mut s = DiffSystem::new(c);
    s.add_equation("kdv", e, Some(&c.jet(0, psym::expr::MultiIndex::from_counts(vec![0, 1]))), 0).unwrap();
    s
}

#[test]
fn rational_kdv_family_on_a_grid() {
    let c = JetContext::new(&["x", "t"], &["u"]).with_constants(&["c1", "c2"]);
    let s = kdv(&c);
    let (c1, c2) = (c.constants()[0].clone(), c.constants()[1].clone());
    let u = (&Expr::sym(c2.clone()) + &c.x(0)).checked_div(&(&Expr::sym(c1.clone()) + &c.x(1))).unwrap();
    let a = Ansatz::new("rational", vec![u.clone()]).with_constants(vec![c1.clone(), c2.clone()]);
    assert!(verify_ansatz(&a, &s, &ZeroOptions::default()).unwrap().symbolic());

    let env = HashMap::from([(c1, 0.5), (c2, 0.3)]);
    let axes = vec![Axis::new(0.0f64, 1.0, 64), Axis::new(1.0, 2.0, 64)];
    let g = Grid::sample(axes.clone(), &c, &[u], &env, &FunctionTable::new()).unwrap();
    let r = residual_on_grid(&g, &s, &HashMap::new(), &FunctionTable::new()).unwrap();
    assert!(r <= 1e-5, "{r}");

    let mut bad = g.clone();
    for (k, v) in bad.values[0].iter_mut().enumerate() {
        let x = g.point(&g.multi(k));
        *v += 1e-2 * x[0].sin();
    }
    let r = residual_on_grid(&bad, &s, &HashMap::new(), &FunctionTable::new()).unwrap();
    assert!(r > 1e-3, "{r}");
}

fn heat() -> (JetContext, DiffSystem, VectorField) {
    let c = JetContext::new(&["x", "t"], &["u"]).with_constants(&["c", "mu"]);
    let u = c.u(0);
    let (ux, uxx) = (c.jet_expr(0, &[1, 0]), c.jet_expr(0, &[2, 0]));
    let e = Expr::add([c.jet_expr(0, &[0, 1]), -&uxx, -(&u * &uxx), &ux * &ux]);
    let mut s = DiffSystem::new(&c);
    s.add_equation("heat", e, None, 0).unwrap();
    let x = VectorField::point("X", vec![c.x(1).scale(&rat(2, 1)), Expr::zero()], vec![-(&c.x(0) * &u)]).unwrap();
    (c, s, x)
}

fn heat_member(c: &JetContext, m: &Expr) -> Expr {
    let k = Expr::sym(c.constants()[0].clone());
    &k * &f(ElemFn::Exp, &(-&(&c.x(0) * m)) + &(&c.x(1) * &(m * m)))
}

#[test]
fn heat_orbit_closes_under_the_finite_transformation() {
    let (c, _, x) = heat();
    let mu = Expr::sym(c.constants()[1].clone());
    let member = heat_member(&c, &mu);
    let env = HashMap::from([(c.constants()[0].clone(), 1.3), (c.constants()[1].clone(), 0.4)]);
    let axes = vec![Axis::new(0.0f64, 1.0, 64), Axis::new(0.0, 1.0, 64)];
    let g = Grid::sample(axes.clone(), &c, &[member], &env, &FunctionTable::new()).unwrap();
    let lambda = 0.05;
    let t = finite_transform(&x, &c, &g, lambda, &TransformOptions::default()).unwrap();
    let shifted = heat_member(&c, &(&mu + &Expr::rational(1, 20)));
    let want = Grid::sample(axes, &c, &[shifted], &env, &FunctionTable::new()).unwrap();
    assert!(t.clipped > 0 && t.clipped < g.len() / 4, "{}", t.clipped);
    let d = t.max_deviation(&want);
    assert!(d <= 1e-4, "{d}");
}

#[test]
fn rotation_maps_quadratic_harmonics_into_each_other() {
    let c = JetContext::new(&["x", "y"], &["u"]);
    let (x, y) = (c.x(0), c.x(1));
    let u = &(&x * &x) - &(&y * &y);
    let axes = vec![Axis::new(-1.0f64, 1.0, 41), Axis::new(-1.0, 1.0, 41)];
    let g = Grid::sample(axes, &c, &[u], &HashMap::new(), &FunctionTable::new()).unwrap();
    let field = VectorField::point("X", vec![y.clone(), -x.clone()], vec![Expr::zero()]).unwrap();
    let l = 0.3f64;
    let t = finite_transform(&field, &c, &g, l, &TransformOptions::default()).unwrap();
    let want = Grid::from_fn(g.axes.clone(), 1, |p| {
        let (x, y) = (p[0], p[1]);
        vec![(2.0 * l).cos() * (x * x - y * y) - 2.0 * (2.0 * l).sin() * x * y]
    });
    assert!(t.max_deviation(&want) < 1e-8);
    // the corners of the square leave the grid
    assert!(t.clipped > 0);
}

/// Example 7 with concrete `g1`, `g2`.
fn example7() -> (JetContext, DynSys, HashMap<Symbol, f64>, FunctionTable) {
    let c = JetContext::new(&["t"], &["x", "y", "z"]).with_function("g1", 3).with_function("g2", 3);
    let (x, y, z) = (c.u(0), c.u(1), c.u(2));
    let emy = f(ElemFn::Exp, -&y);
    let r2 = &(&(&x * &x) + &(&y * &y)).scale(&rat(1, 6)) * &f(ElemFn::Exp, y.clone());
    let r2 = &r2 + &(&(&z * &z) * &emy).scale(&rat(1, 2));
    let bump = Expr::powi(&(&r2 - &z), 2).unwrap();
    let damp = &Expr::one() - &(&z * &emy);
    let g1 = Expr::call("g1", vec![x.clone(), y.clone(), z.clone()]);
    let g2 = Expr::call("g2", vec![x.clone(), y.clone(), z.clone()]);
    let fx = &(&x * &damp) + &(&g1 * &bump);
    let fy = &(&y * &damp) + &(&g2 * &bump);
    let fz = Expr::add([-&z, &(&y * &z) * &damp, -&(&(&z * &z) * &emy), r2.scale(&rat(3, 1))]);
    let ds = DynSys::new(&c, vec![fx, fy, fz]).unwrap();
    let mut funcs = FunctionTable::new();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
    let ar: std::collections::BTreeMap<std::sync::Arc<str>, usize> = [("g1".into(), 3), ("g2".into(), 3)].into_iter().collect();
    funcs.fill_random(&ar, &mut rng);
    (c, ds, HashMap::new(), funcs)
}

fn heteroclinic(t: f64, l: f64) -> [f64; 3] {
    let s = 1.0 / t.cosh();
    let x = 3f64.sqrt() * s * l.cos();
    let y = -(3f64.sqrt()) * s * l.sin();
    [x, y, (1.0 + t.tanh()) * y.exp()]
}

#[test]
fn heteroclinic_family_tracks_rk4() {
    let (_, ds, env, funcs) = example7();
    let l0 = 0.7;
    let u0 = heteroclinic(0.0, l0);
    let tr = integrate_ds(&ds, &env, &funcs, &u0, (0.0, 10.0), 1e-3).unwrap();
    let mut worst = 0.0f64;
    for (k, u) in tr.states.iter().enumerate() {
        let e = heteroclinic(tr.time(k), l0);
        for a in 0..3 {
            worst = worst.max((u[a] - e[a]).abs());
        }
    }
    assert!(worst <= 1e-6, "{worst}");

    let phi = {
        let c = &ds.ctx;
        vec![c.u(1), -c.u(0), -(&c.u(0) * &c.u(2))]
    };
    let v = variational_check(&ds, &phi, &env, &funcs, &u0, (0.0, 10.0), 1e-3, 1e-6).unwrap();
    assert!(v.passed(), "{v:?}");

    // the finite rotation sends the orbit to the shifted member
    let c = &ds.ctx;
    let shift = 0.4f64;
    let cs = |e: ElemFn| f(e, Expr::sym(lam()));
    let yp = &(-&(&c.u(0) * &cs(ElemFn::Sin))) + &(&c.u(1) * &cs(ElemFn::Cos));
    let to_u = vec![
        &(&c.u(0) * &cs(ElemFn::Cos)) + &(&c.u(1) * &cs(ElemFn::Sin)),
        yp.clone(),
        &c.u(2) * &f(ElemFn::Exp, &yp - &c.u(1)),
    ];
    let env = HashMap::from([(lam(), shift)]);
    let img = map_states(&ds, &to_u, &env, &funcs, &tr).unwrap();
    let mut worst = 0.0f64;
    for (k, u) in img.iter().enumerate() {
        let e = heteroclinic(tr.time(k), l0 + shift);
        for a in 0..3 {
            worst = worst.max((u[a] - e[a]).abs());
        }
    }
    assert!(worst <= 1e-5, "{worst}");
}
