use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use percond_core::transmission::{disk_dipole_coefficients, TransmissionSolver};
use percond_core::*;

fn build(geometry: BoundaryGeometry, data: ProblemData) -> TransmissionSolver {
    TransmissionSolver::new(geometry, GreensEvaluator::new(PeriodicCell::unit()), data).unwrap()
}

fn disk_solver(n: usize, lp: f64, lm: f64, law: RhoLaw) -> TransmissionSolver {
    build(make_ellipse(1.0, 1.0, n).unwrap(), ProblemData::homogeneous(lp, lm, law).unwrap())
}

fn forced_data() -> ProblemData {
    // Zero boundary integral on every shape symmetric under t -> -t.
    let f = TrigPolynomial { constant: 0.0, cos: vec![0.3], sin: vec![0.2, 0.1, -0.05] };
    let g = TrigPolynomial { constant: 0.4, cos: vec![0.0, 0.25], sin: vec![-0.15] };
    ProblemData::new(2.5, 1.2, f, g, RhoLaw::Power { c: 2.0, a: 1.0 }).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn m_at_origin_matches_k() {
    let s = build(make_ellipse(1.0, 0.6, 64).unwrap(), forced_data());
    let r = s.data.r_star;
    let k = s.assemble_k(r).unwrap();
    let (m, _) = s.assemble_m(0.0, r, 0).unwrap();
    let diff = (&k.matrix - &m.matrix).abs().max();
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn m_depends_continuously_on_eps() {
    let s = build(make_ellipse(1.0, 0.6, 64).unwrap(), forced_data());
    let a0 = s.assemble_m(0.0, 0.5, 0).unwrap().0.matrix;
    let gap = |e: f64| -> f64 {
        let a: DMatrix<f64> = s.assemble_m(e, 0.5, 0).unwrap().0.matrix;
        (&a - &a0).abs().max()
    };
    let (g1, g2) = (gap(0.02), gap(0.01));
    // At least O(eps); R_q is even, so the observed rate is eps^2.
    assert!(g2 < 0.55 * g1, "{g1} {g2}");
}

#[test]
fn k_with_zero_coupling_decouples_outer_density() {
    let s = disk_solver(32, 1.0, 1.0, RhoLaw::Power { c: 1.0, a: 0.0 });
    let k = s.assemble_k(0.0).unwrap();
    let n = k.n;
    for r in n..2 * n {
        for c in n..2 * n {
            assert_eq!(k.matrix[(r, c)], 0.0);
        }
        for c in 0..n {
            let w = s.w_block().matrix[(r - n, c)];
            let d = if r - n == c { 0.5 } else { 0.0 };
            assert_abs_diff_eq!(k.matrix[(r, c)], w - d, epsilon = 1e-15);
        }
    }
}

#[test]
fn homogeneous_system_has_only_the_zero_solution() {
    let s = build(make_smooth_star(1.0, 0.2, 5, 96).unwrap(), forced_data());
    let n = 96;
    let zero = vec![0.0; n];
    for gamma in [0.0, 0.5, 3.0] {
        let k = s.assemble_k(gamma).unwrap().with_rhs(&zero, &zero);
        let sol = k.solve().unwrap();
        assert!(max_abs(&sol.theta_i) == 0.0 && max_abs(&sol.theta_o) == 0.0);
        let c = k.factor().unwrap().condition();
        assert!(c.is_finite() && c > 1.0);
    }
}

#[test]
fn condition_numbers_are_stable_under_refinement() {
    let law = RhoLaw::Power { c: 1.0, a: 1.0 };
    let c64 = disk_solver(64, 2.0, 1.0, law.clone()).condition_limiting().unwrap();
    let c128 = disk_solver(128, 2.0, 1.0, law.clone()).condition_limiting().unwrap();
    assert!(c128 < 4.0 * c64, "{c64} {c128}");
    let m = disk_solver(128, 2.0, 1.0, law).condition_eps(0.1, 1.0).unwrap();
    assert!(m.is_finite());
}

#[test]
fn densities_have_zero_mean_and_multipliers_vanish() {
    let s = build(make_smooth_star(1.0, 0.25, 3, 128).unwrap(), forced_data());
    let g = &s.geometry;
    for j in 0..2 {
        let lim = s.solve_limiting(j).unwrap();
        assert!(g.integrate(&lim.pair.theta_i.values).abs() < 1e-11);
        assert!(g.integrate(&lim.pair.theta_o.values).abs() < 1e-11);
        assert!(g.integrate(&lim.u_plus_trace.values).abs() < 1e-11);
        assert!(g.integrate(&lim.u_minus_trace.values).abs() < 1e-11);
        assert!(lim.multipliers[0].abs() < 1e-10 && lim.multipliers[1].abs() < 1e-10);
        let sol = s.solve_eps([0.4, 0.6], 0.1, j).unwrap();
        assert!(g.integrate(&sol.pair.theta_i.values).abs() < 1e-11);
        assert!(g.integrate(&sol.pair.theta_o.values).abs() < 1e-11);
        assert!(sol.multipliers[0].abs() < 1e-10 && sol.multipliers[1].abs() < 1e-10);
    }
}

#[test]
fn disk_near_perfect_contact() {
    let s = disk_solver(128, 3.0, 1.0, RhoLaw::Power { c: 1e-4, a: 1.0 });
    let lim = s.solve_limiting(0).unwrap();
    let a = -(3.0 - 1.0) / (3.0 + 1.0);
    for i in 0..128 {
        assert_abs_diff_eq!(lim.u_plus_trace.values[i], a * s.geometry.nodes[i][0], epsilon = 1e-3);
    }
    let (ao, _) = disk_dipole_coefficients(3.0, 1.0, 1e4);
    assert_abs_diff_eq!(ao, a, epsilon = 1e-3);
}

#[test]
fn homogeneous_medium_limit_vanishes_with_perfect_contact() {
    let s = disk_solver(128, 1.5, 1.5, RhoLaw::Power { c: 1e-4, a: 1.0 });
    let l = lambda_limit(&s).unwrap();
    assert!(l[0][0].abs() < 2e-3 && l[1][1].abs() < 2e-3, "{l:?}");
}

#[test]
fn rotational_symmetry_of_disk_densities() {
    // The j = 2 problem is the j = 1 problem rotated by a quarter turn.
    let n = 128;
    let s = disk_solver(n, 2.0, 1.0, RhoLaw::Power { c: 1.0, a: 1.0 });
    let a = s.solve_limiting(0).unwrap();
    let b = s.solve_limiting(1).unwrap();
    for i in 0..n {
        let k = (i + n / 4) % n;
        assert_abs_diff_eq!(b.pair.theta_i.values[k], a.pair.theta_i.values[i], epsilon = 1e-10);
        assert_abs_diff_eq!(b.pair.theta_o.values[k], a.pair.theta_o.values[i], epsilon = 1e-10);
    }
}

#[test]
fn limiting_exterior_constant() {
    let s = build(make_ellipse(1.0, 0.7, 96).unwrap(), forced_data());
    let lim = s.solve_limiting(1).unwrap();
    let v = s.v_block().apply(&lim.pair.theta_o.values);
    assert_abs_diff_eq!(lim.l_minus, -s.geometry.mean(&v), epsilon = 1e-14);
}

#[test]
fn densities_converge_to_limit() {
    let s = build(make_ellipse(1.0, 0.7, 96).unwrap(), forced_data());
    let lim = s.solve_limiting(0).unwrap();
    let gap = |eps: f64| {
        let sol = s.solve_eps([0.5, 0.5], eps, 0).unwrap();
        let d: Vec<f64> = sol
            .pair
            .theta_i
            .values
            .iter()
            .zip(&lim.pair.theta_i.values)
            .map(|(a, b)| a - b)
            .collect();
        max_abs(&d)
    };
    let gaps: Vec<f64> = [0.25, 0.125, 0.0625, 0.03125].iter().map(|&e| gap(e)).collect();
    assert!(gaps.windows(2).all(|w| w[1] < 0.75 * w[0]), "{gaps:?}");
}

/// Evaluates value and normal derivative on the boundary by polynomial
/// extrapolation from probes along the normal.
fn boundary_limit(f: impl Fn(Point) -> (f64, f64), x: Point, nu: Point, side: f64, h0: f64) -> (f64, f64) {
    let hs: Vec<f64> = (1..=8).map(|k| k as f64 * h0).collect();
    let a = DMatrix::from_fn(8, 8, |r, c| (hs[r] / hs[7]).powi(c as i32));
    let lu = a.lu();
    let samples: Vec<(f64, f64)> = hs.iter().map(|h| f([x[0] + side * h * nu[0], x[1] + side * h * nu[1]])).collect();
    let v = lu.solve(&nalgebra::DVector::from_iterator(8, samples.iter().map(|s| s.0))).unwrap()[0];
    let d = lu.solve(&nalgebra::DVector::from_iterator(8, samples.iter().map(|s| s.1))).unwrap()[0];
    (v, d)
}

#[test]
fn boundary_conditions_hold_on_scaled_interface() {
    let data = forced_data();
    let s = build(make_ellipse(1.0, 0.7, 256).unwrap(), data.clone());
    let p = [0.45, 0.5];
    let eps = 0.1;
    let rho = data.rho_law.rho(eps).unwrap();
    for j in 0..2 {
        let sol = s.solve_eps(p, eps, j).unwrap();
        let fields = s.eps_fields_upsampled(&sol, 32);
        let sc = &sol.scaled;
        let h0 = sc.max_spacing() / 8.0;
        let mut worst: f64 = 0.0;
        for i in (0..256).step_by(8) {
            let x = sc.nodes[i];
            let nu = sc.normals[i];
            let dn = |fv: potentials::FieldValue| (fv.value, fv.gradient[0] * nu[0] + fv.gradient[1] * nu[1]);
            let (up, dup) = boundary_limit(|y| dn(fields.u_plus(y)), x, nu, -1.0, h0);
            let (um, dum) = boundary_limit(|y| dn(fields.u_minus(y)), x, nu, 1.0, h0);
            let t = s.geometry.params[i];
            let flux = data.lambda_minus * dum - data.lambda_plus * dup - data.f.eval(t);
            let robin = data.lambda_plus * dup + (up - um) / rho - data.g.eval(t);
            worst = worst.max(flux.abs()).max(robin.abs());
        }
        assert!(worst < 1e-5, "j = {j}: {worst:e}");
        // Normalization of the interior field on the interface.
        let nodal: Vec<f64> = (0..256)
            .map(|i| eps * (sol.vr_i[i] - sol.mean_vr_i) + sc.nodes[i][j] - p[j] - eps * s.t_mean(j))
            .collect();
        assert!(sc.integrate(&nodal).abs() < 1e-9);
    }
}

#[test]
fn quasi_periodicity_at_random_points() {
    use rand::{Rng, SeedableRng};
    let s = build(make_smooth_star(1.0, 0.2, 4, 128).unwrap(), forced_data());
    let p = [0.6, 0.35];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for j in 0..2 {
        let sol = s.solve_eps(p, 0.12, j).unwrap();
        let f = s.eps_fields(&sol);
        let mut tested = 0;
        while tested < 20 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            if f.inside(x) || sol.scaled.distance_to_nodes(x) < 0.05 {
                continue;
            }
            for h in 0..2 {
                let mut y = x;
                y[h] += 1.0;
                let jump = if h == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(f.u_minus(y).value - f.u_minus(x).value, jump, epsilon = 1e-10);
            }
            tested += 1;
        }
    }
}

#[test]
fn rescaled_fields_match_physical_fields() {
    let s = build(make_ellipse(1.0, 0.7, 128).unwrap(), forced_data());
    let p = [0.5, 0.5];
    let eps = 0.1;
    let rho = s.data.rho_law.rho(eps).unwrap();
    let sol = s.solve_eps(p, eps, 0).unwrap();
    let phys = s.eps_fields(&sol);
    let resc = s.rescaled_fields(&sol).unwrap();
    for t in [[0.3, 0.1], [0.0, -0.5], [0.85, 0.0]] {
        let x = [p[0] + eps * t[0], p[1] + eps * t[1]];
        assert_abs_diff_eq!(eps * resc.u_plus(t).unwrap(), phys.u_plus(x).value, epsilon = 1e-10);
    }
    for t in [[1.3, 0.1], [0.0, -1.5], [-2.0, 1.0]] {
        let x = [p[0] + eps * t[0], p[1] + eps * t[1]];
        let expected = rho * sol.c_minus + eps * resc.v_minus(t).unwrap();
        assert_abs_diff_eq!(expected, phys.u_minus(x).value, epsilon = 1e-10);
    }
    assert!(resc.u_plus([2.0, 0.0]).is_err());
    assert!(resc.v_minus([0.0, 0.0]).is_err());
    assert!(resc.v_minus([100.0, 0.0]).is_err());
}

#[test]
fn periodic_system_with_zero_data_is_zero() {
    let s = disk_solver(64, 2.0, 1.0, RhoLaw::Power { c: 1.0, a: 1.0 });
    let scaled = s.geometry.scaled([0.5, 0.5], 0.2).unwrap();
    let zero = vec![0.0; 64];
    let sol =
        transmission::solve_periodic_system(scaled, &s.evaluator, 2.0, 1.0, 5.0, &zero, &zero, 0.0, 0).unwrap();
    assert!(max_abs(&sol.mu_i) == 0.0 && max_abs(&sol.mu_o) == 0.0);
}

#[test]
fn periodic_route_constant_shift() {
    // v- - v+ on the interface carries the -(1/gamma#) mean(Gamma) shift.
    let s = build(make_ellipse(1.0, 0.7, 128).unwrap(), forced_data());
    let p = [0.5, 0.5];
    let eps = 0.15;
    let d = s.solve_periodic_direct(p, eps, 0).unwrap();
    let rho = s.data.rho_law.rho(eps).unwrap();
    assert_abs_diff_eq!(d.gamma_sharp, 1.0 / rho, epsilon = 1e-15);
    let gm = s.geometry.mean(s.g_values());
    assert_abs_diff_eq!(d.mean_gamma, gm, epsilon = 1e-12);
}

#[test]
fn solver_input_errors() {
    let s = disk_solver(64, 2.0, 1.0, RhoLaw::Power { c: 1.0, a: 1.0 });
    assert!(s.solve_limiting(2).is_err());
    assert!(s.solve_eps([0.5, 0.5], 0.0, 0).is_err());
    assert!(matches!(s.solve_eps([0.5, 0.5], 0.6, 0), Err(PercondError::InclusionTooLarge(_))));
    assert!(s.solve_eps([1.5, 0.5], 0.1, 0).is_err());
    assert!(s.assemble_k(-1.0).is_err());
    // An inclusion that fits the cell but leaves no room for the annulus.
    let sol = s.solve_eps([0.5, 0.5], 0.49, 0).unwrap();
    assert!(matches!(s.rescaled_fields(&sol), Err(PercondError::InclusionTooLarge(_))));
    let off = make_ellipse(1.0, 1.0, 64).unwrap().scaled([3.0, 0.0], 1.0).unwrap();
    let data = ProblemData::homogeneous(1.0, 1.0, RhoLaw::Power { c: 1.0, a: 1.0 }).unwrap();
    assert!(TransmissionSolver::new(off, GreensEvaluator::new(PeriodicCell::unit()), data).is_err());
}
