use balflow::flow::{flow_rhs, metric_velocity};
use balflow::hermitian::{self, first_variation_check, metric_from_phi, michelsohn};
use balflow::laplacians::Laplacians;
use balflow::linalg;
use balflow::{chern, sampling, BalancedStructure, InvariantMetric, LieAlgebraModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const RANDOM_SAMPLES: usize = 8;

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub model: String,
    pub n: usize,
    pub seed: u64,
    pub nilpotent: bool,
    pub abelian: bool,
    pub balanced: bool,
    pub chern_scalar: f64,
    pub bott_chern_kernel_11: usize,
    pub checks: Vec<Check>,
    pub pass: bool,
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn check(&mut self, name: &'static str, residual: f64, tolerance: f64) {
        self.checks.push(Check {
            name,
            pass: residual <= tolerance,
            residual: residual.abs(),
            tolerance,
        });
    }
}

fn rel(x: f64, scale: f64) -> f64 {
    x / scale.max(1.0)
}

fn bidegrees(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=n).flat_map(move |p| (0..=n).map(move |q| (p, q)))
}

pub fn run(model: &LieAlgebraModel, metric: &InvariantMetric, seed: u64, tol: f64) -> VerifyReport {
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Suite { checks: Vec::new() };

    let mut d2 = 0.0f64;
    let mut conj = 0.0f64;
    let mut leibniz = 0.0f64;
    for (p, q) in bidegrees(n) {
        for _ in 0..2 {
            let a = sampling::random_form(&mut rng, n, p, q);
            let da = model.d(&a);
            d2 = d2.max(rel(model.del(&da.del).coeff_norm(), a.coeff_norm()));
            d2 = d2.max(rel(model.delbar(&da.delbar).coeff_norm(), a.coeff_norm()));
            let mixed = &model.del(&da.delbar) + &model.delbar(&da.del);
            d2 = d2.max(rel(mixed.coeff_norm(), a.coeff_norm()));
            conj = conj.max(rel((&da.del.conj() - &model.delbar(&a.conj())).coeff_norm(), a.coeff_norm()));
            if p + 2 <= n {
                let b = sampling::random_form(&mut rng, n, 1, 0);
                let lhs = model.del(&a.wedge(&b).unwrap());
                let sign = if (p + q) % 2 == 0 { 1.0 } else { -1.0 };
                let rhs = &da.del.wedge(&b).unwrap() + &a.wedge(&model.del(&b)).unwrap().scale_re(sign);
                leibniz = leibniz.max(rel((&lhs - &rhs).coeff_norm(), lhs.coeff_norm()));
            }
        }
    }
    suite.check("d_squared_zero", d2, tol);
    suite.check("conjugation_commutes_with_d", conj, tol);
    suite.check("leibniz_rule", leibniz, tol);

    let mut star = 0.0f64;
    let mut pairing = 0.0f64;
    for (p, q) in bidegrees(n) {
        let a = sampling::random_form(&mut rng, n, p, q);
        let b = sampling::random_form(&mut rng, n, p, q);
        let sign = if (p + q) % 2 == 0 { 1.0 } else { -1.0 };
        let twice = metric.hodge_star(&metric.hodge_star(&a));
        star = star.max(rel((&twice - &a.scale_re(sign)).coeff_norm(), a.coeff_norm()));
        let lhs = a.wedge(&metric.hodge_star(&b.conj())).unwrap();
        let rhs = metric.volume_form().scale(metric.inner(&a, &b));
        pairing = pairing.max(rel((&lhs - &rhs).coeff_norm(), lhs.coeff_norm()));
    }
    suite.check("star_involution", star, tol);
    suite.check("star_pairing", pairing, tol);

    let phi = michelsohn(metric);
    if n >= 2 {
        let round_trip = metric_from_phi(&phi).map_or(f64::INFINITY, |m| linalg::rel_diff(m.matrix(), metric.matrix()));
        suite.check("michelsohn_round_trip", round_trip, tol);
    }

    if n >= 2 {
        let mut lemma = 0.0f64;
        for _ in 0..RANDOM_SAMPLES {
            let m = sampling::random_metric(&mut rng, n);
            let sigma = sampling::random_primitive(&mut rng, &m);
            for k in 0..=n - 2 {
                let r = hermitian::star_primitive_identity_check_factorial(&m, &sigma, k).unwrap_or(f64::INFINITY);
                lemma = lemma.max(rel(r, m.norm(&sigma)));
            }
        }
        suite.check("star_primitive_identity", lemma, tol);
    }

    if n >= 2 {
        let h0 = sampling::random_primitive(&mut rng, metric);
        let fine = first_variation_check(metric, 0.5, &h0, 1e-4).unwrap_or(f64::INFINITY);
        suite.check("first_variation", fine, 1e-6);
    }

    let conn = chern::ChernConnection::new(model, metric);
    suite.check("chern_metric_compatible", conn.metric_compatibility_defect(), tol);
    suite.check("chern_torsion_no_11_part", conn.torsion_11_norm(), tol);
    let rho = chern::chern_ricci(model, metric);
    let rho_frame = chern::chern_ricci_orthonormal(model, metric);
    suite.check("chern_ricci_routes_agree", rel((&rho - &rho_frame).coeff_norm(), rho.coeff_norm()), tol);
    suite.check("chern_ricci_type_11", chern::ricci_non_11_norm(model, metric), tol);
    suite.check("chern_ricci_real", rel(rho.reality_defect(), rho.coeff_norm()), tol);
    if model.is_nilpotent() {
        suite.check("chern_ricci_vanishes", rho.coeff_norm(), 1e-12);
    }

    let lap = Laplacians::new(model, metric);
    let mut adjoint = 0.0f64;
    let mut negative = 0.0f64;
    let mut size = 0.0f64;
    for (p, q) in bidegrees(n) {
        for delta in [lap.delta_bc_matrix(p, q), lap.delta_a_matrix(p, q)] {
            adjoint = adjoint.max(lap.self_adjointness_defect(&delta, p, q));
            let spectrum = lap.spectrum(&delta, p, q);
            let top = spectrum.iter().cloned().fold(1.0, f64::max);
            negative = negative.max(spectrum.iter().map(|v| (-v / top).max(0.0)).fold(0.0, f64::max));
            size = size.max(delta.norm());
        }
    }
    suite.check("laplacians_self_adjoint", adjoint, tol);
    suite.check("laplacians_nonnegative", negative, tol);
    if model.is_abelian() {
        suite.check("laplacians_vanish", size, tol);
    }

    let mut green = 0.0f64;
    for (p, q) in bidegrees(n).filter(|&(p, q)| p >= 1 && q >= 1) {
        let theta = sampling::random_form(&mut rng, n, p - 1, q - 1);
        let psi = model.ddbar(&theta);
        let g = lap.green_a(p - 1, q - 1);
        let back = lap.ddbar_i(p as isize - 1, q as isize - 1)
            * &g.matrix
            * lap.ddbar_adj_i(p as isize, q as isize)
            * psi.as_vector();
        green = green.max(rel((back - psi.as_vector()).norm(), psi.coeff_norm()));
    }
    suite.check("green_reconstruction", green, tol);
    let split = bidegrees(n).map(|(p, q)| lap.aeppli_split(p, q).residual()).fold(0.0, f64::max);
    suite.check("aeppli_decomposition", split, tol);

    let balanced = n >= 2 && BalancedStructure::new(model, phi.clone()).is_ok();
    if balanced {
        let s = BalancedStructure::new(model, phi).expect("checked above");
        let v = flow_rhs(model, &s);
        suite.check("flow_velocity_real", rel(v.reality_defect(), v.coeff_norm()), tol);
        suite.check("flow_velocity_closed", rel(model.d(&v).norm(), v.coeff_norm()), tol);
        suite.check("flow_velocity_ddbar_exact", rel(lap.distance_from_ddbar_image(&v), v.coeff_norm()), tol);
        let gdot = metric_velocity(s.phi(), &v).map_or(f64::INFINITY, |g| linalg::hermitian_defect(&g));
        suite.check("metric_velocity_hermitian", gdot, tol);
    }

    let pass = suite.checks.iter().all(|c| c.pass);
    VerifyReport {
        model: model.name().to_string(),
        n,
        seed,
        nilpotent: model.is_nilpotent(),
        abelian: model.is_abelian(),
        balanced,
        chern_scalar: chern::chern_scalar(model, metric),
        bott_chern_kernel_11: lap.bc_kernel_dim(1, 1),
        checks: suite.checks,
        pass,
    }
}

pub fn to_csv(report: &VerifyReport) -> String {
    let mut out = String::from("check,pass,residual,tolerance\n");
    for c in &report.checks {
        out.push_str(&format!("{},{},{:e},{:e}\n", c.name, c.pass, c.residual, c.tolerance));
    }
    out
}
