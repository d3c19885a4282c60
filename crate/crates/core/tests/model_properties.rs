use chemostat_core::mappings::{cap_q, cap_y, q_max, s_of_q, s_of_y};
use chemostat_core::ode::{self, OdeOptions};
use chemostat_core::predict_outcome;
use chemostat_core::rates::{Contois, Monod, QuotaGrowth, Uptake};
use chemostat_core::sampling::{random_initial_state, random_scenario, ScenarioSampler};
use chemostat_core::scenario::{CSpecies, MSpecies, QSpecies, Scenario, State};
use chemostat_core::simulate::{integrate, rhs_into, IntegratorOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn param() -> impl Strategy<Value = f64> {
    (0.2f64.ln()..5.0f64.ln()).prop_map(f64::exp)
}

fn quota_growth() -> impl Strategy<Value = QuotaGrowth> {
    (param(), param(), prop::option::of(param())).prop_map(|(g, q0, kq)| match kq {
        Some(kq) => QuotaGrowth::caperon_meyer(g, q0, kq).unwrap(),
        None => QuotaGrowth::droop(g, q0).unwrap(),
    })
}

fn q_species() -> impl Strategy<Value = QSpecies> {
    (param(), param(), quota_growth()).prop_map(|(rho, k, growth)| {
        let base = QSpecies::droop("Q", rho, k, 1.0, 1.0).unwrap();
        QSpecies { growth, ..base }
    })
}

fn grid(hi: f64) -> impl Iterator<Item = f64> {
    (0..1000).map(move |i| hi * i as f64 / 999.0)
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

proptest! {
    #[test]
    fn monod_and_uptake_monotone_and_bounded(a in param(), k in param()) {
        let m = Monod::new(a, k).unwrap();
        let u = Uptake::new(a, k).unwrap();
        let (mut pm, mut pu) = (0.0, 0.0);
        for s in grid(10.0 * k) {
            let (vm, vu) = (m.rate(s).unwrap(), u.rate(s).unwrap());
            prop_assert!(vm >= pm && vu >= pu);
            prop_assert!(vm <= a && vu <= a);
            pm = vm;
            pu = vu;
        }
    }

    #[test]
    fn contois_monotone_in_attached_biomass(b in param(), k in param(), s in 0.01f64..10.0) {
        let c = Contois::new(b, k).unwrap();
        let (mut prev_rate, mut prev_flux) = (f64::INFINITY, -1.0);
        for y in grid(10.0 * k) {
            let rate = c.rate(s, y).unwrap();
            let flux = rate * y;
            prop_assert!(rate <= prev_rate);
            prop_assert!(flux > prev_flux);
            prop_assert!(rate <= b);
            prev_rate = rate;
            prev_flux = flux;
        }
    }

    #[test]
    fn quota_demand_nondecreasing(g in quota_growth()) {
        let q0 = g.q0();
        let mut prev = 0.0;
        for i in 1..1000 {
            let q = q0 + 10.0 * q0 * i as f64 / 999.0;
            let f = g.f(q);
            prop_assert!(f >= prev);
            prop_assert!(g.rate(q).unwrap() <= g.gamma_bar());
            prev = f;
        }
    }

    #[test]
    fn quota_map_round_trip_and_range(k in q_species(), s in 0.01f64..100.0) {
        let q = cap_q(&k, s);
        prop_assert!(q > k.q0() && q < q_max(&k));
        let back = s_of_q(&k, q).unwrap();
        prop_assert!((back - s).abs() <= 1e-10 * s, "{} vs {}", back, s);
    }

    #[test]
    fn attached_map_round_trip(b in param(), kc in param(), d in 0.05f64..4.0, y in 0.0f64..10.0) {
        let c = CSpecies::new("C", b, kc).unwrap();
        match s_of_y(&c, d, y).finite() {
            Some(s) => {
                let back = cap_y(&c, d, s).unwrap();
                prop_assert!((back - y).abs() <= 1e-10 * y.max(f64::MIN_POSITIVE));
            }
            None => prop_assert!(b <= d),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn quota_sign_property(k in q_species(), s in 0.01f64..100.0, t in 0.001f64..0.999) {
        let q = k.q0() + t * (q_max(&k) - k.q0());
        let drive = k.uptake.value(s) - k.growth.f(q);
        prop_assume!(drive.abs() > 1e-12);
        let s_q = s_of_q(&k, q).unwrap();
        prop_assert_eq!(sign(drive), sign(s - s_q));
        prop_assert_eq!(sign(drive), sign(cap_q(&k, s) - q));
    }

    #[test]
    fn attached_sign_property(b in param(), kc in param(), d in 0.05f64..4.0, s in 0.01f64..10.0, y in 0.001f64..10.0) {
        let c = CSpecies::new("C", b, kc).unwrap();
        let net = c.growth.value(s, y) - d;
        prop_assume!(net.abs() > 1e-12);
        prop_assert_eq!(sign(net), sign(cap_y(&c, d, s).unwrap() - y));
        if let Some(s_y) = s_of_y(&c, d, y).finite() {
            prop_assert_eq!(sign(net), sign(s - s_y));
        }
    }
}

/// Scenario with the same rates as `sc` and the given yields.
fn with_yields(sc: &Scenario, a: &[f64], b: &[f64]) -> Scenario {
    let mut out = sc.clone();
    for (m, &ya) in out.m_species.iter_mut().zip(a) {
        *m = MSpecies {
            yield_a: ya,
            ..m.clone()
        };
    }
    for (c, &yb) in out.c_species.iter_mut().zip(b) {
        *c = CSpecies {
            yield_b: yb,
            ..c.clone()
        };
    }
    out
}

/// Right-hand side in the original biomass units, written out directly.
fn raw_rhs(sc: &Scenario, v: &[f64], dv: &mut [f64]) {
    let st = State::from_slice(sc.layout(), v);
    let s = st.s.max(0.0);
    let mut ds = sc.d * (sc.s_in - st.s);
    let mut i = 1;
    for (m, &x) in sc.m_species.iter().zip(&st.x) {
        let alpha = m.growth.alpha_max * s / (m.growth.k_s + s);
        ds -= alpha * x / m.yield_a;
        dv[i] = (alpha - sc.d) * x;
        i += 1;
    }
    for (c, &y) in sc.c_species.iter().zip(&st.y) {
        let y = y.max(0.0);
        let beta = if y > 0.0 {
            c.growth.beta_max * s / (c.growth.k_s * y + s)
        } else {
            c.growth.beta_max
        };
        ds -= beta * y / c.yield_b;
        dv[i] = (beta - sc.d) * y;
        i += 1;
    }
    let nz = sc.q_species.len();
    for (n, k) in sc.q_species.iter().enumerate() {
        let (z, q) = (st.z[n], st.q[n]);
        let rho = k.uptake.rho_max * s / (k.uptake.k_s + s);
        let gamma = k.growth.value(q);
        ds -= rho * z;
        dv[i + n] = (gamma - sc.d) * z;
        dv[i + nz + n] = rho - gamma * q;
    }
    dv[0] = ds;
}

fn yields() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(param(), 2), prop::collection::vec(param(), 2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalization_round_trip(seed in any::<u64>(), (a, b) in yields()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_scenario(&mut rng, &ScenarioSampler::default());
        let sc = with_yields(&base, &a, &b);
        let st = random_initial_state(&mut rng, &sc);
        let (_, norm) = sc.normalize().unwrap();
        let back = norm.inverse().to_normalized(&norm.to_normalized(&st));
        for (u, v) in back.to_vec().iter().zip(st.to_vec()) {
            prop_assert!((u - v).abs() <= 1e-12 * v.abs());
        }
        for (u, v) in norm.to_original(&norm.to_normalized(&st)).to_vec().iter().zip(st.to_vec()) {
            prop_assert!((u - v).abs() <= 1e-12 * v.abs());
        }
    }

    #[test]
    fn normalized_field_is_conjugate(seed in any::<u64>(), (a, b) in yields()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = with_yields(&random_scenario(&mut rng, &ScenarioSampler::default()), &a, &b);
        let st = random_initial_state(&mut rng, &sc);
        let (nsc, norm) = sc.normalize().unwrap();
        let v = st.to_vec();
        let mut raw = vec![0.0; v.len()];
        raw_rhs(&sc, &v, &mut raw);
        let want = norm.to_normalized(&State::from_slice(sc.layout(), &raw)).to_vec();
        let mut got = vec![0.0; v.len()];
        rhs_into(&nsc, &norm.to_normalized(&st).to_vec(), &mut got);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "{:?} vs {:?}", got, want);
        }
    }

    #[test]
    fn prediction_invariant_under_free_yields(seed in any::<u64>(), a in prop::collection::vec(param(), 2)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_scenario(&mut rng, &ScenarioSampler::default());
        let (nsc, _) = with_yields(&base, &a, &[1.0, 1.0]).normalize().unwrap();
        let (p0, p1) = (predict_outcome(&base).unwrap(), predict_outcome(&nsc).unwrap());
        prop_assert_eq!(p0.compliant, p1.compliant);
        prop_assert_eq!(p0.s_star_class, p1.s_star_class);
        prop_assert_eq!(p0.s_star, p1.s_star);
    }

    /// Attached yields rescale the Contois constant, which moves `s_y*`;
    /// the survivor set is unchanged as long as the winning class is.
    #[test]
    fn attached_yields_move_only_the_attached_level(seed in any::<u64>(), b in prop::collection::vec(param(), 2)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = random_scenario(&mut rng, &ScenarioSampler::default());
        let (nsc, _) = with_yields(&base, &[1.0, 1.0], &b).normalize().unwrap();
        let (p0, p1) = (predict_outcome(&base).unwrap(), predict_outcome(&nsc).unwrap());
        // Balance s + sum Y_j(s) = s_in with Y_j(s) = s (beta_max - D) / (D K b).
        let slope: f64 = base
            .c_species
            .iter()
            .zip(&b)
            .filter(|(c, _)| c.growth.beta_max > base.d)
            .map(|(c, bj)| (c.growth.beta_max - base.d) / (base.d * c.growth.k_s * bj))
            .sum();
        let s_y = base.s_in / (1.0 + slope);
        prop_assert!((p1.s_y_star - s_y).abs() <= 1e-10 * base.s_in, "{} vs {}", p1.s_y_star, s_y);
        prop_assert_eq!(p0.s_x_star, p1.s_x_star);
        prop_assert_eq!(p0.s_z_star, p1.s_z_star);
        if p0.s_star_class == p1.s_star_class {
            prop_assert_eq!(p0.compliant, p1.compliant);
        }
    }
}

#[test]
fn attached_yield_can_change_survivors() {
    let base = chemostat_core::presets::discussion_figure();
    let p = predict_outcome(&base).unwrap();
    assert_eq!(p.compliant, ["C", "Q"]);
    let (nsc, _) = with_yields(&base, &[1.0], &[0.2]).normalize().unwrap();
    let p = predict_outcome(&nsc).unwrap();
    assert!((p.s_y_star - 0.5).abs() < 1e-12);
    assert_eq!(p.compliant, ["C"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Integrating the original-unit model directly agrees with integrating
    /// the normalized model and mapping back.
    #[test]
    fn trajectories_agree_across_units(seed in any::<u64>(), (a, b) in yields()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = with_yields(&random_scenario(&mut rng, &ScenarioSampler::default()), &a, &b);
        let st = random_initial_state(&mut rng, &sc);
        let (nsc, norm) = sc.normalize().unwrap();
        let t_end = 20.0;
        let opts = IntegratorOptions { rel_tol: 1e-10, abs_tol: 1e-12, ..IntegratorOptions::with_t_max(t_end) };
        let traj = integrate(&nsc, &norm.to_normalized(&st), &opts).unwrap();
        let mapped = norm.to_original(traj.last_state().unwrap());

        let mut direct = Vec::new();
        let oo = OdeOptions { rel_tol: 1e-10, abs_tol: 1e-12, nonnegative: true, ..OdeOptions::default() };
        ode::integrate(|v, dv| raw_rhs(&sc, v, dv), 0.0, &st.to_vec(), &[t_end], &oo, |_, v| direct = v.to_vec()).unwrap();
        for (u, v) in mapped.to_vec().iter().zip(&direct) {
            prop_assert!((u - v).abs() <= 1e-6 * (1.0 + v.abs()), "{:?} vs {:?}", mapped.to_vec(), direct);
        }
    }
}
