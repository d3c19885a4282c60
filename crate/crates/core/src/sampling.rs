//! Seeded random scenarios and initial states.

use std::ops::RangeInclusive;

use rand::Rng;

use crate::mappings::q_max;
use crate::scenario::{CSpecies, MSpecies, QSpecies, Scenario, State};
use crate::validate::{validate_scenario, TOL_DISTINCT};

/// Roster sizes and sampling ranges for [`random_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSampler {
    pub n_m: RangeInclusive<usize>,
    pub n_c: RangeInclusive<usize>,
    pub n_q: RangeInclusive<usize>,
    /// Every rate parameter is log-uniform in this range.
    pub param_range: (f64, f64),
    /// `D` is this fraction range times the smallest maximal growth rate.
    pub d_fraction: (f64, f64),
    pub s_in_range: (f64, f64),
    /// Probability that a quota species uses Caperon-Meyer growth.
    pub caperon_meyer_prob: f64,
}

impl Default for ScenarioSampler {
    fn default() -> Self {
        Self {
            n_m: 0..=2,
            n_c: 0..=2,
            n_q: 0..=2,
            param_range: (0.2, 5.0),
            d_fraction: (0.1, 0.9),
            s_in_range: (0.5, 5.0),
            caperon_meyer_prob: 0.3,
        }
    }
}

impl ScenarioSampler {
    /// Only free species, `n` of them.
    pub fn m_only(n: usize) -> Self {
        Self {
            n_m: n..=n,
            n_c: 0..=0,
            n_q: 0..=0,
            ..Self::default()
        }
    }

    pub fn c_only(n: RangeInclusive<usize>) -> Self {
        Self {
            n_m: 0..=0,
            n_c: n,
            n_q: 0..=0,
            ..Self::default()
        }
    }

    pub fn q_only(n: RangeInclusive<usize>) -> Self {
        Self {
            n_m: 0..=0,
            n_c: 0..=0,
            n_q: n,
            ..Self::default()
        }
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

fn draw<R: Rng + ?Sized>(rng: &mut R, sampler: &ScenarioSampler) -> Scenario {
    let p = sampler.param_range;
    let mut sc = Scenario::new(1.0, 1.0);
    loop {
        let n_m = rng.gen_range(sampler.n_m.clone());
        let n_c = rng.gen_range(sampler.n_c.clone());
        let n_q = rng.gen_range(sampler.n_q.clone());
        if n_m + n_c + n_q > 0 {
            for i in 0..n_m {
                let m = MSpecies::new(format!("M{}", i + 1), log_uniform(rng, p), log_uniform(rng, p));
                sc = sc.with_m(m.expect("positive parameters"));
            }
            for j in 0..n_c {
                let c = CSpecies::new(format!("C{}", j + 1), log_uniform(rng, p), log_uniform(rng, p));
                sc = sc.with_c(c.expect("positive parameters"));
            }
            for k in 0..n_q {
                let id = format!("Q{}", k + 1);
                let (rho, ks, gb, q0) = (
                    log_uniform(rng, p),
                    log_uniform(rng, p),
                    log_uniform(rng, p),
                    log_uniform(rng, p),
                );
                let q = if rng.gen_bool(sampler.caperon_meyer_prob) {
                    QSpecies::caperon_meyer(id, rho, ks, gb, q0, log_uniform(rng, p))
                } else {
                    QSpecies::droop(id, rho, ks, gb, q0)
                };
                sc = sc.with_q(q.expect("positive parameters"));
            }
            break;
        }
    }
    let min_rate = sc
        .m_species
        .iter()
        .map(|m| m.growth.alpha_max)
        .chain(sc.c_species.iter().map(|c| c.growth.beta_max))
        .chain(sc.q_species.iter().map(|q| q.growth.gamma_bar()))
        .fold(f64::INFINITY, f64::min);
    let (lo, hi) = sampler.d_fraction;
    sc.d = rng.gen_range(lo..=hi) * min_rate;
    let (lo, hi) = sampler.s_in_range;
    sc.s_in = rng.gen_range(lo..=hi);
    sc
}

/// Draws scenarios until one passes validation. Species ids are `M1`,
/// `C1`, `Q1`, ...; yields are 1.
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, sampler: &ScenarioSampler) -> Scenario {
    loop {
        let sc = draw(rng, sampler);
        if validate_scenario(&sc, TOL_DISTINCT).is_ok_and(|r| r.ok) {
            return sc;
        }
    }
}

/// Positive initial state: biomasses log-uniform in `[1e-3, 1]`, quotas
/// uniform in `(Q0, Q^m)`, `s = s_in`.
pub fn random_initial_state<R: Rng + ?Sized>(rng: &mut R, sc: &Scenario) -> State {
    let mut st = State::zeros(sc.layout());
    st.s = sc.s_in;
    let range = (1e-3, 1.0);
    for x in st.x.iter_mut() {
        *x = log_uniform(rng, range);
    }
    for y in st.y.iter_mut() {
        *y = log_uniform(rng, range);
    }
    for z in st.z.iter_mut() {
        *z = log_uniform(rng, range);
    }
    for (q, k) in st.q.iter_mut().zip(&sc.q_species) {
        let (lo, hi) = (k.q0(), q_max(k));
        *q = loop {
            let v = rng.gen_range(lo..hi);
            if v > lo {
                break v;
            }
        };
    }
    st
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampled_scenarios_respect_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sampler = ScenarioSampler::default();
        for _ in 0..200 {
            let sc = random_scenario(&mut rng, &sampler);
            assert!(validate_scenario(&sc, TOL_DISTINCT).unwrap().ok);
            let n = sc.m_species.len() + sc.c_species.len() + sc.q_species.len();
            assert!((1..=6).contains(&n));
            assert!(sc.m_species.len() <= 2 && sc.c_species.len() <= 2 && sc.q_species.len() <= 2);
            assert!((0.5..=5.0).contains(&sc.s_in));
            for m in &sc.m_species {
                assert!((0.2..=5.0).contains(&m.growth.alpha_max));
                assert!(sc.d <= 0.9 * m.growth.alpha_max + 1e-12);
            }
            assert!(sc.is_normalized());
        }
    }

    #[test]
    fn same_seed_same_scenario() {
        let sampler = ScenarioSampler::default();
        let a = random_scenario(&mut ChaCha8Rng::seed_from_u64(9), &sampler);
        let b = random_scenario(&mut ChaCha8Rng::seed_from_u64(9), &sampler);
        assert_eq!(a, b);
    }

    #[test]
    fn class_restricted_samplers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sc = random_scenario(&mut rng, &ScenarioSampler::m_only(5));
        assert_eq!(sc.m_species.len(), 5);
        assert!(sc.c_species.is_empty() && sc.q_species.is_empty());
        let sc = random_scenario(&mut rng, &ScenarioSampler::q_only(2..=3));
        assert!(sc.m_species.is_empty() && sc.c_species.is_empty());
    }

    #[test]
    fn initial_states_are_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let sc = random_scenario(&mut rng, &ScenarioSampler::default());
            let st = random_initial_state(&mut rng, &sc);
            st.check(sc.layout()).unwrap();
            assert_eq!(st.s, sc.s_in);
            for v in st.x.iter().chain(&st.y).chain(&st.z) {
                assert!((1e-3..=1.0).contains(v));
            }
            for (q, k) in st.q.iter().zip(&sc.q_species) {
                assert!(*q > k.q0() && *q < q_max(k));
            }
        }
    }
}
