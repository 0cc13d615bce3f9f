//! Exact Bellman fixed points of the self-play equation, closed-form
//! validators for the always-defect and Pavlov fixed points, subgame
//! perfection via one-shot deviations, exact policy-pair returns and the
//! spectrum of the lose-shift phase map.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::game::{next_state, Action, PayoffMatrix, State};
use crate::linalg;
use crate::policy::{PolicyName, PolicyProfile, QTable};

/// Solution of the self-play Bellman equation for a fixed greedy profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellmanSolution {
    pub q_star: QTable,
    pub policy: PolicyProfile,
    /// The greedy policy of `q_star` is `policy` itself.
    pub is_consistent: bool,
    /// Largest absolute Bellman violation of `q_star`.
    pub residual: f64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

fn check_fixed_point_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(domain(format!("epsilon must lie in [0, 1/2), got {epsilon}")));
    }
    Ok(())
}

fn var(s: State, a: Action) -> usize {
    2 * s.index() + a.index()
}

/// Right-hand side of the self-play Bellman equation at `(s, a)`, with the
/// successor maximum taken at the profile's greedy action.
fn bellman_rhs(q: &QTable, profile: &PolicyProfile, m: &PayoffMatrix, gamma: f64, s: State, a: Action) -> f64 {
    Action::ALL
        .iter()
        .map(|&b| {
            let next = next_state(a, b);
            profile.prob(s.swap(), b) * (m.reward(a, b) + gamma * q.get(next, profile.action(next)))
        })
        .sum()
}

/// Solves the 8×8 linear system
/// `Q[s][a] = Σ_b π(b | swap s) (r(a, b) + γ Q[(a, b)][greedy(a, b)])`
/// where the opponent plays the profile ε-greedily from its own perspective.
pub fn solve_fixed_point(profile: &PolicyProfile, m: &PayoffMatrix, gamma: f64) -> Result<BellmanSolution> {
    check_gamma(gamma)?;
    check_fixed_point_epsilon(profile.epsilon)?;
    let mut a = vec![vec![0.0; 8]; 8];
    let mut rhs = vec![0.0; 8];
    for s in State::ALL {
        for act in Action::ALL {
            let row = var(s, act);
            a[row][row] += 1.0;
            for b in Action::ALL {
                let p = profile.prob(s.swap(), b);
                let next = next_state(act, b);
                rhs[row] += p * m.reward(act, b);
                a[row][var(next, profile.action(next))] -= gamma * p;
            }
        }
    }
    let x = linalg::solve(a, rhs)?;
    let mut q_star = QTable::zeros();
    for s in State::ALL {
        for act in Action::ALL {
            q_star.set(s, act, x[var(s, act)]);
        }
    }
    let residual = State::ALL
        .iter()
        .flat_map(|&s| Action::ALL.map(|act| (s, act)))
        .map(|(s, act)| (q_star.get(s, act) - bellman_rhs(&q_star, profile, m, gamma, s, act)).abs())
        .fold(0.0, f64::max);
    Ok(BellmanSolution {
        q_star,
        policy: *profile,
        is_consistent: q_star.greedy_profile() == profile.greedy_action,
        residual,
    })
}

/// Always-defect fixed point in closed form: `Q_D = E[r_D]/(1−γ)` and
/// `Q_C = Q_D − (E[r_D] − E[r_C])` in every state.
pub fn prop1_closed_form(m: &PayoffMatrix, gamma: f64, epsilon: f64) -> Result<QTable> {
    check_gamma(gamma)?;
    check_fixed_point_epsilon(epsilon)?;
    let e_d = (1.0 - epsilon) * m.r_dd() + epsilon * m.r_dc();
    let e_c = (1.0 - epsilon) * m.r_cd() + epsilon * m.r_cc();
    let q_d = e_d / (1.0 - gamma);
    let q_c = q_d - (e_d - e_c);
    Ok(QTable::from_pairs([(q_c, q_d); 4]))
}

/// Closed-form Pavlov fixed point and the signs that decide its existence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PavlovClosedForm {
    /// `Q_{CC,C} = Q_{DD,C}`.
    pub q_cc_c: f64,
    /// `Q_{CD,D} = Q_{DC,D}`.
    pub q_cd_d: f64,
    /// `Q_{CC,D} = Q_{DD,D}`.
    pub q_cc_d: f64,
    /// `Q_{CD,C} = Q_{DC,C}`.
    pub q_cd_c: f64,
    /// `Q_{CD,D} − Q_{CD,C}` (equal to the DC gap).
    pub gap_cd: f64,
    /// `Q_{DD,C} − Q_{DD,D}` (equal to the CC gap).
    pub gap_dd: f64,
    /// For g-parameterised payoffs, the DD gap in the printed form
    /// `2γ(1−2ε)((g−1) − gε) + g`; it disagrees with `gap_dd` by exactly 2.
    pub gap_dd_printed: Option<f64>,
    /// All four greedy inequalities of Pavlov hold strictly.
    pub exists: bool,
    pub table: QTable,
}

pub fn prop2_closed_form(m: &PayoffMatrix, gamma: f64, epsilon: f64) -> Result<PavlovClosedForm> {
    check_gamma(gamma)?;
    check_fixed_point_epsilon(epsilon)?;
    let e = epsilon;
    let e_cc_c = (1.0 - e) * m.r_cc() + e * m.r_cd();
    let e_cd_d = (1.0 - e) * m.r_dd() + e * m.r_dc();
    let x = ((1.0 - gamma * e) * e_cc_c + gamma * e * e_cd_d) / (1.0 - gamma);
    let y = (gamma * (1.0 - e) * e_cc_c + (1.0 - gamma * (1.0 - e)) * e_cd_d) / (1.0 - gamma);
    let q_cc_d = (1.0 - e) * (m.r_dc() + gamma * y) + e * (m.r_dd() + gamma * x);
    let q_cd_c = (1.0 - e) * (m.r_cd() + gamma * y) + e * (m.r_cc() + gamma * x);

    let spread = (1.0 - e) * (m.r_cc() - m.r_dd()) + e * (m.r_cd() - m.r_dc());
    let drift = gamma * (1.0 - 2.0 * e) * spread;
    let gap_cd = drift + (1.0 - e) * (m.r_dd() - m.r_cd()) + e * (m.r_dc() - m.r_cc());
    let gap_dd = drift + (1.0 - e) * (m.r_cc() - m.r_dc()) + e * (m.r_cd() - m.r_dd());
    let gap_dd_printed = m
        .g()
        .map(|g| 2.0 * gamma * (1.0 - 2.0 * e) * ((g - 1.0) - g * e) + g);

    let table = QTable::from_pairs([(x, q_cc_d), (x, q_cc_d), (q_cd_c, y), (q_cd_c, y)]);
    Ok(PavlovClosedForm {
        q_cc_c: x,
        q_cd_d: y,
        q_cc_d,
        q_cd_c,
        gap_cd,
        gap_dd,
        gap_dd_printed,
        exists: gap_cd > 0.0 && gap_dd > 0.0,
        table,
    })
}

/// Pavlov exists at ε = 0 iff γ exceeds this value.
pub fn pavlov_gamma_threshold(m: &PayoffMatrix) -> f64 {
    (m.r_dc() - m.r_cc()) / (m.r_cc() - m.r_dd())
}

/// Largest ε (to within `1e-12`) below which the Pavlov profile is a
/// consistent fixed point, found by bisection on the exact solver. `None` when
/// Pavlov is not a fixed point even at ε = 0.
pub fn pavlov_epsilon_threshold(m: &PayoffMatrix, gamma: f64) -> Result<Option<f64>> {
    let consistent = |e: f64| -> Result<bool> {
        let p = PolicyProfile::named(PolicyName::Pavlov, e)?;
        Ok(solve_fixed_point(&p, m, gamma)?.is_consistent)
    };
    if !consistent(0.0)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 0.5 - 1e-12);
    if consistent(hi)? {
        return Ok(Some(hi));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if consistent(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Per-state comparison of following a deterministic profile against a single
/// deviation followed by the profile, both players using the profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeReport {
    /// Return of following the profile from each state (order DD, CC, CD, DC).
    pub on_path: [f64; 4],
    /// Return of deviating once in each state.
    pub deviation: [f64; 4],
    /// `min_s on_path[s] − deviation[s]`.
    pub margin: f64,
    pub is_spe: bool,
}

const SPE_TOL: f64 = 1e-9;

/// Exact returns under a deterministic profile played by both players: the
/// induced chain is deterministic, so `V = (I − γP)⁻¹ r` is solved directly.
fn on_path_values(profile: &PolicyProfile, m: &PayoffMatrix, gamma: f64) -> Result<[f64; 4]> {
    let mut a = vec![vec![0.0; 4]; 4];
    let mut r = vec![0.0; 4];
    for s in State::ALL {
        let (a1, a2) = (profile.action(s), profile.action(s.swap()));
        let i = s.index();
        a[i][i] += 1.0;
        a[i][next_state(a1, a2).index()] -= gamma;
        r[i] = m.reward(a1, a2);
    }
    let v = linalg::solve(a, r)?;
    Ok([v[0], v[1], v[2], v[3]])
}

pub fn spe_report(profile: &PolicyProfile, m: &PayoffMatrix, gamma: f64) -> Result<SpeReport> {
    check_gamma(gamma)?;
    if profile.epsilon != 0.0 {
        return Err(Error::Precondition("subgame perfection is checked for deterministic profiles (epsilon = 0)".into()));
    }
    let on_path = on_path_values(profile, m, gamma)?;
    let deviation = State::ALL.map(|s| {
        let a1 = profile.action(s).other();
        let a2 = profile.action(s.swap());
        m.reward(a1, a2) + gamma * on_path[next_state(a1, a2).index()]
    });
    let margin = (0..4).map(|i| on_path[i] - deviation[i]).fold(f64::INFINITY, f64::min);
    let scale = on_path.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    Ok(SpeReport {
        on_path,
        deviation,
        margin,
        is_spe: margin >= -SPE_TOL * scale,
    })
}

/// No single deviation in any state strictly improves on the profile.
pub fn is_subgame_perfect(profile: &PolicyProfile, m: &PayoffMatrix, gamma: f64) -> Result<bool> {
    spe_report(profile, m, gamma).map(|r| r.is_spe)
}

/// Expected discounted returns `(J¹, J²)` when player 1 plays `p1` and player 2
/// plays `p2`, each ε-greedily from its own perspective, with the initial
/// state (player 1's view) drawn from `rho` in order DD, CC, CD, DC.
pub fn joint_return(
    p1: &PolicyProfile,
    p2: &PolicyProfile,
    m: &PayoffMatrix,
    gamma: f64,
    rho: [f64; 4],
) -> Result<(f64, f64)> {
    check_gamma(gamma)?;
    if rho.iter().any(|p| *p < 0.0) || (rho.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(domain(format!("rho must be a probability vector, got {rho:?}")));
    }
    let mut a = vec![vec![0.0; 4]; 4];
    let mut r1 = vec![0.0; 4];
    let mut r2 = vec![0.0; 4];
    for s in State::ALL {
        let i = s.index();
        a[i][i] += 1.0;
        for x in Action::ALL {
            for y in Action::ALL {
                let p = p1.prob(s, x) * p2.prob(s.swap(), y);
                r1[i] += p * m.reward(x, y);
                r2[i] += p * m.reward(y, x);
                a[i][next_state(x, y).index()] -= gamma * p;
            }
        }
    }
    let v1 = linalg::solve(a.clone(), r1)?;
    let v2 = linalg::solve(a, r2)?;
    let j1 = rho.iter().zip(&v1).map(|(p, v)| p * v).sum();
    let j2 = rho.iter().zip(&v2).map(|(p, v)| p * v).sum();
    Ok((j1, j2))
}

/// Point mass on one state, for [`joint_return`].
pub fn point_mass(s: State) -> [f64; 4] {
    let mut rho = [0.0; 4];
    rho[s.index()] = 1.0;
    rho
}

/// Spectrum of the two-step lose-shift map acting on
/// `(Q_{CC,D} − u*, −(Q_{DD,C} − v*))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub matrix: [[f64; 2]; 2],
    /// Eigenvalues from the characteristic polynomial of `matrix`.
    pub lambda_plus_direct: f64,
    pub lambda_minus_direct: f64,
    /// Eigenvectors `(w, 1)` for `lambda_plus` and `lambda_minus`.
    pub eigvec_plus: [f64; 2],
    pub eigvec_minus: [f64; 2],
}

pub fn phase2_eigen(alpha: f64, gamma: f64) -> Result<EigenReport> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    check_gamma(gamma)?;
    let a = 1.0 - alpha;
    let b = alpha * gamma;
    let matrix = [[a, -b], [-b * a, a + b * b]];
    let root = (1.0 - alpha + b * b / 4.0).sqrt();
    let lambda_plus = 1.0 - alpha + b * (b / 2.0 + root);
    let lambda_minus = 1.0 - alpha + b * (b / 2.0 - root);

    let tr = matrix[0][0] + matrix[1][1];
    let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
    let disc = (tr * tr / 4.0 - det).sqrt();
    let lambda_plus_direct = tr / 2.0 + disc;
    let lambda_minus_direct = tr / 2.0 - disc;

    let eigvec = |lam: f64| -> [f64; 2] {
        if b == 0.0 {
            return if lam == lambda_plus { [1.0, 0.0] } else { [0.0, 1.0] };
        }
        [(a + b * b - lam) / (a * b), 1.0]
    };
    Ok(EigenReport {
        lambda_plus,
        lambda_minus,
        matrix,
        lambda_plus_direct,
        lambda_minus_direct,
        eigvec_plus: eigvec(lambda_plus),
        eigvec_minus: eigvec(lambda_minus),
    })
}

/// Per-profile entry of the 16-profile consistency sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub profile: PolicyName,
    pub epsilon: f64,
    pub q_star: QTable,
    pub residual: f64,
    pub is_consistent: bool,
    /// Only defined for deterministic profiles.
    pub is_spe: Option<bool>,
    pub pavlov_exists: bool,
}

/// Solves every deterministic profile at the given parameters.
pub fn profile_sweep(m: &PayoffMatrix, gamma: f64, epsilon: f64) -> Result<Vec<ProfileReport>> {
    let pavlov_exists = prop2_closed_form(m, gamma, epsilon)?.exists;
    PolicyProfile::all_deterministic(epsilon)?
        .into_iter()
        .map(|p| {
            let sol = solve_fixed_point(&p, m, gamma)?;
            let is_spe = if epsilon == 0.0 {
                Some(is_subgame_perfect(&p, m, gamma)?)
            } else {
                None
            };
            Ok(ProfileReport {
                profile: p.name(),
                epsilon,
                q_star: sol.q_star,
                residual: sol.residual,
                is_consistent: sol.is_consistent,
                is_spe,
                pavlov_exists,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TIT_FOR_TAT;

    fn m() -> PayoffMatrix {
        PayoffMatrix::default()
    }

    fn solve(name: PolicyName, eps: f64, gamma: f64) -> BellmanSolution {
        solve_fixed_point(&PolicyProfile::named(name, eps).unwrap(), &m(), gamma).unwrap()
    }

    #[test]
    fn always_defect_values() {
        let sol = solve(PolicyName::AlwaysDefect, 0.0, 0.6);
        assert!(sol.is_consistent);
        for s in State::ALL {
            assert!((sol.q_star.get(s, Action::D) - 5.0).abs() < 1e-12);
            assert!((sol.q_star.get(s, Action::C) - 4.8).abs() < 1e-12);
        }
    }

    #[test]
    fn pavlov_values() {
        let sol = solve(PolicyName::Pavlov, 0.0, 0.6);
        assert!(sol.is_consistent);
        let q = sol.q_star;
        let close = |a: f64, b: f64| (a - b).abs() < 1e-10;
        assert!(close(q.get(State::CC, Action::C), 9.0) && close(q.get(State::DD, Action::C), 9.0));
        assert!(close(q.get(State::CC, Action::D), 8.24) && close(q.get(State::DD, Action::D), 8.24));
        assert!(close(q.get(State::CD, Action::D), 7.4) && close(q.get(State::DC, Action::D), 7.4));
        assert!(close(q.get(State::CD, Action::C), 6.24) && close(q.get(State::DC, Action::C), 6.24));
    }

    #[test]
    fn table_two_consistency_column() {
        assert!(solve(PolicyName::GrimTrigger, 0.0, 0.6).is_consistent);
        assert!(!solve(PolicyName::LoseShift, 0.0, 0.6).is_consistent);
        let tft = PolicyProfile::new(TIT_FOR_TAT, 0.0).unwrap();
        assert!(!solve_fixed_point(&tft, &m(), 0.6).unwrap().is_consistent);
    }

    #[test]
    fn residuals_tiny_and_consistent_set() {
        for eps in [0.0, 0.01, 0.05] {
            for r in profile_sweep(&m(), 0.6, eps).unwrap() {
                assert!(r.residual <= 1e-12, "{:?}", r);
                if eps == 0.0 {
                    let expected = matches!(
                        r.profile,
                        PolicyName::AlwaysDefect | PolicyName::GrimTrigger | PolicyName::Pavlov
                    );
                    assert_eq!(r.is_consistent, expected, "{}", r.profile);
                }
            }
        }
    }

    #[test]
    fn prop1_matches_solver() {
        for gamma in [0.1, 0.3, 0.6, 0.9] {
            for eps in [0.0, 0.05, 0.1, 0.3] {
                let cf = prop1_closed_form(&m(), gamma, eps).unwrap();
                let sol = solve(PolicyName::AlwaysDefect, eps, gamma);
                assert!(cf.max_abs_diff(&sol.q_star) < 1e-12);
            }
        }
        let q = prop1_closed_form(&m(), 0.6, 0.1).unwrap();
        assert!((q.get(State::DD, Action::D) - 5.45).abs() < 1e-12);
    }

    #[test]
    fn prop2_matches_solver() {
        for gamma in [0.2, 0.6, 0.9] {
            for eps in [0.0, 0.05, 0.2, 0.3] {
                let cf = prop2_closed_form(&m(), gamma, eps).unwrap();
                let sol = solve(PolicyName::Pavlov, eps, gamma);
                assert!(cf.table.max_abs_diff(&sol.q_star) < 1e-12, "gamma {gamma} eps {eps}");
                assert_eq!(cf.exists, sol.is_consistent, "gamma {gamma} eps {eps}");
            }
        }
    }

    #[test]
    fn prop2_examples() {
        let cf = prop2_closed_form(&m(), 0.6, 0.0).unwrap();
        assert!(cf.exists);
        assert!((cf.q_cc_c - 9.0).abs() < 1e-12 && (cf.q_cd_d - 7.4).abs() < 1e-12);
        assert!(!prop2_closed_form(&m(), 0.1, 0.0).unwrap().exists);
        // the printed DD gap differs from direct substitution by exactly 2
        let cf = prop2_closed_form(&m(), 0.6, 0.1).unwrap();
        assert!((cf.gap_dd_printed.unwrap() - cf.gap_dd - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pavlov_epsilon_threshold_brackets_existence() {
        let thr = pavlov_epsilon_threshold(&m(), 0.6).unwrap().unwrap();
        assert!(prop2_closed_form(&m(), 0.6, thr - 1e-6).unwrap().exists);
        assert!(!prop2_closed_form(&m(), 0.6, thr + 1e-6).unwrap().exists);
        assert_eq!(pavlov_epsilon_threshold(&m(), 0.1).unwrap(), None);
    }

    #[test]
    fn existence_monotone_in_gamma() {
        let thr = pavlov_gamma_threshold(&m());
        assert!((thr - 0.125).abs() < 1e-12);
        let mut prev = false;
        for i in 1..1000 {
            let gamma = i as f64 * 1e-3;
            let e = prop2_closed_form(&m(), gamma, 0.0).unwrap().exists;
            assert!(e || !prev, "existence lost at gamma {gamma}");
            if e && !prev {
                assert!((gamma - thr).abs() <= 1e-3 + 1e-12);
            }
            prev = e;
        }
    }

    #[test]
    fn spe_examples() {
        let alld = PolicyProfile::named(PolicyName::AlwaysDefect, 0.0).unwrap();
        let pavlov = PolicyProfile::named(PolicyName::Pavlov, 0.0).unwrap();
        assert!(is_subgame_perfect(&alld, &m(), 0.3).unwrap());
        assert!(is_subgame_perfect(&pavlov, &m(), 0.6).unwrap());
        assert!(!is_subgame_perfect(&pavlov, &m(), 0.1).unwrap());
        assert!(is_subgame_perfect(&pavlov, &m(), 0.125).unwrap());
        let noisy = PolicyProfile::named(PolicyName::Pavlov, 0.1).unwrap();
        assert!(matches!(is_subgame_perfect(&noisy, &m(), 0.6), Err(Error::Precondition(_))));
    }

    #[test]
    fn joint_return_examples() {
        let pav = PolicyProfile::named(PolicyName::Pavlov, 0.0).unwrap();
        let alld = PolicyProfile::named(PolicyName::AlwaysDefect, 0.0).unwrap();
        let (j1, j2) = joint_return(&pav, &pav, &m(), 0.6, point_mass(State::CC)).unwrap();
        assert!((j1 - 9.0).abs() < 1e-12 && (j2 - 9.0).abs() < 1e-12);
        let (j1, j2) = joint_return(&alld, &alld, &m(), 0.6, point_mass(State::CC)).unwrap();
        assert!((j1 - 5.0).abs() < 1e-12 && (j2 - 5.0).abs() < 1e-12);
        let (j1, _) = joint_return(&pav, &alld, &m(), 0.6, point_mass(State::DD)).unwrap();
        assert!((j1 - (1.8 + 0.6 * 2.0) / (1.0 - 0.36)).abs() < 1e-12);
        assert!(joint_return(&pav, &pav, &m(), 0.6, [0.5, 0.4, 0.0, 0.0]).is_err());
    }

    #[test]
    fn joint_return_agrees_with_solver_values() {
        // at ε = 0, Q*(s, greedy(s)) is the return of the profile against itself from s
        for name in [PolicyName::Pavlov, PolicyName::AlwaysDefect, PolicyName::GrimTrigger] {
            for eps in [0.0] {
                let p = PolicyProfile::named(name, eps).unwrap();
                let sol = solve_fixed_point(&p, &m(), 0.6).unwrap();
                for s in State::ALL {
                    let (j1, _) = joint_return(&p, &p, &m(), 0.6, point_mass(s)).unwrap();
                    let v = (1.0 - eps) * sol.q_star.get(s, p.action(s)) + eps * sol.q_star.get(s, p.action(s).other());
                    assert!((j1 - v).abs() < 1e-10, "{name} eps {eps} {s}");
                }
            }
        }
    }

    #[test]
    fn eigen_examples() {
        let e = phase2_eigen(0.1, 0.6).unwrap();
        assert!((e.lambda_plus - 0.95875).abs() < 1e-4);
        assert!((e.lambda_minus - 0.84485).abs() < 1e-4);
        let z = phase2_eigen(0.0, 0.6).unwrap();
        assert_eq!((z.lambda_plus, z.lambda_minus), (1.0, 1.0));
        for i in 1..=20 {
            for j in 1..=20 {
                let (alpha, gamma) = (i as f64 / 21.0, j as f64 / 21.0);
                let e = phase2_eigen(alpha, gamma).unwrap();
                assert!(0.0 < e.lambda_minus && e.lambda_minus < e.lambda_plus && e.lambda_plus < 1.0);
                assert!((e.lambda_plus - e.lambda_plus_direct).abs() < 1e-12);
                assert!((e.lambda_minus - e.lambda_minus_direct).abs() < 1e-12);
                for (lam, w) in [(e.lambda_plus, e.eigvec_plus), (e.lambda_minus, e.eigvec_minus)] {
                    let mw0 = e.matrix[0][0] * w[0] + e.matrix[0][1] * w[1];
                    let mw1 = e.matrix[1][0] * w[0] + e.matrix[1][1] * w[1];
                    assert!((mw0 - lam * w[0]).abs() < 1e-10 && (mw1 - lam * w[1]).abs() < 1e-10);
                }
            }
        }
    }
}
