//! Rank-one enforcement by an eigenvalue penalty.
//!
//! `Tr(W) − λ_max(W)` is zero exactly on rank-one `W` and concave-minus-
//! convex; the convex `λ_max` is replaced by its supporting hyperplane at the
//! previous iterate, so the penalized objective stays affine.

use crate::conic::{AffineExpr, SolveSettings};
use crate::formulation::{self, BuildOptions, Built, SCAAnchors, Scheme, Vars};
use crate::linalg::{self, CMat, CVec};
use crate::physics::PhysicsError;
use crate::scenario::{ChannelSet, ScenarioConfig};
use crate::sca::{run_pipeline, Algorithm, RunOptions, SolveReport};

/// Largest penalty factor; beyond it the objective is dominated by the
/// penalty and the interior-point iterations lose accuracy.
pub const ELL_MAX: f64 = (1u64 << 30) as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState {
    pub ell: f64,
    pub w_p_anchor: Vec<CVec>,
    pub w_s_anchor: Vec<CVec>,
}

impl PenaltyState {
    /// Leading eigenvectors of the given information covariances.
    pub fn from_covariances(ell: f64, w_p: &[CMat], w_s: &[CMat]) -> Self {
        let lead = |w: &CMat| linalg::leading_eigenpair(w).1;
        Self { ell, w_p_anchor: w_p.iter().map(lead).collect(), w_s_anchor: w_s.iter().map(lead).collect() }
    }

    /// Next factor of the doubling schedule and whether the cap was hit.
    pub fn doubled(ell: f64) -> (f64, bool) {
        let next = 2.0 * ell;
        if next > ELL_MAX {
            (ELL_MAX, true)
        } else {
            (next, false)
        }
    }

    /// `ℓ Σ [Tr(W) − y†W y]`; the constant parts of the minorant cancel.
    pub(crate) fn penalty_expr(&self, vars: &Vars) -> AffineExpr {
        let mut e = AffineExpr::default();
        let pairs = vars.w_p.iter().zip(&self.w_p_anchor).chain(vars.w_s.iter().zip(&self.w_s_anchor));
        for (&x, y) in pairs {
            let n = y.len();
            let c = linalg::identity(n) - linalg::outer(y);
            e.add_trace(x, &linalg::real_scale(&c, self.ell));
        }
        e
    }

    /// Direct evaluation of the penalty at covariance values.
    pub fn penalty_value(&self, w_p: &[CMat], w_s: &[CMat]) -> f64 {
        let pairs = w_p.iter().zip(&self.w_p_anchor).chain(w_s.iter().zip(&self.w_s_anchor));
        pairs.map(|(w, y)| linalg::trace_re(w) - linalg::quad_form(w, y)).sum::<f64>() * self.ell
    }
}

/// The affine minorant `X ↦ λ_max(X₀) + y†(X − X₀)y` of `λ_max` at `X₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct Minorant {
    pub lambda: f64,
    pub y: CVec,
    pub anchor: CMat,
}

impl Minorant {
    pub fn eval(&self, x: &CMat) -> f64 {
        self.lambda + linalg::quad_form(&(x - &self.anchor), &self.y)
    }
}

pub fn lemma1_minorant(x_prev: &CMat) -> Minorant {
    let (lambda, y) = linalg::leading_eigenpair(x_prev);
    Minorant { lambda, y, anchor: x_prev.clone() }
}

/// The penalized subproblem for NOMA with cooperative jamming.
pub fn build_p4(
    ch: &ChannelSet,
    cfg: &ScenarioConfig,
    anchors: &SCAAnchors,
    pstate: &PenaltyState,
) -> Result<Built, PhysicsError> {
    let opts = BuildOptions { penalty: Some(pstate), ..BuildOptions::new(Scheme::Noma) };
    formulation::build(ch, cfg, std::slice::from_ref(anchors), opts)
}

pub fn run_algorithm2(ch: &ChannelSet, cfg: &ScenarioConfig) -> SolveReport {
    run_algorithm2_with(ch, cfg, &SolveSettings::default())
}

pub fn run_algorithm2_with(ch: &ChannelSet, cfg: &ScenarioConfig, settings: &SolveSettings) -> SolveReport {
    let opts = RunOptions { settings: settings.clone(), ..RunOptions::new(Scheme::Noma, Algorithm::Penalty) };
    run_pipeline(ch, cfg, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let a = CMat::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &a * a.adjoint()
    }

    #[test]
    fn minorant_is_tangent_at_the_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_psd(&mut rng, 4);
        let m = lemma1_minorant(&x);
        assert!((m.eval(&x) - linalg::lambda_max(&x)).abs() < 1e-12);
    }

    #[test]
    fn minorant_on_diagonal_example() {
        let d = |a: f64, b: f64| CMat::from_diagonal(&CVec::from_vec(vec![C64::new(a, 0.0), C64::new(b, 0.0)]));
        let m = lemma1_minorant(&d(1.0, 0.0));
        assert!((m.eval(&d(2.0, 0.0)) - 2.0).abs() < 1e-14);
        assert!((linalg::lambda_max(&d(2.0, 0.0)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn minorant_never_exceeds_lambda_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(1..6);
            let prev = random_psd(&mut rng, n);
            let x = random_psd(&mut rng, n);
            assert!(lemma1_minorant(&prev).eval(&x) <= linalg::lambda_max(&x) + 1e-10);
        }
    }

    #[test]
    fn doubling_is_capped() {
        assert_eq!(PenaltyState::doubled(1.0), (2.0, false));
        assert_eq!(PenaltyState::doubled(ELL_MAX), (ELL_MAX, true));
    }
}
