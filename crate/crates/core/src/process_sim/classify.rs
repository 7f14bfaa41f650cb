use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::LevyParams;

/// `∫_{-1}^{1} |x| ν(dx)`, which may diverge for infinite-activity measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumpIntegral {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Stickiness {
    Sticky,
    NotSticky,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct StickinessVerdict {
    pub verdict: Stickiness,
    pub reason: String,
}

fn verdict(v: Stickiness, reason: &str) -> StickinessVerdict {
    StickinessVerdict { verdict: v, reason: reason.to_string() }
}

/// Case table for Lévy stickiness with `h = c − ∫_{-1}^{1}|x|ν(dx)`.
///
/// `left_mass` / `right_mass` say whether `ν` charges `(−ε, 0)` / `(0, ε)` for
/// every `ε > 0`. `NotSticky` is returned only for a nonzero drift without any
/// jumps in `(−1, 1)`; every case the table does not decide is `Undetermined`.
pub fn classify_levy_stickiness(
    params: &LevyParams,
    small_jump_integral: SmallJumpIntegral,
    left_mass: bool,
    right_mass: bool,
) -> StickinessVerdict {
    if params.sigma != 0.0 {
        return verdict(Stickiness::Sticky, "gaussian_component");
    }
    let integral = match small_jump_integral {
        SmallJumpIntegral::Infinite => {
            return verdict(Stickiness::Sticky, "infinite_small_jump_variation")
        }
        SmallJumpIntegral::Finite(v) => v,
    };
    let h = params.drift - integral;
    if h == 0.0 {
        verdict(Stickiness::Sticky, "zero_effective_drift")
    } else if h > 0.0 && left_mass {
        verdict(Stickiness::Sticky, "positive_drift_opposed_by_small_negative_jumps")
    } else if h < 0.0 && right_mass {
        verdict(Stickiness::Sticky, "negative_drift_opposed_by_small_positive_jumps")
    } else if integral == 0.0 && !left_mass && !right_mass {
        verdict(Stickiness::NotSticky, "pure_drift")
    } else {
        verdict(Stickiness::Undetermined, "outside_classifier_scope")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process_sim::levy::JumpAtom;

    fn p(drift: f64, sigma: f64) -> LevyParams {
        LevyParams::new(drift, sigma, vec![]).unwrap()
    }

    #[test]
    fn case_table() {
        use SmallJumpIntegral::*;
        use Stickiness::*;
        let cases = [
            (p(0.3, 1.0), Finite(0.0), false, false, Sticky),
            (p(0.3, 0.0), Infinite, false, false, Sticky),
            (p(0.5, 0.0), Finite(0.5), true, true, Sticky),
            (p(1.0, 0.0), Finite(0.5), true, false, Sticky),
            (p(-1.0, 0.0), Finite(0.5), false, true, Sticky),
            (p(1.0, 0.0), Finite(0.5), false, true, Undetermined),
            (p(-1.0, 0.0), Finite(0.5), true, false, Undetermined),
            (p(1.0, 0.0), Finite(0.0), false, false, NotSticky),
        ];
        for (i, (params, int, l, r, want)) in cases.into_iter().enumerate() {
            assert_eq!(classify_levy_stickiness(&params, int, l, r).verdict, want, "case {i}");
        }
    }

    #[test]
    fn uses_params_integral() {
        let params = LevyParams::new(0.2, 0.0, vec![JumpAtom { size: -0.4, rate: 0.5 }]).unwrap();
        let v = classify_levy_stickiness(
            &params,
            SmallJumpIntegral::Finite(params.small_jump_integral()),
            true,
            false,
        );
        assert_eq!(v.verdict, Stickiness::Sticky);
        assert_eq!(v.reason, "zero_effective_drift");
    }
}
