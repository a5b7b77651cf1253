//! True-objective formulas of the surrogate environments.

/// Position-error scale of [`precision_accuracy`], in metres.
pub const PRECISION_SIGMA_M: f64 = 0.05;

pub fn true_atari(task_complete: f64, steps: f64, max_steps: f64) -> f64 {
    0.7 * task_complete + 0.3 * (1.0 - steps / max_steps)
}

pub fn true_mujoco(distance: f64, energy: f64) -> f64 {
    0.6 * distance - 0.4 * energy
}

pub fn user_sat(relevance: f64, diversity: f64, novelty: f64) -> f64 {
    0.6 * relevance + 0.3 * diversity + 0.1 * novelty
}

pub fn gameplay_quality(strategy_diversity: f64, fair_play: f64, engagement: f64) -> f64 {
    0.4 * strategy_diversity + 0.3 * fair_play + 0.3 * engagement
}

pub fn precision_accuracy(position_error_m: f64, energy: f64, max_energy: f64) -> f64 {
    let s2 = PRECISION_SIGMA_M * PRECISION_SIGMA_M;
    (-position_error_m * position_error_m / (2.0 * s2)).exp() * (1.0 - energy / max_energy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        assert_eq!(true_atari(1.0, 0.0, 400.0), 1.0);
        assert_eq!(true_atari(1.0, 400.0, 400.0), 0.7);
        assert!((true_atari(0.0, 200.0, 400.0) - 0.15).abs() < 1e-15);
        assert_eq!(true_mujoco(0.0, 0.0), 0.0);
        assert!((true_mujoco(10.0, 5.0) - 4.0).abs() < 1e-12);
        assert!((true_mujoco(1.0, 10.0) + 3.4).abs() < 1e-12);
        assert!((user_sat(1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(user_sat(1.0, 0.0, 0.0), 0.6);
        assert!((gameplay_quality(1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(gameplay_quality(0.0, 1.0, 0.0), 0.3);
        assert_eq!(precision_accuracy(0.0, 0.0, 10.0), 1.0);
        assert!((precision_accuracy(0.05, 0.0, 10.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(precision_accuracy(0.0, 10.0, 10.0), 0.0);
    }
}
