use std::time::Duration;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptanceCounter {
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptanceCounter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Chain draws. `theta` rows are on the natural scale, one per iteration;
/// `x_o` rows are flattened `n × d` states at the iterations listed in
/// `x_o_iterations`.
#[derive(Debug, Clone, Default)]
pub struct ChainOutput<T> {
    pub theta: Vec<Vec<T>>,
    pub log_lik: Vec<T>,
    pub x_o: Vec<Vec<T>>,
    pub x_o_iterations: Vec<usize>,
    pub theta_acceptance: AcceptanceCounter,
    pub state_acceptance: AcceptanceCounter,
    pub endpoint_acceptance: AcceptanceCounter,
    pub elapsed: Duration,
    /// Final proposal scale multipliers when adaptation was on: `θ` first,
    /// then one per time for the state updates.
    pub adapted_scales: Vec<f64>,
}

impl<T: Copy> ChainOutput<T> {
    pub fn iterations(&self) -> usize {
        self.theta.len()
    }

    /// Trace of parameter component `j`.
    pub fn theta_trace(&self, j: usize) -> Vec<T> {
        self.theta.iter().map(|r| r[j]).collect()
    }

    /// Trace of flattened latent component `k` over stored iterations.
    pub fn x_o_trace(&self, k: usize) -> Vec<T> {
        self.x_o.iter().map(|r| r[k]).collect()
    }
}
