use std::collections::VecDeque;

/// UCB1 over sources, scored on episode improvements normalized to [0, 1]
/// against a trailing window of recent raw improvements. Normalizing keeps
/// the exploration bonus comparable to the reward scale no matter what units
/// the learner's metric uses.
#[derive(Debug, Clone)]
pub struct UcbStats {
    pulls: Vec<usize>,
    means: Vec<f64>,
    total: usize,
    window: VecDeque<f64>,
    window_cap: usize,
}

impl UcbStats {
    pub fn new(n_arms: usize, window_cap: usize) -> Self {
        UcbStats {
            pulls: vec![0; n_arms],
            means: vec![0.0; n_arms],
            total: 0,
            window: VecDeque::new(),
            window_cap: window_cap.max(1),
        }
    }

    pub fn n_arms(&self) -> usize {
        self.pulls.len()
    }

    pub fn pulls(&self) -> &[usize] {
        &self.pulls
    }

    /// Arm to play next: first any unpulled arm (lowest index), then the
    /// highest upper confidence bound, ties toward the lowest index.
    pub fn select(&self) -> usize {
        if let Some(i) = self.pulls.iter().position(|&p| p == 0) {
            return i;
        }
        let t = self.total as f64;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..self.pulls.len() {
            let bonus = (2.0 * t.ln() / self.pulls[i] as f64).sqrt();
            let score = self.means[i] + bonus;
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }

    /// Record a raw improvement for `arm`. The value joins the trailing
    /// window first, so its own magnitude participates in the min-max
    /// normalization; a degenerate window maps to 0.5.
    pub fn record(&mut self, arm: usize, raw: f64) {
        self.window.push_back(raw);
        if self.window.len() > self.window_cap {
            self.window.pop_front();
        }
        let lo = self.window.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self
            .window
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let normalized = if span > 0.0 { (raw - lo) / span } else { 0.5 };
        self.pulls[arm] += 1;
        self.total += 1;
        self.means[arm] += (normalized - self.means[arm]) / self.pulls[arm] as f64;
    }

    /// Pull counts normalized to a distribution; uniform before any pull.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.pulls.len();
        if n == 0 {
            return Vec::new();
        }
        if self.total == 0 {
            return vec![1.0 / n as f64; n];
        }
        self.pulls
            .iter()
            .map(|&p| p as f64 / self.total as f64)
            .collect()
    }
}
