/// Per-time-step summary of a measure over independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub mean: Vec<f64>,
    /// Sample standard deviation (`runs − 1` denominator); zero for a
    /// single run.
    pub std: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
}

impl SimStats {
    /// Aggregates per-run series, merged in run order. All series must
    /// have the same length.
    pub fn from_runs(series: &[Vec<f64>], seed: u64) -> Self {
        let runs = series.len();
        assert!(runs > 0, "at least one run is required");
        let len = series[0].len();
        let mut mean = vec![0.0; len];
        let mut std = vec![0.0; len];
        for t in 0..len {
            let mut sum = 0.0;
            for s in series {
                sum += s[t];
            }
            let mu = sum / runs as f64;
            let mut ss = 0.0;
            for s in series {
                let d = s[t] - mu;
                ss += d * d;
            }
            mean[t] = mu;
            std[t] = if runs > 1 {
                (ss / (runs - 1) as f64).sqrt()
            } else {
                0.0
            };
        }
        SimStats {
            mean,
            std,
            runs,
            seed,
        }
    }

    /// Standard error of the mean at step `t`.
    pub fn std_error(&self, t: usize) -> f64 {
        self.std[t] / (self.runs as f64).sqrt()
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}
