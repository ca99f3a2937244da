//! Classic mean-field trajectories `μ(t+1) = μ(t)·K(μ(t))`.

use crate::error::Result;
use crate::model::{step, Measure, OccupancyVector, PopulationModel};

/// `μ(0..=t_max)`, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<OccupancyVector>,
}

impl Trajectory {
    pub fn points(&self) -> &[OccupancyVector] {
        &self.points
    }

    pub fn at(&self, t: usize) -> &OccupancyVector {
        &self.points[t]
    }

    pub fn t_max(&self) -> usize {
        self.points.len() - 1
    }

    /// `h(μ(t))` for every `t`.
    pub fn measure_series(&self, h: &Measure) -> Vec<f64> {
        self.points.iter().map(|m| h.value(m.as_slice())).collect()
    }
}

/// Iterates the mean-field map for `t_max` steps. No early stopping.
pub fn classic_trajectory<M: PopulationModel + ?Sized>(
    model: &M,
    mu0: &OccupancyVector,
    t_max: usize,
) -> Result<Trajectory> {
    let mut points = Vec::with_capacity(t_max + 1);
    points.push(mu0.clone());
    for t in 0..t_max {
        let next = step(model, &points[t])?;
        points.push(next);
    }
    Ok(Trajectory { points })
}

/// Free-function form of [`Trajectory::measure_series`].
pub fn measure_series(traj: &Trajectory, h: &Measure) -> Vec<f64> {
    traj.measure_series(h)
}
