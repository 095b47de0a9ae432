//! Generic fixed-step RK4 method of steps for delay systems on `[f64; N]`.
//!
//! The solution is kept on a uniform grid together with the right-hand side
//! at every node, which gives a C¹ cubic Hermite dense output. Delayed
//! lookups older than the last finished node read that dense output; lookups
//! that land before t = 0 read the initial history. Lookups inside the step
//! being taken (delays shorter than `dt`) use the previous interval's cubic
//! extrapolated forward as a predictor, followed by one corrector pass with
//! the current step's own cubic.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

/// Dense-output scheme between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    CubicHermite,
    Linear,
}

/// Read access to a solution at earlier times.
pub trait Past<const N: usize> {
    fn at(&self, t: f64) -> [f64; N];
}

impl<const N: usize, F: Fn(f64) -> [f64; N]> Past<N> for F {
    fn at(&self, t: f64) -> [f64; N] {
        self(t)
    }
}

/// Right-hand side of a retarded functional differential equation.
pub trait DelaySystem<const N: usize> {
    fn derivative<P: Past<N>>(&self, t: f64, current: &[f64; N], past: &P) -> [f64; N];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFailure {
    /// Grid time at which the state left the admissible range.
    pub t: f64,
}

/// Grid values and node derivatives starting at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution<const N: usize> {
    dt: f64,
    values: Vec<[f64; N]>,
    derivatives: Vec<[f64; N]>,
    interpolation: Interpolation,
}

impl<const N: usize> DenseSolution<N> {
    pub fn from_parts(
        dt: f64,
        values: Vec<[f64; N]>,
        derivatives: Vec<[f64; N]>,
        interpolation: Interpolation,
    ) -> Self {
        assert_eq!(values.len(), derivatives.len());
        assert!(!values.is_empty());
        Self {
            dt,
            values,
            derivatives,
            interpolation,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    pub fn values(&self) -> &[[f64; N]] {
        &self.values
    }

    pub fn derivatives(&self) -> &[[f64; N]] {
        &self.derivatives
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Dense output on [0, t_end]; `None` outside.
    pub fn interpolate(&self, t: f64) -> Option<[f64; N]> {
        if !(0.0..=self.t_end()).contains(&t) {
            return None;
        }
        Some(self.interpolate_clamped(t))
    }

    /// Dense output with `t` clamped into [0, t_end]; exact at grid nodes.
    pub(crate) fn interpolate_clamped(&self, t: f64) -> [f64; N] {
        let last = self.values.len() - 1;
        if last == 0 || t <= 0.0 {
            return self.values[0];
        }
        let scaled = t / self.dt;
        let node = scaled.round();
        if node as usize <= last && node * self.dt == t {
            return self.values[node as usize];
        }
        let i = (scaled.floor() as usize).min(last - 1);
        let theta = (scaled - i as f64).clamp(0.0, 1.0);
        cubic(
            self.interpolation,
            self.dt,
            theta,
            &self.values[i],
            &self.derivatives[i],
            &self.values[i + 1],
            &self.derivatives[i + 1],
        )
    }
}

fn cubic<const N: usize>(
    mode: Interpolation,
    dt: f64,
    theta: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    y1: &[f64; N],
    f1: &[f64; N],
) -> [f64; N] {
    match mode {
        Interpolation::Linear => std::array::from_fn(|k| y0[k] + theta * (y1[k] - y0[k])),
        Interpolation::CubicHermite => {
            let one_minus = 1.0 - theta;
            let h00 = (1.0 + 2.0 * theta) * one_minus * one_minus;
            let h10 = theta * one_minus * one_minus;
            let h01 = theta * theta * (3.0 - 2.0 * theta);
            let h11 = theta * theta * (theta - 1.0);
            std::array::from_fn(|k| {
                h00 * y0[k] + h10 * dt * f0[k] + h01 * y1[k] + h11 * dt * f1[k]
            })
        }
    }
}

/// A cubic over [start, start + dt], evaluated (possibly beyond its right end)
/// for lookups that fall inside the step being taken.
#[derive(Clone, Copy)]
struct Segment<const N: usize> {
    start: f64,
    y0: [f64; N],
    f0: [f64; N],
    y1: [f64; N],
    f1: [f64; N],
}

impl<const N: usize> Segment<N> {
    fn eval(&self, mode: Interpolation, dt: f64, t: f64) -> [f64; N] {
        let theta = (t - self.start) / dt;
        cubic(mode, dt, theta, &self.y0, &self.f0, &self.y1, &self.f1)
    }
}

struct StepView<'a, const N: usize, H> {
    history: &'a H,
    solution: &'a DenseSolution<N>,
    segment: Segment<N>,
    in_step_hit: Cell<bool>,
}

impl<const N: usize, H: Past<N>> Past<N> for StepView<'_, N, H> {
    fn at(&self, t: f64) -> [f64; N] {
        if t <= 0.0 {
            return self.history.at(t);
        }
        let dt = self.solution.dt;
        let t_last = self.solution.t_end();
        if t <= t_last + 1e-9 * dt {
            return self.solution.interpolate_clamped(t);
        }
        self.in_step_hit.set(true);
        self.segment.eval(self.solution.interpolation, dt, t)
    }
}

fn axpy<const N: usize>(y: &[f64; N], a: f64, x: &[f64; N]) -> [f64; N] {
    std::array::from_fn(|k| y[k] + a * x[k])
}

fn admissible<const N: usize>(y: &[f64; N], bound: f64) -> bool {
    y.iter().all(|v| v.is_finite() && v.abs() <= bound)
}

/// Integrates `steps` fixed steps of size `dt` from the history value at 0.
///
/// Fails with the grid time of the first node whose state or derivative is
/// non-finite or exceeds `bound` in absolute value.
pub fn solve<const N: usize, S, H>(
    system: &S,
    history: &H,
    dt: f64,
    steps: usize,
    interpolation: Interpolation,
    bound: f64,
) -> Result<DenseSolution<N>, StepFailure>
where
    S: DelaySystem<N>,
    H: Past<N>,
{
    let y0 = history.at(0.0);
    let mut solution = DenseSolution {
        dt,
        values: Vec::with_capacity(steps + 1),
        derivatives: Vec::with_capacity(steps + 1),
        interpolation,
    };
    solution.values.push(y0);
    solution.derivatives.push([0.0; N]);
    let f0 = {
        // at t = 0 every positive delay reaches into the history
        let flat = Segment {
            start: 0.0,
            y0,
            f0: [0.0; N],
            y1: y0,
            f1: [0.0; N],
        };
        system.derivative(0.0, &y0, &view_with(history, &solution, flat))
    };
    if !admissible(&y0, bound) || !admissible(&f0, f64::MAX) {
        return Err(StepFailure { t: 0.0 });
    }
    solution.derivatives[0] = f0;

    for n in 0..steps {
        let t = n as f64 * dt;
        let t_next = (n + 1) as f64 * dt;
        let y = solution.values[n];
        let f = solution.derivatives[n];

        let predictor = if n == 0 {
            Segment {
                start: 0.0,
                y0: y,
                f0: f,
                y1: axpy(&y, dt, &f),
                f1: f,
            }
        } else {
            Segment {
                start: t - dt,
                y0: solution.values[n - 1],
                f0: solution.derivatives[n - 1],
                y1: y,
                f1: f,
            }
        };
        let (mut y_next, mut k4, hit) = rk4_step(system, history, &solution, predictor, t, &y, &f);
        let mut provisional = k4;
        if hit {
            let view = view_with(history, &solution, predictor);
            let f_pred = system.derivative(t_next, &y_next, &view);
            let corrector = Segment {
                start: t,
                y0: y,
                f0: f,
                y1: y_next,
                f1: f_pred,
            };
            (y_next, k4, _) = rk4_step(system, history, &solution, corrector, t, &y, &f);
            provisional = if k4.iter().all(|v| v.is_finite()) { f_pred } else { k4 };
        }
        if !admissible(&y_next, bound) {
            return Err(StepFailure { t: t_next });
        }

        solution.values.push(y_next);
        solution.derivatives.push(provisional);
        let f_next = {
            let view = view_with(
                history,
                &solution,
                Segment {
                    start: t,
                    y0: y,
                    f0: f,
                    y1: y_next,
                    f1: provisional,
                },
            );
            system.derivative(t_next, &y_next, &view)
        };
        if !admissible(&f_next, f64::MAX) {
            return Err(StepFailure { t: t_next });
        }
        solution.derivatives[n + 1] = f_next;
    }
    Ok(solution)
}

fn view_with<'a, const N: usize, H>(
    history: &'a H,
    solution: &'a DenseSolution<N>,
    segment: Segment<N>,
) -> StepView<'a, N, H> {
    StepView {
        history,
        solution,
        segment,
        in_step_hit: Cell::new(false),
    }
}

/// One classical RK4 step; returns the new state, the last stage slope and
/// whether any stage looked up a time inside the step.
fn rk4_step<const N: usize, S, H>(
    system: &S,
    history: &H,
    solution: &DenseSolution<N>,
    segment: Segment<N>,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
) -> ([f64; N], [f64; N], bool)
where
    S: DelaySystem<N>,
    H: Past<N>,
{
    let dt = solution.dt;
    let view = view_with(history, solution, segment);
    let half = t + 0.5 * dt;
    let k2 = system.derivative(half, &axpy(y, 0.5 * dt, k1), &view);
    let k3 = system.derivative(half, &axpy(y, 0.5 * dt, &k2), &view);
    let k4 = system.derivative(t + dt, &axpy(y, dt, &k3), &view);
    let next = std::array::from_fn(|k| y[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]));
    (next, k4, view.in_step_hit.get())
}
