//! Globally adaptive Gauss–Kronrod (7/15 point) quadrature.
//!
//! Used for cell-average projection of initial data, moment identities of
//! the breakage functions and the continuous flux oracle. The interval with
//! the largest local error estimate is bisected until the summed estimate
//! meets `max(abs_tol, rel_tol * |I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_intervals: 2000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    // Roundoff floor: differences below a few ulps of the segment value carry no information.
    let floor = 50.0 * f64::EPSILON * value.abs();
    (value, error.max(floor) - floor)
}

impl Quadrature {
    pub fn new(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<QuadEstimate> {
        self.integrate_with_breaks(f, &[a, b])
    }

    /// Integrates over `[points[0], points[last]]`, starting with one segment per
    /// consecutive pair. Interior points should mark kinks or discontinuities.
    pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        points: &[f64],
    ) -> Result<QuadEstimate> {
        if points.len() < 2 {
            return Ok(QuadEstimate {
                value: 0.0,
                error: 0.0,
                evaluations: 0,
            });
        }
        let mut heap = BinaryHeap::new();
        let mut evaluations = 0;
        let mut total = 0.0;
        let mut total_err = 0.0;
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(b > a) {
                continue;
            }
            let (value, error) = kronrod15(&mut f, a, b);
            evaluations += 15;
            total += value;
            total_err += error;
            heap.push(Segment { a, b, value, error });
        }

        let target = |total: f64| self.abs_tol.max(self.rel_tol * total.abs());
        while total_err > target(total) {
            if heap.len() >= self.max_intervals {
                return Err(Error::Quadrature {
                    achieved: total_err,
                    requested: target(total),
                });
            }
            let Some(worst) = heap.pop() else { break };
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // Interval cannot be split further in floating point.
                heap.push(Segment {
                    error: 0.0,
                    ..worst
                });
                total_err -= worst.error;
                continue;
            }
            let (lv, le) = kronrod15(&mut f, worst.a, mid);
            let (rv, re) = kronrod15(&mut f, mid, worst.b);
            evaluations += 30;
            total += lv + rv - worst.value;
            total_err += le + re - worst.error;
            heap.push(Segment {
                a: worst.a,
                b: mid,
                value: lv,
                error: le,
            });
            heap.push(Segment {
                a: mid,
                b: worst.b,
                value: rv,
                error: re,
            });
        }

        // Re-sum to shed the drift of the incremental updates.
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if !value.is_finite() {
            return Err(Error::Quadrature {
                achieved: f64::INFINITY,
                requested: target(value),
            });
        }
        Ok(QuadEstimate {
            value,
            error,
            evaluations,
        })
    }
}
