//! Tabulated material properties and measured boundary series.
//!
//! Property tables are ingested from CSV and interpolated with a monotone
//! (Fritsch-Carlson) cubic, so the interpolant never overshoots the tabulated
//! range. A synthetic default table ships so the pipeline runs end-to-end
//! without external data; it is a placeholder, not measured ground truth.

use crate::autodiff::{Scope, ValueScope};
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

/// Monotone cubic interpolant (Fritsch-Carlson slopes). Constant extrapolation
/// outside the knot range keeps evaluations inside the tabulated bounds.
#[derive(Clone, Debug)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::Validation(
                "interpolant needs at least two matching knots".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "interpolation grid must be strictly increasing".into(),
            ));
        }
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut m = vec![0.0; n];
        for i in 1..n - 1 {
            if d[i - 1] * d[i] <= 0.0 {
                m[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
        m[0] = endpoint_slope(h[0], h.get(1).copied().unwrap_or(h[0]), d[0], d.get(1).copied().unwrap_or(d[0]));
        m[n - 1] = endpoint_slope(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            d[n - 2],
            if n >= 3 { d[n - 3] } else { d[n - 2] },
        );
        Ok(Pchip { xs, ys, slopes: m })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn value_bounds(&self) -> (f64, f64) {
        let lo = self.ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn interval_of(&self, x: f64) -> usize {
        // partition_point returns the first knot > x; pieces are [x_i, x_{i+1}]
        let idx = self.xs.partition_point(|&k| k <= x);
        idx.saturating_sub(1).min(self.xs.len() - 2)
    }

    /// Evaluate through a scope so the piecewise cubic is differentiable on a
    /// tape. Outside the grid the curve is the constant end value (zero
    /// derivative), chosen by the numeric value of `x`.
    pub fn eval_scope<S: Scope>(&self, scope: &mut S, x: S::Num) -> S::Num {
        let xv = scope.value_of(x);
        let (lo, hi) = self.range();
        if xv < lo {
            return scope.constant(self.ys[0]);
        }
        if xv > hi {
            return scope.constant(*self.ys.last().unwrap());
        }
        let i = self.interval_of(xv);
        let h = self.xs[i + 1] - self.xs[i];
        let d = (self.ys[i + 1] - self.ys[i]) / h;
        let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
        let c2 = (3.0 * d - 2.0 * m0 - m1) / h;
        let c3 = (m0 + m1 - 2.0 * d) / (h * h);
        // Horner on t = x - x_i: ((c3 t + c2) t + m0) t + y_i
        let t = scope.add_const(x, -self.xs[i]);
        let mut acc = scope.mul_const(t, c3);
        acc = scope.add_const(acc, c2);
        acc = scope.mul(acc, t);
        acc = scope.add_const(acc, m0);
        acc = scope.mul(acc, t);
        scope.add_const(acc, self.ys[i])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_scope(&mut ValueScope, x)
    }

    /// Derivative of the interpolant (zero outside the grid).
    pub fn derivative(&self, x: f64) -> f64 {
        let (lo, hi) = self.range();
        if x < lo || x > hi {
            return 0.0;
        }
        let i = self.interval_of(x);
        let h = self.xs[i + 1] - self.xs[i];
        let d = (self.ys[i + 1] - self.ys[i]) / h;
        let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
        let c2 = (3.0 * d - 2.0 * m0 - m1) / h;
        let c3 = (m0 + m1 - 2.0 * d) / (h * h);
        let t = x - self.xs[i];
        (3.0 * c3 * t + 2.0 * c2) * t + m0
    }
}

fn endpoint_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    // standard pchip one-sided estimate with shape-preserving clipping
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Temperature-dependent thermophysical properties on a common grid.
#[derive(Clone, Debug)]
pub struct PropertyTable {
    pub temps: Vec<f64>,
    pub rho: Vec<f64>,
    pub cp: Vec<f64>,
    pub k: Vec<f64>,
    rho_curve: Pchip,
    cp_curve: Pchip,
    k_curve: Pchip,
}

impl PropertyTable {
    pub fn new(temps: Vec<f64>, rho: Vec<f64>, cp: Vec<f64>, k: Vec<f64>) -> Result<Self> {
        if temps.len() < 4 {
            return Err(Error::Validation(format!(
                "property table needs at least 4 rows, got {}",
                temps.len()
            )));
        }
        if temps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "temperature grid must be strictly increasing without duplicates".into(),
            ));
        }
        for (name, col) in [("rho", &rho), ("cp", &cp), ("k", &k)] {
            if col.len() != temps.len() {
                return Err(Error::Validation(format!("{name} column length mismatch")));
            }
            if col.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Validation(format!("nonpositive {name} value")));
            }
        }
        Ok(PropertyTable {
            rho_curve: Pchip::new(temps.clone(), rho.clone())?,
            cp_curve: Pchip::new(temps.clone(), cp.clone())?,
            k_curve: Pchip::new(temps.clone(), k.clone())?,
            temps,
            rho,
            cp,
            k,
        })
    }

    pub fn rho_at(&self, t_c: f64) -> f64 {
        self.rho_curve.eval(t_c)
    }

    pub fn cp_at(&self, t_c: f64) -> f64 {
        self.cp_curve.eval(t_c)
    }

    pub fn k_at(&self, t_c: f64) -> f64 {
        self.k_curve.eval(t_c)
    }

    pub fn rho_curve(&self) -> &Pchip {
        &self.rho_curve
    }

    pub fn cp_curve(&self) -> &Pchip {
        &self.cp_curve
    }

    pub fn k_curve(&self) -> &Pchip {
        &self.k_curve
    }

    pub fn temp_range(&self) -> (f64, f64) {
        (self.temps[0], *self.temps.last().unwrap())
    }
}

/// Parse a `T,rho,cp,k` CSV (comments starting with '#' allowed).
pub fn load_property_table(path: &Path) -> Result<PropertyTable> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    parse_property_table(&text)
}

pub fn parse_property_table(text: &str) -> Result<PropertyTable> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["T", "rho", "cp", "k"] {
                return Err(Error::Ingestion(format!(
                    "expected header 'T,rho,cp,k', got '{line}'"
                )));
            }
            saw_header = true;
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse()
                    .map_err(|_| Error::Ingestion(format!("line {}: bad number '{tok}'", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(Error::Ingestion(format!(
                "line {}: expected 4 columns, got {}",
                lineno + 1,
                vals.len()
            )));
        }
        rows.push((vals[0], vals[1], vals[2], vals[3]));
    }
    if !saw_header {
        return Err(Error::Ingestion("missing 'T,rho,cp,k' header".into()));
    }
    let temps = rows.iter().map(|r| r.0).collect();
    let rho = rows.iter().map(|r| r.1).collect();
    let cp = rows.iter().map(|r| r.2).collect();
    let k = rows.iter().map(|r| r.3).collect();
    PropertyTable::new(temps, rho, cp, k)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Synthetic placeholder properties: sigmoidal density drop (1100 -> 1000)
/// and conductivity rise (0.5 -> 2.0) across the freezing range, plus a
/// Gaussian apparent-latent-heat peak in cp centered at -3 C. Only a stand-in
/// so runs work without measured data.
///
/// The peak height keeps the internal energy C(u) u monotone in u (the
/// time-stepped equation stays parabolic and the Picard oracle contracts),
/// and the rho/k transitions sit deep in the freeze-concentration range, as
/// for a high-solids extract whose ice fraction builds up far below the
/// initial freezing point.
pub fn synthetic_property_table() -> PropertyTable {
    let t_transition = -23.0;
    let width = 1.2;
    let temps: Vec<f64> = (-30..=25).map(f64::from).collect();
    let rho: Vec<f64> = temps
        .iter()
        .map(|&t| 1000.0 + 100.0 * logistic((t - t_transition) / width))
        .collect();
    let k: Vec<f64> = temps
        .iter()
        .map(|&t| 2.0 - 1.5 * logistic((t - t_transition) / width))
        .collect();
    let cp: Vec<f64> = temps
        .iter()
        .map(|&t| {
            let z = (t + 3.0) / 6.0;
            3200.0 + 2600.0 * (-z * z).exp()
        })
        .collect();
    PropertyTable::new(temps, rho, cp, k).expect("synthetic table is valid")
}

/// Constant-property table over the same grid; reduces the coffee problem to
/// the linear control case.
pub fn constant_property_table(rho: f64, cp: f64, k: f64) -> Result<PropertyTable> {
    let temps: Vec<f64> = (-30..=25).step_by(5).map(f64::from).collect();
    let n = temps.len();
    PropertyTable::new(temps, vec![rho; n], vec![cp; n], vec![k; n])
}

/// Piecewise-linear time series, used for measured boundary temperatures.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::Validation(
                "time series needs at least two matching samples".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("series times must be increasing".into()));
        }
        Ok(TimeSeries { times, values })
    }

    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        self.times[0] <= t0 && *self.times.last().unwrap() >= t1
    }

    /// Linear interpolation, clamped at the ends.
    pub fn at(&self, t: f64) -> f64 {
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= *self.times.last().unwrap() {
            return *self.values.last().unwrap();
        }
        let idx = self.times.partition_point(|&k| k <= t) - 1;
        let frac = (t - self.times[idx]) / (self.times[idx + 1] - self.times[idx]);
        self.values[idx] + frac * (self.values[idx + 1] - self.values[idx])
    }

    /// Rescale time axis by 1/t_scale and values by 1/v_scale.
    pub fn rescaled(&self, t_scale: f64, v_scale: f64) -> TimeSeries {
        TimeSeries {
            times: self.times.iter().map(|&t| t / t_scale).collect(),
            values: self.values.iter().map(|&v| v / v_scale).collect(),
        }
    }
}

/// Measured boundary temperatures at both container faces, physical units
/// (seconds, degrees C).
#[derive(Clone, Debug)]
pub struct BoundarySeries {
    pub left: TimeSeries,
    pub right: TimeSeries,
}

/// Parse a `t,T_left,T_right` CSV.
pub fn load_boundary_series(path: &Path) -> Result<BoundarySeries> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    parse_boundary_series(&text)
}

pub fn parse_boundary_series(text: &str) -> Result<BoundarySeries> {
    let mut times = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["t", "T_left", "T_right"] {
                return Err(Error::Ingestion(format!(
                    "expected header 't,T_left,T_right', got '{line}'"
                )));
            }
            saw_header = true;
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse()
                    .map_err(|_| Error::Ingestion(format!("line {}: bad number '{tok}'", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 3 {
            return Err(Error::Ingestion(format!(
                "line {}: expected 3 columns, got {}",
                lineno + 1,
                vals.len()
            )));
        }
        times.push(vals[0]);
        left.push(vals[1]);
        right.push(vals[2]);
    }
    if !saw_header {
        return Err(Error::Ingestion("missing 't,T_left,T_right' header".into()));
    }
    Ok(BoundarySeries {
        left: TimeSeries::new(times.clone(), left)?,
        right: TimeSeries::new(times, right)?,
    })
}

/// Synthetic default boundary data: exponential approach from the initial
/// 20 C toward the freezer setpoint -25 C, sampled densely over the horizon.
/// The pull-down time constant is 62.5% of the horizon (freezer loading is
/// slow relative to conduction at this slab scale).
pub fn synthetic_boundary_series(t_end_physical: f64) -> BoundarySeries {
    let n = 512;
    let tau = 0.625 * t_end_physical.max(1e-9);
    let times: Vec<f64> = (0..=n)
        .map(|i| i as f64 / n as f64 * t_end_physical * 1.001)
        .collect();
    let values: Vec<f64> = times
        .iter()
        .map(|&t| -25.0 + 45.0 * (-t / tau).exp())
        .collect();
    BoundarySeries {
        left: TimeSeries::new(times.clone(), values.clone()).expect("synthetic series is valid"),
        right: TimeSeries::new(times, values).expect("synthetic series is valid"),
    }
}
