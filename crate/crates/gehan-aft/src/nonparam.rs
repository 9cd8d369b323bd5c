//! Nonparametric estimators for right-censored samples: Kaplan-Meier survival
//! curves, Nelson-Aalen cumulative hazards, and the right-continuous step
//! functions they produce.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A right-continuous step function with strictly increasing knots.
///
/// `eval(t)` returns `left_value` for `t` below the first knot, the value at
/// the largest knot `<= t` otherwise, and stays constant beyond the last knot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    left_value: f64,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, left_value: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::LengthMismatch(format!(
                "{} knots vs {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.is_empty() {
            return Err(Error::EmptyInput("step function needs at least one knot"));
        }
        if !left_value.is_finite() {
            return Err(Error::NonFinite("step function left value"));
        }
        for w in knots.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidArgument(format!(
                    "step function knots must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("step function knots or values"));
        }
        Ok(StepFunction {
            knots,
            values,
            left_value,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|k| *k <= t);
        if idx == 0 {
            self.left_value
        } else {
            self.values[idx - 1]
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn left_value(&self) -> f64 {
        self.left_value
    }

    /// Writes the function as two-column CSV with header `knot,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "knot,value")?;
        for (k, v) in self.knots.iter().zip(&self.values) {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }
}

/// Sorted tally of one "risk set walk": for each distinct value that carries
/// at least one event, the number of events `d` there and the size `n` of the
/// at-risk set `{i : value_i >= knot}` (ties included).
fn event_knots(values: &[f64], events: &[bool]) -> Result<Vec<(f64, usize, usize)>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no observations"));
    }
    if values.len() != events.len() {
        return Err(Error::LengthMismatch(format!(
            "{} values vs {} event flags",
            values.len(),
            events.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observation values"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let n = values.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let v = values[order[start]];
        let mut end = start;
        let mut d = 0;
        while end < n && values[order[end]] == v {
            if events[order[end]] {
                d += 1;
            }
            end += 1;
        }
        if d > 0 {
            out.push((v, d, n - start));
        }
        start = end;
    }
    Ok(out)
}

/// Kaplan-Meier estimate of the survival function `S(t) = P(T > t)` from
/// right-censored observations. Knots sit at distinct event times; the curve
/// is 1 before the first event.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    for (i, &t) in times.iter().enumerate() {
        if !(t > 0.0) {
            return Err(Error::NonpositiveTime { row: i, value: t });
        }
    }
    let knots = event_knots(times, events)?;
    if knots.is_empty() {
        return Err(Error::EmptyInput("no events observed"));
    }
    let mut s = 1.0;
    let mut ks = Vec::with_capacity(knots.len());
    let mut vs = Vec::with_capacity(knots.len());
    for (t, d, at_risk) in knots {
        s *= 1.0 - d as f64 / at_risk as f64;
        ks.push(t);
        vs.push(s);
    }
    StepFunction::new(ks, vs, 1.0)
}

/// Kaplan-Meier estimate of the censoring distribution `G(t) = P(C > t)`,
/// obtained by flipping the event indicators.
pub fn censoring_kaplan_meier(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    let flipped: Vec<bool> = events.iter().map(|e| !e).collect();
    kaplan_meier(times, &flipped)
}

/// Nelson-Aalen estimate of the cumulative hazard. Values may be any finite
/// reals (this is applied to residuals on the log scale as well as to times);
/// the at-risk set uses the `>=` convention so tied observations count.
pub fn nelson_aalen(values: &[f64], events: &[bool]) -> Result<StepFunction> {
    let knots = event_knots(values, events)?;
    if knots.is_empty() {
        return Err(Error::EmptyInput("no events observed"));
    }
    let mut h = 0.0;
    let mut ks = Vec::with_capacity(knots.len());
    let mut vs = Vec::with_capacity(knots.len());
    for (t, d, at_risk) in knots {
        h += d as f64 / at_risk as f64;
        ks.push(t);
        vs.push(h);
    }
    StepFunction::new(ks, vs, 0.0)
}
