use super::{Array, Real, Tape, Var};
use crate::error::{OdmError, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Largest acceptable relative error.
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so that coordinates
    /// whose true gradient is ~0 are compared in absolute terms.
    pub floor: f64,
    /// Coordinates to probe; `None` checks all of them.
    pub coords: Option<Vec<usize>>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            tol: 1e-5,
            floor: 1e-6,
            coords: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradFailure {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: Option<usize>,
    pub failures: Vec<GradFailure>,
    pub passed: bool,
}

/// Compares the tape gradient of the scalar `f(x)` against central
/// differences over every coordinate of `x`.
pub fn grad_check<T: Real, F>(f: F, x: &Array<T>, h: f64, tol: f64) -> Result<GradReport>
where
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    grad_check_with(
        f,
        x,
        &GradCheckOptions {
            h,
            tol,
            ..GradCheckOptions::default()
        },
    )
}

fn eval<T: Real, F>(f: &F, x: Array<T>) -> Result<f64>
where
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let out = f(&mut tape, v)?;
    Ok(tape.value(out).item()?.to_f64())
}

pub fn grad_check_with<T: Real, F>(f: F, x: &Array<T>, opts: &GradCheckOptions) -> Result<GradReport>
where
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&mut tape, xv)?;
    let grads = tape.backward(out)?;
    let analytic = grads
        .of(xv)
        .ok_or_else(|| OdmError::Contract("input leaf received no gradient".into()))?
        .clone();

    let all: Vec<usize>;
    let coords: &[usize] = match &opts.coords {
        Some(c) => c,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let mut report = GradReport {
        checked: 0,
        max_rel_err: 0.0,
        worst_index: None,
        failures: Vec::new(),
        passed: true,
    };
    for &i in coords {
        if i >= x.len() {
            return Err(OdmError::Domain(format!("grad_check coordinate {i} out of range")));
        }
        let base = x.data()[i].to_f64();
        let mut plus = x.clone();
        plus.data_mut()[i] = T::from_f64(base + opts.h);
        let mut minus = x.clone();
        minus.data_mut()[i] = T::from_f64(base - opts.h);
        // Use the step actually representable in T.
        let span = plus.data()[i].to_f64() - minus.data()[i].to_f64();
        let numeric = (eval(&f, plus)? - eval(&f, minus)?) / span;
        let g = analytic.data()[i].to_f64();
        let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(opts.floor);
        report.checked += 1;
        if rel > report.max_rel_err || report.worst_index.is_none() {
            report.max_rel_err = report.max_rel_err.max(rel);
            report.worst_index = Some(i);
        }
        if !(rel < opts.tol) {
            report.failures.push(GradFailure {
                index: i,
                analytic: g,
                numeric,
                rel_err: rel,
            });
        }
    }
    report.passed = report.failures.is_empty();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact() {
        let x = Array::<f64>::from_f64(&[4], &[0.3, -1.2, 2.0, 0.7]).unwrap();
        let w = Array::<f64>::from_f64(&[4], &[1.5, -0.5, 0.25, 3.0]).unwrap();
        let report = grad_check(
            |t, x| {
                let w = t.constant(w.clone());
                let y = t.mul(x, w)?;
                Ok(t.sum(y))
            },
            &x,
            1e-4,
            1e-9,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.max_rel_err < 1e-9);
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        // relu at a kink: the one-sided tape derivative disagrees with the
        // symmetric difference.
        let x = Array::<f64>::from_f64(&[1], &[0.0]).unwrap();
        let report = grad_check(|t, x| Ok(t.relu(x)), &x, 1e-3, 1e-3).unwrap();
        assert!(!report.passed);
        assert_eq!(report.failures[0].index, 0);
    }
}
