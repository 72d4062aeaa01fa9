use std::fmt::Display;

use crate::numerics::params::ParamStore;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::NumericsError;
use crate::scalar::Scalar;

/// Worst finite-difference disagreement for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index of the element with the largest relative error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&GradCheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

const REL_FLOOR: f64 = 1e-8;

/// Compares tape gradients of `loss_fn` against central differences
/// `(f(w + eps) - f(w - eps)) / (2 eps)` for every trainable entry of
/// `store`. The relative error of an element is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<T, F, E>(loss_fn: F, store: &ParamStore<T>, eps: f64) -> Result<GradCheckReport, NumericsError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &ParamStore<T>) -> Result<Var, E>,
    E: Display,
{
    if eps <= 0.0 || !eps.is_finite() {
        return Err(NumericsError::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    let eval = |s: &ParamStore<T>, what: &str| -> Result<f64, NumericsError> {
        let mut tape = Tape::new();
        let out = loss_fn(&mut tape, s).map_err(|e| NumericsError::Closure(format!("at {what}: {e}")))?;
        let v = tape.value(out).item().as_f64();
        if !v.is_finite() {
            return Err(NumericsError::NonFinite(format!("loss is {v} at {what}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let out = loss_fn(&mut tape, store).map_err(|e| NumericsError::Closure(e.to_string()))?;
    let base = tape.value(out).item().as_f64();
    if !base.is_finite() {
        return Err(NumericsError::NonFinite(format!("loss is {base} at the evaluation point")));
    }
    let grads = tape.backward(out)?;
    let analytic = tape.param_grads(&grads);

    let mut work = store.clone();
    let mut report = GradCheckReport::default();
    for name in store.trainable_names() {
        let zero;
        let a_grad = match analytic.iter().find(|(n, _)| n == name) {
            Some((_, g)) => g,
            None => {
                zero = crate::numerics::Tensor::zeros(store.get(name)?.shape());
                &zero
            }
        };
        let mut entry = GradCheckEntry {
            name: name.to_string(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..a_grad.len() {
            let orig = work.get(name)?.data()[k];
            let step = T::lit(eps);
            work.get_mut(name)?.data_mut()[k] = orig + step;
            let plus = eval(&work, &format!("{name}[{k}] + eps"))?;
            work.get_mut(name)?.data_mut()[k] = orig - step;
            let minus = eval(&work, &format!("{name}[{k}] - eps"))?;
            work.get_mut(name)?.data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = a_grad.data()[k].as_f64();
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            entry.max_abs_error = entry.max_abs_error.max(abs);
            if k == 0 || rel > entry.max_rel_error {
                entry.max_rel_error = rel;
                entry.worst_index = k;
                entry.analytic = a;
                entry.numeric = numeric;
            }
        }
        report.entries.push(entry);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn quadratic() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(3.0f64), true);
        let r = grad_check(
            |tape, s| -> Result<Var, NumericsError> {
                let w = tape.param(s, "w")?;
                tape.mul(w, w)
            },
            &s,
            1e-4,
        )
        .unwrap();
        let e = r.get("w").unwrap();
        assert!((e.analytic - 6.0).abs() < 1e-12);
        assert!((e.numeric - 6.0).abs() < 1e-6);
        assert!(e.max_rel_error < 1e-6);
    }

    #[test]
    fn frozen_entries_are_absent() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(1.0f64), true);
        s.insert("frozen", Tensor::scalar(2.0f64), false);
        let r = grad_check(
            |tape, s| -> Result<Var, NumericsError> {
                let w = tape.param(s, "w")?;
                let f = tape.param(s, "frozen")?;
                tape.mul(w, f)
            },
            &s,
            1e-6,
        )
        .unwrap();
        assert!(r.get("frozen").is_none());
        assert!(r.get("w").is_some());
    }

    #[test]
    fn non_finite_names_the_perturbation() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(1e-4f64), true);
        // finite at w, undefined at w - eps
        let err = grad_check(
            |tape, s| -> Result<Var, NumericsError> {
                let w = tape.param(s, "w")?;
                tape.ln(w)
            },
            &s,
            1e-3,
        )
        .unwrap_err();
        assert!(err.to_string().contains("w[0] - eps"), "{err}");

        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(1.0f64), true);
        let err = grad_check(
            |tape, s| -> Result<Var, NumericsError> {
                let w = tape.param(s, "w")?;
                let big = tape.scale(w, 1e300);
                tape.mul(big, big)
            },
            &s,
            1e-3,
        );
        assert!(err.is_err());
    }
}
