use super::{KernelError, Parameter, Tensor};

/// Outcome of a central finite-difference comparison.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Relative error with an absolute floor so that two near-zero gradients
/// compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Compares analytic gradients against central differences.
///
/// `eval` receives the current parameters and returns the scalar loss and
/// one analytic gradient per parameter (same order). It is called once at
/// the base point and twice per parameter entry.
pub fn grad_check<F>(
    params: &mut [Parameter],
    eps: f64,
    tol: f64,
    mut eval: F,
) -> Result<GradCheckReport, KernelError>
where
    F: FnMut(&[Parameter]) -> Result<(f64, Vec<Tensor>), KernelError>,
{
    let (_, analytic) = eval(params)?;
    if analytic.len() != params.len() {
        return Err(KernelError::ShapeMismatch(format!(
            "grad_check: {} gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
        tolerance: tol,
    };
    for pi in 0..params.len() {
        for i in 0..params[pi].value.len() {
            let orig = params[pi].value.data()[i];
            params[pi].value.data_mut()[i] = orig + eps;
            let (plus, _) = eval(params)?;
            params[pi].value.data_mut()[i] = orig - eps;
            let (minus, _) = eval(params)?;
            params[pi].value.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic[pi].data()[i], numeric);
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((params[pi].name.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::Tape;

    fn linear_eval(params: &[Parameter], corrupt: f64) -> Result<(f64, Vec<Tensor>), KernelError> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.3, -0.8, 1.1]))?;
        let w = tape.param(0, &params[0])?;
        let b = tape.param(1, &params[1])?;
        let y = tape.dense(x, w, b)?;
        let loss = tape.sum(y)?;
        let grads = tape.backward(loss)?;
        let mut out: Vec<Tensor> = vec![grads.wrt(w).unwrap().clone(), grads.wrt(b).unwrap().clone()];
        out[0].data_mut().iter_mut().for_each(|v| *v *= corrupt);
        Ok((tape.scalar(loss), out))
    }

    fn linear_params() -> Vec<Parameter> {
        vec![
            Parameter::new("w", Tensor::new(vec![2, 3], vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap()),
            Parameter::new("b", Tensor::vector(vec![0.05, -0.05])),
        ]
    }

    #[test]
    fn linear_model_agrees_to_machine_precision() {
        let mut ps = linear_params();
        let report = grad_check(&mut ps, 1e-4, 1e-4, |p| linear_eval(p, 1.0)).unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.entries_checked, 8);
        assert!(report.passed());
    }

    #[test]
    fn corrupted_backward_is_caught() {
        let mut ps = linear_params();
        let report = grad_check(&mut ps, 1e-4, 1e-4, |p| linear_eval(p, 1.1)).unwrap();
        assert!(!report.passed());
        assert!(report.max_rel_error > 1e-4);
        assert_eq!(report.worst.as_ref().unwrap().0, "w");
    }

    #[test]
    fn params_restored_after_check() {
        let mut ps = linear_params();
        let before = ps.clone();
        grad_check(&mut ps, 1e-4, 1e-4, |p| linear_eval(p, 1.0)).unwrap();
        assert_eq!(ps, before);
    }
}
