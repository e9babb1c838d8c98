use super::{Result, Tape, Tensor, TensorError, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of |analytic − numeric| / max(1, |analytic|)
    pub max_rel_error: f64,
    /// (parameter, flat index) where the maximum occurred
    pub worst: (usize, usize),
    pub coordinates: usize,
}

/// Compares tape gradients of the scalar `f` with central differences
/// at every coordinate of every parameter.
pub fn gradient_check<F>(f: F, params: &[Tensor], epsilon: f64) -> crate::Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> crate::Result<Var<'t>>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(TensorError::Domain {
            op: "gradient_check",
            msg: format!("epsilon {epsilon} outside [1e-7, 1e-3]"),
        }
        .into());
    }

    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&tape, &vars)?;
        check_finite(loss.item()?, "loss")?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|v| grads.wrt(*v)).collect()
    };

    let eval = |perturbed: &[Tensor]| -> crate::Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = perturbed.iter().map(|p| tape.constant(p.clone())).collect();
        let v = f(&tape, &vars)?.item()?;
        Ok(check_finite(v, "perturbed loss")?)
    };

    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        coordinates: 0,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let orig = work[pi].data()[i];
            work[pi].data_mut()[i] = orig + epsilon;
            let plus = eval(&work)?;
            work[pi].data_mut()[i] = orig - epsilon;
            let minus = eval(&work)?;
            work[pi].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let exact = grad.data()[i];
            check_finite(exact, "analytic gradient")?;
            let err = (exact - numeric).abs() / exact.abs().max(1.0);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (pi, i);
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TensorError::NonFinite(format!("{what} = {v}")))
    }
}
