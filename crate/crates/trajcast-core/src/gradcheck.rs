//! Finite-difference gradient oracles, kept independent of the tape: they
//! only re-evaluate a closure at perturbed inputs. Test support; not used
//! by the model itself.

use alloc::vec::Vec;

use crate::model::Model;

/// Central finite differences of a scalar function at `x`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe);
        probe[i] = x[i] - eps;
        let minus = f(&probe);
        probe[i] = x[i];
        out.push((plus - minus) / (2.0 * eps));
    }
    out
}

/// Worst relative disagreement between two gradient vectors, with a small
/// absolute floor so near-zero entries do not blow up the ratio.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    debug_assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let denom = libm::fabs(a).max(libm::fabs(n)).max(floor);
            libm::fabs(a - n) / denom
        })
        .fold(0.0, f64::max)
}

/// Finite-difference gradient of a model loss with respect to one named
/// parameter tensor. The loss closure sees a fully materialized model, so
/// the numeric route shares nothing with the tape's backward pass.
pub fn model_param_fd(
    model: &Model,
    name: &str,
    eps: f64,
    loss: &mut dyn FnMut(&Model) -> f64,
) -> Vec<f64> {
    let mut probe = model.clone();
    let n = model
        .named_tensors()
        .iter()
        .find(|(t_name, _)| t_name == name)
        .map(|(_, t)| t.numel())
        .unwrap_or_else(|| panic!("unknown tensor {name}"));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let base = read_at(&probe, name, i);
        write_at(&mut probe, name, i, base + eps);
        let plus = loss(&probe);
        write_at(&mut probe, name, i, base - eps);
        let minus = loss(&probe);
        write_at(&mut probe, name, i, base);
        out.push((plus - minus) / (2.0 * eps));
    }
    out
}

fn read_at(model: &Model, name: &str, i: usize) -> f64 {
    model
        .named_tensors()
        .into_iter()
        .find(|(t_name, _)| t_name == name)
        .map(|(_, t)| t.data()[i])
        .expect("known tensor")
}

fn write_at(model: &mut Model, name: &str, i: usize, value: f64) {
    for (t_name, t) in model.named_tensors_mut() {
        if t_name == name {
            t.data_mut()[i] = value;
            return;
        }
    }
    panic!("unknown tensor {name}");
}
