//! Central finite-difference checks for scalar functions built on a [`Tape`].

use super::params::{Bound, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::linalg::Matrix;

/// Builds a scalar loss from leaf handles for each input.
pub trait ScalarFn: Fn(&mut Tape, &[Var]) -> Result<Var> {}
impl<F: Fn(&mut Tape, &[Var]) -> Result<Var>> ScalarFn for F {}

fn evaluate(f: &impl ScalarFn, inputs: &[Matrix]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.constant(m.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.scalar(out))
}

/// Analytic gradients of `f` with respect to every input.
pub fn analytic(f: &impl ScalarFn, inputs: &[Matrix]) -> Result<Vec<Matrix>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.parameter(m.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let mut grads = tape.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, m)| grads.take(v).unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect())
}

/// Central differences `(f(x + εe) - f(x - εe)) / 2ε` for every entry of
/// every input.
pub fn numeric(f: &impl ScalarFn, inputs: &[Matrix], eps: f64) -> Result<Vec<Matrix>> {
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Matrix::zeros(inputs[k].rows(), inputs[k].cols());
        for i in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].as_mut_slice()[i] += eps;
            let mut minus = inputs.to_vec();
            minus[k].as_mut_slice()[i] -= eps;
            g.as_mut_slice()[i] = (evaluate(f, &plus)? - evaluate(f, &minus)?) / (2.0 * eps);
        }
        out.push(g);
    }
    Ok(out)
}

/// Worst violation of `|a - n| <= rel * max(|a|, |n|) + abs_floor`, expressed
/// as a ratio (values `<= 1` pass).
pub fn worst_ratio(analytic: &[Matrix], numeric: &[Matrix], rel: f64, abs_floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.as_slice().iter().zip(n.as_slice()))
        .map(|(&a, &n)| (a - n).abs() / (rel * a.abs().max(n.abs()) + abs_floor))
        .fold(0.0, f64::max)
}

/// Run the full check with step `eps`; returns the worst ratio.
pub fn check(f: &impl ScalarFn, inputs: &[Matrix], eps: f64, rel: f64, abs_floor: f64) -> Result<f64> {
    let a = analytic(f, inputs)?;
    let n = numeric(f, inputs, eps)?;
    Ok(worst_ratio(&a, &n, rel, abs_floor))
}

/// Check the gradient of a scalar built from every parameter of `store`.
/// Returns the worst ratio as in [`worst_ratio`].
pub fn check_params(
    store: &ParamStore,
    f: impl Fn(&mut Tape, &Bound) -> Result<Var>,
    eps: f64,
    rel: f64,
    abs_floor: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let loss = f(&mut tape, &bound)?;
    let mut grads = tape.backward(loss)?;
    let analytic: Vec<Matrix> = bound
        .collect(&mut grads)
        .into_iter()
        .zip(store.iter())
        .map(|(g, (_, m))| g.unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
        .collect();
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = s.bind_frozen(&mut tape);
        let out = f(&mut tape, &bound)?;
        Ok(tape.scalar(out))
    };
    let mut numeric = Vec::with_capacity(store.len());
    let mut probe = store.clone();
    for id in store.ids() {
        let base = store.get(id).clone();
        let mut g = Matrix::zeros(base.rows(), base.cols());
        for i in 0..base.len() {
            probe.get_mut(id).as_mut_slice()[i] = base.as_slice()[i] + eps;
            let plus = eval(&probe)?;
            probe.get_mut(id).as_mut_slice()[i] = base.as_slice()[i] - eps;
            let minus = eval(&probe)?;
            probe.get_mut(id).as_mut_slice()[i] = base.as_slice()[i];
            g.as_mut_slice()[i] = (plus - minus) / (2.0 * eps);
        }
        numeric.push(g);
    }
    Ok(worst_ratio(&analytic, &numeric, rel, abs_floor))
}
