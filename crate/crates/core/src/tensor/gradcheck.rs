use rand::seq::index::sample;
use rand::Rng;

use super::{ParamId, ParamStore, Tape, TensorError, Var};

/// Compares backprop gradients of `f` against central differences.
///
/// `f` builds a scalar loss on a fresh tape from the current parameter
/// values. Only parameters the loss reaches are probed; the rest have an
/// exact zero derivative. Every coordinate is checked when there are at
/// most `max_coords` of them, otherwise a random subset of that size.
/// Returns the largest `|ga - gn| / max(1e-8, |ga| + |gn|)`.
pub fn grad_check<F>(store: &mut ParamStore, f: F, eps: f64, max_coords: usize, rng: &mut impl Rng) -> Result<f64, TensorError>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var, TensorError>,
{
    grad_check_on(store, |s| s, f, eps, max_coords, rng)
}

/// [`grad_check`] for parameters owned by a larger value, such as a model.
pub fn grad_check_on<T, P, F>(holder: &mut T, params: P, mut f: F, eps: f64, max_coords: usize, rng: &mut impl Rng) -> Result<f64, TensorError>
where
    P: Fn(&mut T) -> &mut ParamStore,
    F: FnMut(&T, &mut Tape) -> Result<Var, TensorError>,
{
    params(holder).zero_grads();
    let mut tape = Tape::new();
    let loss = f(holder, &mut tape)?;
    tape.backward(loss, params(holder))?;

    let store = params(holder);
    let mut coords: Vec<(ParamId, usize)> = Vec::new();
    for id in store.ids().filter(|id| store.is_touched(*id)) {
        coords.extend((0..store.value(id).len()).map(|i| (id, i)));
    }
    if coords.len() > max_coords {
        let picked = sample(rng, coords.len(), max_coords);
        coords = picked.iter().map(|i| coords[i]).collect();
    }
    let grads: Vec<f64> = coords.iter().map(|(id, i)| store.grad(*id).data()[*i]).collect();

    let mut eval = |h: &T| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let loss = f(h, &mut tape)?;
        Ok(tape.value(loss).item())
    };
    let mut worst: f64 = 0.0;
    for ((id, i), ga) in coords.into_iter().zip(grads) {
        let orig = params(holder).value(id).data()[i];
        params(holder).value_mut(id).data_mut()[i] = orig + eps;
        let up = eval(holder)?;
        params(holder).value_mut(id).data_mut()[i] = orig - eps;
        let down = eval(holder)?;
        params(holder).value_mut(id).data_mut()[i] = orig;
        let gn = (up - down) / (2.0 * eps);
        let rel = (ga - gn).abs() / (ga.abs() + gn.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    params(holder).zero_grads();
    Ok(worst)
}
