use super::params::{Gradients, ParameterStore};

/// Worst finite-difference disagreement within one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub trainable: bool,
    /// `max |a - n| / max(|a|, |n|, 1e-8)` over checked entries.
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub checked: usize,
}

/// Compares analytic gradients against central differences on every entry.
pub fn grad_check<E, F>(store: &mut ParameterStore, epsilon: f64, f: F) -> Result<Vec<GroupError>, E>
where
    F: FnMut(&ParameterStore) -> Result<(f64, Gradients), E>,
{
    grad_check_sampled(store, epsilon, None, f)
}

/// Like [`grad_check`], checking at most `max_entries` evenly strided entries per tensor.
///
/// Frozen tensors are reported with their (zero) analytic gradient and are
/// not perturbed.
pub fn grad_check_sampled<E, F>(
    store: &mut ParameterStore,
    epsilon: f64,
    max_entries: Option<usize>,
    mut f: F,
) -> Result<Vec<GroupError>, E>
where
    F: FnMut(&ParameterStore) -> Result<(f64, Gradients), E>,
{
    let (_, grads) = f(store)?;
    let ids: Vec<_> = store.ids().collect();
    let mut report = Vec::with_capacity(ids.len());
    for id in ids {
        let param = store.get(id);
        let (name, trainable, len) = (param.name.clone(), param.trainable, param.value.len());
        let analytic = grads.get(id).filter(|_| trainable).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; len]);
        let max_abs_analytic = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !trainable {
            report.push(GroupError { name, trainable, max_rel_error: 0.0, max_abs_analytic, checked: 0 });
            continue;
        }
        let stride = match max_entries {
            Some(k) if k > 0 && len > k => len.div_ceil(k),
            _ => 1,
        };
        let mut worst = 0.0f64;
        let mut checked = 0;
        for i in (0..len).step_by(stride) {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + epsilon;
            let plus = f(store)?.0;
            store.value_mut(id).data_mut()[i] = orig - epsilon;
            let minus = f(store)?.0;
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            checked += 1;
        }
        report.push(GroupError { name, trainable, max_rel_error: worst, max_abs_analytic, checked });
    }
    Ok(report)
}
