use super::{Gradients, ParamId, ParamSet};

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffReport {
    pub max_rel_error: f64,
    /// Parameter name and flat entry index of the worst disagreement.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

/// Audits analytic gradients against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε`, entry by entry over every parameter.
///
/// The relative error of an entry is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<F>(
    params: &ParamSet,
    analytic: &Gradients,
    epsilon: f64,
    mut loss_fn: F,
) -> FiniteDiffReport
where
    F: FnMut(&ParamSet) -> f64,
{
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut probe = params.clone();
    let mut report = FiniteDiffReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        let grad = analytic.dense(id, params);
        for idx in 0..grad.len() {
            let original = params.value(id).as_slice()[idx];
            probe.get_mut(id).value.as_mut_slice()[idx] = original + epsilon;
            let up = loss_fn(&probe);
            probe.get_mut(id).value.as_mut_slice()[idx] = original - epsilon;
            let down = loss_fn(&probe);
            probe.get_mut(id).value.as_mut_slice()[idx] = original;

            let numeric = (up - down) / (2.0 * epsilon);
            let a = grad.as_slice()[idx];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.entries_checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = Some((params.get(id).name.clone(), idx));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report
}
