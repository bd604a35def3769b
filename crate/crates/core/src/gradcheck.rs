//! Central-difference gradient verification.

use crate::params::Parameters;

/// Below this magnitude an entry is compared in absolute terms. Central
/// differences at `ε = 1e-5` carry roughly `1e-10` of rounding noise, which
/// would swamp a pure ratio on gradients that happen to be near zero.
pub const DENOMINATOR_FLOOR: f64 = 1e-5;

/// Outcome of a [`grad_check`] run.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `f` around `params`.
///
/// The error of one entry is `|a - n| / max(|a|, |n|, DENOMINATOR_FLOOR)`;
/// the report carries the maximum over every scalar of every tensor. Never
/// fails on a large error, it only reports it.
pub fn grad_check<P, F>(params: &P, analytic: &P, f: F, epsilon: f64) -> GradCheckReport
where
    P: Parameters<f64> + Clone,
    F: Fn(&P) -> f64,
{
    let mut probe = params.clone();
    let analytic: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, m)| (n, m.as_slice().to_vec()))
        .collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
    };
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let original = probe.tensors()[ti].1.as_slice()[i];
            probe.tensors_mut()[ti].1.as_mut_slice()[i] = original + epsilon;
            let plus = f(&probe);
            probe.tensors_mut()[ti].1.as_mut_slice()[i] = original - epsilon;
            let minus = f(&probe);
            probe.tensors_mut()[ti].1.as_mut_slice()[i] = original;

            let n = (plus - minus) / (2.0 * epsilon);
            let err = (a - n).abs() / a.abs().max(n.abs()).max(DENOMINATOR_FLOOR);
            report.checked += 1;
            if err > report.max_relative_error || err.is_nan() {
                report.max_relative_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = Some((name.clone(), i));
                report.worst_analytic = a;
                report.worst_numeric = n;
            }
        }
    }
    report
}
