//! Central finite-difference checks of tape gradients.

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;

/// Step of the central difference.
pub const FD_STEP: f64 = 1e-5;

/// Magnitude below which errors are measured in absolute terms.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck { max_rel_error: self.max_rel_error.max(other.max_rel_error), checked: self.checked + other.checked }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `∂loss/∂p` from one backward pass with central differences at
/// the given parameter entries. `loss` rebuilds the scalar loss from the
/// store on a fresh tape.
pub fn check_params<F>(store: &mut ParamStore, entries: &[(ParamId, usize, usize)], mut loss: F) -> Result<GradCheck>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let l = loss(&mut tape, store)?;
    tape.backward(l, &mut [store])?;
    let mut worst: f64 = 0.0;
    for &(id, r, c) in entries {
        let analytic = store.get(id).grad[[r, c]];
        let x0 = store.get(id).value[[r, c]];
        let mut eval = |x: f64, store: &mut ParamStore| -> Result<f64> {
            store.get_mut(id).value[[r, c]] = x;
            let mut t = Tape::new();
            let l = loss(&mut t, store)?;
            Ok(t.scalar(l))
        };
        let plus = eval(x0 + FD_STEP, store)?;
        let minus = eval(x0 - FD_STEP, store)?;
        store.get_mut(id).value[[r, c]] = x0;
        worst = worst.max(relative_error(analytic, (plus - minus) / (2.0 * FD_STEP)));
    }
    Ok(GradCheck { max_rel_error: worst, checked: entries.len() })
}

/// Up to `n` entries drawn uniformly over all scalars of `store`, or every
/// entry when `n` is at least their count.
pub fn sample_entries<R: Rng>(store: &ParamStore, n: usize, rng: &mut R) -> Vec<(ParamId, usize, usize)> {
    let all: Vec<(ParamId, usize, usize)> = store
        .ids()
        .flat_map(|id| {
            let (rows, cols) = store.value(id).dim();
            (0..rows).flat_map(move |r| (0..cols).map(move |c| (id, r, c)))
        })
        .collect();
    if n >= all.len() {
        return all;
    }
    rand::seq::index::sample(rng, all.len(), n).into_iter().map(|i| all[i]).collect()
}
