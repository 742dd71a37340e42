//! Central-difference audit of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Parameterized, Tape, Var};
use crate::error::Result;

/// Which scalars to perturb.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    All,
    /// At most `per_param` seeded-random entries from every parameter.
    Sample { per_param: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_rel_err: f64,
    /// `name[index]` of the scalar with the largest relative error.
    pub worst_param: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Scalars compared.
    pub checked: usize,
    /// Scalars whose difference quotient needed a step wider than `h`.
    pub widened: usize,
    /// Scalars left out because `θ ± h` straddles a relu or abs kink.
    pub kinks: usize,
}

impl GradReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// A loss difference spanning fewer ulps than this is quantisation-limited.
const RESOLVED_ULPS: f64 = 1e5;
/// Step widening factor and the number of widenings tried.
const WIDEN: f64 = 10.0;
const MAX_WIDENINGS: usize = 3;

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    f64::from_bits(x.to_bits() + 1) - x
}

/// Compares tape gradients of `loss` against `(f(θ+h) − f(θ−h)) / 2h` for
/// every selected scalar θ.
///
/// When `f(θ+h) − f(θ−h)` is too small to be resolved in 64-bit (fewer than
/// 1e5 ulps of `f`), the step is widened tenfold, at most three times. The
/// decision looks at the loss values only. A scalar whose perturbed
/// evaluations flip the sign of any relu or abs input is counted in `kinks`
/// and left out of the error.
///
/// `loss` builds the scalar objective on the tape it is handed. Existing
/// accumulated gradients on `model` are left untouched.
pub fn finite_diff_check<M, F>(model: &mut M, h: f64, selection: Selection, loss: F) -> Result<GradReport>
where
    M: Parameterized<f64>,
    F: Fn(&M, &Tape<f64>) -> Result<Var>,
{
    let (analytic, base_signature) = {
        let tape = Tape::new();
        let out = loss(model, &tape)?;
        (tape.backward(out, 1.0)?, tape.kink_signature())
    };
    let eval = |m: &M| -> Result<(f64, u64)> {
        let tape = Tape::new();
        let out = loss(m, &tape)?;
        let v = tape.value(out).item()?;
        Ok((v, tape.kink_signature()))
    };

    let mut report = GradReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        widened: 0,
        kinks: 0,
    };
    let count = model.params().len();
    for pi in 0..count {
        let (slot, numel, name) = {
            let p = model.params()[pi];
            (p.slot(), p.numel(), p.name.clone())
        };
        let indices: Vec<usize> = match selection {
            Selection::All => (0..numel).collect(),
            Selection::Sample { per_param, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (pi as u64).wrapping_mul(0x9E37_79B9));
                let mut idx = sample(&mut rng, numel, per_param.min(numel)).into_vec();
                idx.sort_unstable();
                idx
            }
        };
        for i in indices {
            let original = model.params()[pi].value.data()[i];
            let mut numeric = None;
            let mut used = h;
            let mut step = h;
            for widening in 0..=MAX_WIDENINGS {
                model.params_mut()[pi].value.data_mut()[i] = original + step;
                let (plus, sig_plus) = eval(model)?;
                model.params_mut()[pi].value.data_mut()[i] = original - step;
                let (minus, sig_minus) = eval(model)?;
                model.params_mut()[pi].value.data_mut()[i] = original;
                if sig_plus != base_signature || sig_minus != base_signature {
                    // a wider step would cross a kink: keep the last smooth one
                    break;
                }
                numeric = Some((plus - minus) / (2.0 * step));
                used = step;
                let resolved = (plus - minus).abs() >= RESOLVED_ULPS * ulp(plus.abs().max(minus.abs()));
                if resolved || widening == MAX_WIDENINGS {
                    break;
                }
                step *= WIDEN;
            }
            let Some(numeric) = numeric else {
                report.kinks += 1;
                continue;
            };
            if used > h {
                report.widened += 1;
            }
            let a = analytic.get(slot).map_or(0.0, |g| g.data()[i]);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_err || report.worst_param.is_empty() {
                report.max_rel_err = err;
                report.worst_param = format!("{name}[{i}]");
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Backend, Param, ParamList};
    use crate::tensor::Tensor3;

    #[test]
    fn quadratic_is_exact() {
        let mut ps = ParamList::new(vec![Param::new("x", Tensor3::from_signal(&[3.0]).unwrap())]);
        let report = finite_diff_check(&mut ps, 1e-5, Selection::All, |m, tape| {
            let x = tape.param(&m.items[0]);
            let sq = tape.mul(&x, &x)?;
            Ok(tape.sum(&sq))
        })
        .unwrap();
        assert!(report.max_rel_err <= 1e-9, "{report:?}");
        assert!((report.worst_analytic - 6.0).abs() < 1e-12);
        assert_eq!(report.checked, 1);
    }

    #[test]
    fn every_primitive_matches_central_differences() {
        // A composite touching every recorded op.
        let mut ps = ParamList::new(vec![
            Param::new(
                "x",
                Tensor3::new(2, 2, 4, (0..16).map(|i| 0.1 * i as f64 - 0.75).collect()).unwrap(),
            ),
            Param::new(
                "w",
                Tensor3::new(3, 2, 3, (0..18).map(|i| ((i * 7) % 5) as f64 * 0.2 - 0.4).collect())
                    .unwrap(),
            ),
            Param::new("b", Tensor3::new(1, 1, 3, vec![0.1, -0.2, 0.3]).unwrap()),
            Param::new("m", Tensor3::new(1, 2, 2, vec![0.6, 0.8, -0.8, 0.6]).unwrap()),
        ]);
        let report = finite_diff_check(&mut ps, 1e-5, Selection::All, |m, t| {
            let x = t.param(&m.items[0]);
            let w = t.param(&m.items[1]);
            let b = t.param(&m.items[2]);
            let mix = t.param(&m.items[3]);
            let x = t.channel_mix(&x, &mix)?;
            let y = t.conv1d(&x, &w, &b)?;
            let y = t.tanh(&y);
            let p = t.pad_replicate_right(&y, 4);
            let s = t.squeeze(&p, 2)?;
            let e = t.exp(&s);
            let u = t.unsqueeze(&e, 2)?;
            let c = t.crop_right(&u, 4)?;
            let a = t.slice_channels(&c, 0, 2)?;
            let bb = t.slice_channels(&c, 2, 1)?;
            let bb = t.concat_channels(&bb, &bb)?;
            let q = t.div(&a, &bb)?;
            let r = t.sub(&q, &a)?;
            let r = t.mul(&r, &a)?;
            let d = t.diff(&r)?;
            let d = t.scale(&d, 1.7);
            let ab = t.abs(&d);
            let rl = t.relu(&r);
            let s1 = t.mean(&ab);
            let s2 = t.sum(&rl);
            t.add(&s1, &s2)
        })
        .unwrap();
        assert!(report.max_rel_err <= 1e-6, "{report:?}");
        assert_eq!(report.checked, 16 + 18 + 3 + 4);
    }

    #[test]
    fn sampling_limits_checked_count() {
        let mut ps = ParamList::new(vec![Param::new(
            "x",
            Tensor3::from_signal(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
        )]);
        let report = finite_diff_check(
            &mut ps,
            1e-5,
            Selection::Sample { per_param: 2, seed: 1 },
            |m, t| {
                let x = t.param(&m.items[0]);
                let sq = t.mul(&x, &x)?;
                Ok(t.sum(&sq))
            },
        )
        .unwrap();
        assert_eq!(report.checked, 2);
    }

    #[test]
    fn unresolvable_differences_widen_the_step() {
        // f = 1000 + 1e-9 x: at h = 1e-5 the change is below one ulp of f
        let mut ps = ParamList::new(vec![Param::new("x", Tensor3::from_signal(&[0.3]).unwrap())]);
        let report = finite_diff_check(&mut ps, 1e-5, Selection::All, |m, t| {
            let x = t.param(&m.items[0]);
            let c = t.input(Tensor3::scalar(1000.0));
            let y = t.add(&c, &t.scale(&x, 1e-9))?;
            Ok(t.sum(&y))
        })
        .unwrap();
        assert_eq!(report.widened, 1);
        assert!(report.max_rel_err <= 1e-3, "{report:?}");
    }

    #[test]
    fn kink_crossings_are_counted_not_compared() {
        let mut ps = ParamList::new(vec![Param::new(
            "x",
            Tensor3::from_signal(&[4e-6, 0.5]).unwrap(),
        )]);
        let report = finite_diff_check(&mut ps, 1e-5, Selection::All, |m, t| {
            let x = t.param(&m.items[0]);
            Ok(t.sum(&t.relu(&x)))
        })
        .unwrap();
        assert_eq!((report.kinks, report.checked), (1, 1));
        assert!(report.max_rel_err <= 1e-9);
    }
}
