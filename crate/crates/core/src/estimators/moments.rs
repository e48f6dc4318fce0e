use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{importance_ratio, SampleView};
use crate::error::{Error, Result};
use crate::features::{FbarFeatures, HistoryFeatures};
use crate::model::ActingPolicy;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Empirical,
    Population,
}

/// Moment matrices driving the closed-form estimators.
#[derive(Debug, Clone)]
pub struct MomentSet {
    /// `E[mu R phi_H]`.
    pub m1: DVector<f64>,
    /// `E[phi_H (phi_F̄(F̄) - gamma mu phi_F̄(F̄'))']`.
    pub m2: DMatrix<f64>,
    /// `E[phi_H phi_H']`.
    pub m3: DMatrix<f64>,
    /// `E_{nu_F̄}[phi_F̄]`.
    pub nu_mean: DVector<f64>,
    /// `E[phi_H phi_F̄(F̄)']`.
    pub p: DMatrix<f64>,
    /// `E[mu phi_H phi_F̄(F̄')']`.
    pub q: DMatrix<f64>,
    pub gamma: f64,
    pub n: usize,
    pub source: MomentSource,
}

struct Partial {
    m1: DVector<f64>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    m3: DMatrix<f64>,
}

/// Per-tuple importance ratios.
pub fn importance_ratios<O, A, PE, PB>(view: &SampleView<'_, O, A>, policy_e: &PE, policy_b: &PB) -> Result<Vec<f64>>
where
    O: Sync,
    A: Sync + Debug,
    PE: ActingPolicy<O, A>,
    PB: ActingPolicy<O, A>,
{
    view.tuples
        .par_iter()
        .map(|t| importance_ratio(policy_e, policy_b, &t.z, &t.o, &t.a))
        .collect()
}

/// `E_{nu_F̄}[phi_F̄]` over the view's initial samples.
pub fn nu_mean<O, A, FF>(view: &SampleView<'_, O, A>, phi_f: &FF) -> DVector<f64>
where
    FF: FbarFeatures<O, A> + ?Sized,
{
    let mut nu = DVector::zeros(phi_f.dim());
    for (j, s) in view.initial.iter().enumerate() {
        let w = view.initial_weight(j);
        for (i, v) in phi_f.eval(&s.z, &s.f) {
            nu[i] += w * v;
        }
    }
    nu
}

/// Moment set from a weighted sample (empirical or population).
///
/// Chunks are reduced in a fixed order so results do not depend on thread
/// scheduling.
pub fn compute_moments<O, A, FF, FH, PE, PB>(
    view: &SampleView<'_, O, A>,
    phi_f: &FF,
    phi_h: &FH,
    policy_e: &PE,
    policy_b: &PB,
    gamma: f64,
) -> Result<MomentSet>
where
    O: Sync,
    A: Sync + Debug,
    FF: FbarFeatures<O, A> + ?Sized,
    FH: HistoryFeatures<O, A> + ?Sized,
    PE: ActingPolicy<O, A>,
    PB: ActingPolicy<O, A>,
{
    if view.tuples.is_empty() {
        return Err(Error::argument("moments need at least one transition tuple"));
    }
    let (d_f, d_h) = (phi_f.dim(), phi_h.dim());
    let partials: Vec<Partial> = view
        .tuples
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = Partial {
                m1: DVector::zeros(d_h),
                p: DMatrix::zeros(d_h, d_f),
                q: DMatrix::zeros(d_h, d_f),
                m3: DMatrix::zeros(d_h, d_h),
            };
            for (k, t) in chunk.iter().enumerate() {
                let w = view.weight(c * CHUNK + k);
                let mu = importance_ratio(policy_e, policy_b, &t.z, &t.o, &t.a)?;
                let xh = phi_h.eval(&t.h, &t.o);
                let xf = phi_f.eval(&t.z, &t.f);
                let xf2 = phi_f.eval(&t.z_next, &t.f_next);
                for &(i, hv) in &xh {
                    let wh = w * hv;
                    acc.m1[i] += wh * mu * t.r;
                    for &(j, fv) in &xf {
                        acc.p[(i, j)] += wh * fv;
                    }
                    if mu != 0.0 {
                        for &(j, fv) in &xf2 {
                            acc.q[(i, j)] += wh * mu * fv;
                        }
                    }
                    for &(j, hv2) in &xh {
                        acc.m3[(i, j)] += wh * hv2;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = partials.into_iter();
    let mut total = it.next().expect("nonempty");
    for part in it {
        total.m1 += part.m1;
        total.p += part.p;
        total.q += part.q;
        total.m3 += part.m3;
    }
    let m2 = &total.p - &total.q * gamma;
    Ok(MomentSet {
        m1: total.m1,
        m2,
        m3: total.m3,
        nu_mean: nu_mean(view, phi_f),
        p: total.p,
        q: total.q,
        gamma,
        n: view.n(),
        source: if view.is_population() {
            MomentSource::Population
        } else {
            MomentSource::Empirical
        },
    })
}

impl MomentSet {
    pub fn d_h(&self) -> usize {
        self.m1.len()
    }

    pub fn d_f(&self) -> usize {
        self.nu_mean.len()
    }

    /// Replaces `nu_mean`, e.g. with the exact `E_{nu_F̄}[phi]` when the
    /// initial distribution is known.
    pub fn with_nu_mean(mut self, nu: DVector<f64>) -> Result<Self> {
        if nu.len() != self.d_f() {
            return Err(Error::argument("nu_mean has the wrong dimension"));
        }
        self.nu_mean = nu;
        Ok(self)
    }

    /// Same moments with rewards multiplied by `c`.
    pub fn scale_rewards(mut self, c: f64) -> Self {
        self.m1 *= c;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_tabular_dataset, population_sample, GenerationMode, TransitionTuple, WindowConfig};
    use crate::features::{OneHotFbar, OneHotHistory};
    use crate::linalg::min_eigenvalue;
    use crate::model::random::{random_policy, random_pomdp};
    use crate::model::{Future, MemoryPolicy, TabularPolicy, Window};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_tuple_zero_discount() {
        let cfg = WindowConfig::new(0, 1, 1).unwrap();
        let t = TransitionTuple {
            h: Window::from_pairs(vec![(1usize, 0usize)]),
            z: Window::empty(),
            o: 0,
            a: 1,
            r: 2.0,
            f: Future { obs: vec![0], actions: vec![] },
            z_next: Window::empty(),
            f_next: Future { obs: vec![1], actions: vec![] },
        };
        let tuples = [t];
        let view = SampleView {
            config: cfg,
            tuples: &tuples,
            weights: None,
            initial: &[],
            initial_weights: None,
        };
        let ab = crate::model::Alphabet::new(2, 2);
        let ff = OneHotFbar::new(ab, 0, 1).unwrap();
        let fh = OneHotHistory::new(ab, 1).unwrap();
        let p = TabularPolicy::uniform(0, 2, 2).unwrap();
        let m = compute_moments(&view, &ff, &fh, &p, &p, 0.0).unwrap();
        let mut expect = DMatrix::zeros(4, 2);
        expect[(2, 0)] = 1.0;
        assert_eq!(m.m2, expect);
        assert_eq!(m.m1[2], 2.0);
        assert_eq!(m.m3[(2, 2)], 1.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        let view: SampleView<'_> = SampleView {
            config: WindowConfig::new(0, 1, 1).unwrap(),
            tuples: &[],
            weights: None,
            initial: &[],
            initial_weights: None,
        };
        let ab = crate::model::Alphabet::new(2, 2);
        let p = TabularPolicy::uniform(0, 2, 2).unwrap();
        let r = compute_moments(&view, &OneHotFbar::new(ab, 0, 1).unwrap(), &OneHotHistory::new(ab, 1).unwrap(), &p, &p, 0.5);
        assert!(r.is_err());
    }

    #[test]
    fn empirical_moments_approach_population() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_pomdp(3, 3, 2, 0.9, &mut rng);
        let pb = random_policy(0, 3, 2, 0.3, &mut rng).unwrap();
        let pe = random_policy(0, 3, 2, 0.0, &mut rng).unwrap();
        let cfg = WindowConfig::new(0, 1, 1).unwrap();
        let ab = m.alphabet();
        let ff = OneHotFbar::new(ab, 0, 1).unwrap();
        let fh = OneHotHistory::new(ab, 1).unwrap();
        let pop = population_sample(&m, &pb, cfg).unwrap();
        let mp = compute_moments(&pop.view(), &ff, &fh, &pe, &pb, 0.9).unwrap();
        assert!(min_eigenvalue(&mp.m3) >= -1e-12);
        let pbm: MemoryPolicy = pb.clone().into();
        let n = 100_000;
        let ds = generate_tabular_dataset(&m, &pbm, n, 1000, cfg, GenerationMode::IidPerTuple, 77).unwrap();
        let me = compute_moments(&ds.view(), &ff, &fh, &pe, &pb, 0.9).unwrap();
        // Entrywise within 5 standard errors; per-entry variance bounded by
        // the second moment, with mu <= 1 / 0.15.
        let bound = |x: f64, scale: f64| 5.0 * (scale * x.abs().max(1e-4) / n as f64).sqrt();
        for i in 0..mp.m2.len() {
            let diff = (mp.m2[i] - me.m2[i]).abs();
            assert!(diff <= bound(mp.p[i] + mp.q[i], 50.0), "m2 entry {i}: {diff}");
        }
        for i in 0..mp.m1.len() {
            assert!((mp.m1[i] - me.m1[i]).abs() <= bound(mp.m3[(i, i)], 50.0));
        }
        assert_abs_diff_eq!(mp.m3.sum(), 1.0, epsilon = 1e-10);
    }
}
