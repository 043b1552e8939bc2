//! Seeded Gaussian-mixture populations and domain shifts.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{sq_dist, EmbeddingSet, LabeledSet, SampleId};
use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, norm, Matrix};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::config("classes", "must be positive"));
        }
        if self.per_class == 0 {
            return Err(Error::config("per_class", "must be at least 1"));
        }
        if self.dim < 2 {
            return Err(Error::config("dim", "must be at least 2"));
        }
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            return Err(Error::config("center_scale", "must be positive"));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be positive"));
        }
        Ok(())
    }
}

/// Minimum separation between two class centers before they are redrawn.
const MIN_CENTER_SEPARATION: f64 = 1e-6;

/// Class centers of a mixture; samples can be drawn from it repeatedly.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    spec: MixtureSpec,
    centers: Matrix,
}

impl Mixture {
    pub fn new(spec: &MixtureSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = RngStream::new(spec.seed, "synth/centers").rng();
        let mut centers = Matrix::zeros(0, spec.dim);
        while centers.rows() < spec.classes {
            let c = random_direction(&mut rng, spec.dim, spec.center_scale);
            let collides = centers
                .iter_rows()
                .any(|o| libm::sqrt(sq_dist(o, &c)) < MIN_CENTER_SEPARATION);
            if !collides {
                centers.push_row(&c)?;
            }
        }
        Ok(Self {
            spec: spec.clone(),
            centers,
        })
    }

    pub fn centers(&self) -> &Matrix {
        &self.centers
    }

    pub fn spec(&self) -> &MixtureSpec {
        &self.spec
    }

    /// Draws `per_class` samples for each class, class-major, from stream `label`.
    pub fn sample(&self, per_class: usize, label: &str) -> Result<(EmbeddingSet, LabeledSet)> {
        let spec = &self.spec;
        let mut rng = RngStream::new(spec.seed, format!("synth/samples/{label}")).rng();
        let n = spec.classes * per_class;
        let mut data = Matrix::zeros(n, spec.dim);
        let mut labels = LabeledSet::new(spec.classes);
        for c in 0..spec.classes {
            for k in 0..per_class {
                let i = c * per_class + k;
                let row = data.row_mut(i);
                for (v, mu) in row.iter_mut().zip(self.centers.row(c)) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = mu + spec.noise_sigma * z;
                }
                labels.insert(SampleId(i as u64), c)?;
            }
        }
        Ok((EmbeddingSet::with_sequential_ids(data)?, labels))
    }
}

/// `C * per_class` samples around seeded centers of norm `center_scale`,
/// with ground-truth labels.
pub fn gen_mixture(spec: &MixtureSpec) -> Result<(EmbeddingSet, LabeledSet)> {
    Mixture::new(spec)?.sample(spec.per_class, "main")
}

fn random_direction<R: Rng>(rng: &mut R, dim: usize, length: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x * length / n).collect();
        }
    }
}

/// `x -> scale * R x + translation`, with `R` a rotation by `angle` inside
/// the plane spanned by two orthonormal vectors.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DomainShift {
    pub rotation_angle: f64,
    pub plane: (Vec<f64>, Vec<f64>),
    pub translation: Vec<f64>,
    pub scale: f64,
}

impl DomainShift {
    pub fn identity(dim: usize) -> Self {
        let mut u = vec![0.0; dim];
        let mut v = vec![0.0; dim];
        u[0] = 1.0;
        v[1.min(dim - 1)] = 1.0;
        Self {
            rotation_angle: 0.0,
            plane: (u, v),
            translation: vec![0.0; dim],
            scale: 1.0,
        }
    }

    /// Random rotation plane and a random translation of the given norm.
    pub fn random(
        dim: usize,
        rotation_angle: f64,
        translation_norm: f64,
        scale: f64,
        stream: &RngStream,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::config("dim", "a rotation plane needs at least 2 dims"));
        }
        let mut rng = stream.rng();
        let u = random_direction(&mut rng, dim, 1.0);
        let v = loop {
            let mut w = random_direction(&mut rng, dim, 1.0);
            let p = dot(&w, &u);
            axpy(-p, &u, &mut w);
            let n = norm(&w);
            if n > 1e-6 {
                break w.into_iter().map(|x| x / n).collect::<Vec<_>>();
            }
        };
        let translation = if translation_norm == 0.0 {
            vec![0.0; dim]
        } else {
            random_direction(&mut rng, dim, translation_norm)
        };
        let shift = Self {
            rotation_angle,
            plane: (u, v),
            translation,
            scale,
        };
        shift.validate(dim)?;
        Ok(shift)
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.plane.0.len() != dim || self.plane.1.len() != dim || self.translation.len() != dim
        {
            return Err(Error::shape(format!("domain shift is not {dim}-dimensional")));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config("scale", "must be positive"));
        }
        let (u, v) = &self.plane;
        if (dot(u, u) - 1.0).abs() > 1e-9 || (dot(v, v) - 1.0).abs() > 1e-9 || dot(u, v).abs() > 1e-9
        {
            return Err(Error::config("plane", "basis must be orthonormal"));
        }
        Ok(())
    }

    /// Applies the shift to one vector.
    pub fn apply_vec(&self, x: &[f64], out: &mut [f64]) {
        let (u, v) = &self.plane;
        let (c, s) = (libm::cos(self.rotation_angle), libm::sin(self.rotation_angle));
        let (xu, xv) = (dot(x, u), dot(x, v));
        // R x = x + (c - 1)(u u.x + v v.x) + s (v u.x - u v.x)
        let cu = (c - 1.0) * xu - s * xv;
        let cv = (c - 1.0) * xv + s * xu;
        for i in 0..x.len() {
            let rotated = x[i] + (cu * u[i] + cv * v[i]);
            out[i] = self.scale * rotated + self.translation[i];
        }
    }

    /// Dense rotation matrix (for inspection and tests).
    pub fn rotation_matrix(&self) -> Matrix {
        let d = self.dim();
        let (u, v) = &self.plane;
        let (c, s) = (libm::cos(self.rotation_angle), libm::sin(self.rotation_angle));
        let mut r = Matrix::eye(d, d);
        for i in 0..d {
            for j in 0..d {
                r[(i, j)] += (c - 1.0) * (u[i] * u[j] + v[i] * v[j]) + s * (v[i] * u[j] - u[i] * v[j]);
            }
        }
        r
    }
}

pub fn apply_shift(e: &EmbeddingSet, shift: &DomainShift) -> Result<EmbeddingSet> {
    shift.validate(e.dim())?;
    let mut data = Matrix::zeros(e.len(), e.dim());
    for i in 0..e.len() {
        shift.apply_vec(e.row(i), data.row_mut(i));
    }
    EmbeddingSet::new(e.ids().to_vec(), data)
}

/// Harness-only indicator rule: per class, the labeled sample nearest the
/// class's ground-truth mean (smallest id on ties). Classes without samples
/// are a data error.
pub fn nearest_mean_indicators(features: &EmbeddingSet, truth: &LabeledSet) -> Result<LabeledSet> {
    let c = truth.classes();
    let d = features.dim();
    let mut sums = Matrix::zeros(c, d);
    let mut counts = vec![0usize; c];
    for (i, id) in features.ids().iter().enumerate() {
        if let Some(l) = truth.get(*id) {
            axpy(1.0, features.row(i), sums.row_mut(l));
            counts[l] += 1;
        }
    }
    let mut best: Vec<Option<(f64, SampleId)>> = vec![None; c];
    for (i, id) in features.ids().iter().enumerate() {
        let Some(l) = truth.get(*id) else { continue };
        let inv = 1.0 / counts[l] as f64;
        let dist: f64 = features
            .row(i)
            .iter()
            .zip(sums.row(l))
            .map(|(x, s)| (x - s * inv) * (x - s * inv))
            .sum();
        let better = match best[l] {
            None => true,
            Some((bd, bid)) => dist < bd || (dist == bd && *id < bid),
        };
        if better {
            best[l] = Some((dist, *id));
        }
    }
    let mut out = LabeledSet::new(c);
    for (l, b) in best.into_iter().enumerate() {
        let (_, id) = b.ok_or_else(|| Error::Data(format!("class {l} has no samples")))?;
        out.insert(id, l)?;
    }
    Ok(out)
}

/// Source, target pool and held-out target test split.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub source: EmbeddingSet,
    pub source_labels: LabeledSet,
    pub target: EmbeddingSet,
    pub target_labels: LabeledSet,
    pub test: EmbeddingSet,
    pub test_labels: LabeledSet,
}

/// Source/target pair with a shared domain shift applied to the target.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkSpec {
    pub source: MixtureSpec,
    pub target: MixtureSpec,
    pub test_per_class: usize,
    pub rotation_angle: f64,
    pub translation_norm: f64,
    pub scale: f64,
}

impl BenchmarkSpec {
    /// Shipped benchmark: 5x400 source, 5x100 target, D=16.
    pub fn standard(seed: u64) -> Self {
        let source = MixtureSpec {
            classes: 5,
            per_class: 400,
            dim: 16,
            center_scale: 3.0,
            noise_sigma: 0.35,
            seed,
        };
        let target = MixtureSpec {
            per_class: 100,
            seed: seed ^ 0x7a47_6574,
            ..source.clone()
        };
        Self {
            source,
            target,
            test_per_class: 100,
            rotation_angle: core::f64::consts::FRAC_PI_3,
            translation_norm: 1.5,
            scale: 1.0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.source.seed = seed;
        s.target.seed = seed ^ 0x7a47_6574;
        s
    }

    pub fn generate(&self) -> Result<Benchmark> {
        if self.source.dim != self.target.dim {
            return Err(Error::config("target.dim", "must equal source.dim"));
        }
        if self.test_per_class == 0 {
            return Err(Error::config("test_per_class", "must be at least 1"));
        }
        let (source, source_labels) = gen_mixture(&self.source)?;
        let target_mix = Mixture::new(&self.target)?;
        let shift = DomainShift::random(
            self.target.dim,
            self.rotation_angle,
            self.translation_norm,
            self.scale,
            &RngStream::new(self.target.seed, "synth/shift"),
        )?;
        let (target, target_labels) = target_mix.sample(self.target.per_class, "main")?;
        let (test, test_labels) = target_mix.sample(self.test_per_class, "test")?;
        Ok(Benchmark {
            source,
            source_labels,
            target: apply_shift(&target, &shift)?,
            target_labels,
            test: apply_shift(&test, &shift)?,
            test_labels,
        })
    }
}
