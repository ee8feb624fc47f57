//! Tensor-mixture phantoms, noise and acquisition schemes for simulation.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dmri::{
    fa_of_tensor, fibonacci_hemisphere, rotate_about_y, rtop_of_tensor, AcquisitionScheme, DiffusionTensor, PulseTiming,
};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub tensor: DiffusionTensor,
    pub fraction: f64,
}

/// Mixture of Gaussian compartments, `S = S₀ Σ f_k exp(−b gᵀD_k g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    components: Vec<Component>,
    s0: f64,
}

impl Phantom {
    pub fn new(components: Vec<Component>, s0: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("phantom needs at least one component".into()));
        }
        if !(s0 > 0.0) || !s0.is_finite() {
            return Err(Error::InvalidInput(format!("S0 must be positive, got {s0}")));
        }
        let total: f64 = components.iter().map(|c| c.fraction).sum();
        if components.iter().any(|c| !(c.fraction >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("fractions must be nonnegative and sum to 1, got {total}")));
        }
        if let Some(i) = components.iter().position(|c| !c.tensor.is_positive_definite()) {
            return Err(Error::InvalidInput(format!("component {i} tensor is not positive definite")));
        }
        Ok(Phantom { components, s0 })
    }

    /// One axially symmetric tensor along x.
    pub fn single(md: f64, fa: f64, s0: f64) -> Result<Self> {
        let d = DiffusionTensor::axially_symmetric(md, fa, &Vector3::x())?;
        Phantom::new(vec![Component { tensor: d, fraction: 1.0 }], s0)
    }

    /// Two equal tensors, the first along x and the second rotated by
    /// `angle_deg` about y, with equal weights.
    pub fn crossing(md: f64, fa: f64, angle_deg: f64, s0: f64) -> Result<Self> {
        let d = DiffusionTensor::axially_symmetric(md, fa, &Vector3::x())?;
        let e = rotate_about_y(&d, angle_deg);
        Phantom::new(vec![Component { tensor: d, fraction: 0.5 }, Component { tensor: e, fraction: 0.5 }], s0)
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn signal_at(&self, bval: f64, g: &Vector3<f64>) -> f64 {
        self.s0 * self.components.iter().map(|c| c.fraction * (-bval * c.tensor.quadratic_form(g)).exp()).sum::<f64>()
    }
}

/// Noise-free signal for every measurement of `scheme`.
pub fn latent_signal(phantom: &Phantom, scheme: &AcquisitionScheme) -> Vec<f64> {
    scheme.measurements().iter().map(|m| phantom.signal_at(m.bval, &m.direction)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Rician,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("noise sigma must be nonnegative, got {sigma}")));
        }
        Ok(NoiseSpec { kind, sigma })
    }

    pub fn rician(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::Rician, sigma)
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, sigma)
    }
}

/// `trials × n` noisy realisations of `latent`.
///
/// Trial `t` draws from its own stream, two normals per measurement in
/// order, so every trial is reproducible on its own. Rician values are the
/// magnitude `√((S+ε₁)² + ε₂²)`.
pub fn add_noise(latent: &[f64], spec: &NoiseSpec, trials: usize, seed: u64) -> DMatrix<f64> {
    let n = latent.len();
    let rows = par::map_indexed(trials, |t| {
        let mut rng = rng::stream(seed, Domain::Noise, t as u64);
        latent
            .iter()
            .map(|&s| {
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                match spec.kind {
                    NoiseKind::Gaussian => s + spec.sigma * e1,
                    NoiseKind::Rician => {
                        let re = s + spec.sigma * e1;
                        let im = spec.sigma * e2;
                        re.hypot(im)
                    }
                }
            })
            .collect::<Vec<f64>>()
    });
    DMatrix::from_fn(trials, n, |i, j| rows[i][j])
}

/// Multi-shell scheme with hemisphere Fibonacci directions per shell and
/// `n_b0` unweighted measurements spread evenly through the sequence.
pub fn make_scheme(
    shell_bvals: &[f64],
    dirs_per_shell: &[usize],
    n_b0: usize,
    timing: Option<PulseTiming>,
) -> Result<AcquisitionScheme> {
    if shell_bvals.len() != dirs_per_shell.len() {
        return Err(Error::InvalidInput(format!(
            "{} shells but {} direction counts",
            shell_bvals.len(),
            dirs_per_shell.len()
        )));
    }
    if let Some(b) = shell_bvals.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::InvalidInput(format!("shell b-value must be positive, got {b}")));
    }
    if dirs_per_shell.contains(&0) {
        return Err(Error::InvalidInput("direction counts must be positive".into()));
    }
    let mut weighted: Vec<(f64, Vector3<f64>)> = Vec::new();
    for (&b, &k) in shell_bvals.iter().zip(dirs_per_shell) {
        weighted.extend(fibonacci_hemisphere(k).into_iter().map(|g| (b, g)));
    }
    let total = weighted.len() + n_b0;
    if total == 0 {
        return Err(Error::InvalidInput("scheme would be empty".into()));
    }
    let mut is_b0 = vec![false; total];
    for k in 0..n_b0 {
        is_b0[k * total / n_b0] = true;
    }
    let mut bvals = Vec::with_capacity(total);
    let mut dirs = Vec::with_capacity(total);
    let mut next = weighted.into_iter();
    for flag in is_b0 {
        let (b, g) = if flag { (0.0, Vector3::zeros()) } else { next.next().expect("counts add up") };
        bvals.push(b);
        dirs.push(g);
    }
    let scheme = AcquisitionScheme::new(&bvals, &dirs)?;
    Ok(match timing {
        Some(t) => scheme.with_timing(t),
        None => scheme,
    })
}

/// Multi-shell protocol of the MGH Connectome scanner: shells 1000, 3000,
/// 5000, 10000 s/mm² with 64, 64, 128, 256 directions and 40 b = 0 images.
pub fn connectome_scheme() -> AcquisitionScheme {
    make_scheme(&[1000.0, 3000.0, 5000.0, 10000.0], &[64, 64, 128, 256], 40, Some(PulseTiming::connectome()))
        .expect("fixed protocol is valid")
}

/// Analytic values of the derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Truth {
    pub md: Option<f64>,
    pub fa: Option<f64>,
    pub rtop: Option<f64>,
    pub crossing_angle: Option<f64>,
}

/// MD and FA for single-compartment phantoms, RTOP when all compartments
/// share one tensor shape, crossing angle for two compartments.
pub fn phantom_truth(phantom: &Phantom, diffusion_time: Option<f64>) -> Result<Truth> {
    let comps = phantom.components();
    let mut truth = Truth::default();
    if comps.len() == 1 {
        truth.md = Some(comps[0].tensor.mean_diffusivity());
        truth.fa = Some(fa_of_tensor(&comps[0].tensor));
    }
    let e0 = comps[0].tensor.eigenvalues();
    let same_shape = comps.iter().all(|c| {
        let e = c.tensor.eigenvalues();
        (0..3).all(|i| (e[i] - e0[i]).abs() <= 1e-12 * e0[2].abs())
    });
    if let (true, Some(t)) = (same_shape, diffusion_time) {
        truth.rtop = Some(rtop_of_tensor(&comps[0].tensor, t)?);
    }
    if comps.len() == 2 {
        let axis = |d: &DiffusionTensor| {
            let eig = d.to_matrix().symmetric_eigen();
            let imax = eig.eigenvalues.imax();
            eig.eigenvectors.column(imax).into_owned()
        };
        let (a, b) = (axis(&comps[0].tensor), axis(&comps[1].tensor));
        truth.crossing_angle = Some(a.dot(&b).abs().min(1.0).acos().to_degrees());
    }
    Ok(truth)
}

/// Run parameters recorded next to a trial set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub seed: u64,
    pub noise: NoiseSpec,
    pub diffusion_time: Option<f64>,
    pub timing: Option<PulseTiming>,
    pub trials: usize,
    pub phantom: Phantom,
    pub version: String,
}

/// A phantom's latent signal with repeated noisy measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub scheme: AcquisitionScheme,
    pub latent: Vec<f64>,
    /// `trials × measurements`.
    pub noisy: DMatrix<f64>,
    pub truth: Truth,
    pub meta: TrialMeta,
}

impl TrialSet {
    pub fn simulate(
        phantom: &Phantom,
        scheme: &AcquisitionScheme,
        noise: NoiseSpec,
        trials: usize,
        seed: u64,
    ) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidInput("need at least one trial".into()));
        }
        let latent = latent_signal(phantom, scheme);
        let noisy = add_noise(&latent, &noise, trials, seed);
        let truth = phantom_truth(phantom, scheme.diffusion_time())?;
        let meta = TrialMeta {
            seed,
            noise,
            diffusion_time: scheme.diffusion_time(),
            timing: scheme.timing(),
            trials,
            phantom: phantom.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        Ok(TrialSet { scheme: scheme.clone(), latent, noisy, truth, meta })
    }

    pub fn trials(&self) -> usize {
        self.noisy.nrows()
    }

    pub fn trial(&self, t: usize) -> Vec<f64> {
        self.noisy.row(t).iter().copied().collect()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.scheme.write_fsl(&dir.join("scheme.bvals"), &dir.join("scheme.bvecs"))?;
        write_matrix_csv(&dir.join("latent.csv"), &DMatrix::from_row_slice(1, self.latent.len(), &self.latent))?;
        write_matrix_csv(&dir.join("noisy.csv"), &self.noisy)?;
        fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&self.truth)? + "\n")?;
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let meta: TrialMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        let mut scheme = AcquisitionScheme::read_fsl(&dir.join("scheme.bvals"), &dir.join("scheme.bvecs"))?;
        if let Some(t) = meta.timing {
            scheme = scheme.with_timing(t);
        }
        if let Some(t) = meta.diffusion_time {
            scheme = scheme.with_diffusion_time(t)?;
        }
        let latent = read_matrix_csv(&dir.join("latent.csv"))?;
        let noisy = read_matrix_csv(&dir.join("noisy.csv"))?;
        let truth: Truth = serde_json::from_str(&fs::read_to_string(dir.join("truth.json"))?)?;
        if latent.nrows() != 1 || latent.ncols() != scheme.len() || noisy.ncols() != scheme.len() {
            return Err(Error::Dimension("trial set files disagree on the number of measurements".into()));
        }
        Ok(TrialSet { scheme, latent: latent.iter().copied().collect(), noisy, truth, meta })
    }
}

/// CSV with a `m0, m1, …` header and one row per matrix row.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..m.ncols()).map(|j| format!("m{j}")))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let ncols = r.headers()?.len();
    let mut values = Vec::new();
    let mut nrows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != ncols {
            return Err(Error::Parse(format!("{}: ragged row {}", path.display(), nrows + 1)));
        }
        for field in rec.iter() {
            values.push(
                field.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{}: {field:?}: {e}", path.display())))?,
            );
        }
        nrows += 1;
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn connectome_counts() {
        let s = connectome_scheme();
        assert_eq!(s.len(), 552);
        assert_eq!(s.bvals().iter().filter(|b| **b == 0.0).count(), 40);
        assert_eq!(s.weighted_shell_count(), 4);
        assert!((s.diffusion_time().unwrap() - 0.0175).abs() < 1e-15);
        assert_eq!(make_scheme(&[1000.0], &[64], 1, None).unwrap().len(), 65);
    }

    #[test]
    fn b0_are_spread_out() {
        let s = connectome_scheme();
        let pos: Vec<usize> = s.bvals().iter().enumerate().filter(|(_, b)| **b == 0.0).map(|(i, _)| i).collect();
        let gaps: Vec<usize> = pos.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.iter().all(|g| *g == 13 || *g == 14), "{gaps:?}");
    }

    #[test]
    fn latent_signal_cases() {
        let s = make_scheme(&[1000.0], &[30], 2, None).unwrap();
        let iso =
            Phantom::new(vec![Component { tensor: DiffusionTensor::isotropic(1e-3), fraction: 1.0 }], 2.0).unwrap();
        for (m, v) in s.measurements().iter().zip(latent_signal(&iso, &s)) {
            assert!((v - 2.0 * (-m.bval * 1e-3).exp()).abs() < 1e-15);
        }
        let single = Phantom::single(0.7e-3, 0.8, 1.0).unwrap();
        let doubled = Phantom::crossing(0.7e-3, 0.8, 0.0, 1.0).unwrap();
        for (a, b) in latent_signal(&single, &s).iter().zip(latent_signal(&doubled, &s)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_rotation_invariance() {
        let p = Phantom::crossing(0.7e-3, 0.8, 60.0, 1.0).unwrap();
        let rot = Rotation3::from_euler_angles(0.3, 1.2, -0.7);
        let comps =
            p.components().iter().map(|c| Component { tensor: c.tensor.rotated(&rot), fraction: c.fraction }).collect();
        let q = Phantom::new(comps, 1.0).unwrap();
        for g in fibonacci_hemisphere(40) {
            assert!((p.signal_at(3000.0, &g) - q.signal_at(3000.0, &(rot * g))).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_determinism_and_zero_sigma() {
        let latent = vec![1.0, 0.5, 0.2];
        let a = add_noise(&latent, &NoiseSpec::rician(0.05).unwrap(), 8, 11);
        let b = add_noise(&latent, &NoiseSpec::rician(0.05).unwrap(), 8, 11);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| *v >= 0.0));
        assert_ne!(a.row(0), a.row(1));
        let c = add_noise(&latent, &NoiseSpec::gaussian(0.0).unwrap(), 2, 1);
        assert!(c.row_iter().all(|r| r.iter().zip(&latent).all(|(x, y)| x == y)));
        let d = add_noise(&latent, &NoiseSpec::rician(0.0).unwrap(), 2, 1);
        assert!(d.row_iter().all(|r| r.iter().zip(&latent).all(|(x, y)| x == y)));
    }

    #[test]
    fn rayleigh_and_high_snr_means() {
        let sigma = 0.3;
        let zero = add_noise(&[0.0], &NoiseSpec::rician(sigma).unwrap(), 100_000, 5);
        let mean = zero.mean();
        let expected = sigma * (std::f64::consts::PI / 2.0).sqrt();
        assert!((mean / expected - 1.0).abs() < 0.01, "{mean} {expected}");
        let high = add_noise(&[100.0 * sigma], &NoiseSpec::rician(sigma).unwrap(), 100_000, 6);
        assert!((high.mean() - 100.0 * sigma).abs() < 0.1 * sigma);
    }

    #[test]
    fn truth_records() {
        let s = connectome_scheme();
        let single = Phantom::single(0.7e-3, 0.8, 1.0).unwrap();
        let t = phantom_truth(&single, s.diffusion_time()).unwrap();
        assert!((t.md.unwrap() - 0.7e-3).abs() < 1e-18);
        assert!((t.fa.unwrap() - 0.8).abs() < 1e-12);
        assert!(t.crossing_angle.is_none());
        let cross = Phantom::crossing(0.7e-3, 0.8, 60.0, 1.0).unwrap();
        let u = phantom_truth(&cross, s.diffusion_time()).unwrap();
        assert!((u.crossing_angle.unwrap() - 60.0).abs() < 1e-9);
        assert!((u.rtop.unwrap() / t.rtop.unwrap() - 1.0).abs() < 1e-12);
        assert!(u.md.is_none() && u.fa.is_none());
    }

    #[test]
    fn connectome_rtop_value() {
        let p = Phantom::crossing(0.7e-3, 0.8, 60.0, 1.0).unwrap();
        let r = phantom_truth(&p, Some(PulseTiming::connectome().diffusion_time())).unwrap().rtop.unwrap();
        assert!((r / 1e6 - 0.90).abs() < 0.005, "{r}");
    }

    #[test]
    fn trial_set_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_scheme(&[1000.0], &[12], 2, Some(PulseTiming::connectome())).unwrap();
        let p = Phantom::single(0.7e-3, 0.5, 1.0).unwrap();
        let ts = TrialSet::simulate(&p, &s, NoiseSpec::rician(0.05).unwrap(), 3, 9).unwrap();
        ts.write_dir(dir.path()).unwrap();
        let back = TrialSet::read_dir(dir.path()).unwrap();
        assert_eq!(back, ts);
    }
}
