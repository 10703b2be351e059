//! Displacement laws: per-type tail laws, the joint law of the heavy type's
//! sibling block, the scaling sequence `b_n`, and masses of the limit
//! measure `λ` on the rectangles used for the maximum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of a single displacement, described through `|X|` and a sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TailLaw {
    /// `P(|X| > x) = (x/scale)^{-α}` for `x ≥ scale`, positive with probability `β`.
    TwoSidedPareto { alpha: f64, beta: f64, scale: f64 },
    /// `|X| = 1 + Exp(rate)`, symmetric sign.
    ShiftedExponential { rate: f64 },
    /// Pareto magnitude with index `α + γ`, symmetric sign.
    LightPareto { index: f64, scale: f64 },
    /// Point mass at zero.
    Zero,
}

impl TailLaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            TailLaw::TwoSidedPareto { alpha, beta, scale } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return bad(format!("Pareto index must be positive, got {alpha}"));
                }
                if !(0.0..=1.0).contains(&beta) {
                    return bad(format!("balance must lie in [0, 1], got {beta}"));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return bad(format!("scale must be positive, got {scale}"));
                }
            }
            TailLaw::ShiftedExponential { rate } => {
                if !(rate > 0.0 && rate.is_finite()) {
                    return bad(format!("rate must be positive, got {rate}"));
                }
            }
            TailLaw::LightPareto { index, scale } => {
                if !(index > 0.0 && index.is_finite()) {
                    return bad(format!("index must be positive, got {index}"));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return bad(format!("scale must be positive, got {scale}"));
                }
            }
            TailLaw::Zero => {}
        }
        Ok(())
    }

    /// `F̄(x) = P(|X| > x)`.
    pub fn tail_complement(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match *self {
            TailLaw::TwoSidedPareto { alpha, scale, .. } => pareto_tail(x, alpha, scale),
            TailLaw::LightPareto { index, scale } => pareto_tail(x, index, scale),
            TailLaw::ShiftedExponential { rate } => {
                if x < 1.0 {
                    1.0
                } else {
                    (-rate * (x - 1.0)).exp()
                }
            }
            TailLaw::Zero => 0.0,
        }
    }

    /// `(α, β)` for regularly varying families.
    pub fn tail_parameters(&self) -> Result<(f64, f64)> {
        match *self {
            TailLaw::TwoSidedPareto { alpha, beta, .. } => Ok((alpha, beta)),
            TailLaw::LightPareto { index, .. } => Ok((index, 0.5)),
            other => Err(Error::NotRegularlyVarying(format!("{other:?}"))),
        }
    }

    /// Lower end of the support of `|X|`.
    pub fn scale(&self) -> f64 {
        match *self {
            TailLaw::TwoSidedPareto { scale, .. } | TailLaw::LightPareto { scale, .. } => scale,
            TailLaw::ShiftedExponential { .. } => 1.0,
            TailLaw::Zero => 0.0,
        }
    }

    fn balance(&self) -> f64 {
        match *self {
            TailLaw::TwoSidedPareto { beta, .. } => beta,
            _ => 0.5,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let magnitude = match *self {
            TailLaw::TwoSidedPareto { alpha, scale, .. } => pareto_magnitude(rng, alpha, scale),
            TailLaw::LightPareto { index, scale } => pareto_magnitude(rng, index, scale),
            TailLaw::ShiftedExponential { rate } => 1.0 - (1.0 - rng.random::<f64>()).ln() / rate,
            TailLaw::Zero => return 0.0,
        };
        with_sign(rng, magnitude, self.balance())
    }
}

fn pareto_tail(x: f64, alpha: f64, scale: f64) -> f64 {
    if x < scale {
        1.0
    } else {
        (x / scale).powf(-alpha)
    }
}

/// `scale · U^{-1/α}` with `U` uniform on `(0, 1]`.
pub(crate) fn pareto_magnitude<R: Rng + ?Sized>(rng: &mut R, alpha: f64, scale: f64) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    scale * u.powf(-1.0 / alpha)
}

pub(crate) fn with_sign<R: Rng + ?Sized>(rng: &mut R, magnitude: f64, beta: f64) -> f64 {
    if rng.random::<f64>() < beta {
        magnitude
    } else {
        -magnitude
    }
}

/// Joint law of the displacements given to the heavy-type children of one
/// parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "joint", rename_all = "snake_case")]
pub enum JointLawQ {
    /// Independent coordinates; the limit measure lives on the axes.
    IidAxes { marginal: TailLaw },
    /// `X_i = c_i · Y` for one draw `Y`; the limit measure is the image of
    /// `ν_α` under `y ↦ (c_1 y, c_2 y, …)`.
    DependentRay { marginal: TailLaw, coefficients: Vec<f64> },
}

impl JointLawQ {
    pub fn validate(&self) -> Result<()> {
        self.marginal().validate()?;
        if let JointLawQ::DependentRay { coefficients, .. } = self {
            if coefficients.first() != Some(&1.0) {
                return Err(Error::InvalidParameter("ray coefficients must start with 1".into()));
            }
            if coefficients.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
                return Err(Error::InvalidParameter("ray coefficients must be positive".into()));
            }
            if coefficients.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::InvalidParameter("ray coefficients must be nonincreasing".into()));
            }
        }
        Ok(())
    }

    pub fn marginal(&self) -> &TailLaw {
        match self {
            JointLawQ::IidAxes { marginal } | JointLawQ::DependentRay { marginal, .. } => marginal,
        }
    }

    /// Largest block this law can produce.
    pub fn max_block(&self) -> usize {
        match self {
            JointLawQ::IidAxes { .. } => usize::MAX,
            JointLawQ::DependentRay { coefficients, .. } => coefficients.len(),
        }
    }

    pub fn sample_block_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        match self {
            JointLawQ::IidAxes { marginal } => {
                for x in out.iter_mut() {
                    *x = marginal.sample(rng);
                }
            }
            JointLawQ::DependentRay { marginal, coefficients } => {
                if out.len() > coefficients.len() {
                    return Err(Error::BlockTooLarge {
                        ty: usize::MAX,
                        requested: out.len(),
                        available: coefficients.len(),
                    });
                }
                let y = marginal.sample(rng);
                for (x, c) in out.iter_mut().zip(coefficients) {
                    *x = c * y;
                }
            }
        }
        Ok(())
    }
}

/// Per-type displacement laws. Types `0..Q−1` carry a [`TailLaw`], the heavy
/// type `Q − 1` a [`JointLawQ`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementModel {
    pub light: Vec<TailLaw>,
    pub heavy: JointLawQ,
    /// Declared dominance exponent of the light types.
    pub gamma: f64,
}

impl DisplacementModel {
    pub fn new(light: Vec<TailLaw>, heavy: JointLawQ, gamma: f64) -> Result<Self> {
        for law in &light {
            law.validate()?;
        }
        heavy.validate()?;
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        let model = Self { light, heavy, gamma };
        if model.heavy.marginal().tail_parameters().is_ok() {
            for (p, law) in model.light.iter().enumerate() {
                if !model.dominated(law) {
                    return Err(Error::InvalidModel(format!(
                        "type {p} tail is not dominated by the heavy type"
                    )));
                }
            }
        }
        Ok(model)
    }

    /// Only the heavy type: `Q = 1`.
    pub fn single(heavy: JointLawQ) -> Result<Self> {
        Self::new(Vec::new(), heavy, 1.0)
    }

    pub fn num_types(&self) -> usize {
        self.light.len() + 1
    }

    /// Ratio `F̄_p/F̄_Q` must fall below 1% and keep falling along
    /// `x = scale · 10^k`, `k = 1..=8`.
    fn dominated(&self, law: &TailLaw) -> bool {
        let heavy = self.heavy.marginal();
        let ratios: Vec<f64> = (1..=8)
            .map(|k| {
                let x = heavy.scale().max(1.0) * 10f64.powi(k);
                law.tail_complement(x) / heavy.tail_complement(x)
            })
            .collect();
        ratios.windows(2).all(|w| w[1] <= w[0]) && ratios.last().is_some_and(|&r| r < 0.01)
    }

    /// Fills `out` with the displacements of `out.len()` children of type `ty`.
    pub fn sample_block_into<R: Rng + ?Sized>(&self, ty: usize, rng: &mut R, out: &mut [f64]) -> Result<()> {
        if ty < self.light.len() {
            let law = self.light[ty];
            for x in out.iter_mut() {
                *x = law.sample(rng);
            }
            Ok(())
        } else {
            self.heavy.sample_block_into(rng, out).map_err(|e| match e {
                Error::BlockTooLarge { requested, available, .. } => Error::BlockTooLarge {
                    ty,
                    requested,
                    available,
                },
                other => other,
            })
        }
    }

    pub fn sample_displacement_block<R: Rng + ?Sized>(&self, ty: usize, k: usize, rng: &mut R) -> Result<Vec<f64>> {
        if k == 0 {
            return Err(Error::InvalidParameter("block size must be at least 1".into()));
        }
        let mut out = vec![0.0; k];
        self.sample_block_into(ty, rng, &mut out)?;
        Ok(out)
    }
}

/// `b_n = inf{x ≥ scale : F̄_Q(x) ≤ ρ^{-n}}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingSequence {
    rho: f64,
    law: TailLaw,
}

impl ScalingSequence {
    pub fn new(rho: f64, law: TailLaw) -> Result<Self> {
        if !(rho > 1.0) {
            return Err(Error::InvalidParameter(format!("rho must exceed 1, got {rho}")));
        }
        law.tail_parameters()?;
        Ok(Self { rho, law })
    }

    pub fn bn(&self, n: usize) -> f64 {
        let (index, _) = self.law.tail_parameters().expect("checked at construction");
        self.law.scale() * self.rho.powf(n as f64 / index)
    }
}

pub fn scaling_bn(rho: f64, law: TailLaw, n: usize) -> Result<f64> {
    Ok(ScalingSequence::new(rho, law)?.bn(n))
}

/// `λ(H)` for `H = G_{i_1} × … × G_{i_g} × ℝ × …` with
/// `G_0 = [−∞, a)` and `G_1 = (a, ∞]`.
pub fn limit_rectangle_mass_at(joint: &JointLawQ, pattern: &[bool], cutoff: f64) -> Result<f64> {
    if pattern.is_empty() {
        return Err(Error::InvalidParameter("pattern must have length at least 1".into()));
    }
    if !(cutoff > 0.0) {
        return Err(Error::InvalidParameter(format!("cutoff must be positive, got {cutoff}")));
    }
    let (alpha, beta) = joint.marginal().tail_parameters()?;
    let ones = pattern.iter().filter(|&&b| b).count();
    if ones == 0 {
        // contains a neighbourhood of the origin
        return Ok(f64::INFINITY);
    }
    match joint {
        JointLawQ::IidAxes { .. } => Ok(if ones == 1 { beta * cutoff.powf(-alpha) } else { 0.0 }),
        JointLawQ::DependentRay { coefficients, .. } => {
            if pattern.len() > coefficients.len() {
                return Err(Error::BlockTooLarge {
                    ty: usize::MAX,
                    requested: pattern.len(),
                    available: coefficients.len(),
                });
            }
            // y > 0 is forced by any coordinate above a > 0
            let mut lo: f64 = 0.0;
            let mut hi = f64::INFINITY;
            for (&bit, &c) in pattern.iter().zip(coefficients) {
                let edge = cutoff / c;
                if bit {
                    lo = lo.max(edge);
                } else {
                    hi = hi.min(edge);
                }
            }
            if lo >= hi {
                return Ok(0.0);
            }
            let upper = if hi.is_finite() { hi.powf(-alpha) } else { 0.0 };
            Ok(beta * (lo.powf(-alpha) - upper))
        }
    }
}

pub fn limit_rectangle_mass(joint: &JointLawQ, pattern: &[bool]) -> Result<f64> {
    limit_rectangle_mass_at(joint, pattern, 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationRow {
    pub n: usize,
    pub x: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub ty: usize,
    pub n: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularVariationReport {
    pub rows: Vec<DeviationRow>,
    pub max_deviation: f64,
    pub ratios: Vec<RatioRow>,
}

impl RegularVariationReport {
    /// `n,x,deviation` CSV body.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,x,deviation\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.n, r.x, r.deviation));
        }
        out
    }
}

/// Deviation of `ρ^n F̄_Q(b_n x)` from `x^{-α}` over the grid, and the
/// light-to-heavy tail ratios `F̄_p(b_n)/F̄_Q(b_n)`.
pub fn check_regular_variation(
    model: &DisplacementModel,
    rho: f64,
    n_grid: &[usize],
    x_grid: &[f64],
) -> Result<RegularVariationReport> {
    if n_grid.is_empty() || x_grid.is_empty() {
        return Err(Error::InvalidParameter("grids must be nonempty".into()));
    }
    let law = *model.heavy.marginal();
    let (alpha, _) = law.tail_parameters()?;
    let seq = ScalingSequence::new(rho, law)?;
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for &n in n_grid {
        let bn = seq.bn(n);
        let weight = rho.powf(n as f64);
        for &x in x_grid {
            let deviation = (weight * law.tail_complement(bn * x) - x.powf(-alpha)).abs();
            rows.push(DeviationRow { n, x, deviation });
        }
        for (ty, light) in model.light.iter().enumerate() {
            ratios.push(RatioRow {
                ty,
                n,
                ratio: light.tail_complement(bn) / law.tail_complement(bn),
            });
        }
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(RegularVariationReport {
        rows,
        max_deviation,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pareto(alpha: f64, beta: f64) -> TailLaw {
        TailLaw::TwoSidedPareto { alpha, beta, scale: 1.0 }
    }

    #[test]
    fn tail_complement_examples() {
        assert_relative_eq!(pareto(1.0, 1.0).tail_complement(10.0), 0.1);
        assert_relative_eq!(pareto(2.0, 0.5).tail_complement(2.0), 0.25);
        for law in [
            pareto(1.5, 0.3),
            TailLaw::ShiftedExponential { rate: 2.0 },
            TailLaw::LightPareto { index: 3.0, scale: 2.0 },
        ] {
            assert_eq!(law.tail_complement(0.0), 1.0);
        }
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scaling_bn(2.0, pareto(1.0, 1.0), 10).unwrap(), 1024.0);
        assert_eq!(scaling_bn(2.0, pareto(2.0, 1.0), 10).unwrap(), 32.0);
        assert_eq!(scaling_bn(3.0, TailLaw::TwoSidedPareto { alpha: 0.7, beta: 0.2, scale: 2.5 }, 0).unwrap(), 2.5);
        assert!(scaling_bn(2.0, TailLaw::ShiftedExponential { rate: 1.0 }, 3).is_err());
    }

    #[test]
    fn scaling_identity_and_monotonicity() {
        let law = pareto(1.0, 1.0);
        let seq = ScalingSequence::new(2.0, law).unwrap();
        for n in 0..30 {
            assert_eq!(2f64.powi(n as i32) * law.tail_complement(seq.bn(n)), 1.0);
            assert!(seq.bn(n + 1) >= seq.bn(n));
        }
        let law = TailLaw::TwoSidedPareto { alpha: 1.3, beta: 0.4, scale: 0.7 };
        let seq = ScalingSequence::new(2.5, law).unwrap();
        for n in 0..20 {
            assert_relative_eq!(2.5f64.powi(n as i32) * law.tail_complement(seq.bn(n)), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn ray_block_is_proportional() {
        let joint = JointLawQ::DependentRay {
            marginal: pareto(1.0, 0.5),
            coefficients: vec![1.0, 0.5],
        };
        let model = DisplacementModel::single(joint).unwrap();
        let mut rng = crate::rng::stream(5, 0, crate::rng::Purpose::Test(3));
        for _ in 0..1000 {
            let b = model.sample_displacement_block(0, 2, &mut rng).unwrap();
            assert_eq!(b[1], b[0] * 0.5);
        }
        assert!(matches!(
            model.sample_displacement_block(0, 3, &mut rng),
            Err(Error::BlockTooLarge { requested: 3, available: 2, .. })
        ));
        assert!(model.sample_displacement_block(0, 0, &mut rng).is_err());
    }

    #[test]
    fn iid_exceedance_frequency() {
        let model = DisplacementModel::single(JointLawQ::IidAxes { marginal: pareto(1.0, 1.0) }).unwrap();
        let mut rng = crate::rng::stream(6, 0, crate::rng::Purpose::Test(3));
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| model.sample_displacement_block(0, 1, &mut rng).unwrap()[0] > 10.0)
            .count() as f64;
        let p = 0.1;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn rectangle_mass_examples() {
        let axes = JointLawQ::IidAxes { marginal: pareto(1.0, 1.0) };
        assert_eq!(limit_rectangle_mass(&axes, &[true]).unwrap(), 1.0);
        assert_eq!(limit_rectangle_mass(&axes, &[true, true, false]).unwrap(), 0.0);
        let ray = JointLawQ::DependentRay {
            marginal: pareto(1.0, 1.0),
            coefficients: vec![1.0, 0.5],
        };
        assert_relative_eq!(limit_rectangle_mass(&ray, &[true, false]).unwrap(), 0.5);
        assert_relative_eq!(limit_rectangle_mass(&ray, &[true, true]).unwrap(), 0.5);
        assert_eq!(limit_rectangle_mass(&ray, &[false, true]).unwrap(), 0.0);
        assert!(limit_rectangle_mass(&ray, &[true, true, true]).is_err());
    }

    #[test]
    fn rectangle_mass_scales_homogeneously() {
        let laws = [
            JointLawQ::IidAxes { marginal: pareto(1.5, 0.7) },
            JointLawQ::DependentRay {
                marginal: pareto(1.5, 0.7),
                coefficients: vec![1.0, 0.6, 0.6, 0.2],
            },
        ];
        for joint in &laws {
            for a in [0.5, 2.0, 4.0] {
                for bits in 1u32..16 {
                    let pattern: Vec<bool> = (0..4).map(|j| bits >> j & 1 == 1).collect();
                    let unscaled = limit_rectangle_mass(joint, &pattern).unwrap();
                    let scaled = limit_rectangle_mass_at(joint, &pattern, a).unwrap();
                    assert_relative_eq!(scaled, a.powf(-1.5) * unscaled, max_relative = 1e-12, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn regular_variation_report() {
        let model = DisplacementModel::new(
            vec![TailLaw::LightPareto { index: 2.0, scale: 1.0 }],
            JointLawQ::IidAxes { marginal: pareto(1.0, 1.0) },
            1.0,
        )
        .unwrap();
        let report = check_regular_variation(&model, 2.0, &[4, 8, 12], &[0.5, 1.0, 3.0]).unwrap();
        assert!(report.max_deviation < 1e-12);
        // closed form: F̄_p(b_n)/F̄_Q(b_n) = b_n^{-γ} = ρ^{-nγ/α}
        for r in &report.ratios {
            assert_relative_eq!(r.ratio, 2f64.powf(-(r.n as f64)), max_relative = 1e-12);
        }
        let single = DisplacementModel::single(JointLawQ::IidAxes { marginal: pareto(1.0, 1.0) }).unwrap();
        let report = check_regular_variation(&single, 2.0, &[4], &[1.0]).unwrap();
        assert!(report.ratios.is_empty());
        assert!(report.to_csv().starts_with("n,x,deviation\n"));
    }

    #[test]
    fn undominated_light_type_is_rejected() {
        let r = DisplacementModel::new(
            vec![pareto(0.5, 0.5)],
            JointLawQ::IidAxes { marginal: pareto(1.0, 1.0) },
            1.0,
        );
        assert!(r.is_err());
    }
}
