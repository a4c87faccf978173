/// Result of comparing analytic gradients against central finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Flat index of the worst parameter coordinate.
    pub worst_index: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compare `analytic` against central finite differences of `eval` around
/// `theta`, coordinate by coordinate.
///
/// The error is relative (|a - fd| / max(|a|, |fd|)) when either side is
/// appreciable, absolute otherwise; this keeps near-zero gradients from
/// producing spurious relative blowups in f32.
pub fn grad_check<F>(
    theta: &[f32],
    analytic: &[f32],
    mut eval: F,
    tolerance: f64,
) -> GradCheckReport
where
    F: FnMut(&[f32]) -> f64,
{
    assert_eq!(theta.len(), analytic.len());
    let step = 1e-3f64;
    let mut max_rel_err = 0.0f64;
    let mut worst_index = 0usize;
    let mut perturbed = theta.to_vec();
    for i in 0..theta.len() {
        let orig = theta[i] as f64;
        let h = step * orig.abs().max(1.0);
        perturbed[i] = (orig + h) as f32;
        let plus = eval(&perturbed);
        perturbed[i] = (orig - h) as f32;
        let minus = eval(&perturbed);
        perturbed[i] = theta[i];
        // use the actually-realized f32 step
        let h_real = ((orig + h) as f32 as f64 - (orig - h) as f32 as f64) / 2.0;
        let fd = (plus - minus) / (2.0 * h_real);
        let a = analytic[i] as f64;
        let denom = a.abs().max(fd.abs());
        let err = if denom > 1e-3 {
            (a - fd).abs() / denom
        } else {
            (a - fd).abs()
        };
        if err > max_rel_err {
            max_rel_err = err;
            worst_index = i;
        }
    }
    GradCheckReport {
        max_rel_err,
        worst_index,
        tolerance,
        pass: max_rel_err < tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp};
    use crate::rng::Rng;

    fn flat_params(mlp: &Mlp) -> Vec<f32> {
        mlp.param_tensors()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    fn set_flat_params(mlp: &mut Mlp, flat: &[f32]) {
        let mut off = 0;
        for t in mlp.param_tensors_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len());
    }

    // f64 reference loss: FD differences stay above f64 rounding even at
    // step 1e-3, while the analytic side is still the production f32 backward
    fn scalar_head_loss(mlp: &Mlp, input: &[f32]) -> f64 {
        let input_f64: Vec<f64> = input.iter().map(|&x| x as f64).collect();
        mlp.forward_f64(&input_f64).unwrap().iter().sum()
    }

    fn analytic_grads(mlp: &Mlp, input: &[f32]) -> Vec<f32> {
        let (out, cache) = mlp.forward(input, 1).unwrap();
        let upstream = vec![1.0f32; out.len()];
        let (_, grads) = mlp.backward(&cache, &upstream).unwrap();
        grads
            .iter()
            .flat_map(|(dw, db)| dw.data().iter().chain(db.data()).copied())
            .collect()
    }

    #[test]
    fn linear_network_nearly_exact() {
        let mut rng = Rng::seed_from_u64(17);
        let mlp = Mlp::init(&[(5, 3, None)], &mut rng);
        let input: Vec<f32> = (0..5).map(|_| rng.next_f32() - 0.5).collect();
        let theta = flat_params(&mlp);
        let analytic = analytic_grads(&mlp, &input);
        let report = grad_check(
            &theta,
            &analytic,
            |p| {
                let mut m = mlp.clone();
                set_flat_params(&mut m, p);
                scalar_head_loss(&m, &input)
            },
            1e-6,
        );
        assert!(report.pass, "max err {}", report.max_rel_err);
    }

    #[test]
    fn two_layer_tanh_network() {
        let mut rng = Rng::seed_from_u64(18);
        let mlp = Mlp::init(
            &[(8, 5, Some(Activation::Tanh)), (5, 1, Some(Activation::Tanh))],
            &mut rng,
        );
        let input: Vec<f32> = (0..8).map(|_| rng.next_f32() * 2.0 - 1.0).collect();
        let theta = flat_params(&mlp);
        let analytic = analytic_grads(&mlp, &input);
        let report = grad_check(
            &theta,
            &analytic,
            |p| {
                let mut m = mlp.clone();
                set_flat_params(&mut m, p);
                scalar_head_loss(&m, &input)
            },
            1e-3,
        );
        assert!(report.pass, "max err {}", report.max_rel_err);
        assert!(report.worst_index < theta.len());
    }

    #[test]
    fn random_dense_layers_pass() {
        // 20 random configurations per layer type
        for seed in 0..20u64 {
            let mut rng = Rng::seed_from_u64(1000 + seed);
            let act = match seed % 3 {
                0 => None,
                1 => Some(Activation::Tanh),
                _ => Some(Activation::LeakyRelu),
            };
            let ins = 2 + (seed % 7) as usize;
            let outs = 1 + (seed % 5) as usize;
            let mlp = Mlp::init(&[(ins, outs, act)], &mut rng);
            let input: Vec<f32> = (0..ins).map(|_| rng.next_f32() * 2.0 - 1.0).collect();
            let theta = flat_params(&mlp);
            let analytic = analytic_grads(&mlp, &input);
            let report = grad_check(
                &theta,
                &analytic,
                |p| {
                    let mut m = mlp.clone();
                    set_flat_params(&mut m, p);
                    scalar_head_loss(&m, &input)
                },
                1e-3,
            );
            assert!(report.pass, "seed {seed}: max err {}", report.max_rel_err);
        }
    }
}
