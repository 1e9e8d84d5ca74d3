use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// Hyperparameters of one AdamW update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moments, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Number of completed steps.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }
}

/// One AdamW step with decoupled weight decay. The decay factor is applied
/// before the moment update, so a zero gradient on fresh state yields exactly
/// `θ·(1 − lr·wd)`. Gradients are checked for finiteness before anything is
/// modified; `names` labels the offending tensor in the error.
pub fn adamw_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    names: &[String],
    state: &mut AdamState,
    opt: &AdamW,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidArgument(format!(
            "{} parameters, {} gradients, {} optimizer slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape("adamw_step", p.shape(), g.shape()));
        }
        if !g.is_finite() {
            let name = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
            return Err(Error::NonFiniteGradient(name));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    let decay = 1.0 - opt.lr * opt.weight_decay;
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((theta, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
            *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta = *theta * decay - opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
        }
    }
    Ok(())
}

/// Cosine-annealed learning rate, `lr0` at step 0 and 0 at `total`.
pub fn cosine_lr(step: usize, total: usize, lr0: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let frac = step.min(total) as f64 / total as f64;
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opt(lr: f64, wd: f64) -> AdamW {
        AdamW {
            lr,
            weight_decay: wd,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_gradient_only_decays() {
        let theta = vec![1.5, -2.0, 0.25, 3.0];
        let mut params = vec![Tensor::matrix(2, 2, theta.clone()).unwrap()];
        let grads = vec![Tensor::zeros(vec![2, 2])];
        let mut state = AdamState::new(&params);
        let o = opt(1e-3, 5e-4);
        adamw_step(&mut params, &grads, &names(1), &mut state, &o).unwrap();
        for (got, t) in params[0].data().iter().zip(&theta) {
            assert_eq!(*got, t * (1.0 - 1e-3 * 5e-4));
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // m̂ = c and v̂ = c² after one step, so the update is lr·c/(|c| + eps).
        for c in [3.0, -0.02, 1e-2, -7.5] {
            let mut params = vec![Tensor::matrix(1, 1, vec![0.5]).unwrap()];
            let grads = vec![Tensor::matrix(1, 1, vec![c]).unwrap()];
            let mut state = AdamState::new(&params);
            adamw_step(&mut params, &grads, &names(1), &mut state, &opt(1e-3, 0.0)).unwrap();
            let step = params[0].data()[0] - 0.5;
            let expected = -1e-3 * c / (c.abs() + 1e-8);
            assert!((step - expected).abs() < 1e-15, "c={c}: {step} vs {expected}");
            assert!((step + 1e-3 * c.signum()).abs() < 1e-3 * 1e-8 / c.abs() + 1e-15);
        }
    }

    #[test]
    fn identical_inputs_update_identically() {
        let mut params = vec![Tensor::matrix(1, 3, vec![0.7; 3]).unwrap(), Tensor::matrix(1, 3, vec![0.7; 3]).unwrap()];
        let g = Tensor::matrix(1, 3, vec![0.1, -0.3, 2.0]).unwrap();
        let grads = vec![g.clone(), g];
        let mut state = AdamState::new(&params);
        for _ in 0..5 {
            adamw_step(&mut params, &grads, &names(2), &mut state, &opt(1e-2, 1e-2)).unwrap();
        }
        assert_eq!(params[0], params[1]);
    }

    #[test]
    fn non_finite_gradient_names_tensor_and_leaves_params() {
        let mut params = vec![Tensor::zeros(vec![2]), Tensor::zeros(vec![3])];
        let grads = vec![Tensor::zeros(vec![2]), Tensor::new(vec![3], vec![0.0, f64::NAN, 1.0]).unwrap()];
        let mut state = AdamState::new(&params);
        let before = params.clone();
        let err = adamw_step(&mut params, &grads, &["a".into(), "gat1.head0.att".into()], &mut state, &opt(1e-3, 0.0))
            .unwrap_err();
        assert!(matches!(&err, Error::NonFiniteGradient(n) if n == "gat1.head0.att"), "{err}");
        assert_eq!(params, before);
        assert_eq!(state.t, 0);
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 0.1), 0.1);
        assert!(cosine_lr(100, 100, 0.1).abs() < 1e-17);
        assert!((cosine_lr(50, 100, 0.1) - 0.05).abs() < 1e-17);
        assert!(cosine_lr(30, 100, 0.1) > cosine_lr(31, 100, 0.1));
    }

    proptest! {
        #[test]
        fn first_step_sign_is_scale_invariant(
            g in prop::collection::vec(-10.0f64..10.0, 1..20),
            scale in 0.01f64..100.0,
        ) {
            prop_assume!(g.iter().all(|v| v.abs() > 1e-3));
            let run = |s: f64| {
                let n = g.len();
                let mut params = vec![Tensor::zeros(vec![n])];
                let grads = vec![Tensor::new(vec![n], g.iter().map(|v| v * s).collect()).unwrap()];
                let mut state = AdamState::new(&params);
                adamw_step(&mut params, &grads, &names(1), &mut state, &opt(1e-3, 0.0)).unwrap();
                params[0].data().iter().map(|v| v.signum()).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(1.0), run(scale));
        }
    }
}
