//! Central finite-difference checks of the reverse pass, run in `f64`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::softmax_xent;
use super::network::Network;
use super::tensor::Tensor3;
use crate::error::Result;

/// Gradients below this magnitude are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

impl GradCheckReport {
    fn new() -> Self {
        Self {
            checked: 0,
            max_rel_error: 0.0,
            worst: String::new(),
        }
    }

    fn record(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = format!("{}: analytic {analytic:.6e} numeric {numeric:.6e}", what());
        }
    }

    pub fn merge(mut self, other: GradCheckReport) -> Self {
        self.checked += other.checked;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Train-mode loss with the dropout stream reset to `mask_seed`, so every
/// evaluation sees the same mask.
fn loss_at(
    net: &mut Network<f64>,
    x: &Tensor3<f64>,
    labels: &[usize],
    mask_seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    let logits = net.forward_train(x.clone(), &mut rng)?;
    net.zero_grads();
    Ok(softmax_xent(&logits, labels)?.loss)
}

/// Compares analytic parameter gradients with central differences of step
/// `step`. Checks every entry when `max_checks` is `None`, otherwise a
/// uniform sample of that many entries drawn from `pick_seed`.
pub fn check_param_gradients(
    net: &mut Network<f64>,
    x: &Tensor3<f64>,
    labels: &[usize],
    step: f64,
    max_checks: Option<usize>,
    pick_seed: u64,
) -> Result<GradCheckReport> {
    let mask_seed = 0x5eed;
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    net.loss_and_grad(x.clone(), labels, &mut rng)?;
    let analytic: Vec<Vec<f64>> = net.params().map(|p| p.grad.clone()).collect();

    let entries: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(pi, g)| (0..g.len()).map(move |k| (pi, k)))
        .collect();
    let chosen: Vec<(usize, usize)> = match max_checks {
        Some(n) if n < entries.len() => {
            let mut pick = ChaCha8Rng::seed_from_u64(pick_seed);
            sample(&mut pick, entries.len(), n)
                .into_iter()
                .map(|i| entries[i])
                .collect()
        }
        _ => entries,
    };

    let mut report = GradCheckReport::new();
    for (pi, k) in chosen {
        let orig = net.params().nth(pi).unwrap().value[k];
        let set = |net: &mut Network<f64>, v: f64| net.params_mut().nth(pi).unwrap().value[k] = v;
        set(net, orig + step);
        let plus = loss_at(net, x, labels, mask_seed)?;
        set(net, orig - step);
        let minus = loss_at(net, x, labels, mask_seed)?;
        set(net, orig);
        let numeric = (plus - minus) / (2.0 * step);
        let name = net.params().nth(pi).unwrap().name.clone();
        report.record(|| format!("{name}[{k}]"), analytic[pi][k], numeric);
    }
    Ok(report)
}

/// Same check for the gradient with respect to the network input.
pub fn check_input_gradients(
    net: &mut Network<f64>,
    x: &Tensor3<f64>,
    labels: &[usize],
    step: f64,
) -> Result<GradCheckReport> {
    let mask_seed = 0x5eed;
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    net.zero_grads();
    let logits = net.forward_train(x.clone(), &mut rng)?;
    let out = softmax_xent(&logits, labels)?;
    let dx = net.backward(out.dlogits)?;

    let mut report = GradCheckReport::new();
    for k in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[k] += step;
        let plus = loss_at(net, &xp, labels, mask_seed)?;
        xp.data_mut()[k] -= 2.0 * step;
        let minus = loss_at(net, &xp, labels, mask_seed)?;
        report.record(
            || format!("input[{k}]"),
            dx.data()[k],
            (plus - minus) / (2.0 * step),
        );
    }
    Ok(report)
}
