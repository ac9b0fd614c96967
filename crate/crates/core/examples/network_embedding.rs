//! Embedding a stack of symmetric networks with a planted low-rank structure,
//! then classifying held-out subjects from their embedding.

use mvkit::bne::{one_hot, relative_error, tbne_embed_predict, tbne_fit, BneConfig, GuidanceKernel};
use mvkit::dataio::synth::synth_planted_tensor;
use mvkit::numkit::stiefel::feasibility_error;
use mvkit::tensor::{PartiallySymmetricTensor3, Tensor3};
use mvkit::Result;

fn main() -> Result<()> {
    let (x, s_true, _) = synth_planted_tensor(11, 10, 30, 3, 0.02);
    let labels: Vec<usize> = (0..30).map(|t| usize::from(s_true[(t, 1)] >= 0.0)).collect();

    // labeled subjects must come first; here every third subject is held out
    let mut order: Vec<usize> = (0..30).filter(|t| t % 3 != 0).collect();
    let labeled = order.len();
    order.extend((0..30).filter(|t| t % 3 == 0));
    let t = Tensor3::from_fn([10, 10, 30], |i, j, s| x.tensor().get(i, j, order[s]))?;
    let x = PartiallySymmetricTensor3::new(t)?;

    let y = one_hot(&order[..labeled].iter().map(|&s| labels[s]).collect::<Vec<_>>(), 2)?;
    let cfg = BneConfig { rank: 3, ..BneConfig::default() };
    let model = tbne_fit(&x, &GuidanceKernel::none(30), &y, &cfg)?;
    println!(
        "{} iterations, converged {}, relative error {:.4}, orthogonality error {:.1e}",
        model.iterations,
        model.converged,
        relative_error(&model, &x)?,
        feasibility_error(&model.s)
    );

    let held_out: Vec<usize> = (labeled..30).collect();
    let (_, pred) = tbne_embed_predict(&model, &held_out)?;
    let hits = held_out.iter().zip(&pred).filter(|(&r, &p)| p == labels[order[r]] as f64).count();
    println!("held-out accuracy {hits}/{}", held_out.len());
    Ok(())
}
