//! Unfoldings, Khatri-Rao products and CP composition on a small tensor.

use mvkit::tensor::{cp_compose, inner_product, khatri_rao, matricize, outer_product, refold, Mode, Tensor3};
use mvkit::{Matrix, Result};

fn main() -> Result<()> {
    let t = Tensor3::from_fn([2, 3, 4], |i, j, k| (i + 10 * j + 100 * k) as f64)?;
    for mode in [Mode::One, Mode::Two, Mode::Three] {
        let m = matricize(&t, mode);
        assert_eq!(refold(&m, mode, t.dims())?, t);
        println!("{mode:?} unfolding is {}x{}", m.nrows(), m.ncols());
    }

    // <a∘b∘c, x∘y∘z> = <a,x><b,y><c,z>
    let r1 = outer_product(&[1.0, 2.0], &[0.5, -1.0, 2.0], &[1.0, 1.0, 0.0, 3.0])?;
    let r2 = outer_product(&[3.0, -1.0], &[1.0, 1.0, 1.0], &[2.0, 0.0, 1.0, 1.0])?;
    println!("rank-one inner product {} (factor product {})", inner_product(&r1, &r2)?, 1.0 * 1.5 * 5.0);

    let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let b = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let kr = khatri_rao(&a, &b)?;
    println!("Khatri-Rao product is {}x{}", kr.nrows(), kr.ncols());

    let c = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
    let cp = cp_compose(&a, &b, &c)?;
    // mode-1 unfolding of [[A,B,C]] is A (C ⊙ B)^T
    let unfolded = &a * khatri_rao(&c, &b)?.transpose();
    println!("CP unfolding error {:.2e}", (matricize(&cp, Mode::One) - unfolded).norm());
    Ok(())
}
