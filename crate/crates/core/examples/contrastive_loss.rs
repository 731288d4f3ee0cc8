//! The supervised contrastive loss and its gradient on a hand-made
//! similarity matrix, under both positive-count conventions.
//!
//! cargo run --example contrastive_loss

use nested_entail::contrastive::{build_positive_mask, scl_loss_and_gradient, Matrix, PCountConvention, SclParams};

fn main() -> nested_entail::Result<()> {
    // Rows are queries, columns are (premise, hypothesis) pairs.
    let s = Matrix::from_rows(vec![
        vec![0.9, 0.8, 0.1, -0.2],
        vec![0.7, 0.9, 0.0, 0.1],
        vec![0.0, 0.2, 0.8, 0.6],
        vec![-0.1, 0.1, 0.7, 0.9],
    ]);
    let mask = build_positive_mask(&["sports", "sports", "food", "food"]);

    for p_count in [PCountConvention::Literal, PCountConvention::ExcludeSelf] {
        for temperature in [0.07, 1.0] {
            let params = SclParams { temperature, p_count };
            let (loss, grad) = scl_loss_and_gradient(&s, &mask, &params)?;
            println!("{p_count:?}, tau = {temperature}: loss = {loss:.6}");
            for i in 0..grad.rows {
                let row: Vec<String> = grad.row(i).iter().map(|g| format!("{g:+8.4}")).collect();
                println!("  dL/dS[{i}] = {}", row.join(" "));
            }
        }
    }
    Ok(())
}
