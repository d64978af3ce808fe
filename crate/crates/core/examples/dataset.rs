//! Generate a synthetic binary-classification set, normalize it and round-trip it through LIBSVM text.

use tunefree::dataset::{generate_synthetic, parse_libsvm_str, to_libsvm_string};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(8, 4, 42, 2.0)?.normalize_rows()?.with_bias_column();
    let text = to_libsvm_string(&data);
    print!("{text}");

    let back = parse_libsvm_str(&text, Some(data.dim()))?;
    assert_eq!(back, data);
    println!("n = {}, dim = {}, nnz = {}, max ‖a_i‖² = {:.3}", back.n(), back.dim(), back.nnz(), back.max_row_sq_norm());
    Ok(())
}
