//! Reconstructs demand from a constant-elasticity field by line integration,
//! then contrasts closure and path independence with a non-integrable field.

use demand_surface::field::{closure_residual, integrate_line, path_independence_gap, ConstantElasticityModel, FnField, PricePath};
use ndarray::Array2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = ConstantElasticityModel::new(
        vec![-2.0, -1.5],
        vec![vec![0.0, 0.3], vec![0.2, 0.0]],
        vec![1.0, 2.0],
        vec![100.0, 50.0],
    )?;
    let from = [0.0, 2f64.ln()];
    let to = [0.2, 0.5];
    let path = PricePath::straight(&from, &to)?;
    for i in 0..2 {
        let v0 = model.demand(&from.map(f64::exp), i)?;
        let integrated = integrate_line(&model, i, &path, v0, 8)?;
        let closed = model.demand(&to.map(f64::exp), i)?;
        println!("product {i}: integrated {integrated:.10}, closed form {closed:.10}");
        println!("  closure residual {:.2e}", closure_residual(&model, &from, i, 1e-3)?);
    }

    // row 0 responds to product 1 with a slope that depends on product 2's price
    let twisted = FnField::new(3, |u: &[f64]| {
        let mut m = Array2::zeros((3, 3));
        for i in 0..3 {
            m[[i, i]] = -1.0;
        }
        m[[0, 1]] = u[2];
        m
    });
    let u0 = [0.0, 0.0, 0.0];
    let u1 = [0.5, 0.5, 0.5];
    println!("twisted field: closure residual {:.3}", closure_residual(&twisted, &u0, 0, 1e-3)?);
    println!("twisted field: path gap {:.4}", path_independence_gap(&twisted, 0, &u0, &u1, 1.0)?);
    Ok(())
}
