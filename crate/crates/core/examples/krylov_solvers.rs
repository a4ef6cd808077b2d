//! GMRES, the coupled-basis FOM and CG on a small SPD system.

use nalgebra::DMatrix;
use wc4dvar::krylov::{cg, fom_left, gmres_left, SolverControls};
use wc4dvar::linalg::{dot, max_abs_diff};

fn main() -> wc4dvar::Result<()> {
    // 1D Laplacian plus a diagonal shift.
    let n = 8;
    let a = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 2.5 + i as f64 * 0.1,
        1 => -1.0,
        _ => 0.0,
    });
    let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
    let matvec = |v: &[f64]| Ok((&a * DMatrix::from_column_slice(n, 1, v)).as_slice().to_vec());
    let exact = a.clone().cholesky().unwrap().solve(&DMatrix::from_column_slice(n, 1, &b));

    let controls = SolverControls { record_iterates: true, ..SolverControls::with_max_iterations(n) };
    let (x_fom, trace) = fom_left(matvec, |v: &[f64]| Ok(v.to_vec()), &b, &controls, None)?;
    println!("FOM: {} iterations, termination {}", trace.iterations(), trace.termination.as_str());
    for (k, (x, q)) in trace.iterates.iter().zip(trace.q_values.iter().skip(1)).enumerate() {
        let ax = matvec(x)?;
        let recomputed = 0.5 * dot(x, &ax) - dot(&b, x);
        let cg_k = cg(matvec, &b, k + 1)?;
        println!(
            "  k={:>2}  q_k={:+.10}  recomputed={:+.10}  |x_fom - x_cg|={:.1e}",
            k + 1,
            q.unwrap(),
            recomputed,
            max_abs_diff(x, &cg_k)
        );
    }
    println!("FOM error vs dense solve {:.1e}", max_abs_diff(&x_fom, exact.as_slice()));

    let (x_gm, trace) = gmres_left(matvec, |v: &[f64]| Ok(v.to_vec()), &b, &SolverControls::with_max_iterations(n), None)?;
    let norms: Vec<String> = trace.residual_norms.iter().map(|r| format!("{r:.1e}")).collect();
    println!("GMRES residuals {}", norms.join(" "));
    println!("GMRES error vs dense solve {:.1e}", max_abs_diff(&x_gm, exact.as_slice()));
    Ok(())
}
