//! Builds a small network on the autodiff tape, compares one backprop
//! gradient with a central difference, then runs the generic checker over a
//! strided convolution.

use faceage::tensor::{central_difference, grad_check, ops, GradCheckInput};
use faceage::{Graph, Result, Tensor};

fn loss(t: &[Tensor]) -> Result<f64> {
    let h = ops::relu(&ops::matmul(&t[0], &t[1])?);
    let p = ops::softmax(&ops::matmul(&h, &t[2])?);
    Ok(ops::cross_entropy_loss(&p, &[1, 0])?.data()[0] as f64)
}

fn main() -> Result<()> {
    let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.5])?;
    let w1 = Tensor::new(vec![3, 4], (0..12).map(|i| (i as f32 * 0.37).sin()).collect())?;
    let w2 = Tensor::new(vec![4, 2], (0..8).map(|i| (i as f32 * 0.71).cos()).collect())?;

    let mut g = Graph::new();
    let (xv, w1v, w2v) = (g.constant(x.clone()), g.param(w1.clone()), g.param(w2.clone()));
    let h = g.matmul(xv, w1v)?;
    let h = g.relu(h);
    let logits = g.matmul(h, w2v)?;
    let p = g.softmax(logits);
    let l = g.cross_entropy_loss(p, &[1, 0])?;
    g.backward(l)?;
    println!("loss {:.6} from a tape of {} nodes", g.value(l).data()[0], g.len());

    let mut points = [x, w1, w2];
    for elem in [0, 5, 11] {
        let analytic = g.grad(w1v).expect("w1 is a parameter").data()[elem];
        let numeric = central_difference(loss, &mut points, 1, elem)?;
        println!("dL/dw1[{elem:>2}]  backprop {analytic:>10.6}  central difference {numeric:>10.6}");
    }

    let err = grad_check(
        |g, v| g.conv2d(v[0], v[1], v[2], 2, 1),
        &[
            GradCheckInput::Range(vec![2, 3, 9, 9], 0.5, 1.5),
            GradCheckInput::Range(vec![4, 3, 3, 3], 0.5, 1.5),
            GradCheckInput::Range(vec![4], 0.5, 1.5),
        ],
        1,
    )?;
    println!("conv2d (stride 2, padding 1): worst relative error {err:.2e}");
    Ok(())
}
