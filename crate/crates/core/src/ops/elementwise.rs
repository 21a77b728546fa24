//! Pointwise binary/unary ops. Operands must have identical shapes; the only
//! broadcast is tensor↔scalar via the `*_scalar` variants.

use super::{finish, unify_tape};
use crate::element::Element;
use crate::error::CoreError;
use crate::tensor::Tensor;
use crate::Result;

/// Pointwise binary operator selector for [`elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Dispatches a pointwise binary op by tag.
pub fn elementwise<T: Element>(op: BinaryOp, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    match op {
        BinaryOp::Add => add(a, b),
        BinaryOp::Sub => sub(a, b),
        BinaryOp::Mul => mul(a, b),
        BinaryOp::Div => div(a, b),
    }
}

fn check_same_shape<T: Element>(context: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(CoreError::shape(
            context,
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(())
}

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("add", a, b)?;
    let tape = unify_tape(&[a, b])?;
    let data: Vec<T> = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    let out = Tensor::from_vec(a.shape().to_vec(), data)?;
    Ok(finish(tape, out, || {
        let (an, bn) = (a.node(), b.node());
        Box::new(move |gy| {
            let mut grads = Vec::new();
            if let Some(an) = an {
                grads.push((an, gy.to_vec()));
            }
            if let Some(bn) = bn {
                grads.push((bn, gy.to_vec()));
            }
            grads
        })
    }))
}

pub fn sub<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("sub", a, b)?;
    let tape = unify_tape(&[a, b])?;
    let data: Vec<T> = a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect();
    let out = Tensor::from_vec(a.shape().to_vec(), data)?;
    Ok(finish(tape, out, || {
        let (an, bn) = (a.node(), b.node());
        Box::new(move |gy| {
            let mut grads = Vec::new();
            if let Some(an) = an {
                grads.push((an, gy.to_vec()));
            }
            if let Some(bn) = bn {
                grads.push((bn, gy.iter().map(|&g| -g).collect()));
            }
            grads
        })
    }))
}

pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("mul", a, b)?;
    let tape = unify_tape(&[a, b])?;
    let data: Vec<T> = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    let out = Tensor::from_vec(a.shape().to_vec(), data)?;
    Ok(finish(tape, out, || {
        let (an, bn) = (a.node(), b.node());
        let (ad, bd) = (a.buffer(), b.buffer());
        Box::new(move |gy| {
            let mut grads = Vec::new();
            if let Some(an) = an {
                grads.push((an, gy.iter().zip(bd.iter()).map(|(&g, &y)| g * y).collect()));
            }
            if let Some(bn) = bn {
                grads.push((bn, gy.iter().zip(ad.iter()).map(|(&g, &x)| g * x).collect()));
            }
            grads
        })
    }))
}

pub fn div<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("div", a, b)?;
    let tape = unify_tape(&[a, b])?;
    let data: Vec<T> = a.data().iter().zip(b.data()).map(|(&x, &y)| x / y).collect();
    let out = Tensor::from_vec(a.shape().to_vec(), data)?;
    Ok(finish(tape, out, || {
        let (an, bn) = (a.node(), b.node());
        let (ad, bd) = (a.buffer(), b.buffer());
        Box::new(move |gy| {
            let mut grads = Vec::new();
            if let Some(an) = an {
                grads.push((an, gy.iter().zip(bd.iter()).map(|(&g, &y)| g / y).collect()));
            }
            if let Some(bn) = bn {
                let g: Vec<T> = gy
                    .iter()
                    .zip(ad.iter().zip(bd.iter()))
                    .map(|(&g, (&x, &y))| -g * x / (y * y))
                    .collect();
                grads.push((bn, g));
            }
            grads
        })
    }))
}

pub fn add_scalar<T: Element>(a: &Tensor<T>, s: f64) -> Result<Tensor<T>> {
    let tape = unify_tape(&[a])?;
    let sv = T::from_f64(s);
    let data: Vec<T> = a.data().iter().map(|&x| x + sv).collect();
    let out = Tensor::from_vec(a.shape().to_vec(), data)?;
    Ok(finish(tape, out, || {
        let an = a.node().expect("tracked input");
        Box::new(move |gy| vec![(an, gy.to_vec())])
    }))
}

pub fn mul_scalar<T: Element>(a: &Tensor<T>, s: f64) -> Result<Tensor<T>> {
    let tape = unify_tape(&[a])?;
    let sv = T::from_f64(s);
    let data: Vec<T> = a.data().iter().map(|&x| x * sv).collect();
    let out = Tensor::from_vec(a.shape().to_vec(), data)?;
    Ok(finish(tape, out, || {
        let an = a.node().expect("tracked input");
        Box::new(move |gy| vec![(an, gy.iter().map(|&g| g * sv).collect())])
    }))
}

pub fn neg<T: Element>(a: &Tensor<T>) -> Result<Tensor<T>> {
    mul_scalar(a, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{backward, Tape};

    fn t(v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(vec![v.len()], v).unwrap()
    }

    #[test]
    fn forward_values() {
        let a = t(vec![1.0, 2.0, 3.0]);
        let b = t(vec![4.0, 0.5, -1.0]);
        assert_eq!(add(&a, &b).unwrap().data(), &[5.0, 2.5, 2.0]);
        assert_eq!(sub(&a, &b).unwrap().data(), &[-3.0, 1.5, 4.0]);
        assert_eq!(mul(&a, &b).unwrap().data(), &[4.0, 1.0, -3.0]);
        assert_eq!(div(&a, &b).unwrap().data(), &[0.25, 4.0, -3.0]);
        assert_eq!(add_scalar(&a, 1.0).unwrap().data(), &[2.0, 3.0, 4.0]);
        assert_eq!(mul_scalar(&a, -2.0).unwrap().data(), &[-2.0, -4.0, -6.0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = t(vec![1.0, 2.0]);
        let b = t(vec![1.0, 2.0, 3.0]);
        for op in [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div] {
            assert!(elementwise(op, &a, &b).is_err());
        }
    }

    #[test]
    fn div_gradients() {
        // loss = sum(a / b): da = 1/b, db = -a/b^2.
        let tape = Tape::new();
        let a = tape.leaf(&t(vec![1.0, -2.0]));
        let b = tape.leaf(&t(vec![2.0, 4.0]));
        let loss = crate::ops::sum_all(&div(&a, &b).unwrap()).unwrap();
        let grads = backward(&tape, &loss).unwrap();
        assert_eq!(grads.of(&a).unwrap(), &[0.5, 0.25]);
        assert_eq!(grads.of(&b).unwrap(), &[-0.25, 0.125]);
    }

    #[test]
    fn untracked_operand_gets_no_gradient() {
        let tape = Tape::new();
        let a = tape.leaf(&t(vec![2.0]));
        let c = t(vec![5.0]); // constant
        let loss = mul(&a, &c).unwrap();
        let grads = backward(&tape, &loss).unwrap();
        assert_eq!(grads.of(&a).unwrap(), &[5.0]);
        assert!(grads.of(&c).is_none());
    }
}
