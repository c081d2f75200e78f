use crate::{Error, Result, Scalar};

pub(super) fn huber<T: Scalar>(d: T, beta: T) -> T {
    let abs = d.abs();
    if abs < beta {
        T::lit(0.5) * d * d / beta
    } else {
        abs - T::lit(0.5) * beta
    }
}

/// Derivative of the per-element Smooth-L1 term with respect to `d`.
pub fn smooth_l1_grad<T: Scalar>(d: T, beta: T) -> T {
    if d.abs() < beta {
        d / beta
    } else {
        d.signum()
    }
}

/// Mean Smooth-L1 (Huber) loss over all elements.
pub fn smooth_l1<T: Scalar>(pred: &[T], target: &[T], beta: T) -> Result<T> {
    if pred.len() != target.len() {
        return Err(Error::InvalidArgument(format!(
            "smooth_l1 length mismatch: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    if beta.is_nan() || beta <= T::zero() {
        return Err(Error::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("smooth_l1 of zero elements"));
    }
    let total: T = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| huber(p - t, beta))
        .sum();
    Ok(total / T::from_usize(pred.len()).expect("length fits scalar"))
}

/// Coefficient of determination, uniformly averaged over both dimensions.
pub fn r_squared<T: Scalar>(preds: &[[T; 2]], targets: &[[T; 2]]) -> Result<T> {
    if preds.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "r_squared length mismatch: {} vs {}",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("r_squared of zero samples"));
    }
    let n = T::from_usize(preds.len()).expect("length fits scalar");
    let mut total = T::zero();
    for d in 0..2 {
        let mean = targets.iter().map(|t| t[d]).sum::<T>() / n;
        let ss_tot: T = targets.iter().map(|t| (t[d] - mean).powi(2)).sum();
        let ss_res: T = preds
            .iter()
            .zip(targets)
            .map(|(p, t)| (t[d] - p[d]).powi(2))
            .sum();
        total += if ss_tot == T::zero() {
            if ss_res == T::zero() {
                T::one()
            } else {
                T::zero()
            }
        } else {
            T::one() - ss_res / ss_tot
        };
    }
    Ok(total / T::lit(2.0))
}
