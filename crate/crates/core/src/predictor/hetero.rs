//! Diagonal heteroscedastic Gaussian likelihood.

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::grid::Vec3;
use crate::special::LN_2PI;

/// `1/2 sum_c [lv_c + r_c^2 exp(-lv_c) + ln 2 pi]` with `r = x_gt - mean`.
pub fn hetero_loss(mean: &Vec3, log_var: &Vec3, x_gt: &Vec3) -> f64 {
    (0..3)
        .map(|c| {
            let r = x_gt[c] - mean[c];
            0.5 * (log_var[c] + r * r * (-log_var[c]).exp() + LN_2PI)
        })
        .sum()
}

/// Loss and gradients with respect to `mean` and `log_var`.
pub fn hetero_loss_grad(mean: &Vec3, log_var: &Vec3, x_gt: &Vec3) -> (f64, Vec3, Vec3) {
    let mut d_mean = Vec3::zeros();
    let mut d_lv = Vec3::zeros();
    let mut loss = 0.0;
    for c in 0..3 {
        let r = x_gt[c] - mean[c];
        let prec = (-log_var[c]).exp();
        loss += 0.5 * (log_var[c] + r * r * prec + LN_2PI);
        d_mean[c] = -r * prec;
        d_lv[c] = 0.5 * (1.0 - r * r * prec);
    }
    (loss, d_mean, d_lv)
}
