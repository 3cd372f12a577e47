//! Thread-local FFT plan cache shared by the spectral routines.

use std::cell::RefCell;

pub(crate) use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward transform, no scaling.
pub(crate) fn forward(buf: &mut [Complex<f64>]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// In-place inverse transform, no scaling (the caller divides by the length if needed).
pub(crate) fn inverse(buf: &mut [Complex<f64>]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
}

pub(crate) fn real_to_complex(x: &[f64], len: usize) -> Vec<Complex<f64>> {
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for (dst, &src) in buf.iter_mut().zip(x) {
        dst.re = src;
    }
    buf
}
