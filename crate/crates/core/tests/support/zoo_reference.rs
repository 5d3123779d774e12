//! Literal transcriptions of the reference activation code, independent of
//! the library: complex arithmetic via `num-complex`, FFTs as full complex
//! DFT sums. Shared by the zoo tests and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;

use actlab::tensor::Tensor2;
use num_complex::Complex64;

pub const PROBES: [f64; 25] = [
    -20.0, -9.0, -5.0, -3.0, -2.5, -2.0, -1.5, -1.0, -0.75, -0.5, -0.25, -0.1, 0.0, 0.1, 0.25, 0.5, 0.75, 1.0,
    1.5, 2.0, 2.5, 3.0, 5.0, 9.0, 20.0,
];

pub fn probe_tensor() -> Tensor2 {
    Tensor2::from_vec(5, 5, PROBES.to_vec()).unwrap()
}

pub fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= 1e-10 * want.abs().max(1.0)
}

pub mod reference {
    use super::*;

    fn jnp_gelu(x: f64) -> f64 {
        0.5 * x * (1.0 + ((2.0 / PI).sqrt() * (x + 0.044715 * x.powf(3.0))).tanh())
    }

    fn jnp_sinc(x: f64) -> f64 {
        if x == 0.0 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        }
    }

    fn jnp_sign(x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    pub fn relu(x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| v.max(0.0)).collect()
    }

    pub fn gelu(x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| jnp_gelu(v)).collect()
    }

    pub fn gelusine(x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| jnp_gelu(v) + 0.1 * v.sin()).collect()
    }

    pub fn gelusinc(x: &[f64]) -> Vec<f64> {
        let alpha = 0.5;
        x.iter().map(|&v| jnp_gelu(v) * (1.0 + alpha * jnp_sinc(v))).collect()
    }

    pub fn gmtu(x: &[f64]) -> Vec<f64> {
        let (p_alpha, p_beta, p_gamma, leak) = (1.0, 1.5, 0.2, 0.1);
        x.iter()
            .map(|&v| {
                let primary_response = p_alpha * (p_beta * v).tanh() * (-p_gamma * v.powf(2.0)).exp();
                primary_response + leak * v
            })
            .collect()
    }

    pub fn turbulent(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powf(2.0)).sum::<f64>() / n;
        let std = var.sqrt() + 1e-6;
        x.iter()
            .map(|&v| {
                let base = jnp_sign(v) * (0.5 * v.abs()).ln_1p();
                let z = (v - mean) / std;
                let (amplitude, frequency) = (0.2, 2.0);
                let gaussian_envelope = (-0.5 * z.powf(2.0)).exp();
                let perturbation = amplitude * gaussian_envelope * (frequency * v).sin();
                base + perturbation
            })
            .collect()
    }

    pub fn quaternion(x: f64) -> f64 {
        let a_base = 0.1;
        let a_amp = 0.05;
        let a_freq = 4.0;
        let a = a_base + a_amp * (a_freq * x).cos();
        let b_base = 0.5;
        let b_amp = 0.2;
        let b_freq = 2.5;
        let b_phase_mod_coeff = 2.0;
        let b = b_base + b_amp * (b_freq * x + b_phase_mod_coeff * a).sin();
        let mod_freq1 = 2.1;
        let mod_freq2 = 1.3;
        let y_chaos = ((mod_freq1 * x).sin() * (mod_freq2 * x).cos() + 1.0) / 2.0;
        let c_freq = 2.0;
        let c_amp = 0.05 + 0.1 * y_chaos;
        let c_base = 0.1;
        let u = (c_freq * x).tanh();
        let cheby_t4 = 8.0 * u.powf(4.0) - 8.0 * u.powf(2.0) + 1.0;
        let cr = c_base + c_amp * cheby_t4;
        let ci_freq = 2.0;
        let ci_amp = 0.2 + 0.4 * (1.0 - y_chaos);
        let ci_base = 0.0;
        let u_i = (ci_freq * x).tanh();
        let cheby_t3 = 4.0 * u_i.powf(3.0) - 3.0 * u_i;
        let ci = ci_base + ci_amp * cheby_t3;
        let stable_magnitude = a * x.powf(2.0) * (-b * (x - cr).powf(2.0)).exp();
        let phase = 2.0 * b * ci * (x - cr);
        let complex_rotation = Complex64::new(phase.cos(), 0.0) + Complex64::i() * phase.sin();
        let damping_term_complex = stable_magnitude * complex_rotation;
        let d_freq = 1.5;
        let d_amp = 0.1 + 0.2 * y_chaos;
        let u_d = (d_freq * x).tanh();
        let cheby_t2 = 2.0 * u_d.powf(2.0) - 1.0;
        let d_shift = d_amp * cheby_t2;
        let q_j_envelope = (0.5 * a * x.powf(2.0)) * (-b * (x - d_shift).powf(2.0)).exp();
        let q_k_envelope = (0.5 * b * x.powf(2.0)) * (-a * (x + d_shift).powf(2.0)).exp();
        let q_j = q_j_envelope * (c_freq * x + ci).sin();
        let q_k = q_k_envelope * (b_freq * x - cr).cos();
        let q_w = damping_term_complex.re;
        let q_i = damping_term_complex.im;
        let c_i = 0.2;
        let c_j = 0.15;
        let c_k = 0.15;
        let gate = 1.0 - (q_w - c_i * q_i - c_j * q_j - c_k * q_k);
        x * gate
    }

    fn clip(v: f64, lo: f64, hi: f64) -> f64 {
        v.max(lo).min(hi)
    }

    pub fn pler(x: f64) -> f64 {
        let r = 2.5 + 1.5 * (x.powf(2.0) / 4.0).tanh();
        let alpha = 0.1 * (x.powf(2.0) / 16.0).tanh();
        let r_ref = 3.9;
        let alpha_ref = 0.05;
        let beta = 0.1 * (1.0 - 2.0 * (x.powf(2.0) / 8.0).tanh());
        let omega_ref = (x * 2.5).cos();
        let resonance_gate = (-25.0 * omega_ref.powf(2.0)).exp();
        let y = 0.5 + 0.49 * (x / 4.0).tanh();
        let z = 0.5 - 0.49 * (x / 4.0).tanh();
        let y_ref = 0.2;
        let z_ref = 0.8;
        let c = 0.0;

        let pler_map_step = |_i: usize, state: (f64, f64, f64, f64, f64)| {
            let (y_val, z_val, y_ref_val, z_ref_val, c_val) = state;
            let instability_feedback = (c_val * 4.0).tanh();
            let beta_eff = beta - 0.2 * instability_feedback;
            let is_ood = 1.0 / (1.0 + (beta_eff * 50.0).exp());
            let coupling_internal = alpha * (z_val - y_val);
            let mut y_dyn = r * y_val * (1.0 - y_val) + coupling_internal;
            let mut z_dyn = r * z_val * (1.0 - z_val) - coupling_internal;
            let collapse_strength = 0.5;
            y_dyn -= is_ood * collapse_strength * y_val;
            z_dyn -= is_ood * collapse_strength * z_val;
            let gamma = is_ood * (c_val * 4.0).tanh();
            let mut y_next = y_dyn * (1.0 - gamma);
            let mut z_next = z_dyn * (1.0 - gamma);
            let tunneling_strength = 0.6;
            let tunnel_force_y = resonance_gate * tunneling_strength * (0.5 - y_next);
            let tunnel_force_z = resonance_gate * tunneling_strength * (0.5 - z_next);
            y_next += tunnel_force_y;
            z_next += tunnel_force_z;
            let coupling_ref_internal = alpha_ref * (z_ref_val - y_ref_val);
            let mut y_ref_next = r_ref * y_ref_val * (1.0 - y_ref_val) + coupling_ref_internal;
            let mut z_ref_next = r_ref * z_ref_val * (1.0 - z_ref_val) - coupling_ref_internal;
            let instability = (y_next - z_next).abs();
            let c_next = 0.8 * c_val + 0.2 * instability;
            let ood_modulation = 1.0 + (beta_eff.abs() * 5.0).tanh() * z_val.powf(2.0);
            let ood_amplification = 1.0 + (c_next * 2.0).tanh();
            let coupling_sync = beta_eff * (y_ref_val - y_val) * ood_modulation * ood_amplification;
            y_next += coupling_sync;
            y_ref_next -= (1.0 - is_ood) * coupling_sync;
            y_next = clip(y_next, 0.0, 1.0);
            z_next = clip(z_next, 0.0, 1.0);
            y_ref_next = clip(y_ref_next, 0.0, 1.0);
            z_ref_next = clip(z_ref_next, 0.0, 1.0);
            (y_next, z_next, y_ref_next, z_ref_next, c_next)
        };
        let mut state = (y, z, y_ref, z_ref, c);
        for i in 0..10 {
            state = pler_map_step(i, state);
        }
        let (y, z, _, _, _) = state;
        let gate = (y + z) / 2.0;
        x * gate
    }

    fn full_dft(x: &[Complex64], sign: f64) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|t| x[t] * Complex64::from_polar(1.0, sign * 2.0 * PI * (k * t) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    fn rfft(x: &[f64]) -> Vec<Complex64> {
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        full_dft(&xc, -1.0)[..x.len() / 2 + 1].to_vec()
    }

    /// Hermitian extension to length n, inverse DFT, real part.
    fn irfft(spec: &[Complex64], n: usize) -> Vec<f64> {
        let full: Vec<Complex64> = (0..n)
            .map(|k| if k < spec.len() { spec[k] } else { spec[n - k].conj() })
            .collect();
        full_dft(&full, 1.0).iter().map(|c| c.re / n as f64).collect()
    }

    pub fn fisg_row(x: &[f64]) -> Vec<f64> {
        let sensitivity = 2.0;
        let split_fraction = 0.25;
        let epsilon = 1e-7;
        let x_fft = rfft(x);
        let magnitudes: Vec<f64> = x_fft.iter().map(|c| c.norm()).collect();
        let num_freqs = x_fft.len();
        let split_idx = (num_freqs as f64 * split_fraction) as usize;
        let high_freq_energy: f64 = magnitudes[split_idx..].iter().sum();
        let total_energy: f64 = magnitudes.iter().sum();
        let spectral_imbalance = high_freq_energy / (total_energy + epsilon);
        let gate = (-sensitivity * spectral_imbalance).exp();
        let low_freq_part = &x_fft[..split_idx];
        let high_freq_part = &x_fft[split_idx..];
        let scrambled_high_freq_part: Vec<Complex64> = high_freq_part.iter().map(|c| c.conj()).collect();
        let scrambled_x_fft: Vec<Complex64> =
            low_freq_part.iter().copied().chain(scrambled_high_freq_part).collect();
        let modified_x = irfft(&scrambled_x_fft, x.len());
        x.iter().zip(modified_x).map(|(&xi, m)| gate * xi + (1.0 - gate) * m).collect()
    }

    fn jnp_sigmoid(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    pub fn spf_row(x: &[f64]) -> Vec<f64> {
        let m = 10.0;
        let c = 10.0;
        let beta = 2.0;
        let freq = 1.0;
        let chirp_k = 0.5;
        let a_disrupt = 0.2;
        let freq_disrupt = 15.0;
        let coupling_strength = 2.0;
        let a_disrupt_agitated = 0.8;
        let freq_disrupt_agitated = 40.0;
        let k_blend = 2.0;
        let laplacian_strength = 5.0;
        let k_decay = 2.0;
        let freq_switch = 50.0;
        let power_switch = 3.0;
        let a_switch_disrupt = 0.5;
        let freq_switch_disrupt = 25.0;
        let gamma_meta = 2.0;
        let n = x.len();
        // jnp.roll(x, shift=1) and jnp.roll(x, shift=-1)
        let x_prev: Vec<f64> = (0..n).map(|i| x[(i + n - 1) % n]).collect();
        let x_next: Vec<f64> = (0..n).map(|i| x[(i + 1) % n]).collect();
        (0..n)
            .map(|i| {
                let (x, x_prev, x_next) = (x[i], x_prev[i], x_next[i]);
                let u = (x / c).powf(2.0);
                let meta_modulator = 1.0 + gamma_meta * u * (-u / 1.5).exp();
                let amplitude = beta * u * (-u / 2.0).exp();
                let phase_base = freq * x + chirp_k * x.powf(2.0) * jnp_sign(x) / c;
                let local_energy_sq = x.powf(2.0) + 0.25 * (x_prev.powf(2.0) + x_next.powf(2.0));
                let local_laplacian = x - 0.5 * (x_prev + x_next);
                let ood_metric = k_blend * (local_energy_sq - c.powf(2.0)) / c.powf(2.0)
                    + laplacian_strength * (local_laplacian / c).powf(2.0);
                let alpha = jnp_sigmoid(ood_metric);
                let phase_disruption_calm = a_disrupt * (freq_disrupt * x).sin();
                let phase_disruption_agitated =
                    a_disrupt_agitated * (freq_disrupt_agitated * x + laplacian_strength * local_laplacian).sin();
                let phase_disruption =
                    (1.0 - alpha) * phase_disruption_calm + alpha * phase_disruption_agitated;
                let phase_coupling = coupling_strength * (0.5 * x_prev - 1.0 * x_next) / c;
                let phase = phase_base + phase_disruption + phase_coupling;
                let y_detail = amplitude * phase.sin();
                let g_x = (-(x.abs() / (k_decay * c)).powf(4.0)).exp();
                let y_state_plus = m * ((g_x * x + meta_modulator * y_detail) / m).tanh();
                let y_state_minus = m * ((g_x * x - meta_modulator * y_detail) / m).tanh();
                let switch_phase_base = freq_switch * (x / c).powf(power_switch);
                let switch_phase_disruption = a_switch_disrupt * (freq_switch_disrupt * x / c).sin();
                let switch_phase = switch_phase_base + switch_phase_disruption;
                let should_be_plus = switch_phase.cos() > 0.0;
                if should_be_plus {
                    y_state_plus
                } else {
                    y_state_minus
                }
            })
            .collect()
    }
}

fn rows_of(x: &Tensor2, f: fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    (0..x.rows()).flat_map(|r| f(x.row(r))).collect()
}

pub fn oracle(name: &str, x: &Tensor2) -> Vec<f64> {
    match name {
        "relu" => reference::relu(x.data()),
        "gelu" => reference::gelu(x.data()),
        "gelusine" => reference::gelusine(x.data()),
        "gelusinc" => reference::gelusinc(x.data()),
        "gmtu" => reference::gmtu(x.data()),
        "turbulent" => reference::turbulent(x.data()),
        "quaternion" => x.data().iter().map(|&v| reference::quaternion(v)).collect(),
        "pler" => x.data().iter().map(|&v| reference::pler(v)).collect(),
        "fisg" => rows_of(x, reference::fisg_row),
        "spf" => rows_of(x, reference::spf_row),
        other => panic!("no oracle for {other}"),
    }
}
