#pragma once

#include <vector>

#include "rotraman/common.hpp"

namespace rotraman {

// Overlap amplitude <m|D(beta)|n> between harmonic eigenstates of equal
// frequency, one ladder displaced by beta in the annihilation-operator
// sense. Stable two-term recursion, exact at beta = 0.
double fc_amplitude(int m, int n, double beta);

// Franck-Condon factor |<m|n shifted by beta>|^2. Symmetric in (m, n); rows
// sum to 1 over the full ladder. Throws std::domain_error for negative m, n.
double fc_overlap(int m, int n, double beta);

// One-cycle redistribution kernel K(nu, nu') = sum_{nu_e} fc(nu, nu_e) *
// fc(nu_e, nu'): pump up through the excited vibrational ladder and back
// down. Doubly stochastic up to truncation deficit.
Eigen::MatrixXd fc_kernel(int nu_max, double beta);

struct VibRateModel {
  double eta = 1.0;             // displacement ratio kappa*d (dimensionless)
  double rate_prefactor = 1.0;  // Omega_R*Gamma/Delta in units of B
  double omega_nu_over_B = 100.0;
  double delta_over_B = 1e4;
  int nu_max = 60;              // auto-extended until kernel row-sum deficit
                                // drops below 1e-8
};

struct VibMoments {
  double mean = 0.0;
  double variance = 0.0;
};

// Closed forms for heating from the vibrational ground state:
//   mean(t) = g*t,  var(t) = (g*t)^2 + g*t*(1 + (3/4)*eta^2),
// with g = (1/2)*eta^2*rate_prefactor.
double heating_rate_g(const VibRateModel& model);
VibMoments closed_form_moments(const VibRateModel& model, double t);

struct VibRateRun {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> populations;
  std::vector<VibMoments> moments;
  int nu_max_used = 0;
};

// Integrates dP/dt = rate_prefactor * (K - I) P with classic RK4 on a fixed
// fine grid, starting from P0. P0 must be a probability distribution on
// 0..nu_max (it is re-dimensioned to the auto-extended ladder).
VibRateRun integrate_rate_eq(const VibRateModel& model,
                             const Eigen::VectorXd& P0, double t_max,
                             int n_points);

struct ValidityReport {
  double tau_margin = 0.0;    // c * (Delta/B) / (pref * (omega_nu/B) * eta^2)
  double tau_crossing = 0.0;  // exact root of omega_nu*(mean + stddev) = Delta
  double tau_valid = 0.0;     // min of the two
  double safety_c = 0.1;
};

// The heating budget: interaction times where the accumulated vibrational
// excitation stays small against the detuning. c scales the "much less than"
// inequality into a number.
ValidityReport max_valid_time(const VibRateModel& model, double c = 0.1);

}  // namespace rotraman
