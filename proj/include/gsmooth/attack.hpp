#pragma once

#include <string>
#include <vector>

#include "gsmooth/certify.hpp"

namespace gsmooth {

struct AttackConfig {
  double budget = 0.25;   // l2 bound on the parameter perturbation xi
  int steps = 40;         // PGD iterations
  double step_size = 0.0; // 0 -> budget / 10
  int eot_samples = 32;   // noise draws per gradient estimate
  std::uint64_t seed = 0;
};

struct AttackRecord {
  int sample_id = 0;
  int label = 0;
  double budget = 0.0;
  Eigen::VectorXd xi_adv;
  bool success = false;
  double loss_final = 0.0;  // EoT cross-entropy at xi_adv
};

// Projected gradient ascent on the transformation parameter xi through
// the (differentiable) surrogate chain: each step estimates
// grad_xi E[cross-entropy(f(H(F1(xi + theta) + theta' + F2(x))), label)]
// with `eot_samples` noise draws, takes a normalized l2 step, and
// projects back onto ||xi||_2 <= budget. Success is judged by a fresh
// smoothed prediction (ccfg.n samples) recentered at xi_adv.
AttackRecord eot_pgd(const Classifier& clf, const TransformSpec& spec,
                     const SurrogateModel& surrogate, const Image& image,
                     int label, int sample_id, const AttackConfig& acfg,
                     const CertifyConfig& ccfg);

// Fraction of records the attack failed to flip.
double empirical_robust_accuracy(const std::vector<AttackRecord>& records);

// CSV with columns: sample_id,budget,xi_adv...,success,loss_final.
void write_attack_csv(const std::vector<AttackRecord>& records,
                      const std::string& path);
std::vector<AttackRecord> read_attack_csv(const std::string& path);

}  // namespace gsmooth
