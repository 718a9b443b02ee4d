// Copyright 2026 The TAS Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TAS_THEOREM_H_
#define TAS_THEOREM_H_

// Empirical check that the affinity score evaluated at Polyak-averaged SGD
// iterates converges to the score at the global optimum when the training
// loss is strongly convex. The model is L2-regularized logistic regression:
//
//   L(theta) = (1/n) sum_i log(1 + exp(-y~_i x_i . theta)) + lambda ||theta||^2
//
// with y~ = 2y - 1. The lambda ||.||^2 term makes L strongly convex with
// modulus mu = lambda in the sense L(b) >= L(a) + grad L(a).(b - a) +
// mu ||b - a||^2. Fisher diagonals use the unregularized per-sample
// negative log-likelihood.

#include <cstdint>
#include <string>
#include <vector>

#include "tas/fisher.h"
#include "tas/nnet.h"

namespace tas {

struct ConvexProblem {
  Matrix features;
  std::vector<int> labels;  // 0 or 1
  double l2_lambda = 0.1;

  void Validate() const;
  int dim() const { return static_cast<int>(features.cols()); }
};

double ConvexLoss(const ConvexProblem& problem, const Vector& theta);
Vector ConvexGrad(const ConvexProblem& problem, const Vector& theta);

// Gradients of each sample's logistic negative log-likelihood.
std::vector<Vector> LogisticSampleGrads(const Batch& data, const Vector& theta);

// Unit-trace Fisher diagonals on both batches at theta, then the score.
AffinityScore AffinityAt(const Vector& theta, const Batch& a_query,
                         const Batch& b_support);

// Full-batch gradient descent until ||grad|| < tol. step <= 0 picks
// 1 / (smoothness bound). Throws std::runtime_error after max_iters.
Vector SolveOptimum(const ConvexProblem& problem, double tol,
                    double step = 0.0, int max_iters = 1000000);

struct StepSchedule {
  enum class Kind { kConstant, kPolynomial };
  Kind kind = Kind::kPolynomial;
  double eta0 = 0.5;
  double exponent = 0.6;  // polynomial: eta0 * t^-exponent, t >= 1

  void Validate() const;
  double At(int64_t t) const;
};

struct NoisySgdConfig {
  StepSchedule step;
  double noise_sigma = 0.1;
  int64_t total_steps = 100000;
  uint64_t seed = 0;
  int checkpoints_per_decade = 10;
  double divergence_bound = 1e6;

  void Validate() const;
};

class PolyakAverage {
 public:
  explicit PolyakAverage(int dim) : mean_(Vector::Zero(dim)) {}

  void Add(const Vector& theta) {
    ++count_;
    mean_ += (theta - mean_) / static_cast<double>(count_);
  }
  const Vector& mean() const { return mean_; }
  int64_t count() const { return count_; }

 private:
  Vector mean_;
  int64_t count_ = 0;
};

struct Checkpoint {
  int64_t t = 0;
  Vector theta_bar;
};

struct Trajectory {
  std::vector<Checkpoint> checkpoints;
};

// Distinct round(10^(k / per_decade)) values up to total, total included.
std::vector<int64_t> LogSpacedCheckpoints(int64_t total, int per_decade);

// theta_{t+1} = theta_t - eta_t (grad L(theta_t) + eps_t), eps_t ~ N(0,
// sigma^2 I), from theta_0 = 0. Records the running mean of theta_1..theta_t
// at log-spaced t. Throws std::runtime_error naming the step if ||theta||
// exceeds the divergence bound.
Trajectory NoisySgd(const ConvexProblem& problem, const NoisySgdConfig& cfg);

struct TasSeries {
  std::vector<double> s;  // one per checkpoint
  double s_star = 0.0;
};

TasSeries TasTrajectory(const Trajectory& trajectory, const Batch& a_query,
                        const Batch& b_support, const Vector& theta_star);

struct ConvergenceReport {
  bool pass = false;
  double final_gap_median = 0.0;
  std::vector<double> trend;  // median |s_t - s*| per checkpoint
};

// series[seed][checkpoint]; passes iff the final median gap is below
// abs_tol and the median gap does not increase over the last three
// checkpoints. Needs at least five seeds.
ConvergenceReport ConvergenceCheck(const std::vector<std::vector<double>>& series,
                                   const std::vector<double>& s_star,
                                   double abs_tol);

struct Theorem1Config {
  int dim = 10;
  int n_train = 200;
  int n_query = 200;
  int n_support = 200;
  double l2_lambda = 0.1;
  double true_weight_norm = 2.0;
  NoisySgdConfig sgd;
  int n_seeds = 20;
  double abs_tol = 1e-2;
  double solve_tol = 1e-10;
  uint64_t master_seed = 0;

  void Validate() const;
};

// Three independent draws from one logistic data generator: the training
// problem of task A, A's query set and B's support set.
struct Theorem1Data {
  ConvexProblem problem;
  Batch a_query;
  Batch b_support;
};

Theorem1Data MakeTheorem1Data(const Theorem1Config& cfg);

struct Theorem1Result {
  std::vector<int64_t> checkpoint_times;
  std::vector<std::vector<double>> series;  // per seed
  double s_star = 0.0;
  ConvergenceReport verdict;
};

// The data is drawn once from master_seed; seed i draws its gradient noise
// from its own derived stream. Seeds run on up to
// `jobs` threads and are merged by index.
Theorem1Result RunTheorem1(const Theorem1Config& cfg, int jobs = 1);

}  // namespace tas

#endif  // TAS_THEOREM_H_
