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

#include "tas/theorem.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "tas/rng.h"

namespace tas {

namespace {

double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double Softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double Median(std::vector<double> values) {
  const size_t n = values.size();
  std::sort(values.begin(), values.end());
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

Batch DrawLogistic(int n, const Vector& weights, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Batch batch;
  batch.features.resize(n, weights.size());
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < weights.size(); ++j) {
      batch.features(i, j) = normal(rng);
    }
    const double p = Sigmoid(batch.features.row(i).dot(weights));
    batch.labels.push_back(uniform(rng) < p ? 1 : 0);
  }
  return batch;
}

}  // namespace

void ConvexProblem::Validate() const {
  if (features.rows() == 0 ||
      features.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("convex problem needs matching nonempty data");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
  }
  if (!(l2_lambda > 0.0)) {
    throw std::invalid_argument("l2_lambda must be positive");
  }
}

double ConvexLoss(const ConvexProblem& problem, const Vector& theta) {
  const Vector margins = problem.features * theta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    const double sign = problem.labels[i] == 1 ? 1.0 : -1.0;
    total += Softplus(-sign * margins[i]);
  }
  return total / static_cast<double>(margins.size()) +
         problem.l2_lambda * theta.squaredNorm();
}

Vector ConvexGrad(const ConvexProblem& problem, const Vector& theta) {
  const Vector margins = problem.features * theta;
  Vector residual(margins.size());
  for (Eigen::Index i = 0; i < margins.size(); ++i) {
    residual[i] = Sigmoid(margins[i]) - problem.labels[i];
  }
  return problem.features.transpose() * residual /
             static_cast<double>(margins.size()) +
         2.0 * problem.l2_lambda * theta;
}

std::vector<Vector> LogisticSampleGrads(const Batch& data, const Vector& theta) {
  if (data.features.cols() != theta.size()) {
    throw std::invalid_argument("theta does not match the feature width");
  }
  std::vector<Vector> grads;
  grads.reserve(data.size());
  for (int i = 0; i < data.size(); ++i) {
    const double residual =
        Sigmoid(data.features.row(i).dot(theta)) - data.labels[i];
    grads.push_back(residual * data.features.row(i).transpose());
  }
  return grads;
}

AffinityScore AffinityAt(const Vector& theta, const Batch& a_query,
                         const Batch& b_support) {
  return TaskAffinityScore(
      NormalizeUnitTrace(FisherFromSampleGrads(LogisticSampleGrads(a_query, theta))),
      NormalizeUnitTrace(
          FisherFromSampleGrads(LogisticSampleGrads(b_support, theta))));
}

Vector SolveOptimum(const ConvexProblem& problem, double tol, double step,
                    int max_iters) {
  problem.Validate();
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (step <= 0.0) {
    // Hessian <= 0.25 * lambda_max(X^T X / n) + 2 lambda.
    const Matrix gram = problem.features.transpose() * problem.features /
                        static_cast<double>(problem.features.rows());
    const double top = Eigen::SelfAdjointEigenSolver<Matrix>(gram)
                           .eigenvalues()
                           .maxCoeff();
    step = 1.0 / (0.25 * top + 2.0 * problem.l2_lambda);
  }
  Vector theta = Vector::Zero(problem.dim());
  for (int iter = 0; iter < max_iters; ++iter) {
    const Vector grad = ConvexGrad(problem, theta);
    if (grad.norm() < tol) return theta;
    theta -= step * grad;
  }
  throw std::runtime_error("gradient descent did not converge within " +
                           std::to_string(max_iters) + " iterations");
}

void StepSchedule::Validate() const {
  if (!(eta0 > 0.0)) throw std::invalid_argument("eta0 must be positive");
  if (kind == Kind::kPolynomial && !(exponent > 0.5 && exponent < 1.0)) {
    throw std::invalid_argument("step exponent must lie in (0.5, 1)");
  }
}

double StepSchedule::At(int64_t t) const {
  if (kind == Kind::kConstant) return eta0;
  return eta0 * std::pow(static_cast<double>(std::max<int64_t>(t, 1)), -exponent);
}

void NoisySgdConfig::Validate() const {
  step.Validate();
  if (!(noise_sigma >= 0.0)) {
    throw std::invalid_argument("noise_sigma must be nonnegative");
  }
  if (total_steps < 1) throw std::invalid_argument("total_steps must be >= 1");
  if (checkpoints_per_decade < 1) {
    throw std::invalid_argument("checkpoints_per_decade must be >= 1");
  }
}

std::vector<int64_t> LogSpacedCheckpoints(int64_t total, int per_decade) {
  std::vector<int64_t> times;
  for (int k = 0;; ++k) {
    const auto t = static_cast<int64_t>(
        std::llround(std::pow(10.0, static_cast<double>(k) / per_decade)));
    if (t >= total) break;
    if (times.empty() || t > times.back()) times.push_back(t);
  }
  times.push_back(total);
  return times;
}

Trajectory NoisySgd(const ConvexProblem& problem, const NoisySgdConfig& cfg) {
  problem.Validate();
  cfg.Validate();
  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
  const std::vector<int64_t> times =
      LogSpacedCheckpoints(cfg.total_steps, cfg.checkpoints_per_decade);

  Trajectory trajectory;
  Vector theta = Vector::Zero(problem.dim());
  Vector eps(problem.dim());
  PolyakAverage average(problem.dim());
  size_t next = 0;
  for (int64_t t = 1; t <= cfg.total_steps; ++t) {
    if (cfg.noise_sigma > 0.0) {
      for (Eigen::Index j = 0; j < eps.size(); ++j) eps[j] = noise(rng);
    } else {
      eps.setZero();
    }
    theta -= cfg.step.At(t) * (ConvexGrad(problem, theta) + eps);
    if (!theta.allFinite() || theta.norm() > cfg.divergence_bound) {
      throw std::runtime_error("noisy SGD diverged at step " + std::to_string(t));
    }
    average.Add(theta);
    if (next < times.size() && t == times[next]) {
      trajectory.checkpoints.push_back({t, average.mean()});
      ++next;
    }
  }
  return trajectory;
}

TasSeries TasTrajectory(const Trajectory& trajectory, const Batch& a_query,
                        const Batch& b_support, const Vector& theta_star) {
  if (trajectory.checkpoints.empty()) {
    throw std::invalid_argument("trajectory has no checkpoints");
  }
  TasSeries series;
  for (const Checkpoint& checkpoint : trajectory.checkpoints) {
    series.s.push_back(AffinityAt(checkpoint.theta_bar, a_query, b_support).value);
  }
  series.s_star = AffinityAt(theta_star, a_query, b_support).value;
  return series;
}

ConvergenceReport ConvergenceCheck(const std::vector<std::vector<double>>& series,
                                   const std::vector<double>& s_star,
                                   double abs_tol) {
  if (series.size() < 5) {
    throw std::invalid_argument("convergence check needs at least 5 seeds");
  }
  if (s_star.size() != series.size()) {
    throw std::invalid_argument("one s* per seed required");
  }
  const size_t n_checkpoints = series.front().size();
  for (const auto& s : series) {
    if (s.size() != n_checkpoints || s.empty()) {
      throw std::invalid_argument("every seed needs the same checkpoints");
    }
  }
  ConvergenceReport report;
  for (size_t c = 0; c < n_checkpoints; ++c) {
    std::vector<double> gaps;
    for (size_t seed = 0; seed < series.size(); ++seed) {
      gaps.push_back(std::abs(series[seed][c] - s_star[seed]));
    }
    report.trend.push_back(Median(std::move(gaps)));
  }
  report.final_gap_median = report.trend.back();
  bool monotone = true;
  const size_t first = n_checkpoints >= 3 ? n_checkpoints - 3 : 0;
  for (size_t c = first + 1; c < n_checkpoints; ++c) {
    if (report.trend[c] > report.trend[c - 1]) monotone = false;
  }
  report.pass = report.final_gap_median < abs_tol && monotone;
  return report;
}

void Theorem1Config::Validate() const {
  if (dim < 1 || n_train < 1 || n_query < 1 || n_support < 1) {
    throw std::invalid_argument("theorem1 sizes must be positive");
  }
  if (!(l2_lambda > 0.0)) throw std::invalid_argument("l2_lambda must be positive");
  if (n_seeds < 5) throw std::invalid_argument("theorem1 needs at least 5 seeds");
  if (!(abs_tol >= 0.0)) throw std::invalid_argument("abs_tol must be >= 0");
  sgd.Validate();
}

Theorem1Data MakeTheorem1Data(const Theorem1Config& cfg) {
  cfg.Validate();
  Rng rng(DeriveSeed(cfg.master_seed, SeedStream::kTheoremData));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector weights(cfg.dim);
  for (int j = 0; j < cfg.dim; ++j) weights[j] = normal(rng);
  weights *= cfg.true_weight_norm / weights.norm();

  Theorem1Data data;
  Batch train = DrawLogistic(cfg.n_train, weights, rng);
  data.problem = {std::move(train.features), std::move(train.labels),
                  cfg.l2_lambda};
  data.a_query = DrawLogistic(cfg.n_query, weights, rng);
  data.b_support = DrawLogistic(cfg.n_support, weights, rng);
  return data;
}

Theorem1Result RunTheorem1(const Theorem1Config& cfg, int jobs) {
  const Theorem1Data data = MakeTheorem1Data(cfg);
  const Vector theta_star = SolveOptimum(data.problem, cfg.solve_tol);

  Theorem1Result result;
  result.checkpoint_times =
      LogSpacedCheckpoints(cfg.sgd.total_steps, cfg.sgd.checkpoints_per_decade);
  result.series.resize(cfg.n_seeds);
  std::vector<double> s_star(cfg.n_seeds);

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < cfg.n_seeds; i = next++) {
      try {
        NoisySgdConfig sgd = cfg.sgd;
        sgd.seed = DeriveSeed(
            DeriveSeed(cfg.master_seed, SeedStream::kTheoremNoise), i);
        const TasSeries series =
            TasTrajectory(NoisySgd(data.problem, sgd), data.a_query,
                          data.b_support, theta_star);
        result.series[i] = series.s;
        s_star[i] = series.s_star;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp(jobs, 1, cfg.n_seeds);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& thread : threads) thread.join();
  }
  if (failure) std::rethrow_exception(failure);
  result.s_star = s_star.front();
  result.verdict = ConvergenceCheck(result.series, s_star, cfg.abs_tol);
  return result;
}

}  // namespace tas
