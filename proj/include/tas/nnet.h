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

#ifndef TAS_NNET_H_
#define TAS_NNET_H_

// Dense feed-forward networks with exact backpropagation.
//
// A network is an encoder (a stack of dense layers, each followed by the
// activation, ending in the embedding) and a linear classification head.
// Parameters live in one flat vector: for every dense layer in order, the
// row-major (fan_out x fan_in) weight matrix followed by the bias. Encoder
// layers come first, the head last.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace tas {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { kRelu, kTanh };

std::string_view ActivationName(Activation activation);
Activation ParseActivation(std::string_view name);

struct NetworkSpec {
  // Input dimension first, embedding dimension last.
  std::vector<int> layer_widths;
  int head_classes = 2;
  Activation activation = Activation::kRelu;

  void Validate() const;
  int input_dim() const { return layer_widths.front(); }
  int embedding_dim() const { return layer_widths.back(); }
  int num_encoder_layers() const {
    return static_cast<int>(layer_widths.size()) - 1;
  }
  // (fan_in, fan_out) of every dense layer, head last.
  std::vector<std::pair<int, int>> LayerShapes() const;
  int encoder_param_count() const;
  int param_count() const;

  bool operator==(const NetworkSpec&) const = default;
};

class Network {
 public:
  // Throws std::invalid_argument on a length mismatch or non-finite entry.
  Network(NetworkSpec spec, Vector params);

  const NetworkSpec& spec() const { return spec_; }
  const Vector& params() const { return params_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  int encoder_param_count() const { return offsets_[spec_.num_encoder_layers()]; }
  // Encoder layers plus the head.
  int num_layers() const { return spec_.num_encoder_layers() + 1; }
  int head_layer() const { return spec_.num_encoder_layers(); }

  Eigen::Map<const Matrix> weights(int layer) const;
  Eigen::Map<const Vector> bias(int layer) const;
  // Offset of a layer's weight block inside params().
  int layer_offset(int layer) const { return offsets_[layer]; }

 private:
  NetworkSpec spec_;
  Vector params_;
  std::vector<int> offsets_;
};

struct Batch {
  Matrix features;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  // Throws when empty, when features and labels disagree in length, or
  // when a label falls outside [0, num_classes).
  void Validate(int num_classes) const;
};

struct TrainSchedule {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int epochs = 10;
  int batch_size = 64;
  std::vector<int> lr_decay_epochs;
  double lr_decay_factor = 0.1;
  uint64_t seed = 0;

  void Validate() const;
  // Learning rate in effect during the given (0-based) epoch.
  double LearningRateAt(int epoch) const;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
Network InitNetwork(const NetworkSpec& spec, uint64_t seed);

// Embeddings (n x embedding_dim).
Matrix Encode(const Network& net, const Matrix& features);
// Logits (n x head_classes).
Matrix Forward(const Network& net, const Matrix& features);
// Row-wise softmax.
Matrix Softmax(const Matrix& logits);
// Argmax of each row, ties to the lowest index.
std::vector<int> ArgmaxRows(const Matrix& scores);

// Mean cross-entropy.
double Loss(const Network& net, const Batch& batch);
// Gradient of Loss() with respect to params().
Vector Grad(const Network& net, const Batch& batch);
// Gradient of each sample's own cross-entropy. Their mean equals Grad().
std::vector<Vector> PerSampleGrads(const Network& net, const Batch& batch);
// Vector-Jacobian product through the encoder: the gradient of
// sum(embedding_grad .* Encode(net, features)) with respect to params().
// Head entries are zero.
Vector EncoderGrad(const Network& net, const Matrix& features,
                   const Matrix& embedding_grad);

// Heavy-ball SGD: v <- momentum * v + g; params <- params - lr * v.
class MomentumSgd {
 public:
  MomentumSgd(int param_count, double momentum)
      : momentum_(momentum), velocity_(Vector::Zero(param_count)) {}

  Network Step(const Network& net, const Vector& grad, double learning_rate);

 private:
  double momentum_;
  Vector velocity_;
};

// Minibatch SGD over a fixed batch, one epoch at a time. Minibatch order is
// a seeded permutation of sample positions and never looks at labels.
class SgdTrainer {
 public:
  SgdTrainer(Network net, Batch data, TrainSchedule schedule);

  // Runs one epoch and returns the full-data loss after it.
  double RunEpoch();
  int epochs_done() const { return epoch_; }
  bool finished() const { return epoch_ >= schedule_.epochs; }
  const Network& network() const { return net_; }

 private:
  Network net_;
  Batch data_;
  TrainSchedule schedule_;
  MomentumSgd optimizer_;
  int epoch_ = 0;
};

struct TrainResult {
  Network network;
  std::vector<double> loss_history;
};

TrainResult Train(const Network& net, const Batch& data,
                  const TrainSchedule& schedule);

// Fraction of samples whose argmax logit equals the label.
double Evaluate(const Network& net, const Batch& batch);

// Keeps the encoder and draws a fresh n_classes-way head from seed.
Network ReplaceHead(const Network& net, int n_classes, uint64_t seed);

// The given rows of a batch, in order.
Batch SliceBatch(const Batch& batch, const std::vector<int>& rows);

}  // namespace tas

#endif  // TAS_NNET_H_
