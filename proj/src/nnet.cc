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

#include "tas/nnet.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tas/rng.h"

namespace tas {

std::string_view ActivationName(Activation activation) {
  switch (activation) {
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
  }
  return "unknown";
}

Activation ParseActivation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

void NetworkSpec::Validate() const {
  if (layer_widths.size() < 2) {
    throw std::invalid_argument("network needs an input and an embedding width");
  }
  for (int w : layer_widths) {
    if (w <= 0) throw std::invalid_argument("layer widths must be positive");
  }
  if (head_classes < 2) {
    throw std::invalid_argument("head needs at least 2 classes");
  }
}

std::vector<std::pair<int, int>> NetworkSpec::LayerShapes() const {
  std::vector<std::pair<int, int>> shapes;
  for (size_t i = 0; i + 1 < layer_widths.size(); ++i) {
    shapes.emplace_back(layer_widths[i], layer_widths[i + 1]);
  }
  shapes.emplace_back(embedding_dim(), head_classes);
  return shapes;
}

int NetworkSpec::encoder_param_count() const {
  int count = 0;
  for (size_t i = 0; i + 1 < layer_widths.size(); ++i) {
    count += layer_widths[i] * layer_widths[i + 1] + layer_widths[i + 1];
  }
  return count;
}

int NetworkSpec::param_count() const {
  return encoder_param_count() + embedding_dim() * head_classes + head_classes;
}

Network::Network(NetworkSpec spec, Vector params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.Validate();
  if (params_.size() != spec_.param_count()) {
    throw std::invalid_argument(
        "parameter vector has length " + std::to_string(params_.size()) +
        ", spec implies " + std::to_string(spec_.param_count()));
  }
  if (!params_.allFinite()) {
    throw std::invalid_argument("network parameters must be finite");
  }
  int offset = 0;
  for (const auto& [fan_in, fan_out] : spec_.LayerShapes()) {
    offsets_.push_back(offset);
    offset += fan_in * fan_out + fan_out;
  }
  offsets_.push_back(offset);
}

Eigen::Map<const Matrix> Network::weights(int layer) const {
  const auto [fan_in, fan_out] = spec_.LayerShapes()[layer];
  return Eigen::Map<const Matrix>(params_.data() + offsets_[layer], fan_out,
                                  fan_in);
}

Eigen::Map<const Vector> Network::bias(int layer) const {
  const auto [fan_in, fan_out] = spec_.LayerShapes()[layer];
  return Eigen::Map<const Vector>(
      params_.data() + offsets_[layer] + fan_in * fan_out, fan_out);
}

void Batch::Validate(int num_classes) const {
  if (labels.empty()) throw std::invalid_argument("empty batch");
  if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("batch features and labels disagree in length");
  }
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(label) +
                                  " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
}

void TrainSchedule::Validate() const {
  if (!(learning_rate >= 0.0)) {
    throw std::invalid_argument("learning rate must be nonnegative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw std::invalid_argument("lr decay factor must lie in (0, 1]");
  }
  for (size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    if (lr_decay_epochs[i] < 0 || lr_decay_epochs[i] >= epochs ||
        (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1])) {
      throw std::invalid_argument(
          "lr decay epochs must be strictly increasing and below epochs");
    }
  }
}

double TrainSchedule::LearningRateAt(int epoch) const {
  double lr = learning_rate;
  for (int decay_epoch : lr_decay_epochs) {
    if (epoch >= decay_epoch) lr *= lr_decay_factor;
  }
  return lr;
}

namespace {

void FillLayer(Vector& params, int offset, int fan_in, int fan_out, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> uniform(-scale, scale);
  for (int i = 0; i < fan_in * fan_out; ++i) params[offset + i] = uniform(rng);
  params.segment(offset + fan_in * fan_out, fan_out).setZero();
}

void CheckFeatures(const Network& net, const Matrix& features) {
  if (features.cols() != net.spec().input_dim()) {
    throw std::invalid_argument(
        "feature width " + std::to_string(features.cols()) +
        " does not match input dimension " +
        std::to_string(net.spec().input_dim()));
  }
}

void Activate(Activation activation, Matrix& x) {
  switch (activation) {
    case Activation::kRelu:
      x = x.cwiseMax(0.0);
      break;
    case Activation::kTanh:
      x = x.array().tanh().matrix();
      break;
  }
}

// Multiplies an upstream gradient by the activation derivative, expressed
// through the activation output.
void ScaleByDerivative(Activation activation, const Matrix& output,
                       Matrix& upstream) {
  switch (activation) {
    case Activation::kRelu:
      upstream = (output.array() > 0.0).select(upstream, 0.0);
      break;
    case Activation::kTanh:
      upstream.array() *= 1.0 - output.array().square();
      break;
  }
}

// Outputs of every encoder layer; outputs[0] is the input itself.
std::vector<Matrix> EncoderForward(const Network& net, const Matrix& features) {
  CheckFeatures(net, features);
  std::vector<Matrix> outputs;
  outputs.reserve(net.num_layers());
  outputs.push_back(features);
  for (int layer = 0; layer < net.head_layer(); ++layer) {
    Matrix z = outputs.back() * net.weights(layer).transpose();
    z.rowwise() += net.bias(layer).transpose();
    Activate(net.spec().activation, z);
    outputs.push_back(std::move(z));
  }
  return outputs;
}

Matrix HeadForward(const Network& net, const Matrix& embeddings) {
  Matrix logits = embeddings * net.weights(net.head_layer()).transpose();
  logits.rowwise() += net.bias(net.head_layer()).transpose();
  return logits;
}

// Gradients of the pre-activations of every layer, given the gradient at
// the last layer that should receive one (head or embedding).
struct Deltas {
  std::vector<Matrix> by_layer;  // empty matrix: layer gets no gradient
};

Deltas BackpropFromEmbedding(const Network& net,
                             const std::vector<Matrix>& outputs,
                             Matrix upstream) {
  Deltas deltas;
  deltas.by_layer.resize(net.num_layers());
  for (int layer = net.head_layer() - 1; layer >= 0; --layer) {
    ScaleByDerivative(net.spec().activation, outputs[layer + 1], upstream);
    Matrix next;
    if (layer > 0) next = upstream * net.weights(layer);
    deltas.by_layer[layer] = std::move(upstream);
    upstream = std::move(next);
  }
  return deltas;
}

Deltas BackpropFromLogits(const Network& net,
                          const std::vector<Matrix>& outputs,
                          Matrix logit_grad) {
  Matrix embedding_grad = logit_grad * net.weights(net.head_layer());
  Deltas deltas = BackpropFromEmbedding(net, outputs, std::move(embedding_grad));
  deltas.by_layer[net.head_layer()] = std::move(logit_grad);
  return deltas;
}

Vector SumGradient(const Network& net, const std::vector<Matrix>& outputs,
                   const Deltas& deltas) {
  Vector grad = Vector::Zero(net.param_count());
  for (int layer = 0; layer < net.num_layers(); ++layer) {
    const Matrix& delta = deltas.by_layer[layer];
    if (delta.size() == 0) continue;
    const Matrix& input = outputs[layer];
    const auto [fan_in, fan_out] = net.spec().LayerShapes()[layer];
    const int offset = net.layer_offset(layer);
    Eigen::Map<Matrix>(grad.data() + offset, fan_out, fan_in) =
        delta.transpose() * input;
    grad.segment(offset + fan_in * fan_out, fan_out) =
        delta.colwise().sum().transpose();
  }
  return grad;
}

Vector SampleGradient(const Network& net, const std::vector<Matrix>& outputs,
                      const Deltas& deltas, int sample) {
  Vector grad = Vector::Zero(net.param_count());
  for (int layer = 0; layer < net.num_layers(); ++layer) {
    const Matrix& delta = deltas.by_layer[layer];
    if (delta.size() == 0) continue;
    const auto [fan_in, fan_out] = net.spec().LayerShapes()[layer];
    const int offset = net.layer_offset(layer);
    Eigen::Map<Matrix>(grad.data() + offset, fan_out, fan_in) =
        delta.row(sample).transpose() * outputs[layer].row(sample);
    grad.segment(offset + fan_in * fan_out, fan_out) =
        delta.row(sample).transpose();
  }
  return grad;
}

// (softmax - onehot) / scale.
Matrix CrossEntropyGrad(const Matrix& logits, const std::vector<int>& labels,
                        double scale) {
  Matrix grad = Softmax(logits);
  for (size_t i = 0; i < labels.size(); ++i) grad(i, labels[i]) -= 1.0;
  return grad / scale;
}

}  // namespace

Network InitNetwork(const NetworkSpec& spec, uint64_t seed) {
  spec.Validate();
  Rng rng(seed);
  Vector params(spec.param_count());
  int offset = 0;
  for (const auto& [fan_in, fan_out] : spec.LayerShapes()) {
    FillLayer(params, offset, fan_in, fan_out, rng);
    offset += fan_in * fan_out + fan_out;
  }
  return Network(spec, std::move(params));
}

Matrix Encode(const Network& net, const Matrix& features) {
  return std::move(EncoderForward(net, features).back());
}

Matrix Forward(const Network& net, const Matrix& features) {
  return HeadForward(net, Encode(net, features));
}

Matrix Softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double max = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - max).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

std::vector<int> ArgmaxRows(const Matrix& scores) {
  std::vector<int> result(scores.rows());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    result[i] = static_cast<int>(best);
  }
  return result;
}

double Loss(const Network& net, const Batch& batch) {
  batch.Validate(net.spec().head_classes);
  const Matrix logits = Forward(net, batch.features);
  double total = 0.0;
  for (int i = 0; i < batch.size(); ++i) {
    const double max = logits.row(i).maxCoeff();
    const double log_sum =
        max + std::log((logits.row(i).array() - max).exp().sum());
    total += log_sum - logits(i, batch.labels[i]);
  }
  return total / batch.size();
}

Vector Grad(const Network& net, const Batch& batch) {
  batch.Validate(net.spec().head_classes);
  const std::vector<Matrix> outputs = EncoderForward(net, batch.features);
  const Matrix logits = HeadForward(net, outputs.back());
  const Deltas deltas = BackpropFromLogits(
      net, outputs, CrossEntropyGrad(logits, batch.labels, batch.size()));
  return SumGradient(net, outputs, deltas);
}

std::vector<Vector> PerSampleGrads(const Network& net, const Batch& batch) {
  batch.Validate(net.spec().head_classes);
  const std::vector<Matrix> outputs = EncoderForward(net, batch.features);
  const Matrix logits = HeadForward(net, outputs.back());
  const Deltas deltas = BackpropFromLogits(
      net, outputs, CrossEntropyGrad(logits, batch.labels, 1.0));
  std::vector<Vector> grads;
  grads.reserve(batch.size());
  for (int i = 0; i < batch.size(); ++i) {
    grads.push_back(SampleGradient(net, outputs, deltas, i));
  }
  return grads;
}

Vector EncoderGrad(const Network& net, const Matrix& features,
                   const Matrix& embedding_grad) {
  const std::vector<Matrix> outputs = EncoderForward(net, features);
  if (embedding_grad.rows() != features.rows() ||
      embedding_grad.cols() != net.spec().embedding_dim()) {
    throw std::invalid_argument("embedding gradient has the wrong shape");
  }
  const Deltas deltas = BackpropFromEmbedding(net, outputs, embedding_grad);
  return SumGradient(net, outputs, deltas);
}

Network MomentumSgd::Step(const Network& net, const Vector& grad,
                          double learning_rate) {
  velocity_ = momentum_ * velocity_ + grad;
  return Network(net.spec(), net.params() - learning_rate * velocity_);
}

SgdTrainer::SgdTrainer(Network net, Batch data, TrainSchedule schedule)
    : net_(std::move(net)),
      data_(std::move(data)),
      schedule_(std::move(schedule)),
      optimizer_(net_.param_count(), schedule_.momentum) {
  schedule_.Validate();
  data_.Validate(net_.spec().head_classes);
}

double SgdTrainer::RunEpoch() {
  const int n = data_.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(DeriveSeed(schedule_.seed, static_cast<uint64_t>(epoch_)));
  std::shuffle(order.begin(), order.end(), rng);

  const double lr = schedule_.LearningRateAt(epoch_);
  for (int start = 0; start < n; start += schedule_.batch_size) {
    const int end = std::min(n, start + schedule_.batch_size);
    const Batch minibatch = SliceBatch(
        data_, std::vector<int>(order.begin() + start, order.begin() + end));
    net_ = optimizer_.Step(net_, Grad(net_, minibatch), lr);
  }
  ++epoch_;
  return Loss(net_, data_);
}

TrainResult Train(const Network& net, const Batch& data,
                  const TrainSchedule& schedule) {
  SgdTrainer trainer(net, data, schedule);
  std::vector<double> history;
  while (!trainer.finished()) history.push_back(trainer.RunEpoch());
  return {trainer.network(), std::move(history)};
}

double Evaluate(const Network& net, const Batch& batch) {
  batch.Validate(net.spec().head_classes);
  const std::vector<int> predicted = ArgmaxRows(Forward(net, batch.features));
  int correct = 0;
  for (int i = 0; i < batch.size(); ++i) {
    if (predicted[i] == batch.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / batch.size();
}

Network ReplaceHead(const Network& net, int n_classes, uint64_t seed) {
  NetworkSpec spec = net.spec();
  spec.head_classes = n_classes;
  spec.Validate();
  Vector params(spec.param_count());
  const int encoder_count = net.encoder_param_count();
  params.head(encoder_count) = net.params().head(encoder_count);
  Rng rng(seed);
  FillLayer(params, encoder_count, spec.embedding_dim(), n_classes, rng);
  return Network(std::move(spec), std::move(params));
}

Batch SliceBatch(const Batch& batch, const std::vector<int>& rows) {
  Batch out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()),
                      batch.features.cols());
  out.labels.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    out.features.row(i) = batch.features.row(rows[i]);
    out.labels.push_back(batch.labels[rows[i]]);
  }
  return out;
}

}  // namespace tas
