// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"

#include "evsplit/matrix.hpp"

namespace evsplit::nn {

enum class Activation { kIdentity, kRelu };

/// Affine map y = W x + b; weight is out_dim x in_dim.
struct DenseParams {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
  bool operator==(const DenseParams&) const = default;
};

struct DenseLayer {
  DenseParams params;
  Activation activation = Activation::kRelu;
  bool operator==(const DenseLayer&) const = default;
};

/// Ordered sequence of dense layers applied left to right.
using LayerStack = std::vector<DenseLayer>;

/// Per-layer parameter gradients, same shapes as the stack's parameters.
using StackGradient = std::vector<DenseParams>;

/// Inputs with integer class labels in [0, num_classes).
struct Batch {
  Matrix inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

void validate_batch(const Batch& batch, std::size_t num_classes);

std::size_t input_dim(const LayerStack& stack);
std::size_t output_dim(const LayerStack& stack);

/// Throws ConfigError on inconsistent layer shapes or non-finite entries.
void validate_stack(const LayerStack& stack);

/// Activations recorded during a forward pass; enough for exact backprop.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
  Matrix output;
};

ForwardCache forward(const LayerStack& stack, const Matrix& input);

struct BackwardResult {
  StackGradient params;
  Matrix input_grad;
};

/// Reverse-mode pass through `stack`. ReLU passes gradient only where the
/// pre-activation is strictly positive.
BackwardResult backward(const LayerStack& stack, const ForwardCache& cache, const Matrix& output_grad);

/// Client-side extractor: inputs -> smashed features.
ForwardCache forward_client(const LayerStack& client_side, const Batch& batch);

struct ServerCache {
  ForwardCache processor;
  ForwardCache head;
  const Matrix& logits() const { return head.output; }
};

ServerCache forward_server(const LayerStack& processor, const LayerStack& head, const Matrix& smashed);

struct ServerGradient {
  StackGradient processor;
  StackGradient head;
  Matrix smashed_grad;
};

ServerGradient backward_server(const LayerStack& processor, const LayerStack& head, const ServerCache& cache,
                               const Matrix& logit_grad);

double softplus(double x);
double sigmoid(double x);

/// Elementwise softplus, the non-negative evidence activation.
Matrix softplus_evidence(const Matrix& logits);

StackGradient zero_gradient(const LayerStack& stack);
void accumulate(StackGradient& into, const StackGradient& other);
void sgd_update(LayerStack& stack, const StackGradient& grad, double learning_rate);

/// Builds a stack with the given widths (widths[0] is the input dim).
/// Hidden layers use `hidden`, the final layer uses `last`. Weights are
/// uniform in +-sqrt(6 / fan_in), biases zero.
LayerStack make_stack(std::span<const std::size_t> widths, Activation hidden, Activation last, std::mt19937_64& rng);

/// Client extractor, server processor and head, and the auxiliary model.
struct SplitModel {
  LayerStack client_side;
  LayerStack server_processor;
  LayerStack server_head;
  LayerStack auxiliary_extractor;
  LayerStack auxiliary_head;

  std::size_t num_classes() const { return output_dim(server_head); }
  void validate() const;
  bool operator==(const SplitModel&) const = default;
};

struct SplitArchitecture {
  std::size_t input_dim = 8;
  std::size_t num_classes = 3;
  std::vector<std::size_t> client_widths{16};     // last entry is the smashed dim
  std::vector<std::size_t> processor_widths{16};
  std::vector<std::size_t> head_hidden{};
  std::vector<std::size_t> aux_extractor_widths{8};
  std::vector<std::size_t> aux_head_hidden{};
};

SplitModel make_split_model(const SplitArchitecture& arch, std::uint64_t seed);

/// Concatenates stacks into one (used for full-model inference).
LayerStack concat(std::initializer_list<const LayerStack*> parts);

/// Argmax of each row of `scores` (lowest index on ties).
std::vector<int> argmax_rows(const Matrix& scores);

std::size_t parameter_count(const LayerStack& stack);
std::vector<double> flatten(const LayerStack& stack);
void assign_flat(LayerStack& stack, std::span<const double> flat);

/// Snapshot layout: [{"index", "in", "out", "activation", "weight" (row-major), "bias"}, ...].
nlohmann::json to_json(const LayerStack& stack);
LayerStack stack_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SplitModel& model);
SplitModel split_model_from_json(const nlohmann::json& j);

}  // namespace evsplit::nn
