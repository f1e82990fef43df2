// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evsplit Authors.

#include "evsplit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evsplit/error.hpp"

namespace evsplit::nn {

namespace {

std::string layer_tag(std::size_t i) { return "layer " + std::to_string(i); }

const char* activation_name(Activation a) { return a == Activation::kRelu ? "relu" : "identity"; }

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "'");
}

void affine(const DenseParams& p, const Matrix& in, Matrix& out) {
  const std::size_t n_out = p.out_dim();
  const std::size_t n_in = p.in_dim();
  out = Matrix(in.rows(), n_out);
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const auto x = in.row(r);
    auto y = out.row(r);
    for (std::size_t o = 0; o < n_out; ++o) {
      const auto w = p.weight.row(o);
      double acc = p.bias[o];
      for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
  }
}

}  // namespace

void validate_batch(const Batch& batch, std::size_t num_classes) {
  if (batch.labels.empty()) throw ConfigError("batch must contain at least one sample");
  if (batch.inputs.rows() != batch.labels.size()) throw ConfigError("batch inputs/labels length mismatch");
  for (int y : batch.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw DomainError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
  }
}

std::size_t input_dim(const LayerStack& stack) { return stack.empty() ? 0 : stack.front().params.in_dim(); }

std::size_t output_dim(const LayerStack& stack) { return stack.empty() ? 0 : stack.back().params.out_dim(); }

void validate_stack(const LayerStack& stack) {
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const auto& p = stack[i].params;
    if (p.bias.size() != p.out_dim()) throw ConfigError(layer_tag(i) + ": bias length differs from out_dim");
    if (p.in_dim() == 0 || p.out_dim() == 0) throw ConfigError(layer_tag(i) + ": empty weight matrix");
    if (i > 0 && stack[i - 1].params.out_dim() != p.in_dim())
      throw ConfigError(layer_tag(i) + ": in_dim does not match previous out_dim");
    if (!all_finite(p.weight.values()) || !all_finite(p.bias)) throw ConfigError(layer_tag(i) + ": non-finite entry");
  }
}

ForwardCache forward(const LayerStack& stack, const Matrix& input) {
  if (!stack.empty() && input.cols() != input_dim(stack))
    throw ConfigError("forward: input has " + std::to_string(input.cols()) + " columns, stack expects " +
                      std::to_string(input_dim(stack)));
  ForwardCache cache;
  cache.layer_inputs.reserve(stack.size());
  cache.pre_activations.reserve(stack.size());
  Matrix current = input;
  for (std::size_t l = 0; l < stack.size(); ++l) {
    const auto& layer = stack[l];
    if (l > 0 && stack[l - 1].params.out_dim() != layer.params.in_dim())
      throw ConfigError("forward: " + layer_tag(l) + " dimension mismatch");
    Matrix pre;
    affine(layer.params, current, pre);
    Matrix post = pre;
    if (layer.activation == Activation::kRelu) {
      for (double& v : post.values()) v = v > 0.0 ? v : 0.0;
    }
    cache.layer_inputs.push_back(std::move(current));
    cache.pre_activations.push_back(std::move(pre));
    current = std::move(post);
  }
  cache.output = std::move(current);
  return cache;
}

BackwardResult backward(const LayerStack& stack, const ForwardCache& cache, const Matrix& output_grad) {
  if (cache.layer_inputs.size() != stack.size() || cache.pre_activations.size() != stack.size())
    throw InternalError("backward: cache does not match stack depth");
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols())
    throw InternalError("backward: output gradient shape does not match cached output");

  BackwardResult result;
  result.params.resize(stack.size());
  Matrix grad = output_grad;
  for (std::size_t l = stack.size(); l-- > 0;) {
    const auto& p = stack[l].params;
    const Matrix& in = cache.layer_inputs[l];
    const Matrix& pre = cache.pre_activations[l];
    if (pre.cols() != p.out_dim() || in.cols() != p.in_dim())
      throw InternalError("backward: cache does not match " + layer_tag(l));
    if (stack[l].activation == Activation::kRelu) {
      auto g = grad.values();
      auto h = pre.values();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(h[i] > 0.0)) g[i] = 0.0;
      }
    }
    DenseParams& dp = result.params[l];
    dp.weight = Matrix(p.out_dim(), p.in_dim());
    dp.bias.assign(p.out_dim(), 0.0);
    Matrix grad_in(in.rows(), p.in_dim());
    for (std::size_t r = 0; r < in.rows(); ++r) {
      const auto x = in.row(r);
      const auto gr = grad.row(r);
      auto gi = grad_in.row(r);
      for (std::size_t o = 0; o < p.out_dim(); ++o) {
        const double go = gr[o];
        if (go == 0.0) continue;
        dp.bias[o] += go;
        auto dw = dp.weight.row(o);
        const auto w = p.weight.row(o);
        for (std::size_t i = 0; i < p.in_dim(); ++i) {
          dw[i] += go * x[i];
          gi[i] += go * w[i];
        }
      }
    }
    grad = std::move(grad_in);
  }
  result.input_grad = std::move(grad);
  return result;
}

ForwardCache forward_client(const LayerStack& client_side, const Batch& batch) {
  if (batch.inputs.rows() != batch.labels.size()) throw ConfigError("batch inputs/labels length mismatch");
  return forward(client_side, batch.inputs);
}

ServerCache forward_server(const LayerStack& processor, const LayerStack& head, const Matrix& smashed) {
  if (!processor.empty() && !head.empty() && output_dim(processor) != input_dim(head))
    throw ConfigError("forward_server: processor output does not match head input");
  ServerCache cache;
  cache.processor = forward(processor, smashed);
  cache.head = forward(head, cache.processor.output);
  return cache;
}

ServerGradient backward_server(const LayerStack& processor, const LayerStack& head, const ServerCache& cache,
                               const Matrix& logit_grad) {
  ServerGradient g;
  auto head_back = backward(head, cache.head, logit_grad);
  auto proc_back = backward(processor, cache.processor, head_back.input_grad);
  g.head = std::move(head_back.params);
  g.processor = std::move(proc_back.params);
  g.smashed_grad = std::move(proc_back.input_grad);
  return g;
}

double softplus(double x) {
  // log1p(exp(x)) loses nothing for x <= 0; for large x the result is x.
  if (x > 35.0) return x + std::exp(-x);
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix softplus_evidence(const Matrix& logits) {
  Matrix e = logits;
  for (double& v : e.values()) v = softplus(v);
  return e;
}

StackGradient zero_gradient(const LayerStack& stack) {
  StackGradient g(stack.size());
  for (std::size_t l = 0; l < stack.size(); ++l) {
    g[l].weight = Matrix(stack[l].params.out_dim(), stack[l].params.in_dim());
    g[l].bias.assign(stack[l].params.out_dim(), 0.0);
  }
  return g;
}

void accumulate(StackGradient& into, const StackGradient& other) {
  if (into.size() != other.size()) throw InternalError("accumulate: gradient depth mismatch");
  for (std::size_t l = 0; l < into.size(); ++l) {
    auto a = into[l].weight.values();
    auto b = other[l].weight.values();
    if (a.size() != b.size() || into[l].bias.size() != other[l].bias.size())
      throw InternalError("accumulate: gradient shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    for (std::size_t i = 0; i < into[l].bias.size(); ++i) into[l].bias[i] += other[l].bias[i];
  }
}

void sgd_update(LayerStack& stack, const StackGradient& grad, double learning_rate) {
  if (stack.size() != grad.size()) throw InternalError("sgd_update: gradient depth mismatch");
  for (std::size_t l = 0; l < stack.size(); ++l) {
    auto w = stack[l].params.weight.values();
    auto gw = grad[l].weight.values();
    if (w.size() != gw.size()) throw InternalError("sgd_update: gradient shape mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * gw[i];
    auto& b = stack[l].params.bias;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= learning_rate * grad[l].bias[i];
  }
}

LayerStack make_stack(std::span<const std::size_t> widths, Activation hidden, Activation last, std::mt19937_64& rng) {
  if (widths.size() < 2) throw ConfigError("make_stack: need at least input and output widths");
  LayerStack stack;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    if (in == 0 || out == 0) throw ConfigError("make_stack: zero width");
    DenseLayer layer;
    layer.activation = (l + 2 == widths.size()) ? last : hidden;
    layer.params.weight = Matrix(out, in);
    layer.params.bias.assign(out, 0.0);
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : layer.params.weight.values()) v = dist(rng);
    stack.push_back(std::move(layer));
  }
  return stack;
}

void SplitModel::validate() const {
  for (const auto* s : {&client_side, &server_processor, &server_head, &auxiliary_extractor, &auxiliary_head}) {
    if (s->empty()) throw ConfigError("SplitModel: every part needs at least one layer");
    validate_stack(*s);
  }
  if (output_dim(client_side) != input_dim(server_processor))
    throw ConfigError("SplitModel: smashed dimension does not match server processor input");
  if (output_dim(server_processor) != input_dim(server_head))
    throw ConfigError("SplitModel: processor output does not match head input");
  if (output_dim(auxiliary_extractor) != input_dim(auxiliary_head))
    throw ConfigError("SplitModel: auxiliary extractor output does not match auxiliary head input");
  if (input_dim(auxiliary_extractor) != input_dim(client_side))
    throw ConfigError("SplitModel: auxiliary model input differs from client-side input");
  if (output_dim(auxiliary_head) != output_dim(server_head))
    throw ConfigError("SplitModel: auxiliary head class count differs from server head");
}

SplitModel make_split_model(const SplitArchitecture& arch, std::uint64_t seed) {
  if (arch.client_widths.empty() || arch.processor_widths.empty() || arch.aux_extractor_widths.empty())
    throw ConfigError("SplitArchitecture: extractor and processor need at least one layer");
  std::mt19937_64 rng(seed);
  auto widths = [](std::size_t first, const std::vector<std::size_t>& rest, std::size_t tail) {
    std::vector<std::size_t> w{first};
    w.insert(w.end(), rest.begin(), rest.end());
    if (tail != 0) w.push_back(tail);
    return w;
  };
  SplitModel m;
  const std::size_t smashed = arch.client_widths.back();
  const std::size_t processed = arch.processor_widths.back();
  const std::size_t aux_features = arch.aux_extractor_widths.back();
  m.client_side = make_stack(widths(arch.input_dim, arch.client_widths, 0), Activation::kRelu, Activation::kRelu, rng);
  m.server_processor = make_stack(widths(smashed, arch.processor_widths, 0), Activation::kRelu, Activation::kRelu, rng);
  m.server_head =
      make_stack(widths(processed, arch.head_hidden, arch.num_classes), Activation::kRelu, Activation::kIdentity, rng);
  m.auxiliary_extractor =
      make_stack(widths(arch.input_dim, arch.aux_extractor_widths, 0), Activation::kRelu, Activation::kRelu, rng);
  m.auxiliary_head = make_stack(widths(aux_features, arch.aux_head_hidden, arch.num_classes), Activation::kRelu,
                                Activation::kIdentity, rng);
  m.validate();
  return m;
}

LayerStack concat(std::initializer_list<const LayerStack*> parts) {
  LayerStack out;
  for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(scores.rows(), 0);
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::size_t parameter_count(const LayerStack& stack) {
  std::size_t n = 0;
  for (const auto& l : stack) n += l.params.weight.size() + l.params.bias.size();
  return n;
}

std::vector<double> flatten(const LayerStack& stack) {
  std::vector<double> flat;
  flat.reserve(parameter_count(stack));
  for (const auto& l : stack) {
    flat.insert(flat.end(), l.params.weight.values().begin(), l.params.weight.values().end());
    flat.insert(flat.end(), l.params.bias.begin(), l.params.bias.end());
  }
  return flat;
}

void assign_flat(LayerStack& stack, std::span<const double> flat) {
  if (flat.size() != parameter_count(stack)) throw ConfigError("assign_flat: parameter count mismatch");
  std::size_t k = 0;
  for (auto& l : stack) {
    for (double& v : l.params.weight.values()) v = flat[k++];
    for (double& v : l.params.bias) v = flat[k++];
  }
}

nlohmann::json to_json(const LayerStack& stack) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const auto& p = stack[i].params;
    arr.push_back({{"index", i},
                   {"in", p.in_dim()},
                   {"out", p.out_dim()},
                   {"activation", activation_name(stack[i].activation)},
                   {"weight", std::vector<double>(p.weight.values().begin(), p.weight.values().end())},
                   {"bias", p.bias}});
  }
  return arr;
}

LayerStack stack_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("layer stack snapshot must be an array");
  LayerStack stack;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (e.at("index").get<std::size_t>() != i) throw ConfigError("layer snapshot out of order at " + layer_tag(i));
    const auto in = e.at("in").get<std::size_t>();
    const auto out = e.at("out").get<std::size_t>();
    const auto w = e.at("weight").get<std::vector<double>>();
    if (w.size() != in * out) throw ConfigError(layer_tag(i) + ": weight length does not match in*out");
    DenseLayer layer;
    layer.activation = activation_from_name(e.at("activation").get<std::string>());
    layer.params.weight = Matrix(out, in);
    std::ranges::copy(w, layer.params.weight.values().begin());
    layer.params.bias = e.at("bias").get<std::vector<double>>();
    stack.push_back(std::move(layer));
  }
  validate_stack(stack);
  return stack;
}

nlohmann::json to_json(const SplitModel& model) {
  return {{"client_side", to_json(model.client_side)},
          {"server_processor", to_json(model.server_processor)},
          {"server_head", to_json(model.server_head)},
          {"auxiliary_extractor", to_json(model.auxiliary_extractor)},
          {"auxiliary_head", to_json(model.auxiliary_head)}};
}

SplitModel split_model_from_json(const nlohmann::json& j) {
  SplitModel m;
  m.client_side = stack_from_json(j.at("client_side"));
  m.server_processor = stack_from_json(j.at("server_processor"));
  m.server_head = stack_from_json(j.at("server_head"));
  m.auxiliary_extractor = stack_from_json(j.at("auxiliary_extractor"));
  m.auxiliary_head = stack_from_json(j.at("auxiliary_head"));
  m.validate();
  return m;
}

}  // namespace evsplit::nn
