#include "hytas/model.hpp"

#include <cmath>

#include "hytas/error.hpp"
#include "hytas/rng.hpp"

namespace hytas {

std::size_t NetworkInstance::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.numel();
  return n;
}

std::vector<Tensor> NetworkInstance::parameter_values() const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

NetworkInstance build_with_std(const Genotype& g, const TokenGeometry& geom, std::uint64_t init_seed, double stddev) {
  validate_genotype(g);
  geom.validate();
  NetworkInstance net;
  net.genotype = g;
  net.geometry = geom;
  const auto layers = layer_layout(g);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    net.registry.push_back(LayerEntry{static_cast<int>(i + 1), layers[i].kind, layers[i].block, {}});
  }
  Rng rng(init_seed);
  for (auto& spec : parameter_layout(g, geom)) {
    Tensor value(spec.shape, 0.0);
    switch (spec.role) {
      case ParamRole::Weight:
      case ParamRole::Embedding:
        for (double& v : value.data()) v = truncated_normal(rng, stddev);
        break;
      case ParamRole::Gain: value.fill(1.0); break;
      case ParamRole::Bias: break;
    }
    net.registry[spec.entry].params.push_back(net.params.size());
    net.params.push_back(Parameter{std::move(spec.name), std::move(value), spec.entry, spec.role});
  }
  return net;
}

NetworkInstance build(const Genotype& g, const TokenGeometry& geom, std::uint64_t init_seed) {
  return build_with_std(g, geom, init_seed, kInitStd);
}

namespace {

class ParamCursor {
 public:
  explicit ParamCursor(std::span<const Var> vars) : vars_(vars) {}
  Var next() {
    if (pos_ >= vars_.size()) throw ContractError("forward: parameter list exhausted");
    return vars_[pos_++];
  }
  bool done() const { return pos_ == vars_.size(); }

 private:
  std::span<const Var> vars_;
  std::size_t pos_ = 0;
};

}  // namespace

ForwardResult forward(const NetworkInstance& net, Tape& tape, const Tensor& batch_data, const ForwardOptions& opts,
                      std::span<const Tensor> param_values) {
  const auto& geom = net.geometry;
  if (batch_data.rank() != 3 || batch_data.dim(1) != geom.tokens || batch_data.dim(2) != geom.token_width) {
    throw DimensionError("forward: expected batch (B, " + std::to_string(geom.tokens) + ", " +
                         std::to_string(geom.token_width) + "), got " + shape_str(batch_data.shape()));
  }
  if (!param_values.empty() && param_values.size() != net.params.size()) {
    throw ContractError("forward: parameter override has the wrong length");
  }
  const std::size_t batch = batch_data.dim(0);
  const auto d = static_cast<std::size_t>(net.genotype.embed_dim);

  ForwardResult res;
  res.input = tape.leaf(batch_data, opts.input_grad);
  res.params.reserve(net.params.size());
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    const Tensor& value = param_values.empty() ? net.params[i].value : param_values[i];
    if (value.shape() != net.params[i].value.shape()) {
      throw DimensionError("forward: override for " + net.params[i].name + " has shape " + shape_str(value.shape()));
    }
    res.params.push_back(tape.leaf(value, opts.param_grads));
  }
  auto capture = [&](Var v) {
    if (opts.capture_activations) {
      tape.retain_grad(v);
      res.activations.push_back(v);
    }
  };

  ParamCursor p(res.params);
  Var w = p.next();
  Var b = p.next();
  Var cls = p.next();
  Var pos = p.next();
  Var tokens = linear(res.input, w, b);
  Var h = concat({expand_leading(cls, batch), tokens}, 1);
  h = add(h, pos);
  capture(h);

  for (int blk = 0; blk < net.genotype.depth; ++blk) {
    const auto heads = static_cast<std::size_t>(net.genotype.num_heads[blk]);
    Var g1 = p.next();
    Var b1 = p.next();
    Var wqkv = p.next();
    Var bqkv = p.next();
    Var wproj = p.next();
    Var bproj = p.next();
    Var qkv = linear(layer_norm(h, g1, b1), wqkv, bqkv);
    capture(qkv);
    Var proj = linear(attention(qkv, heads, kHeadDim), wproj, bproj);
    capture(proj);
    h = add(h, proj);

    Var g2 = p.next();
    Var b2 = p.next();
    Var wfc1 = p.next();
    Var bfc1 = p.next();
    Var wfc2 = p.next();
    Var bfc2 = p.next();
    Var pre = linear(layer_norm(h, g2, b2), wfc1, bfc1);
    if (opts.capture_gelu_inputs) res.gelu_inputs.push_back(pre);
    Var act = gelu(pre);
    capture(act);
    Var fc2 = linear(act, wfc2, bfc2);
    capture(fc2);
    h = add(h, fc2);
  }

  Var gn = p.next();
  Var bn = p.next();
  Var wh = p.next();
  Var bh = p.next();
  Var cls_state = reshape(slice(layer_norm(h, gn, bn), 1, 0, 1), Shape{batch, d});
  res.logits = linear(cls_state, wh, bh);
  capture(res.logits);
  if (!p.done()) throw ContractError("forward: unused parameters");
  return res;
}

Tensor predict_logits(const NetworkInstance& net, const Tensor& batch_data) {
  Tape tape;
  return forward(net, tape, batch_data, ForwardOptions{}).logits.value();
}

}  // namespace hytas
