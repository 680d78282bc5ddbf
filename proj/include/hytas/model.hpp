#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hytas/autodiff.hpp"
#include "hytas/data_io.hpp"
#include "hytas/search_space.hpp"
#include "hytas/tensor.hpp"

namespace hytas {

inline constexpr double kInitStd = 0.02;

struct Parameter {
  std::string name;
  Tensor value;
  std::size_t entry;  // 0-based registry position
  ParamRole role;
};

struct LayerEntry {
  int index;  // 1-based
  LayerKind kind;
  std::optional<int> block;  // 1-based
  std::vector<std::size_t> params;  // positions in NetworkInstance::params
};

struct NetworkInstance {
  Genotype genotype;
  TokenGeometry geometry;
  std::vector<Parameter> params;
  std::vector<LayerEntry> registry;

  std::size_t param_count() const;
  std::vector<Tensor> parameter_values() const;
};

NetworkInstance build(const Genotype& g, const TokenGeometry& geom, std::uint64_t init_seed);

// Same as build() with every weight/embedding drawn from a truncated normal of the given std.
NetworkInstance build_with_std(const Genotype& g, const TokenGeometry& geom, std::uint64_t init_seed, double stddev);

struct ForwardOptions {
  bool param_grads = false;
  bool input_grad = false;
  bool capture_activations = false;  // retain per-entry outputs and their gradients
  bool capture_gelu_inputs = false;
};

struct ForwardResult {
  Var logits;                    // (B, num_classes)
  Var input;                     // (B, T, D_in)
  std::vector<Var> params;       // aligned with NetworkInstance::params
  std::vector<Var> activations;  // aligned with the registry when captured
  std::vector<Var> gelu_inputs;  // one per block when captured, (B, T+1, hidden)
};

// Records one forward pass on `tape`. `param_values`, when non-empty, replaces
// the network's parameter tensors for this pass only.
ForwardResult forward(const NetworkInstance& net, Tape& tape, const Tensor& batch_data, const ForwardOptions& opts,
                      std::span<const Tensor> param_values = {});

// Logits without a retained graph.
Tensor predict_logits(const NetworkInstance& net, const Tensor& batch_data);

}  // namespace hytas
