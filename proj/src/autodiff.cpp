#include "hytas/autodiff.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <string>

#include "hytas/error.hpp"
#include "hytas/kernels.hpp"

namespace hytas {
namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// True when `suffix` equals the trailing dimensions of `full`.
bool is_suffix(const Shape& suffix, const Shape& full) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.begin(), suffix.end(), full.end() - static_cast<std::ptrdiff_t>(suffix.size()));
}

void accumulate(Tensor& dst, std::span<const double> src) {
  auto d = dst.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

// Adds src (shape S+T) into dst (shape T) by summing over the leading block.
void accumulate_reduced(Tensor& dst, std::span<const double> src) {
  const std::size_t inner = dst.numel();
  auto d = dst.data();
  for (std::size_t off = 0; off < src.size(); off += inner) {
    for (std::size_t i = 0; i < inner; ++i) d[i] += src[off + i];
  }
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

void require_valid(const char* op, Var v) {
  if (!v.valid()) throw ContractError(std::string(op) + ": invalid operand");
}

}  // namespace

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("var: value() on an unbound variable");
  return tape_->value(id_);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite value in forward output " + shape_str(value.shape()));
  }
  Node node;
  node.value = std::move(value);
  node.op = op;
  node.is_leaf = false;
  node.backward = std::move(backward);
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw ContractError(std::string(op) + ": operand recorded on a different tape");
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::retain_grad(Var v) { nodes_[v.id()].retain = true; }

const Tensor& GradientMap::operator[](Var v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) {
    throw ContractError("gradient: node " + std::to_string(v.id()) + " is neither a requires_grad leaf nor retained");
  }
  return it->second;
}

GradientMap backward(Tape& tape, Var loss) {
  if (&loss.tape() != &tape) throw ContractError("backward: loss belongs to a different tape");
  const Tensor& lv = loss.value();
  if (lv.numel() != 1 || lv.rank() != 0) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(lv.shape()));
  }
  if (!std::isfinite(lv[0])) throw ContractError("backward: loss is not finite");

  auto& nodes = tape.nodes_;
  const std::size_t n = loss.id() + 1;
  std::vector<std::optional<Tensor>> grads(n);
  grads[loss.id()] = Tensor(Shape{}, 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t idx = n; idx-- > 0;) {
    auto& node = nodes[idx];
    if (node.is_leaf || !node.requires_grad || !grads[idx]) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : node.inputs) {
      in_values.push_back(&nodes[in].value);
      if (nodes[in].requires_grad) {
        if (!grads[in]) grads[in] = Tensor(nodes[in].value.shape(), 0.0);
        in_grads.push_back(&*grads[in]);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.backward(BackwardArgs{node.value, *grads[idx], in_values, in_grads});
    for (Tensor* g : in_grads) {
      if (g && !g->all_finite()) {
        throw NumericError(std::string(node.op) + ": non-finite gradient during backward (node " +
                           std::to_string(idx) + ")");
      }
    }
    if (!node.retain) grads[idx].reset();
  }

  GradientMap out;
  for (std::size_t idx = 0; idx < n; ++idx) {
    const auto& node = nodes[idx];
    const bool keep = (node.is_leaf && node.requires_grad) || node.retain;
    if (!keep) continue;
    if (grads[idx]) {
      out.grads_.emplace(idx, std::move(*grads[idx]));
    } else {
      out.grads_.emplace(idx, Tensor(node.value.shape(), 0.0));
    }
  }
  // Leaves and retained nodes recorded after the loss are unreachable.
  for (std::size_t idx = n; idx < nodes.size(); ++idx) {
    const auto& node = nodes[idx];
    if ((node.is_leaf && node.requires_grad) || node.retain) out.grads_.emplace(idx, Tensor(node.value.shape(), 0.0));
  }
  return out;
}

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_gradient: step must be positive");
  Tensor grad(x.shape(), 0.0);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_gradient: non-finite evaluation at coordinate " + std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  require_valid("matmul", a);
  require_valid("matmul", b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) shape_error("matmul", sa, sb);
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t n = sb.back();
  if (sb[sb.size() - 2] != k) shape_error("matmul", sa, sb);
  const bool shared_b = sb.size() == 2;
  if (!shared_b && (sb.size() != sa.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin()))) {
    shape_error("matmul", sa, sb);
  }
  const std::size_t batch = a.value().numel() / (m * k);
  Shape out_shape = sa;
  out_shape.back() = n;
  Tensor out(out_shape, 0.0);
  const auto av = a.value().data();
  const auto bv = b.value().data();
  auto ov = out.data();
  if (shared_b) {
    kernels::gemm({batch * m, n, k}, av, bv, ov);
  } else {
    for (std::size_t p = 0; p < batch; ++p) {
      kernels::gemm({m, n, k}, av.subspan(p * m * k, m * k), bv.subspan(p * k * n, k * n),
                    ov.subspan(p * m * n, m * n));
    }
  }
  return a.tape().record("matmul", std::move(out), {a, b}, [=](const BackwardArgs& args) {
    const auto g = args.grad_out.data();
    const auto A = args.in[0]->data();
    const auto B = args.in[1]->data();
    if (shared_b) {
      if (args.grad_in[0]) kernels::gemm_nt({batch * m, k, n}, g, B, args.grad_in[0]->data());
      if (args.grad_in[1]) kernels::gemm_tn({k, n, batch * m}, A, g, args.grad_in[1]->data());
      return;
    }
    for (std::size_t p = 0; p < batch; ++p) {
      const auto gp = g.subspan(p * m * n, m * n);
      if (args.grad_in[0]) {
        kernels::gemm_nt({m, k, n}, gp, B.subspan(p * k * n, k * n), args.grad_in[0]->data().subspan(p * m * k, m * k));
      }
      if (args.grad_in[1]) {
        kernels::gemm_tn({k, n, m}, A.subspan(p * m * k, m * k), gp, args.grad_in[1]->data().subspan(p * k * n, k * n));
      }
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  require_valid("linear", x);
  require_valid("linear", weight);
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.empty() || sw.size() != 2 || sw[1] != sx.back()) shape_error("linear", sx, sw);
  const std::size_t in = sw[1];
  const std::size_t out_dim = sw[0];
  const bool has_bias = bias.valid();
  if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != out_dim)) shape_error("linear", sw, bias.shape());
  const std::size_t rows = x.value().numel() / in;
  Shape out_shape = sx;
  out_shape.back() = out_dim;
  Tensor out(out_shape, 0.0);
  auto ov = out.data();
  if (has_bias) {
    const auto bv = bias.value().data();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), ov.begin() + r * out_dim);
  }
  kernels::gemm_nt({rows, out_dim, in}, x.value().data(), weight.value().data(), ov);
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return x.tape().record("linear", std::move(out), std::move(inputs), [=](const BackwardArgs& args) {
    const auto g = args.grad_out.data();
    if (args.grad_in[0]) kernels::gemm({rows, in, out_dim}, g, args.in[1]->data(), args.grad_in[0]->data());
    if (args.grad_in[1]) kernels::gemm_tn({out_dim, in, rows}, g, args.in[0]->data(), args.grad_in[1]->data());
    if (has_bias && args.grad_in[2]) accumulate_reduced(*args.grad_in[2], g);
  });
}

Var add(Var a, Var b) {
  require_valid("add", a);
  require_valid("add", b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (!is_suffix(sb, sa)) shape_error("add", sa, sb);
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t off = 0; off < ov.size(); off += bv.size()) {
    for (std::size_t i = 0; i < bv.size(); ++i) ov[off + i] += bv[i];
  }
  return a.tape().record("add", std::move(out), {a, b}, [](const BackwardArgs& args) {
    if (args.grad_in[0]) accumulate(*args.grad_in[0], args.grad_out.data());
    if (args.grad_in[1]) accumulate_reduced(*args.grad_in[1], args.grad_out.data());
  });
}

Var mul(Var a, Var b) {
  require_valid("mul", a);
  require_valid("mul", b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (!is_suffix(sb, sa)) shape_error("mul", sa, sb);
  Tensor out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t off = 0; off < ov.size(); off += bv.size()) {
    for (std::size_t i = 0; i < bv.size(); ++i) ov[off + i] *= bv[i];
  }
  return a.tape().record("mul", std::move(out), {a, b}, [](const BackwardArgs& args) {
    const auto g = args.grad_out.data();
    const auto A = args.in[0]->data();
    const auto B = args.in[1]->data();
    const std::size_t inner = B.size();
    if (args.grad_in[0]) {
      auto d = args.grad_in[0]->data();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * B[i % inner];
    }
    if (args.grad_in[1]) {
      auto d = args.grad_in[1]->data();
      for (std::size_t i = 0; i < g.size(); ++i) d[i % inner] += g[i] * A[i];
    }
  });
}

Var scale(Var a, double factor) {
  require_valid("scale", a);
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return a.tape().record("scale", std::move(out), {a}, [factor](const BackwardArgs& args) {
    if (!args.grad_in[0]) return;
    auto d = args.grad_in[0]->data();
    const auto g = args.grad_out.data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  });
}

Var permute(Var a, std::vector<std::size_t> axes) {
  require_valid("permute", a);
  const Shape& s = a.shape();
  {
    std::vector<std::size_t> sorted = axes;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(s.size());
    std::iota(iota.begin(), iota.end(), 0);
    if (sorted != iota) shape_error("permute", s, Shape(axes.begin(), axes.end()));
  }
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[axes[i]];
  const auto in_strides = strides_of(s);
  // src_stride[i]: input stride of the i-th output axis.
  std::vector<std::size_t> src_stride(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) src_stride[i] = in_strides[axes[i]];

  // Copy in runs along the trailing output axis when it stays contiguous in the input.
  const std::size_t rank = out_shape.size();
  const std::size_t run = rank > 0 && src_stride[rank - 1] == 1 ? out_shape[rank - 1] : 1;
  const std::size_t total = shape_numel(out_shape);
  std::vector<std::size_t> starts(total / run);
  {
    const std::size_t outer_rank = run == 1 ? rank : rank - 1;
    std::vector<std::size_t> idx(outer_rank, 0);
    std::size_t src = 0;
    for (std::size_t& start : starts) {
      start = src;
      for (std::size_t ax = outer_rank; ax-- > 0;) {
        ++idx[ax];
        src += src_stride[ax];
        if (idx[ax] < out_shape[ax]) break;
        src -= src_stride[ax] * out_shape[ax];
        idx[ax] = 0;
      }
    }
  }
  Tensor out(out_shape, 0.0);
  const double* in = a.value().data().data();
  double* ov = out.data().data();
  for (std::size_t r = 0; r < starts.size(); ++r) std::copy_n(in + starts[r], run, ov + r * run);
  return a.tape().record("permute", std::move(out), {a}, [starts = std::move(starts), run](const BackwardArgs& args) {
    if (!args.grad_in[0]) return;
    double* d = args.grad_in[0]->data().data();
    const double* g = args.grad_out.data().data();
    for (std::size_t r = 0; r < starts.size(); ++r) {
      double* dst = d + starts[r];
      const double* src = g + r * run;
      for (std::size_t j = 0; j < run; ++j) dst[j] += src[j];
    }
  });
}

Var transpose_last_two(Var a) {
  require_valid("transpose_last_two", a);
  const std::size_t r = a.shape().size();
  if (r < 2) throw DimensionError("transpose_last_two: rank " + std::to_string(r) + " tensor " + shape_str(a.shape()));
  std::vector<std::size_t> axes(r);
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[r - 1], axes[r - 2]);
  return permute(a, std::move(axes));
}

Var reshape(Var a, Shape shape) {
  require_valid("reshape", a);
  if (shape_numel(shape) != a.value().numel()) shape_error("reshape", a.shape(), shape);
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a}, [](const BackwardArgs& args) {
    if (args.grad_in[0]) accumulate(*args.grad_in[0], args.grad_out.data());
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  for (const Var& p : parts) require_valid("concat", p);
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size()) shape_error("concat", s0, Shape{axis});
  std::size_t total_axis = 0;
  std::vector<std::size_t> extents;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) shape_error("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) shape_error("concat", s0, s);
    }
    extents.push_back(s[axis]);
    total_axis += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape out_shape = s0;
  out_shape[axis] = total_axis;
  Tensor out(out_shape, 0.0);
  auto ov = out.data();
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto src = parts[p].value().data();
    const std::size_t chunk = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.begin() + o * chunk, chunk, ov.begin() + o * total_axis * inner + offset * inner);
    }
    offset += extents[p];
  }
  return parts.front().tape().record(
      "concat", std::move(out), parts, [extents, outer, inner, total_axis](const BackwardArgs& args) {
        const auto g = args.grad_out.data();
        std::size_t offset = 0;
        for (std::size_t p = 0; p < extents.size(); ++p) {
          const std::size_t chunk = extents[p] * inner;
          if (args.grad_in[p]) {
            auto d = args.grad_in[p]->data();
            for (std::size_t o = 0; o < outer; ++o) {
              for (std::size_t i = 0; i < chunk; ++i) d[o * chunk + i] += g[o * total_axis * inner + offset * inner + i];
            }
          }
          offset += extents[p];
        }
      });
}

Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length) {
  require_valid("slice", a);
  const Shape& s = a.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t full = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out(out_shape, 0.0);
  const auto src = a.value().data();
  auto ov = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src.begin() + (o * full + start) * inner, length * inner, ov.begin() + o * length * inner);
  }
  return a.tape().record("slice", std::move(out), {a}, [=](const BackwardArgs& args) {
    if (!args.grad_in[0]) return;
    auto d = args.grad_in[0]->data();
    const auto g = args.grad_out.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < length * inner; ++i) d[(o * full + start) * inner + i] += g[o * length * inner + i];
    }
  });
}

Var expand_leading(Var a, std::size_t count) {
  require_valid("expand_leading", a);
  if (count == 0) throw DimensionError("expand_leading: count must be positive");
  Shape out_shape{count};
  out_shape.insert(out_shape.end(), a.shape().begin(), a.shape().end());
  Tensor out(out_shape, 0.0);
  const auto src = a.value().data();
  auto ov = out.data();
  for (std::size_t c = 0; c < count; ++c) std::copy(src.begin(), src.end(), ov.begin() + c * src.size());
  return a.tape().record("expand_leading", std::move(out), {a}, [](const BackwardArgs& args) {
    if (args.grad_in[0]) accumulate_reduced(*args.grad_in[0], args.grad_out.data());
  });
}

Var softmax(Var a) {
  require_valid("softmax", a);
  const Shape& s = a.shape();
  if (s.empty()) throw DimensionError("softmax: scalar input");
  const std::size_t cols = s.back();
  const std::size_t rows = a.value().numel() / cols;
  Tensor out(s, 0.0);
  kernels::softmax_rows(rows, cols, a.value().data(), out.data());
  return a.tape().record("softmax", std::move(out), {a}, [rows, cols](const BackwardArgs& args) {
    if (!args.grad_in[0]) return;
    const auto y = args.out.data();
    const auto g = args.grad_out.data();
    auto d = args.grad_in[0]->data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[r * cols + j] * y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) d[r * cols + j] += y[r * cols + j] * (g[r * cols + j] - dot);
    }
  });
}

Var attention(Var qkv, std::size_t heads, std::size_t head_dim) {
  require_valid("attention", qkv);
  const Shape& s = qkv.shape();
  const std::size_t inner = heads * head_dim;
  if (s.size() != 3 || heads == 0 || head_dim == 0 || s[2] != 3 * inner) {
    throw DimensionError("attention: expected (B, T, 3*" + std::to_string(inner) + "), got " + shape_str(s));
  }
  const std::size_t batch = s[0];
  const std::size_t seq = s[1];
  const std::size_t width = s[2];
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));
  auto probs = std::make_shared<std::vector<double>>(batch * heads * seq * seq);
  Tensor out(Shape{batch, seq, inner}, 0.0);
  const double* x = qkv.value().data().data();
  double* o = out.data().data();
  const auto jobs = static_cast<std::int64_t>(batch * heads);
#pragma omp parallel for schedule(static) if (jobs > 1 && batch * seq * seq * inner >= (1U << 15) && !omp_in_parallel())
  for (std::int64_t job = 0; job < jobs; ++job) {
    const std::size_t b = static_cast<std::size_t>(job) / heads;
    const std::size_t h = static_cast<std::size_t>(job) % heads;
    const double* base = x + b * seq * width;
    const std::size_t qo = h * head_dim;
    const std::size_t ko = inner + h * head_dim;
    const std::size_t vo = 2 * inner + h * head_dim;
    double* p = probs->data() + static_cast<std::size_t>(job) * seq * seq;
    for (std::size_t i = 0; i < seq; ++i) {
      const double* q = base + i * width + qo;
      double* row = p + i * seq;
      for (std::size_t j = 0; j < seq; ++j) {
        const double* k = base + j * width + ko;
        double dot = 0.0;
        for (std::size_t c = 0; c < head_dim; ++c) dot += q[c] * k[c];
        row[j] = dot * scale_factor;
      }
    }
    kernels::reference::softmax_rows(seq, seq, std::span<const double>(p, seq * seq), std::span<double>(p, seq * seq));
    for (std::size_t i = 0; i < seq; ++i) {
      double* dst = o + (b * seq + i) * inner + qo;
      for (std::size_t j = 0; j < seq; ++j) {
        const double w = p[i * seq + j];
        const double* v = base + j * width + vo;
        for (std::size_t c = 0; c < head_dim; ++c) dst[c] += w * v[c];
      }
    }
  }
  return qkv.tape().record(
      "attention", std::move(out), {qkv}, [=](const BackwardArgs& args) {
        if (!args.grad_in[0]) return;
        const double* xin = args.in[0]->data().data();
        const double* g = args.grad_out.data().data();
        double* d = args.grad_in[0]->data().data();
#pragma omp parallel for schedule(static) if (jobs > 1 && batch * seq * seq * inner >= (1U << 15) && !omp_in_parallel())
        for (std::int64_t job = 0; job < jobs; ++job) {
          const std::size_t b = static_cast<std::size_t>(job) / heads;
          const std::size_t h = static_cast<std::size_t>(job) % heads;
          const double* base = xin + b * seq * width;
          double* dbase = d + b * seq * width;
          const std::size_t qo = h * head_dim;
          const std::size_t ko = inner + h * head_dim;
          const std::size_t vo = 2 * inner + h * head_dim;
          const double* p = probs->data() + static_cast<std::size_t>(job) * seq * seq;
          std::vector<double> ds(seq * seq);
          for (std::size_t i = 0; i < seq; ++i) {
            const double* go = g + (b * seq + i) * inner + qo;
            double dot = 0.0;
            for (std::size_t j = 0; j < seq; ++j) {
              const double* v = base + j * width + vo;
              double* dv = dbase + j * width + vo;
              const double w = p[i * seq + j];
              double dp = 0.0;
              for (std::size_t c = 0; c < head_dim; ++c) {
                dp += go[c] * v[c];
                dv[c] += w * go[c];
              }
              ds[i * seq + j] = dp;
              dot += dp * w;
            }
            for (std::size_t j = 0; j < seq; ++j) ds[i * seq + j] = p[i * seq + j] * (ds[i * seq + j] - dot) * scale_factor;
          }
          for (std::size_t i = 0; i < seq; ++i) {
            const double* q = base + i * width + qo;
            double* dq = dbase + i * width + qo;
            for (std::size_t j = 0; j < seq; ++j) {
              const double w = ds[i * seq + j];
              const double* k = base + j * width + ko;
              double* dk = dbase + j * width + ko;
              for (std::size_t c = 0; c < head_dim; ++c) {
                dq[c] += w * k[c];
                dk[c] += w * q[c];
              }
            }
          }
        }
      });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_valid("layer_norm", x);
  require_valid("layer_norm", gain);
  require_valid("layer_norm", bias);
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("layer_norm: scalar input");
  const std::size_t cols = s.back();
  if (gain.shape() != Shape{cols}) shape_error("layer_norm", s, gain.shape());
  if (bias.shape() != Shape{cols}) shape_error("layer_norm", s, bias.shape());
  const std::size_t rows = x.value().numel() / cols;
  Tensor out(s, 0.0);
  std::vector<double> mu(rows), rstd(rows);
  kernels::layer_norm_rows(rows, cols, x.value().data(), gain.value().data(), bias.value().data(), eps, out.data(),
                           mu, rstd);
  return x.tape().record(
      "layer_norm", std::move(out), {x, gain, bias},
      [rows, cols, mu = std::move(mu), rstd = std::move(rstd)](const BackwardArgs& args) {
        const auto xv = args.in[0]->data();
        const auto gv = args.in[1]->data();
        const auto g = args.grad_out.data();
        std::vector<double> xhat(cols), dxhat(cols);
        const double inv_cols = 1.0 / static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * cols;
          double mean_dxhat = 0.0;
          double mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            xhat[j] = (xv[base + j] - mu[r]) * rstd[r];
            dxhat[j] = g[base + j] * gv[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
          }
          mean_dxhat *= inv_cols;
          mean_dxhat_xhat *= inv_cols;
          if (args.grad_in[0]) {
            auto d = args.grad_in[0]->data();
            for (std::size_t j = 0; j < cols; ++j) {
              d[base + j] += rstd[r] * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
            }
          }
          if (args.grad_in[1]) {
            auto d = args.grad_in[1]->data();
            for (std::size_t j = 0; j < cols; ++j) d[j] += g[base + j] * xhat[j];
          }
          if (args.grad_in[2]) {
            auto d = args.grad_in[2]->data();
            for (std::size_t j = 0; j < cols; ++j) d[j] += g[base + j];
          }
        }
      });
}

Var gelu(Var a) {
  require_valid("gelu", a);
  Tensor out(a.shape(), 0.0);
  kernels::gelu_forward(a.value().data(), out.data());
  return a.tape().record("gelu", std::move(out), {a}, [](const BackwardArgs& args) {
    if (!args.grad_in[0]) return;
    const auto x = args.in[0]->data();
    const auto g = args.grad_out.data();
    auto d = args.grad_in[0]->data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * kernels::gelu_derivative(x[i]);
  });
}

Var mean(Var a, std::size_t axis) {
  require_valid("mean", a);
  const Shape& s = a.shape();
  if (axis >= s.size()) throw DimensionError("mean: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape, 0.0);
  const auto src = a.value().data();
  auto ov = out.data();
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < inner; ++i) ov[o * inner + i] += src[(o * n + k) * inner + i];
    }
  }
  for (double& v : ov) v *= inv;
  return a.tape().record("mean", std::move(out), {a}, [=](const BackwardArgs& args) {
    if (!args.grad_in[0]) return;
    auto d = args.grad_in[0]->data();
    const auto g = args.grad_out.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < inner; ++i) d[(o * n + k) * inner + i] += g[o * inner + i] * inv;
      }
    }
  });
}

Var sum(Var a) {
  require_valid("sum", a);
  const auto src = a.value().data();
  const double total = std::accumulate(src.begin(), src.end(), 0.0);
  return a.tape().record("sum", Tensor::scalar(total), {a}, [](const BackwardArgs& args) {
    if (!args.grad_in[0]) return;
    const double g = args.grad_out[0];
    for (double& v : args.grad_in[0]->data()) v += g;
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  require_valid("cross_entropy", logits);
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(s) + " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = s[0];
  const std::size_t classes = s[1];
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DimensionError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  std::vector<double> probs(batch * classes);
  kernels::softmax_rows(batch, classes, logits.value().data(), probs);
  const auto lv = logits.value().data();
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = lv.data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double se = 0.0;
    for (std::size_t c = 0; c < classes; ++c) se += std::exp(row[c] - mx);
    total += mx + std::log(se) - row[labels[b]];
  }
  std::vector<int> y(labels.begin(), labels.end());
  return logits.tape().record(
      "cross_entropy", Tensor::scalar(total / static_cast<double>(batch)), {logits},
      [batch, classes, probs = std::move(probs), y = std::move(y)](const BackwardArgs& args) {
        if (!args.grad_in[0]) return;
        const double g = args.grad_out[0] / static_cast<double>(batch);
        auto d = args.grad_in[0]->data();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = static_cast<int>(c) == y[b] ? 1.0 : 0.0;
            d[b * classes + c] += g * (probs[b * classes + c] - onehot);
          }
        }
      });
}

}  // namespace hytas
