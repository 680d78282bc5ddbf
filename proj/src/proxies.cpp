#include "hytas/proxies.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "hytas/error.hpp"
#include "hytas/kernels.hpp"
#include "hytas/linalg.hpp"
#include "hytas/rng.hpp"

namespace hytas {

namespace {

constexpr std::array<const char*, 14> kNames{
    "flops", "gradnorm", "snip", "grasp", "synflow", "logsynflow", "fisher",
    "jacobcov", "naswot", "dss", "croze", "tcet", "zico", "zicopp",
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string layer_label(const LayerEntry& e) {
  std::string s = "layer " + std::to_string(e.index) + " (" + layer_kind_name(e.kind);
  if (e.block) s += ", block " + std::to_string(*e.block);
  return s + ")";
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(const std::vector<Tensor>& ts) {
  double s = 0.0;
  for (const auto& t : ts) s += dot(t.data(), t.data());
  return s;
}

struct GradPass {
  std::vector<Tensor> grads;
  std::vector<Tensor> acts;
  std::vector<Tensor> act_grads;
  std::vector<Tensor> gelu_inputs;
  double seconds = 0.0;
};

GradPass cross_entropy_pass(const NetworkInstance& net, const Tensor& data, std::span<const int> labels,
                            double loss_scale, std::span<const Tensor> params, bool capture) {
  const auto t0 = Clock::now();
  Tape tape;
  ForwardOptions fo;
  fo.param_grads = true;
  fo.capture_activations = capture;
  fo.capture_gelu_inputs = capture;
  const auto res = forward(net, tape, data, fo, params);
  Var loss = cross_entropy(res.logits, labels);
  if (loss_scale != 1.0) loss = scale(loss, loss_scale);
  const auto grads = backward(tape, loss);
  GradPass out;
  out.grads.reserve(res.params.size());
  for (Var p : res.params) out.grads.push_back(grads[p]);
  for (Var a : res.activations) {
    out.acts.push_back(a.value());
    out.act_grads.push_back(grads[a]);
  }
  for (Var g : res.gelu_inputs) out.gelu_inputs.push_back(g.value());
  out.seconds = since(t0);
  return out;
}

// Rows of (B, ...) flattened to B x (numel / B).
std::size_t row_width(const Tensor& t) { return t.numel() / t.dim(0); }

// Per-sample, per-channel sums over the token axis of z * dz; shape B x C.
std::vector<double> channel_products(const Tensor& z, const Tensor& dz) {
  const std::size_t batch = z.dim(0);
  const std::size_t channels = z.shape().back();
  const std::size_t tokens = z.numel() / (batch * channels);
  std::vector<double> out(batch * channels, 0.0);
  const auto zv = z.data();
  const auto gv = dz.data();
  for (std::size_t s = 0; s < batch; ++s) {
    double* row = out.data() + s * channels;
    for (std::size_t t = 0; t < tokens; ++t) {
      const std::size_t off = (s * tokens + t) * channels;
      for (std::size_t c = 0; c < channels; ++c) row[c] += zv[off + c] * gv[off + c];
    }
  }
  return out;
}

// Hamming-similarity kernel N - Hamming(c_i, c_j) of the sign codes of (B, ...) pre-activations.
std::vector<double> code_kernel(const Tensor& pre) {
  const std::size_t batch = pre.dim(0);
  const std::size_t width = row_width(pre);
  std::vector<double> codes(pre.numel());
  const auto pv = pre.data();
  for (std::size_t i = 0; i < codes.size(); ++i) codes[i] = pv[i] > 0.0 ? 1.0 : 0.0;
  std::vector<double> gram(batch * batch, 0.0);
  kernels::gemm_nt({batch, batch, width}, codes, codes, gram);
  std::vector<double> ones(batch);
  for (std::size_t i = 0; i < batch; ++i) ones[i] = gram[i * batch + i];
  std::vector<double> k(batch * batch);
  const auto n = static_cast<double>(width);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < batch; ++j) k[i * batch + j] = n - ones[i] - ones[j] + 2.0 * gram[i * batch + j];
  }
  return k;
}

struct KernelLogDet {
  double value = 0.0;
  bool degenerate = false;
};

KernelLogDet jittered_log_det(std::vector<double> k, std::size_t n, const ProxyOptions& opts) {
  for (std::size_t i = 0; i < n; ++i) k[i * n + i] += opts.kernel_jitter;
  const auto ld = linalg::log_abs_det(k, n);
  KernelLogDet out;
  out.value = ld.log_abs;
  out.degenerate = ld.sign <= 0 || ld.pivot_ratio < opts.singular_ratio;
  if (!std::isfinite(out.value)) {
    out.value = std::log(opts.kernel_jitter) * static_cast<double>(n);
    out.degenerate = true;
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b, bool& degenerate) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) {
    degenerate = true;
    return 0.0;
  }
  return dot(a, b) / (na * nb);
}

}  // namespace

const char* proxy_name(ProxyId id) { return kNames[static_cast<std::size_t>(id)]; }

std::optional<ProxyId> parse_proxy(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (ProxyId id : kAllProxies) {
    if (lower == proxy_name(id)) return id;
  }
  if (lower == "zico++") return ProxyId::ZicoPP;
  if (lower == "t-cet") return ProxyId::Tcet;
  return std::nullopt;
}

std::vector<ProxyId> parse_proxy_list(std::string_view text) {
  if (text == "all") return {kAllProxies.begin(), kAllProxies.end()};
  std::vector<ProxyId> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const auto item = text.substr(pos, comma - pos);
    const auto id = parse_proxy(item);
    if (!id) {
      std::string valid;
      for (ProxyId p : kAllProxies) valid += std::string(valid.empty() ? "" : ",") + proxy_name(p);
      throw UsageError("unknown proxy '" + std::string(item) + "'; valid ids: all," + valid);
    }
    if (std::find(out.begin(), out.end(), *id) == out.end()) out.push_back(*id);
    pos = comma + 1;
  }
  return out;
}

bool supports_module_split(ProxyId id) {
  return id == ProxyId::Snip || id == ProxyId::GradNorm || id == ProxyId::Synflow || id == ProxyId::Dss;
}

bool is_data_agnostic(ProxyId id) {
  return id == ProxyId::Flops || id == ProxyId::Synflow || id == ProxyId::LogSynflow || id == ProxyId::Dss;
}

void ProxyOptions::validate(int min_depth) const {
  if (decay_start < 1 || decay_start > 4 * min_depth + 1) {
    throw ConfigError("proxy options: decay start must lie in [1, " + std::to_string(4 * min_depth + 1) + "]");
  }
  if (!(loss_scale > 0.0)) throw ConfigError("proxy options: loss scale must be positive");
  if (!(variance_eps > 0.0) || !(kernel_jitter > 0.0) || !(jacobcov_k > 0.0) || !(grasp_step > 0.0)) {
    throw ConfigError("proxy options: epsilons must be positive");
  }
  if (croze_noise < 0.0 || croze_lr < 0.0) throw ConfigError("proxy options: perturbation constants must be >= 0");
}

std::vector<double> zicopp_weights(int layers, int decay_start) {
  if (layers < 1 || decay_start < 1) throw ConfigError("zico++: need at least one layer and n >= 1");
  std::vector<double> w(static_cast<std::size_t>(layers));
  for (int i = 1; i <= layers; ++i) {
    if (i < decay_start || i == layers) {
      w[i - 1] = 1.0;
    } else {
      w[i - 1] = 1.0 / static_cast<double>(i - decay_start + 1);
    }
  }
  return w;
}

double zicopp_aggregate(std::span<const double> layer_stats, int decay_start) {
  const auto w = zicopp_weights(static_cast<int>(layer_stats.size()), decay_start);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += w[i] * layer_stats[i];
  return total;
}

ModuleSplit make_module_split(const NetworkInstance& net, std::span<const double> per_entry) {
  if (per_entry.size() != net.registry.size()) throw ContractError("module split: one value per registry entry");
  ModuleSplit s;
  for (std::size_t i = 0; i < per_entry.size(); ++i) {
    if (is_msa(net.registry[i].kind)) s.msa += per_entry[i];
    if (is_mlp(net.registry[i].kind)) s.mlp += per_entry[i];
  }
  s.origin = s.msa + s.mlp;
  if (s.msa > 0.0 && s.mlp > 0.0) s.logarithm = std::log(s.msa) + std::log(s.mlp);
  return s;
}

struct ProxyEvaluator::State {
  const NetworkInstance& net;
  const TokenBatch& batch;
  ProxyOptions opts;
  std::uint64_t seed;

  std::optional<GradPass> clean;
  // Substituted parameters and gradients of the summed-logit pass on the all-ones input.
  std::optional<std::vector<Tensor>> ones_theta;
  std::optional<GradPass> ones;
  std::optional<std::vector<std::vector<double>>> block_kernels;
  double kernel_seconds = 0.0;

  const GradPass& clean_pass() {
    if (!clean) {
      clean = cross_entropy_pass(net, batch.data, batch.labels, opts.loss_scale, {}, true);
    }
    return *clean;
  }

  const GradPass& ones_pass() {
    if (!ones) {
      const auto t0 = Clock::now();
      std::vector<Tensor> theta = net.parameter_values();
      if (!opts.sign_removal) {
        for (auto& t : theta) {
          for (double& v : t.data()) v = std::abs(v);
        }
      }
      const auto& geom = net.geometry;
      Tape tape;
      ForwardOptions fo;
      fo.param_grads = true;
      const auto res = forward(net, tape, Tensor(Shape{1, geom.tokens, geom.token_width}, 1.0), fo, theta);
      const auto grads = backward(tape, sum(res.logits));
      GradPass out;
      for (Var p : res.params) out.grads.push_back(grads[p]);
      out.seconds = since(t0);
      ones_theta = std::move(theta);
      ones = std::move(out);
    }
    return *ones;
  }

  const std::vector<std::vector<double>>& kernels_per_block() {
    if (!block_kernels) {
      const auto& pass = clean_pass();
      const auto t0 = Clock::now();
      std::vector<std::vector<double>> ks;
      for (const auto& pre : pass.gelu_inputs) ks.push_back(code_kernel(pre));
      kernel_seconds = since(t0);
      block_kernels = std::move(ks);
    }
    return *block_kernels;
  }

  // Sum over parameters of each registry entry.
  template <class F>
  std::vector<double> per_entry(F&& f) const {
    std::vector<double> out(net.registry.size(), 0.0);
    for (std::size_t e = 0; e < net.registry.size(); ++e) {
      for (std::size_t p : net.registry[e].params) out[e] += f(p);
    }
    return out;
  }

  void check_finite(ProxyId id, std::span<const double> values) const {
    for (std::size_t e = 0; e < values.size(); ++e) {
      if (!std::isfinite(values[e])) {
        throw NumericError(std::string(proxy_name(id)) + ": non-finite value in " + layer_label(net.registry[e]));
      }
    }
  }

  std::vector<double> contributions(ProxyId id) {
    std::vector<double> out;
    switch (id) {
      case ProxyId::Snip: {
        const auto& g = clean_pass().grads;
        out = per_entry([&](std::size_t p) {
          const auto th = net.params[p].value.data();
          const auto gv = g[p].data();
          double s = 0.0;
          for (std::size_t i = 0; i < th.size(); ++i) s += std::abs(gv[i] * th[i]);
          return s;
        });
        break;
      }
      case ProxyId::GradNorm: {
        const auto& g = clean_pass().grads;
        out = per_entry([&](std::size_t p) { return dot(g[p].data(), g[p].data()); });
        for (double& v : out) v = std::sqrt(v);
        break;
      }
      case ProxyId::Synflow: {
        const auto& g = ones_pass().grads;
        const auto& theta = *ones_theta;
        out = per_entry([&](std::size_t p) {
          const auto th = theta[p].data();
          const auto gv = g[p].data();
          double s = 0.0;
          for (std::size_t i = 0; i < th.size(); ++i) s += std::abs(gv[i] * th[i]);
          return s;
        });
        break;
      }
      case ProxyId::Dss: {
        const auto& g = ones_pass().grads;
        const auto& theta = *ones_theta;
        out.assign(net.registry.size(), 0.0);
        for (std::size_t e = 0; e < net.registry.size(); ++e) {
          const auto kind = net.registry[e].kind;
          for (std::size_t p : net.registry[e].params) {
            const Tensor& th = theta[p];
            if (is_msa(kind)) {
              if (th.rank() != 2) continue;
              out[e] += linalg::nuclear_norm(g[p].data(), th.dim(0), th.dim(1)) *
                        linalg::nuclear_norm(th.data(), th.dim(0), th.dim(1));
            } else if (is_mlp(kind)) {
              const auto tv = th.data();
              const auto gv = g[p].data();
              for (std::size_t i = 0; i < tv.size(); ++i) out[e] += std::abs(gv[i] * tv[i]);
            }
          }
        }
        break;
      }
      default:
        throw ContractError(std::string(proxy_name(id)) + ": no per-layer module split");
    }
    check_finite(id, out);
    return out;
  }

  double log_synflow() {
    const auto& g = ones_pass().grads;
    const auto& theta = *ones_theta;
    const auto vals = per_entry([&](std::size_t p) {
      const auto th = theta[p].data();
      const auto gv = g[p].data();
      double s = 0.0;
      for (std::size_t i = 0; i < th.size(); ++i) s += std::abs(th[i]) * std::log(std::abs(gv[i]) + 1.0);
      return s;
    });
    check_finite(ProxyId::LogSynflow, vals);
    return std::accumulate(vals.begin(), vals.end(), 0.0);
  }

  double grasp(ProxyResult& res) {
    const auto& clean_grads = clean_pass().grads;
    const auto theta = net.parameter_values();
    const double theta_norm = std::sqrt(squared_norm(theta));
    const double v_norm = std::sqrt(squared_norm(clean_grads));
    if (v_norm == 0.0) {
      res.degenerate = true;
      res.note = "zero gradient";
      return 0.0;
    }
    const double h = opts.grasp_step * theta_norm / v_norm;
    auto shifted = [&](double sign) {
      std::vector<Tensor> out = theta;
      for (std::size_t p = 0; p < out.size(); ++p) {
        auto o = out[p].data();
        const auto v = clean_grads[p].data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += sign * h * v[i];
      }
      return out;
    };
    const auto plus = cross_entropy_pass(net, batch.data, batch.labels, opts.loss_scale, shifted(1.0), false);
    const auto minus = cross_entropy_pass(net, batch.data, batch.labels, opts.loss_scale, shifted(-1.0), false);
    const auto vals = per_entry([&](std::size_t p) {
      const auto th = theta[p].data();
      const auto gp = plus.grads[p].data();
      const auto gm = minus.grads[p].data();
      double s = 0.0;
      for (std::size_t i = 0; i < th.size(); ++i) s -= (gp[i] - gm[i]) / (2.0 * h) * th[i];
      return s;
    });
    check_finite(ProxyId::Grasp, vals);
    return std::accumulate(vals.begin(), vals.end(), 0.0);
  }

  double fisher() {
    const auto& pass = clean_pass();
    std::vector<double> vals(net.registry.size(), 0.0);
    for (std::size_t e = 0; e < pass.acts.size(); ++e) {
      const auto prod = channel_products(pass.acts[e], pass.act_grads[e]);
      const double batch_size = static_cast<double>(pass.acts[e].dim(0));
      for (double v : prod) vals[e] += 0.5 * v * v / batch_size;
    }
    check_finite(ProxyId::Fisher, vals);
    return std::accumulate(vals.begin(), vals.end(), 0.0);
  }

  double jacobcov(ProxyResult& res) {
    Tape tape;
    ForwardOptions fo;
    fo.input_grad = true;
    const auto fr = forward(net, tape, batch.data, fo);
    const auto grads = backward(tape, sum(fr.logits));
    const Tensor& jac = grads[fr.input];
    const std::size_t b = jac.dim(0);
    const std::size_t w = row_width(jac);
    std::vector<double> rows(jac.data().begin(), jac.data().end());
    for (std::size_t i = 0; i < b; ++i) {
      double* r = rows.data() + i * w;
      const double mu = std::accumulate(r, r + w, 0.0) / static_cast<double>(w);
      double ss = 0.0;
      for (std::size_t j = 0; j < w; ++j) {
        r[j] -= mu;
        ss += r[j] * r[j];
      }
      const double norm = std::sqrt(ss);
      if (norm < opts.variance_eps) res.degenerate = true;
      for (std::size_t j = 0; j < w; ++j) r[j] /= norm + opts.variance_eps;
    }
    std::vector<double> corr(b * b, 0.0);
    kernels::gemm_nt({b, b, w}, rows, rows, corr);
    double score = 0.0;
    for (double ev : linalg::symmetric_eigenvalues(corr, b)) {
      const double s = std::max(ev, 0.0) + opts.jacobcov_k;
      score -= std::log(s) + 1.0 / s;
    }
    if (res.degenerate) res.note = "constant jacobian row";
    return score;
  }

  double naswot(ProxyResult& res) {
    const auto& ks = kernels_per_block();
    const std::size_t b = batch.batch_size();
    std::vector<double> total(b * b, 0.0);
    for (const auto& k : ks) {
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += k[i];
    }
    const auto ld = jittered_log_det(std::move(total), b, opts);
    if (ld.degenerate) {
      res.degenerate = true;
      res.note = "singular kernel";
    }
    return ld.value;
  }

  double tcet(ProxyResult& res) {
    const auto& ks = kernels_per_block();
    const auto snip = contributions(ProxyId::Snip);
    const std::size_t b = batch.batch_size();
    double score = 0.0;
    std::size_t block = 0;
    for (std::size_t e = 0; e < net.registry.size(); ++e) {
      if (net.registry[e].kind != LayerKind::MlpFc1) continue;
      const auto ld = jittered_log_det(ks[block++], b, opts);
      if (ld.degenerate) {
        res.degenerate = true;
        res.note = "singular kernel";
      }
      score += ld.value * std::log1p(snip[e]);
    }
    return score;
  }

  double croze(ProxyResult& res) {
    const auto& pass = clean_pass();
    std::vector<Tensor> theta = net.parameter_values();
    for (std::size_t p = 0; p < theta.size(); ++p) {
      auto t = theta[p].data();
      const auto g = pass.grads[p].data();
      for (std::size_t i = 0; i < t.size(); ++i) t[i] -= opts.croze_lr * g[i];
    }
    Tensor noisy = batch.data;
    {
      const auto x = batch.data.data();
      const double mu = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
      double var = 0.0;
      for (double v : x) var += (v - mu) * (v - mu);
      const double sd = opts.croze_noise * std::sqrt(var / static_cast<double>(x.size()));
      Rng rng(derive_seed(seed, "croze"));
      std::normal_distribution<double> normal(0.0, 1.0);
      for (double& v : noisy.data()) v += sd * normal(rng);
    }
    const auto pert = cross_entropy_pass(net, noisy, batch.labels, opts.loss_scale, theta, true);
    bool degenerate = false;
    double total = 0.0;
    for (std::size_t e = 0; e < net.registry.size(); ++e) {
      double gg = 0.0, g1 = 0.0, g2 = 0.0;
      for (std::size_t p : net.registry[e].params) {
        gg += dot(pass.grads[p].data(), pert.grads[p].data());
        g1 += dot(pass.grads[p].data(), pass.grads[p].data());
        g2 += dot(pert.grads[p].data(), pert.grads[p].data());
      }
      double grad_cos = 0.0;
      if (g1 > 0.0 && g2 > 0.0) {
        grad_cos = gg / std::sqrt(g1 * g2);
      } else {
        degenerate = true;
      }
      const double act_cos = cosine(pass.acts[e].data(), pert.acts[e].data(), degenerate);
      if (!std::isfinite(act_cos + grad_cos)) {
        throw NumericError("croze: non-finite value in " + layer_label(net.registry[e]));
      }
      total += act_cos + grad_cos;
    }
    if (degenerate) {
      res.degenerate = true;
      res.note = "zero-norm layer";
    }
    return total / static_cast<double>(net.registry.size());
  }

  double zico(ProxyResult& res) {
    const std::size_t b = batch.batch_size();
    const std::size_t per = batch.tokens() * batch.token_width();
    std::vector<std::vector<double>> mean_abs(net.params.size()), mean(net.params.size()), m2(net.params.size());
    for (std::size_t p = 0; p < net.params.size(); ++p) {
      const std::size_t n = net.params[p].value.numel();
      mean_abs[p].assign(n, 0.0);
      mean[p].assign(n, 0.0);
      m2[p].assign(n, 0.0);
    }
    for (std::size_t s = 0; s < b; ++s) {
      Tensor one(Shape{1, batch.tokens(), batch.token_width()},
                 std::vector<double>(batch.data.data().begin() + static_cast<std::ptrdiff_t>(s * per),
                                     batch.data.data().begin() + static_cast<std::ptrdiff_t>((s + 1) * per)));
      const int label = batch.labels[s];
      const auto pass = cross_entropy_pass(net, one, std::span<const int>(&label, 1), opts.loss_scale, {}, false);
      const double count = static_cast<double>(s + 1);
      for (std::size_t p = 0; p < net.params.size(); ++p) {
        const auto g = pass.grads[p].data();
        auto& ma = mean_abs[p];
        auto& mu = mean[p];
        auto& sq = m2[p];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ma[i] += (std::abs(g[i]) - ma[i]) / count;
          const double delta = g[i] - mu[i];
          mu[i] += delta / count;
          sq[i] += delta * (g[i] - mu[i]);
        }
      }
    }
    const auto vals = per_entry([&](std::size_t p) {
      double s = 0.0;
      for (std::size_t i = 0; i < mean_abs[p].size(); ++i) {
        s += mean_abs[p][i] / std::sqrt(m2[p][i] / static_cast<double>(b) + opts.variance_eps);
      }
      return s;
    });
    double total = 0.0;
    for (std::size_t e = 0; e < vals.size(); ++e) {
      if (!std::isfinite(vals[e])) throw NumericError("zico: non-finite value in " + layer_label(net.registry[e]));
      if (vals[e] > 0.0) {
        total += std::log(vals[e]);
      } else {
        total += std::log(opts.variance_eps);
        res.degenerate = true;
        res.note = "zero gradient layer";
      }
    }
    return total;
  }

  std::vector<double> zicopp_stats(bool* degenerate) {
    const auto& pass = clean_pass();
    std::vector<double> stats(net.registry.size(), 0.0);
    for (std::size_t e = 0; e < pass.acts.size(); ++e) {
      const auto prod = channel_products(pass.acts[e], pass.act_grads[e]);
      const std::size_t b = pass.acts[e].dim(0);
      const std::size_t channels = prod.size() / b;
      const auto bd = static_cast<double>(b);
      double total = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        double m = 0.0;
        for (std::size_t s = 0; s < b; ++s) {
          const double u = bd * prod[s * channels + c];
          m += u * u;
        }
        m /= bd;
        double var = 0.0;
        for (std::size_t s = 0; s < b; ++s) {
          const double u = bd * prod[s * channels + c];
          var += (u * u - m) * (u * u - m);
        }
        var /= bd;
        total += m / std::sqrt(var + opts.variance_eps);
      }
      if (!std::isfinite(total)) throw NumericError("zicopp: non-finite value in " + layer_label(net.registry[e]));
      if (total > 0.0) {
        stats[e] = std::log(total);
      } else {
        stats[e] = std::log(opts.variance_eps);
        if (degenerate) *degenerate = true;
      }
    }
    return stats;
  }
};

ProxyEvaluator::ProxyEvaluator(const NetworkInstance& net, const TokenBatch& batch, ProxyOptions opts,
                               std::uint64_t seed)
    : state_(std::make_unique<State>(State{net, batch, opts, seed, {}, {}, {}, {}, 0.0})) {
  opts.validate();
  batch.validate(net.geometry.num_classes);
  if (batch.tokens() != net.geometry.tokens || batch.token_width() != net.geometry.token_width) {
    throw DimensionError("proxy: batch geometry does not match the network");
  }
}

ProxyEvaluator::~ProxyEvaluator() = default;

std::vector<double> ProxyEvaluator::entry_contributions(ProxyId id) { return state_->contributions(id); }

std::vector<double> ProxyEvaluator::zicopp_layer_stats() { return state_->zicopp_stats(nullptr); }

ProxyResult ProxyEvaluator::compute(ProxyId id) {
  State& st = *state_;
  const auto t0 = Clock::now();
  const bool had_clean = st.clean.has_value();
  const bool had_ones = st.ones.has_value();
  const bool had_kernels = st.block_kernels.has_value();
  bool uses_clean = false;
  bool uses_ones = false;
  bool uses_kernels = false;

  ProxyResult res;
  switch (id) {
    case ProxyId::Flops:
      res.score = static_cast<double>(flops_estimate(st.net.genotype, st.net.geometry));
      break;
    case ProxyId::Snip:
    case ProxyId::GradNorm:
    case ProxyId::Synflow:
    case ProxyId::Dss: {
      const bool ones_based = id == ProxyId::Synflow || id == ProxyId::Dss;
      (ones_based ? uses_ones : uses_clean) = true;
      const auto vals = st.contributions(id);
      res.score = std::accumulate(vals.begin(), vals.end(), 0.0);
      if (st.opts.module_split) {
        res.split = make_module_split(st.net, vals);
        if (!res.split->logarithm) {
          res.degenerate = true;
          res.note = "non-positive module score";
        }
      }
      break;
    }
    case ProxyId::LogSynflow:
      uses_ones = true;
      res.score = st.log_synflow();
      break;
    case ProxyId::Grasp:
      res.score = st.grasp(res);
      uses_clean = true;
      break;
    case ProxyId::Fisher:
      uses_clean = true;
      res.score = st.fisher();
      break;
    case ProxyId::JacobCov:
      res.score = st.jacobcov(res);
      break;
    case ProxyId::Naswot:
      uses_clean = uses_kernels = true;
      res.score = st.naswot(res);
      break;
    case ProxyId::Tcet:
      uses_clean = uses_kernels = true;
      res.score = st.tcet(res);
      break;
    case ProxyId::Croze:
      uses_clean = true;
      res.score = st.croze(res);
      break;
    case ProxyId::Zico:
      res.score = st.zico(res);
      break;
    case ProxyId::ZicoPP: {
      uses_clean = true;
      bool degenerate = false;
      const auto stats = st.zicopp_stats(&degenerate);
      res.score = zicopp_aggregate(stats, st.opts.decay_start);
      if (degenerate) {
        res.degenerate = true;
        res.note = "zero activation statistic";
      }
      break;
    }
  }
  if (!std::isfinite(res.score)) throw NumericError(std::string(proxy_name(id)) + ": non-finite score");

  // Charge each proxy for the shared passes it depends on, whether or not it triggered them.
  double elapsed = since(t0);
  if (!had_clean && st.clean) elapsed -= st.clean->seconds;
  if (!had_ones && st.ones) elapsed -= st.ones->seconds;
  if (!had_kernels && st.block_kernels) elapsed -= st.kernel_seconds;
  res.seconds = std::max(elapsed, 0.0);
  if (uses_clean && st.clean) res.seconds += st.clean->seconds;
  if (uses_ones && st.ones) res.seconds += st.ones->seconds;
  if (uses_kernels) res.seconds += st.kernel_seconds;
  return res;
}

double compute_proxy(ProxyId id, const NetworkInstance& net, const TokenBatch& batch, const ProxyOptions& opts,
                     std::uint64_t seed) {
  ProxyEvaluator ev(net, batch, opts, seed);
  return ev.compute(id).score;
}

ModuleSplit compute_module_split(ProxyId id, const NetworkInstance& net, const TokenBatch& batch,
                                 const ProxyOptions& opts, std::uint64_t seed) {
  if (!supports_module_split(id)) {
    throw ConfigError(std::string("module split is defined for snip, gradnorm, synflow and dss, not ") + proxy_name(id));
  }
  ProxyEvaluator ev(net, batch, opts, seed);
  return make_module_split(net, ev.entry_contributions(id));
}

ScoreRecord score_genotype(const Genotype& g, const TokenBatch& batch, const PopulationConfig& cfg) {
  ScoreRecord rec;
  rec.genotype = g;
  rec.formula_ms = model_size_formula(g, cfg.geometry.num_classes);
  rec.exact_params = exact_param_count(g, cfg.geometry);
  rec.flops = flops_estimate(g, cfg.geometry);
  auto fail_all = [&](const std::string& why) {
    for (ProxyId id : cfg.proxies) {
      rec.scores[id] = std::nan("");
      rec.seconds[id] = 0.0;
    }
    rec.flags.push_back("genotype:error:" + why);
  };
  std::optional<NetworkInstance> net;
  try {
    net = build(g, cfg.geometry, derive_seed(cfg.seed, g.id));
  } catch (const std::exception& e) {
    fail_all(e.what());
    return rec;
  }
  std::optional<ProxyEvaluator> ev;
  try {
    ev.emplace(*net, batch, cfg.options, derive_seed(cfg.seed, g.id + "/proxy"));
  } catch (const std::exception& e) {
    fail_all(e.what());
    return rec;
  }
  for (ProxyId id : cfg.proxies) {
    try {
      const auto res = ev->compute(id);
      rec.scores[id] = res.score;
      rec.seconds[id] = res.seconds;
      if (res.split) rec.splits[id] = *res.split;
      if (res.degenerate) rec.flags.push_back(std::string(proxy_name(id)) + ":degenerate:" + res.note);
    } catch (const std::exception& e) {
      rec.scores[id] = std::nan("");
      rec.seconds[id] = 0.0;
      rec.flags.push_back(std::string(proxy_name(id)) + ":error:" + e.what());
    }
  }
  return rec;
}

std::vector<ScoreRecord> score_population(std::span<const Genotype> genotypes, const TokenBatch& batch,
                                          const PopulationConfig& cfg) {
  if (genotypes.empty()) throw ConfigError("score: empty population");
  if (cfg.workers < 1) throw ConfigError("score: workers must be >= 1");
  cfg.options.validate();
  batch.validate(cfg.geometry.num_classes);
  std::vector<ScoreRecord> out(genotypes.size());
  const auto n = static_cast<std::int64_t>(genotypes.size());
#pragma omp parallel for schedule(dynamic) num_threads(cfg.workers) if (cfg.workers > 1)
  for (std::int64_t i = 0; i < n; ++i) out[i] = score_genotype(genotypes[i], batch, cfg);
  return out;
}

}  // namespace hytas
