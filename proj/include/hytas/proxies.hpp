#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hytas/data_io.hpp"
#include "hytas/model.hpp"
#include "hytas/search_space.hpp"

namespace hytas {

enum class ProxyId {
  Flops,
  GradNorm,
  Snip,
  Grasp,
  Synflow,
  LogSynflow,
  Fisher,
  JacobCov,
  Naswot,
  Dss,
  Croze,
  Tcet,
  Zico,
  ZicoPP,
};

inline constexpr std::array<ProxyId, 14> kAllProxies{
    ProxyId::Flops,   ProxyId::GradNorm, ProxyId::Snip,   ProxyId::Grasp, ProxyId::Synflow,
    ProxyId::LogSynflow, ProxyId::Fisher, ProxyId::JacobCov, ProxyId::Naswot, ProxyId::Dss,
    ProxyId::Croze,   ProxyId::Tcet,     ProxyId::Zico,   ProxyId::ZicoPP,
};

// Lower-case identifier used on the command line and in CSV headers.
const char* proxy_name(ProxyId id);
std::optional<ProxyId> parse_proxy(std::string_view name);
// "all" or a comma-separated list; throws UsageError naming the valid ids.
std::vector<ProxyId> parse_proxy_list(std::string_view text);
bool supports_module_split(ProxyId id);
// Proxies whose score ignores the input batch.
bool is_data_agnostic(ProxyId id);

struct ProxyOptions {
  bool sign_removal = false;
  bool module_split = false;
  int decay_start = 6;
  double loss_scale = 1.0;
  double variance_eps = 1e-12;
  double kernel_jitter = 1e-6;
  double jacobcov_k = 1e-5;
  double grasp_step = 1e-4;
  double croze_noise = 0.01;
  double croze_lr = 1e-3;
  // Smallest LU pivot relative to the largest diagonal below which a kernel counts as singular.
  double singular_ratio = 1e-8;

  void validate(int min_depth = 4) const;
};

struct ModuleSplit {
  double msa = 0.0;
  double mlp = 0.0;
  double origin = 0.0;
  // Absent when a sub-score is not positive.
  std::optional<double> logarithm;
};

struct ProxyResult {
  double score = 0.0;
  bool degenerate = false;
  std::string note;
  std::optional<ModuleSplit> split;
  double seconds = 0.0;
};

// ZiCo++ layer-decay weights for layers 1..layers with decay start n.
std::vector<double> zicopp_weights(int layers, int decay_start);
double zicopp_aggregate(std::span<const double> layer_stats, int decay_start);

ModuleSplit make_module_split(const NetworkInstance& net, std::span<const double> per_entry);

// Scores one network. Shared forward/backward passes are computed on first use
// and reused across proxies; a proxy's reported time includes the shared passes it needs.
class ProxyEvaluator {
 public:
  ProxyEvaluator(const NetworkInstance& net, const TokenBatch& batch, ProxyOptions opts, std::uint64_t seed);
  ~ProxyEvaluator();
  ProxyEvaluator(const ProxyEvaluator&) = delete;
  ProxyEvaluator& operator=(const ProxyEvaluator&) = delete;

  ProxyResult compute(ProxyId id);

  // Per-registry-entry contributions for the module-split proxies.
  std::vector<double> entry_contributions(ProxyId id);
  // ZiCo++ statistic of every registry entry.
  std::vector<double> zicopp_layer_stats();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

double compute_proxy(ProxyId id, const NetworkInstance& net, const TokenBatch& batch, const ProxyOptions& opts,
                     std::uint64_t seed = 0);
ModuleSplit compute_module_split(ProxyId id, const NetworkInstance& net, const TokenBatch& batch,
                                 const ProxyOptions& opts, std::uint64_t seed = 0);

struct ScoreRecord {
  Genotype genotype;
  std::map<ProxyId, double> scores;
  std::map<ProxyId, double> seconds;
  std::map<ProxyId, ModuleSplit> splits;
  std::int64_t formula_ms = 0;
  std::int64_t exact_params = 0;
  std::int64_t flops = 0;
  // "<proxy>:<reason>" entries for degenerate or failed scores.
  std::vector<std::string> flags;
};

struct PopulationConfig {
  std::vector<ProxyId> proxies;
  ProxyOptions options;
  TokenGeometry geometry;
  std::uint64_t seed = 0;
  int workers = 1;
};

// One record per genotype in input order. Scorer failures become flags and NaN scores.
std::vector<ScoreRecord> score_population(std::span<const Genotype> genotypes, const TokenBatch& batch,
                                          const PopulationConfig& cfg);

ScoreRecord score_genotype(const Genotype& g, const TokenBatch& batch, const PopulationConfig& cfg);

}  // namespace hytas
