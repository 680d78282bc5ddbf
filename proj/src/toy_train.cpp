#include <algorithm>
#include <cmath>
#include <numeric>

#include "hytas/analysis.hpp"
#include "hytas/error.hpp"
#include "hytas/rng.hpp"

namespace hytas {

namespace {

constexpr std::size_t kEvalChunk = 256;

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t per = x.numel() / x.dim(0);
  Tensor out(Shape{rows.size(), x.dim(1), x.dim(2)}, 0.0);
  const auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per,
                dst.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

template <class F>
void for_chunks(const Tensor& x, std::span<const int> y, F&& f) {
  const std::size_t n = x.dim(0);
  for (std::size_t start = 0; start < n; start += kEvalChunk) {
    const std::size_t len = std::min(kEvalChunk, n - start);
    std::vector<std::size_t> rows(len);
    std::iota(rows.begin(), rows.end(), start);
    f(gather_rows(x, rows), y.subspan(start, len));
  }
}

}  // namespace

ToyTask make_toy_task(const TokenGeometry& geom, int classes, std::size_t train_size, std::size_t test_size,
                      double separation, std::uint64_t seed) {
  geom.validate();
  if (classes < 2 || classes > geom.num_classes) throw ConfigError("toy task: class count outside [2, num_classes]");
  if (train_size == 0 || test_size == 0) throw ConfigError("toy task: empty split");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t per = geom.tokens * geom.token_width;
  std::vector<std::vector<double>> prototypes(static_cast<std::size_t>(classes), std::vector<double>(per));
  for (auto& p : prototypes) {
    for (double& v : p) v = separation * normal(rng);
  }
  auto draw = [&](std::size_t n, Tensor& x, std::vector<int>& y) {
    x = Tensor(Shape{n, geom.tokens, geom.token_width}, 0.0);
    y.resize(n);
    auto xv = x.data();
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
      const auto& p = prototypes[static_cast<std::size_t>(y[i])];
      for (std::size_t j = 0; j < per; ++j) xv[i * per + j] = p[j] + normal(rng);
    }
  };
  ToyTask task;
  draw(train_size, task.train_x, task.train_y);
  draw(test_size, task.test_x, task.test_y);
  return task;
}

double accuracy(const NetworkInstance& net, const Tensor& x, std::span<const int> y) {
  std::size_t correct = 0;
  for_chunks(x, y, [&](const Tensor& xb, std::span<const int> yb) {
    const Tensor logits = predict_logits(net, xb);
    const std::size_t classes = logits.dim(1);
    const auto lv = logits.data();
    for (std::size_t i = 0; i < yb.size(); ++i) {
      const auto row = lv.subspan(i * classes, classes);
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == yb[i]) ++correct;
    }
  });
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

double mean_loss(const NetworkInstance& net, const Tensor& x, std::span<const int> y) {
  double total = 0.0;
  for_chunks(x, y, [&](const Tensor& xb, std::span<const int> yb) {
    Tape tape;
    const auto res = forward(net, tape, xb, ForwardOptions{});
    total += cross_entropy(res.logits, yb).value().item() * static_cast<double>(yb.size());
  });
  return total / static_cast<double>(y.size());
}

ToyResult toy_train(NetworkInstance& net, const ToyTask& task, const ToyTrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("toy train: epochs must be >= 0");
  if (cfg.batch_size == 0 || !(cfg.lr > 0.0)) throw ConfigError("toy train: batch size and lr must be positive");
  ToyResult res;
  res.baseline_accuracy = accuracy(net, task.test_x, task.test_y);
  res.loss_before = mean_loss(net, task.train_x, task.train_y);
  Rng rng(cfg.seed);
  const std::size_t n = task.train_x.dim(0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      const std::span<const std::size_t> rows(order.data() + start, len);
      std::vector<int> labels;
      for (std::size_t r : rows) labels.push_back(task.train_y[r]);
      try {
        Tape tape;
        ForwardOptions fo;
        fo.param_grads = true;
        const auto fr = forward(net, tape, gather_rows(task.train_x, rows), fo);
        const Var loss = cross_entropy(fr.logits, labels);
        const auto grads = backward(tape, loss);
        for (std::size_t p = 0; p < net.params.size(); ++p) {
          auto th = net.params[p].value.data();
          const auto g = grads[fr.params[p]].data();
          for (std::size_t i = 0; i < th.size(); ++i) th[i] -= cfg.lr * g[i];
        }
      } catch (const NumericError& e) {
        throw TrainingError("toy train diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      } catch (const ContractError& e) {
        throw TrainingError("toy train diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      }
      ++res.steps;
    }
  }
  res.loss_after = mean_loss(net, task.train_x, task.train_y);
  res.accuracy = res.steps == 0 ? res.baseline_accuracy : accuracy(net, task.test_x, task.test_y);
  return res;
}

}  // namespace hytas
