#include "cimage/probe.hpp"

#include <algorithm>
#include <set>

#include "cimage/errors.hpp"
#include "cimage/param_set.hpp"
#include "cimage/rng.hpp"
#include "cimage/tape.hpp"

namespace cimage {

NodeSplit split_nodes(std::size_t num_nodes, double train_frac, double val_frac,
                      std::uint64_t seed) {
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0)
    throw ConfigError("split_nodes: fractions out of range");
  std::vector<std::uint32_t> order(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) order[i] = static_cast<std::uint32_t>(i);
  Rng rng(derive_seed(seed, 71));
  rng.shuffle(order);
  const std::size_t n_train = static_cast<std::size_t>(train_frac * num_nodes);
  const std::size_t n_val = static_cast<std::size_t>(val_frac * num_nodes);
  NodeSplit split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  return split;
}

namespace {

DenseMatrix gather(const DenseMatrix& m, const std::vector<std::uint32_t>& rows) {
  DenseMatrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(rows[i], j);
  return out;
}

double accuracy(const DenseMatrix& x, const std::vector<int>& y,
                nn::ParamSet& params) {
  nn::Tape tape;
  nn::Var logits = nn::linear(tape.constant(x), tape.param(params, "probe.w"),
                              tape.param(params, "probe.b"));
  std::size_t hits = 0;
  const DenseMatrix& v = logits.value();
  for (std::size_t i = 0; i < v.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < v.cols(); ++c)
      if (v(i, c) > v(i, best)) best = c;
    hits += (static_cast<int>(best) == y[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(v.rows());
}

double ce_loss(const DenseMatrix& x, const std::vector<int>& y, nn::ParamSet& params) {
  nn::Tape tape;
  nn::Var logits = nn::linear(tape.constant(x), tape.param(params, "probe.w"),
                              tape.param(params, "probe.b"));
  return nn::softmax_cross_entropy(logits, y).scalar();
}

}  // namespace

double eval_node_linear_probe(const DenseMatrix& embeddings,
                              const std::vector<int>& labels, const NodeSplit& split,
                              std::uint64_t seed) {
  if (labels.size() != embeddings.rows())
    throw ShapeError("probe: label count must match embedding rows");
  int num_classes = 0;
  for (int l : labels) num_classes = std::max(num_classes, l + 1);
  std::set<int> train_classes;
  for (auto i : split.train) train_classes.insert(labels[i]);
  for (int c = 0; c < num_classes; ++c)
    if (!train_classes.count(c))
      throw ConfigError("probe: class " + std::to_string(c) +
                        " absent from the training split");

  DenseMatrix x_train = gather(embeddings, split.train);
  DenseMatrix x_val = gather(embeddings, split.val);
  DenseMatrix x_test = gather(embeddings, split.test);
  auto pick = [&labels](const std::vector<std::uint32_t>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto i : rows) out.push_back(labels[i]);
    return out;
  };
  std::vector<int> y_train = pick(split.train);
  std::vector<int> y_val = pick(split.val);
  std::vector<int> y_test = pick(split.test);

  Rng rng(derive_seed(seed, 73));
  nn::ParamSet params;
  params.create("probe.w",
                DenseMatrix::xavier(embeddings.cols(), num_classes, rng));
  params.create("probe.b", DenseMatrix::zeros(1, num_classes));

  // fixed probe settings so accuracy differences reflect embeddings
  constexpr double kLr = 1e-2;
  constexpr int kPatience = 20;
  constexpr int kMaxEpochs = 500;

  // early stop on validation cross-entropy: smooth, unlike accuracy
  double best_val = 1e300;
  int since_best = 0;
  DenseMatrix best_w = params.at("probe.w").value;
  DenseMatrix best_b = params.at("probe.b").value;
  for (int epoch = 0; epoch < kMaxEpochs; ++epoch) {
    nn::Tape tape;
    nn::Var logits = nn::linear(tape.constant(x_train), tape.param(params, "probe.w"),
                                tape.param(params, "probe.b"));
    nn::Var loss = nn::softmax_cross_entropy(logits, y_train);
    tape.backward(loss);
    nn::adam_step(params, kLr);

    const double val_loss = split.val.empty() ? ce_loss(x_train, y_train, params)
                                              : ce_loss(x_val, y_val, params);
    if (val_loss < best_val - 1e-9) {
      best_val = val_loss;
      best_w = params.at("probe.w").value;
      best_b = params.at("probe.b").value;
      since_best = 0;
    } else if (++since_best >= kPatience) {
      break;
    }
  }
  params.at("probe.w").value = best_w;
  params.at("probe.b").value = best_b;
  return accuracy(x_test, y_test, params);
}

}  // namespace cimage
