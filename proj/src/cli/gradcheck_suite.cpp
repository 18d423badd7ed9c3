#include "deepshield/cli/gradcheck_suite.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <random>

#include "deepshield/diffcore/gradcheck.hpp"
#include "deepshield/errors.hpp"
#include "deepshield/transformer/models.hpp"

namespace deepshield::cli {

namespace {

constexpr double kEpsilon = 1e-5;
constexpr double kOpTolerance = 1e-4;
constexpr double kModelTolerance = 1e-3;

Tensor<double> uniform(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

Var<double> leaf(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Var<double>(uniform(std::move(shape), rng, lo, hi), true);
}

// sum(y * R) for a fixed random R, so every output element contributes.
Var<double> probe(const Var<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return ops::sum(ops::multiply(y, Var<double>(uniform(y.shape(), rng))));
}

class Suite {
 public:
  explicit Suite(const GradCheckOptions& options) : options_(options) {}

  void check(const std::string& name, double tolerance, const std::function<Var<double>()>& fn,
             const std::vector<Var<double>>& params) {
    GradTamper tamper;
    if (name == options_.corrupt_op) {
      tamper = [](std::vector<Tensor<double>>& grads) {
        for (auto& g : grads) {
          if (g.numel() > 0) {
            g[0] += 1.0;
            return;
          }
        }
      };
    }
    const double err = grad_check(fn, params, kEpsilon, tamper);
    auto [it, fresh] = index_.try_emplace(name, rows_.size());
    if (fresh) rows_.push_back({name, 0.0, tolerance});
    auto& row = rows_[it->second];
    row.max_error = std::max(row.max_error, err);
  }

  std::vector<GradCheckRow> rows() && { return std::move(rows_); }

 private:
  const GradCheckOptions& options_;
  std::vector<GradCheckRow> rows_;
  std::map<std::string, std::size_t> index_;
};

void op_checks(Suite& s, std::uint64_t seed, bool full) {
  std::mt19937_64 rng(seed);
  auto op = [&](const std::string& name, auto build, std::vector<Var<double>> params) {
    s.check(name, kOpTolerance, [&] { return probe(build(), seed); }, params);
  };

  std::vector<Shape> images{Shape{1, 2, 5, 5}};
  std::vector<Shape> rows{Shape{3, 4}};
  if (full) {
    images.push_back(Shape{2, 3, 6, 4});
    rows.push_back(Shape{2, 3, 5});
  }

  for (const auto& xs : images) {
    auto x = leaf(xs, rng);
    auto w = leaf({3, xs[1], 3, 3}, rng), b = leaf({3}, rng);
    op("conv2d", [&] { return ops::conv2d(x, w, b, 2, 1); }, {x, w, b});
    auto w1 = leaf({2, xs[1], 1, 1}, rng);
    op("conv2d_pointwise", [&] { return ops::conv2d(x, w1, Var<double>(), 1, 0); }, {x, w1});
    auto dw = leaf({xs[1], 1, 3, 3}, rng);
    op("depthwise_conv2d", [&] { return ops::depthwise_conv2d(x, dw, 1, 1); }, {x, dw});
    auto g = leaf({xs[1]}, rng), sh = leaf({xs[1]}, rng);
    op("batch_norm", [&] { return ops::batch_norm(x, g, sh, {}, true, 1e-5); }, {x, g, sh});
    op("global_avg_pool2d", [&] { return ops::global_avg_pool2d(x); }, {x});
    op("permute", [&] { return ops::permute(x, {0, 2, 3, 1}); }, {x});
  }

  for (const auto& xs : rows) {
    const std::size_t d = xs.back();
    auto x = leaf(xs, rng), y = leaf(xs, rng);
    auto w = leaf({6, d}, rng), b = leaf({6}, rng);
    op("linear", [&] { return ops::linear(x, w, b); }, {x, w, b});
    auto g = leaf({d}, rng), sh = leaf({d}, rng);
    op("layer_norm", [&] { return ops::layer_norm(x, g, sh, 1e-5); }, {x, g, sh});
    op("sigmoid", [&] { return ops::activation(ops::Activation::sigmoid, x); }, {x});
    op("silu", [&] { return ops::activation(ops::Activation::silu, x); }, {x});
    op("gelu", [&] { return ops::activation(ops::Activation::gelu, x); }, {x});
    op("relu", [&] { return ops::activation(ops::Activation::relu, x); }, {x});
    op("softmax", [&] { return ops::softmax(x, xs.size() - 1); }, {x});
    op("softmax_axis0", [&] { return ops::softmax(x, 0); }, {x});
    op("dropout", [&] {
      std::mt19937_64 mask(seed);
      return ops::dropout(x, 0.3, &mask);
    }, {x});
    op("add", [&] { return ops::add(x, y); }, {x, y});
    op("sub", [&] { return ops::sub(x, y); }, {x, y});
    op("multiply", [&] { return ops::multiply(x, y); }, {x, y});
    op("scale", [&] { return ops::scale(x, 1.7); }, {x});
    auto row = leaf({d}, rng);
    op("add_broadcast", [&] { return ops::add(x, row); }, {x, row});
    op("multiply_broadcast", [&] { return ops::multiply(x, row); }, {x, row});
    op("broadcast_to", [&] { return ops::broadcast_to(row, xs); }, {row});
    op("sum", [&] { return ops::sum(x); }, {x});
    op("mean", [&] { return ops::mean(x, 0); }, {x});
    op("transpose_last_two", [&] { return ops::transpose_last_two(x); }, {x});
    op("concat", [&] { return ops::concat<double>({x, y}, 0); }, {x, y});
    op("slice", [&] { return ops::slice(x, xs.size() - 1, 1, 2); }, {x});
    op("reshape", [&] { return ops::reshape(x, {x.numel()}); }, {x});
    auto m = leaf({d, 3}, rng);
    op("matmul", [&] { return ops::matmul(x, m); }, {x, m});
    auto p = leaf(xs, rng, 0.05, 0.95);
    Tensor<double> labels(xs);
    for (std::size_t i = 0; i < labels.numel(); ++i) labels[i] = double(i % 2);
    s.check("bce_loss", kOpTolerance, [&] { return ops::bce_loss(p, labels); }, {p});
  }

  std::vector<std::pair<std::size_t, std::size_t>> lengths{{1, 3}};
  if (full) lengths.emplace_back(3, 5);
  for (auto [tq, tkv] : lengths) {
    const std::size_t d = 4;
    auto q = leaf({2, tq, d}, rng), kv = leaf({2, tkv, d}, rng);
    ops::AttentionParams<double> ap{leaf({d, d}, rng), leaf({d}, rng), leaf({d, d}, rng), leaf({d}, rng),
                                    leaf({d, d}, rng), leaf({d}, rng), leaf({d, d}, rng), leaf({d}, rng)};
    op("multi_head_attention", [&] { return ops::multi_head_attention(q, kv, ap, 2); },
       {q, kv, ap.wq, ap.bq, ap.wk, ap.bk, ap.wv, ap.bv, ap.wo, ap.bo});
    auto bm = leaf({2, d, tkv}, rng);
    op("matmul_batched", [&] { return ops::matmul(q, bm); }, {q, bm});
  }
}

backbones::BackboneConfig tiny_backbone(backbones::BackboneKind kind) {
  backbones::BackboneConfig c;
  c.kind = kind;
  c.stem = {4, 3, 2};
  const bool mb = kind == backbones::BackboneKind::mbconv;
  c.stages = {{mb ? 2u : 1u, 4, 3, 1, 1, mb}};
  return c;
}

transformer::ModelConfig tiny_model(transformer::ModelKind kind, backbones::BackboneKind backbone) {
  transformer::ModelConfig c;
  c.kind = kind;
  c.image_size = 16;
  transformer::BranchConfig b;
  b.backbone = tiny_backbone(backbone);
  b.patch_cells = 2;
  b.encoder = {1, 8, 2, 2.0, 0.0};
  c.branch = b;
  c.s_branch = b;
  c.l_branch = b;
  c.l_branch.patch_cells = 4;
  return c;
}

std::vector<Var<double>> trainable(ParameterStore<double>& store) {
  std::vector<Var<double>> out;
  for (auto& p : store.entries())
    if (p.trainable) out.push_back(p.value);
  return out;
}

void model_checks(Suite& s, std::uint64_t seed) {
  using transformer::ModelKind;
  using backbones::BackboneKind;
  const std::pair<const char*, transformer::ModelConfig> models[] = {
      {"efficient_vit_tiny", tiny_model(ModelKind::efficient_vit, BackboneKind::mbconv)},
      {"cross_vit_tiny_mbconv", tiny_model(ModelKind::conv_cross_vit, BackboneKind::mbconv)},
      {"cross_vit_tiny_plain", tiny_model(ModelKind::conv_cross_vit, BackboneKind::plain)},
  };
  for (const auto& [name, config] : models) {
    auto model = transformer::make_detector<double>(config, seed);
    std::mt19937_64 rng(seed + 1);
    auto x = leaf({2, 3, 16, 16}, rng, 0.0, 1.0);
    auto params = trainable(model->params());
    params.push_back(x);
    Tensor<double> labels(Shape{2}, std::vector<double>{0.0, 1.0});
    s.check(name, kModelTolerance,
            [&] { return ops::bce_loss(model->forward(x, ForwardMode::train()).probs, labels); }, params);
  }
}

void assembly_checks(Suite& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  {
    ParameterStore<double> store;
    Initializer init(seed);
    transformer::Encoder<double> enc(store, init, "encoder", {2, 4, 2, 2.0, 0.0});
    auto x = leaf({2, 3, 4}, rng);
    auto params = trainable(store);
    params.push_back(x);
    s.check("encoder", kOpTolerance, [&] { return probe(enc.forward(x, ForwardMode::eval()), seed); }, params);
  }
  {
    ParameterStore<double> store;
    Initializer init(seed);
    transformer::CrossFusion<double> fusion(store, init, "fusion", 4, 2, 6, 2, 2);
    auto ts = leaf({2, 4, 4}, rng), tl = leaf({2, 2, 6}, rng);
    auto params = trainable(store);
    params.push_back(ts);
    params.push_back(tl);
    s.check("cross_fusion", kOpTolerance, [&] {
      auto [a, b] = fusion.forward(ts, tl);
      return ops::add(probe(a, seed), probe(b, seed + 1));
    }, params);
  }
  for (auto kind : {backbones::BackboneKind::mbconv, backbones::BackboneKind::plain}) {
    ParameterStore<double> store;
    Initializer init(seed);
    backbones::Backbone<double> net(tiny_backbone(kind), store, init);
    auto x = leaf({2, 3, 8, 8}, rng);
    auto params = trainable(store);
    params.push_back(x);
    s.check("backbone_" + backbones::to_string(kind), kOpTolerance,
            [&] { return probe(net.extract_features(x, ForwardMode::train()).values, seed); }, params);
  }
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(const GradCheckOptions& options) {
  if (options.profile != "tiny" && options.profile != "full") {
    throw ConfigError("unknown gradcheck profile '" + options.profile + "' (expected tiny or full)");
  }
  const bool full = options.profile == "full";
  Suite suite(options);
  const std::uint64_t seeds = full ? 10 : 5;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) op_checks(suite, seed, full);
  if (full) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) assembly_checks(suite, seed);
  }
  model_checks(suite, 1);
  auto rows = std::move(suite).rows();
  if (!options.corrupt_op.empty() &&
      std::none_of(rows.begin(), rows.end(), [&](const auto& r) { return r.name == options.corrupt_op; })) {
    throw ConfigError("--corrupt-op names no check: " + options.corrupt_op);
  }
  return rows;
}

std::string format_gradcheck_table(const std::vector<GradCheckRow>& rows) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %14s %10s  %s\n", "check", "max_rel_err", "tolerance", "status");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-24s %14.3e %10.0e  %s\n", r.name.c_str(), r.max_error, r.tolerance,
                  r.passed() ? "ok" : "FAIL");
    out += line;
  }
  return out;
}

}  // namespace deepshield::cli
