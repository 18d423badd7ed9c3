#include "deepshield/transformer/encoder.hpp"

#include "deepshield/errors.hpp"

namespace deepshield::transformer {

namespace {

template <typename T>
void add_dense(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t in,
               std::size_t out, Var<T>& weight, Var<T>& bias) {
  weight = store.add(name + ".weight", init.fan_in_uniform<T>(Shape{out, in}, in));
  bias = store.add(name + ".bias", init.fan_in_uniform<T>(Shape{out}, in));
}

template <typename T>
ops::AttentionParams<T> add_attention(ParameterStore<T>& store, Initializer& init, const std::string& name,
                                      std::size_t dim) {
  ops::AttentionParams<T> p;
  add_dense(store, init, name + ".query", dim, dim, p.wq, p.bq);
  add_dense(store, init, name + ".key", dim, dim, p.wk, p.bk);
  add_dense(store, init, name + ".value", dim, dim, p.wv, p.bv);
  add_dense(store, init, name + ".out", dim, dim, p.wo, p.bo);
  return p;
}

template <typename T>
Var<T> maybe_dropout(const Var<T>& x, double rate, const ForwardMode& mode) {
  if (!mode.training || rate <= 0.0 || mode.rng == nullptr) return x;
  return ops::dropout(x, static_cast<T>(rate), mode.rng);
}

}  // namespace

template <typename T>
Encoder<T>::Encoder(ParameterStore<T>& store, Initializer& init, const std::string& name,
                    const EncoderConfig& config)
    : config_(config) {
  config.validate(name);
  const std::size_t d = config.dim, h = config.hidden();
  for (std::size_t i = 0; i < config.depth; ++i) {
    const std::string layer = name + ".layer" + std::to_string(i);
    EncoderLayer<T> l;
    l.norm1_scale = store.add(layer + ".norm1.scale", Tensor<T>(Shape{d}, T(1)));
    l.norm1_shift = store.add(layer + ".norm1.shift", Tensor<T>(Shape{d}));
    l.attention = add_attention(store, init, layer + ".attn", d);
    l.norm2_scale = store.add(layer + ".norm2.scale", Tensor<T>(Shape{d}, T(1)));
    l.norm2_shift = store.add(layer + ".norm2.shift", Tensor<T>(Shape{d}));
    add_dense(store, init, layer + ".mlp.fc1", d, h, l.fc1_weight, l.fc1_bias);
    add_dense(store, init, layer + ".mlp.fc2", h, d, l.fc2_weight, l.fc2_bias);
    layers_.push_back(std::move(l));
  }
}

template <typename T>
Var<T> Encoder<T>::forward(const Var<T>& tokens, const ForwardMode& mode) const {
  if (tokens.shape().size() != 3 || tokens.dim(2) != config_.dim) {
    throw ConfigError("encoder expects [N,T," + std::to_string(config_.dim) + "] tokens, got " +
                      shape_str(tokens.shape()));
  }
  const T eps = static_cast<T>(kLayerNormEpsilon);
  Var<T> x = tokens;
  for (const auto& l : layers_) {
    Var<T> a = ops::layer_norm(x, l.norm1_scale, l.norm1_shift, eps);
    a = ops::multi_head_attention(a, a, l.attention, config_.heads);
    x = ops::add(x, maybe_dropout(a, config_.dropout, mode));

    Var<T> m = ops::layer_norm(x, l.norm2_scale, l.norm2_shift, eps);
    m = ops::activation(ops::Activation::gelu, ops::linear(m, l.fc1_weight, l.fc1_bias));
    m = ops::linear(maybe_dropout(m, config_.dropout, mode), l.fc2_weight, l.fc2_bias);
    x = ops::add(x, maybe_dropout(m, config_.dropout, mode));
  }
  return x;
}

template <typename T>
Var<T> prepend_cls_add_pos(const backbones::TokenGrid<T>& grid, const Var<T>& cls, const Var<T>& pos) {
  const Shape& s = grid.tokens.shape();
  if (s.size() != 3) throw DimensionError("tokens must be [N,T,D], got " + shape_str(s));
  const std::size_t n = s[0], t = s[1], d = s[2];
  if (cls.shape() != Shape{1, 1, d}) {
    throw ConfigError("CLS token must be [1,1," + std::to_string(d) + "], got " + shape_str(cls.shape()));
  }
  if (pos.shape().size() != 3 || pos.dim(0) != 1 || pos.dim(2) != d) {
    throw ConfigError("positional embedding must be [1,T+1," + std::to_string(d) + "], got " +
                      shape_str(pos.shape()));
  }
  if (pos.dim(1) != t + 1) {
    throw ConfigError("positional embedding covers " + std::to_string(pos.dim(1) - 1) + " tokens but the input has " +
                      std::to_string(t) + " (" + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                      "); the token count is fixed when the model is built");
  }
  Var<T> with_cls = ops::concat<T>({ops::broadcast_to(cls, Shape{n, 1, d}), grid.tokens}, 1);
  return ops::add(with_cls, pos);
}

template <typename T>
CrossFusion<T>::CrossFusion(ParameterStore<T>& store, Initializer& init, const std::string& name,
                            std::size_t dim_s, std::size_t heads_s, std::size_t dim_l, std::size_t heads_l,
                            std::size_t rounds)
    : dim_s_(dim_s), dim_l_(dim_l) {
  if (rounds == 0) throw ConfigError(name + ": fusion_rounds must be at least 1");
  if (dim_s % heads_s != 0 || dim_l % heads_l != 0) {
    throw ConfigError(name + ": fusion widths must be divisible by their head counts");
  }
  for (std::size_t r = 0; r < rounds; ++r) {
    const std::string base = name + ".round" + std::to_string(r);
    FusionRound<T> round;
    auto make = [&](const std::string& dir, std::size_t from, std::size_t to, std::size_t heads) {
      FusionDirection<T> f;
      f.heads = heads;
      add_dense(store, init, base + "." + dir + ".to", from, to, f.to_weight, f.to_bias);
      f.attention = add_attention(store, init, base + "." + dir + ".attn", to);
      add_dense(store, init, base + "." + dir + ".back", to, from, f.back_weight, f.back_bias);
      return f;
    };
    round.s_to_l = make("s_to_l", dim_s, dim_l, heads_l);
    round.l_to_s = make("l_to_s", dim_l, dim_s, heads_s);
    rounds_.push_back(std::move(round));
  }
}

namespace {

/// Updated CLS row of `a` after attending to the patch rows of `b`.
template <typename T>
Var<T> fuse_cls(const Var<T>& a, const Var<T>& b, const FusionDirection<T>& f) {
  const std::size_t tb = b.dim(1);
  Var<T> cls_a = ops::slice(a, 1, 0, 1);
  Var<T> query = ops::linear(cls_a, f.to_weight, f.to_bias);
  Var<T> context = tb > 1 ? ops::concat<T>({query, ops::slice(b, 1, 1, tb - 1)}, 1) : query;
  Var<T> attended = ops::multi_head_attention(query, context, f.attention, f.heads);
  return ops::add(cls_a, ops::linear(attended, f.back_weight, f.back_bias));
}

template <typename T>
Var<T> replace_cls(const Var<T>& tokens, const Var<T>& cls) {
  const std::size_t t = tokens.dim(1);
  if (t == 1) return cls;
  return ops::concat<T>({cls, ops::slice(tokens, 1, 1, t - 1)}, 1);
}

}  // namespace

template <typename T>
std::pair<Var<T>, Var<T>> CrossFusion<T>::forward(const Var<T>& tokens_s, const Var<T>& tokens_l) const {
  if (tokens_s.shape().size() != 3 || tokens_s.dim(2) != dim_s_ || tokens_l.shape().size() != 3 ||
      tokens_l.dim(2) != dim_l_) {
    throw ConfigError("cross fusion expects widths S=" + std::to_string(dim_s_) + " and L=" + std::to_string(dim_l_) +
                      ", got " + shape_str(tokens_s.shape()) + " and " + shape_str(tokens_l.shape()));
  }
  if (tokens_s.dim(0) != tokens_l.dim(0)) {
    throw DimensionError("cross fusion batch sizes differ: " + shape_str(tokens_s.shape()) + " vs " +
                         shape_str(tokens_l.shape()));
  }
  Var<T> s = tokens_s, l = tokens_l;
  for (const auto& round : rounds_) {
    Var<T> cls_s = fuse_cls(s, l, round.s_to_l);
    Var<T> cls_l = fuse_cls(l, s, round.l_to_s);
    s = replace_cls(s, cls_s);
    l = replace_cls(l, cls_l);
  }
  return {s, l};
}

template class Encoder<float>;
template class Encoder<double>;
template class CrossFusion<float>;
template class CrossFusion<double>;
template Var<float> prepend_cls_add_pos(const backbones::TokenGrid<float>&, const Var<float>&, const Var<float>&);
template Var<double> prepend_cls_add_pos(const backbones::TokenGrid<double>&, const Var<double>&,
                                         const Var<double>&);

}  // namespace deepshield::transformer
