#include "deepshield/backbones/tokenizer.hpp"

#include "deepshield/errors.hpp"

namespace deepshield::backbones {

template <typename T>
Var<T> group_patches(const Var<T>& fm, std::size_t patch_cells) {
  const Shape& s = fm.shape();
  if (s.size() != 4) throw DimensionError("feature map must be [N,C,H,W], got " + shape_str(s));
  const std::size_t p = patch_cells;
  if (p == 0 || s[2] % p != 0 || s[3] % p != 0) {
    throw ConfigError("patch_cells " + std::to_string(p) + " does not divide feature grid " + std::to_string(s[2]) +
                      "x" + std::to_string(s[3]));
  }
  const std::size_t n = s[0], c = s[1], rows = s[2] / p, cols = s[3] / p;
  // [N,C,rows,p,cols,p] -> [N,rows,cols,C,p,p]
  Var<T> x = ops::reshape(fm, Shape{n, c, rows, p, cols, p});
  if (p > 1 || c > 1) x = ops::permute(x, {0, 2, 4, 1, 3, 5});
  return ops::reshape(x, Shape{n, rows * cols, c * p * p});
}

template <typename T>
Tokenizer<T>::Tokenizer(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t channels,
                        std::size_t patch_cells, std::size_t dim)
    : channels_(channels), patch_cells_(patch_cells), dim_(dim) {
  if (patch_cells == 0) throw ConfigError(name + ": patch_cells must be positive");
  if (dim == 0) throw ConfigError(name + ": token dim must be positive");
  const std::size_t in = channels * patch_cells * patch_cells;
  weight = store.add(name + ".weight", init.fan_in_uniform<T>(Shape{dim, in}, in));
  bias = store.add(name + ".bias", init.fan_in_uniform<T>(Shape{dim}, in));
}

template <typename T>
TokenGrid<T> Tokenizer<T>::tokenize(const FeatureMap<T>& fm) const {
  if (fm.values.dim(1) != channels_) {
    throw DimensionError("tokenizer expects " + std::to_string(channels_) + " channels, got " +
                         shape_str(fm.values.shape()));
  }
  Var<T> grouped = group_patches(fm.values, patch_cells_);
  TokenGrid<T> grid;
  grid.rows = fm.values.dim(2) / patch_cells_;
  grid.cols = fm.values.dim(3) / patch_cells_;
  grid.pixel_footprint = fm.token_stride * patch_cells_;
  grid.tokens = ops::linear(grouped, weight, bias);
  return grid;
}

template Var<float> group_patches(const Var<float>&, std::size_t);
template Var<double> group_patches(const Var<double>&, std::size_t);
template class Tokenizer<float>;
template class Tokenizer<double>;

}  // namespace deepshield::backbones
