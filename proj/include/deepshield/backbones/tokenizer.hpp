#pragma once

#include "deepshield/backbones/backbone.hpp"

namespace deepshield::backbones {

template <typename T>
struct TokenGrid {
  Var<T> tokens;  // [N,T,D], row-major over the grid
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t pixel_footprint = 0;

  std::size_t count() const noexcept { return rows * cols; }
};

/// Groups patch_cells x patch_cells feature cells into one token and projects
/// the flattened C*patch_cells^2 vector to `dim`.
template <typename T>
class Tokenizer {
 public:
  Tokenizer(ParameterStore<T>& store, Initializer& init, const std::string& name, std::size_t channels,
            std::size_t patch_cells, std::size_t dim);

  TokenGrid<T> tokenize(const FeatureMap<T>& fm) const;

  std::size_t patch_cells() const noexcept { return patch_cells_; }
  std::size_t dim() const noexcept { return dim_; }

  Var<T> weight, bias;

 private:
  std::size_t channels_;
  std::size_t patch_cells_;
  std::size_t dim_;
};

/// The unprojected grouping step: [N,C,Hf,Wf] -> [N,(Hf/p)(Wf/p),C*p*p].
template <typename T>
Var<T> group_patches(const Var<T>& fm, std::size_t patch_cells);

extern template class Tokenizer<float>;
extern template class Tokenizer<double>;

}  // namespace deepshield::backbones
