#include "deepshield/diffcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepshield/errors.hpp"

namespace deepshield::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

// Offsets of two operands inside a broadcast output.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same = false;
};

std::vector<std::size_t> aligned_strides(const Shape& src, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t offset = out.size() - src.size();
  std::size_t stride = 1;
  for (std::size_t k = src.size(); k-- > 0;) {
    strides[k + offset] = src[k] == 1 ? 0 : stride;
    stride *= src[k];
  }
  return strides;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  std::size_t rank = std::max(a.size(), b.size());
  p.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    std::size_t ea = k + a.size() >= rank ? a[k + a.size() - rank] : 1;
    std::size_t eb = k + b.size() >= rank ? b[k + b.size() - rank] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[k] = std::max(ea, eb);
  }
  p.stride_a = aligned_strides(a, p.out);
  p.stride_b = aligned_strides(b, p.out);
  return p;
}

template <typename F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  const std::size_t n = shape_numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = p.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t k = rank; k-- > 0;) {
      ++idx[k];
      ia += p.stride_a[k];
      ib += p.stride_b[k];
      if (idx[k] < p.out[k]) break;
      ia -= p.stride_a[k] * idx[k];
      ib -= p.stride_b[k] * idx[k];
      idx[k] = 0;
    }
  }
}

template <typename T>
Tensor<T> zeros_like(const Var<T>& v) {
  return Tensor<T>(v.shape());
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto p = plan_broadcast(a.shape(), b.shape());
  Tensor<T> out(p.out);
  const T* pa = a.value().raw();
  const T* pb = b.value().raw();
  T* po = out.raw();
  for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t ib) { po[o] = pa[ia] + pb[ib]; });
  return make_result<T>(std::move(out), {a, b}, [a, b, p](const Tensor<T>& g) {
    const T* pg = g.raw();
    if (a.requires_grad()) {
      T* ga = a.node()->grad_buffer().raw();
      for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t) { ga[ia] += pg[o]; });
    }
    if (b.requires_grad()) {
      T* gb = b.node()->grad_buffer().raw();
      for_each_broadcast(p, [&](std::size_t o, std::size_t, std::size_t ib) { gb[ib] += pg[o]; });
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return add(a, scale(b, T(-1)));
}

template <typename T>
Var<T> multiply(const Var<T>& a, const Var<T>& b) {
  auto p = plan_broadcast(a.shape(), b.shape());
  Tensor<T> out(p.out);
  const T* pa = a.value().raw();
  const T* pb = b.value().raw();
  T* po = out.raw();
  for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t ib) { po[o] = pa[ia] * pb[ib]; });
  return make_result<T>(std::move(out), {a, b}, [a, b, p](const Tensor<T>& g) {
    const T* pg = g.raw();
    const T* va = a.value().raw();
    const T* vb = b.value().raw();
    if (a.requires_grad()) {
      T* ga = a.node()->grad_buffer().raw();
      for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t ib) { ga[ia] += pg[o] * vb[ib]; });
    }
    if (b.requires_grad()) {
      T* gb = b.node()->grad_buffer().raw();
      for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t ib) { gb[ib] += pg[o] * va[ia]; });
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  return make_result<T>(std::move(out), {a}, [a, factor](const Tensor<T>& g) {
    T* ga = a.node()->grad_buffer().raw();
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += factor * g[i];
  });
}

template <typename T>
Var<T> broadcast_to(const Var<T>& a, const Shape& shape) {
  auto p = plan_broadcast(a.shape(), shape);
  if (p.out != shape) {
    throw DimensionError("cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  Tensor<T> out(shape);
  const T* pa = a.value().raw();
  T* po = out.raw();
  for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t) { po[o] = pa[ia]; });
  return make_result<T>(std::move(out), {a}, [a, p](const Tensor<T>& g) {
    T* ga = a.node()->grad_buffer().raw();
    const T* pg = g.raw();
    for_each_broadcast(p, [&](std::size_t o, std::size_t ia, std::size_t) { ga[ia] += pg[o]; });
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return make_result<T>(std::move(out), {a}, [a](const Tensor<T>& g) {
    T* ga = a.node()->grad_buffer().raw();
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

namespace {

// For each output element of a permutation, the matching input offset.
std::vector<std::size_t> permutation_offsets(const Shape& in, const std::vector<std::size_t>& axes, Shape& out) {
  const std::size_t rank = in.size();
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t k = rank - 1; k-- > 0;) in_stride[k] = in_stride[k + 1] * in[k + 1];
  out.assign(rank, 0);
  std::vector<std::size_t> stride(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    out[k] = in[axes[k]];
    stride[k] = in_stride[axes[k]];
  }
  const std::size_t n = shape_numel(in);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t o = 0; o < n; ++o) {
    offsets[o] = off;
    for (std::size_t k = rank; k-- > 0;) {
      ++idx[k];
      off += stride[k];
      if (idx[k] < out[k]) break;
      off -= stride[k] * idx[k];
      idx[k] = 0;
    }
  }
  return offsets;
}

}  // namespace

template <typename T>
Var<T> permute(const Var<T>& a, const std::vector<std::size_t>& axes) {
  const Shape& in = a.shape();
  if (axes.size() != in.size()) throw DimensionError("permute axes do not match rank of " + shape_str(in));
  std::vector<bool> used(in.size(), false);
  for (auto ax : axes) {
    if (ax >= in.size() || used[ax]) throw DimensionError("permute axes are not a permutation");
    used[ax] = true;
  }
  Shape out_shape;
  auto offsets = std::make_shared<std::vector<std::size_t>>(permutation_offsets(in, axes, out_shape));
  Tensor<T> out(out_shape);
  const T* pa = a.value().raw();
  for (std::size_t o = 0; o < offsets->size(); ++o) out[o] = pa[(*offsets)[o]];
  return make_result<T>(std::move(out), {a}, [a, offsets](const Tensor<T>& g) {
    T* ga = a.node()->grad_buffer().raw();
    for (std::size_t o = 0; o < offsets->size(); ++o) ga[(*offsets)[o]] += g[o];
  });
}

template <typename T>
Var<T> transpose_last_two(const Var<T>& a) {
  const std::size_t rank = a.shape().size();
  if (rank < 2) throw DimensionError("transpose_last_two needs rank >= 2");
  std::vector<std::size_t> axes(rank);
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[rank - 1], axes[rank - 2]);
  return permute(a, axes);
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t k = 0; ok && k < s.size(); ++k) ok = k == axis || s[k] == first[k];
    if (!ok) throw DimensionError("concat operands " + shape_str(first) + " and " + shape_str(s) + " disagree");
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = prod(first, 0, axis);
  const std::size_t inner = prod(first, axis + 1, first.size());
  Tensor<T> out(out_shape);
  const std::size_t row = out_shape[axis] * inner;
  std::size_t start = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.shape()[axis] * inner;
    const T* src = p.value().raw();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * block, block, out.raw() + o * row + start);
    start += block;
  }
  return make_result<T>(std::move(out), parts, [parts, outer, inner, row, axis](const Tensor<T>& g) {
    std::size_t begin = 0;
    for (const auto& p : parts) {
      const std::size_t block = p.shape()[axis] * inner;
      if (p.requires_grad()) {
        T* gp = p.node()->grad_buffer().raw();
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = g.raw() + o * row + begin;
          for (std::size_t i = 0; i < block; ++i) gp[o * block + i] += src[i];
        }
      }
      begin += block;
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& in = a.shape();
  if (axis >= in.size() || length == 0 || start + length > in[axis]) {
    throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                         std::to_string(axis) + " of " + shape_str(in));
  }
  Shape out_shape = in;
  out_shape[axis] = length;
  const std::size_t outer = prod(in, 0, axis);
  const std::size_t inner = prod(in, axis + 1, in.size());
  const std::size_t in_row = in[axis] * inner;
  const std::size_t block = length * inner;
  Tensor<T> out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.value().raw() + o * in_row + start * inner, block, out.raw() + o * block);
  }
  return make_result<T>(std::move(out), {a}, [a, outer, in_row, block, start, inner](const Tensor<T>& g) {
    T* ga = a.node()->grad_buffer().raw();
    for (std::size_t o = 0; o < outer; ++o) {
      T* dst = ga + o * in_row + start * inner;
      const T* src = g.raw() + o * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total = 0;
  for (auto v : a.value().data()) total += v;
  return make_result<T>(Tensor<T>::scalar(total), {a}, [a](const Tensor<T>& g) {
    T* ga = a.node()->grad_buffer().raw();
    for (std::size_t i = 0; i < a.numel(); ++i) ga[i] += g[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a, std::size_t axis) {
  const Shape& in = a.shape();
  if (axis >= in.size()) throw DimensionError("mean axis out of range for " + shape_str(in));
  const std::size_t outer = prod(in, 0, axis);
  const std::size_t len = in[axis];
  const std::size_t inner = prod(in, axis + 1, in.size());
  Shape out_shape = in;
  out_shape[axis] = 1;
  Tensor<T> out(out_shape);
  const T* pa = a.value().raw();
  const T inv = T(1) / static_cast<T>(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < len; ++k) {
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += pa[(o * len + k) * inner + i];
    }
  }
  for (auto& v : out.data()) v *= inv;
  return make_result<T>(std::move(out), {a}, [a, outer, len, inner, inv](const Tensor<T>& g) {
    T* ga = a.node()->grad_buffer().raw();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < len; ++k) {
        for (std::size_t i = 0; i < inner; ++i) ga[(o * len + k) * inner + i] += g[o * inner + i] * inv;
      }
    }
  });
}

template <typename T>
Var<T> global_avg_pool2d(const Var<T>& a) {
  const Shape& s = a.shape();
  if (s.size() != 4) throw DimensionError("global_avg_pool2d expects [N,C,H,W], got " + shape_str(s));
  const std::size_t planes = s[0] * s[1];
  const std::size_t area = s[2] * s[3];
  Tensor<T> out(Shape{s[0], s[1]});
  const T* pa = a.value().raw();
  const T inv = T(1) / static_cast<T>(area);
  for (std::size_t p = 0; p < planes; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < area; ++i) acc += pa[p * area + i];
    out[p] = acc * inv;
  }
  return make_result<T>(std::move(out), {a}, [a, planes, area, inv](const Tensor<T>& g) {
    T* ga = a.node()->grad_buffer().raw();
    for (std::size_t p = 0; p < planes; ++p) {
      const T d = g[p] * inv;
      for (std::size_t i = 0; i < area; ++i) ga[p * area + i] += d;
    }
  });
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) throw DimensionError("matmul operands need rank >= 2");
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t k2 = sb[sb.size() - 2], n = sb.back();
  if (k != k2) throw DimensionError("matmul inner extents differ: " + shape_str(sa) + " x " + shape_str(sb));
  const bool shared_b = sb.size() == 2;
  if (!shared_b && (sb.size() != sa.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin()))) {
    throw DimensionError("matmul batch extents differ: " + shape_str(sa) + " x " + shape_str(sb));
  }
  const std::size_t batch = shape_numel(sa) / (m * k);
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);
  const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k),
             ni = static_cast<Eigen::Index>(n);
  if (shared_b) {
    ConstMatMap<T> A(a.value().raw(), static_cast<Eigen::Index>(batch * m), ki);
    ConstMatMap<T> B(b.value().raw(), ki, ni);
    MatMap<T>(out.raw(), static_cast<Eigen::Index>(batch * m), ni).noalias() = A * B;
  } else {
    for (std::size_t t = 0; t < batch; ++t) {
      ConstMatMap<T> A(a.value().raw() + t * m * k, mi, ki);
      ConstMatMap<T> B(b.value().raw() + t * k * n, ki, ni);
      MatMap<T>(out.raw() + t * m * n, mi, ni).noalias() = A * B;
    }
  }
  return make_result<T>(std::move(out), {a, b}, [a, b, batch, m, k, n, shared_b](const Tensor<T>& g) {
    const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k),
               ni = static_cast<Eigen::Index>(n);
    if (shared_b) {
      const auto rows = static_cast<Eigen::Index>(batch * m);
      ConstMatMap<T> G(g.raw(), rows, ni);
      if (a.requires_grad()) {
        MatMap<T>(a.node()->grad_buffer().raw(), rows, ki).noalias() +=
            G * ConstMatMap<T>(b.value().raw(), ki, ni).transpose();
      }
      if (b.requires_grad()) {
        MatMap<T>(b.node()->grad_buffer().raw(), ki, ni).noalias() +=
            ConstMatMap<T>(a.value().raw(), rows, ki).transpose() * G;
      }
      return;
    }
    for (std::size_t t = 0; t < batch; ++t) {
      ConstMatMap<T> G(g.raw() + t * m * n, mi, ni);
      if (a.requires_grad()) {
        MatMap<T>(a.node()->grad_buffer().raw() + t * m * k, mi, ki).noalias() +=
            G * ConstMatMap<T>(b.value().raw() + t * k * n, ki, ni).transpose();
      }
      if (b.requires_grad()) {
        MatMap<T>(b.node()->grad_buffer().raw() + t * k * n, ki, ni).noalias() +=
            ConstMatMap<T>(a.value().raw() + t * m * k, mi, ki).transpose() * G;
      }
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sw.size() != 2) throw DimensionError("linear weight must be [Dout,Din], got " + shape_str(sw));
  const std::size_t din = sw[1], dout = sw[0];
  if (sx.back() != din) {
    throw DimensionError("linear input width " + std::to_string(sx.back()) + " does not match weight " +
                         shape_str(sw));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != dout)) {
    throw DimensionError("linear bias must be [" + std::to_string(dout) + "], got " + shape_str(bias.shape()));
  }
  const std::size_t rows = x.numel() / din;
  Shape out_shape = sx;
  out_shape.back() = dout;
  Tensor<T> out(out_shape);
  const auto ri = static_cast<Eigen::Index>(rows), di = static_cast<Eigen::Index>(din),
             oi = static_cast<Eigen::Index>(dout);
  MatMap<T> Y(out.raw(), ri, oi);
  Y.noalias() = ConstMatMap<T>(x.value().raw(), ri, di) * ConstMatMap<T>(weight.value().raw(), oi, di).transpose();
  if (has_bias) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.value().raw(), oi);
    Y.rowwise() += bv;
  }
  std::vector<Var<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result<T>(std::move(out), parents, [x, weight, bias, has_bias, ri, di, oi](const Tensor<T>& g) {
    ConstMatMap<T> G(g.raw(), ri, oi);
    if (x.requires_grad()) {
      MatMap<T>(x.node()->grad_buffer().raw(), ri, di).noalias() +=
          G * ConstMatMap<T>(weight.value().raw(), oi, di);
    }
    if (weight.requires_grad()) {
      MatMap<T>(weight.node()->grad_buffer().raw(), oi, di).noalias() +=
          G.transpose() * ConstMatMap<T>(x.value().raw(), ri, di);
    }
    if (has_bias && bias.requires_grad()) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.node()->grad_buffer().raw(), oi) += G.colwise().sum();
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, k, kh, kw, oh, ow, stride, pad;
};

ConvGeometry conv_geometry(const Shape& in, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
  if (in.size() != 4) throw DimensionError("convolution input must be [N,C,H,W], got " + shape_str(in));
  if (stride == 0) throw ConfigError("convolution stride must be positive");
  if (kh > in[2] + 2 * pad || kw > in[3] + 2 * pad) {
    throw DimensionError("kernel larger than padded input " + shape_str(in));
  }
  ConvGeometry g{};
  g.n = in[0];
  g.c = in[1];
  g.h = in[2];
  g.w = in[3];
  g.kh = kh;
  g.kw = kw;
  g.stride = stride;
  g.pad = pad;
  g.oh = (g.h + 2 * pad - kh) / stride + 1;
  g.ow = (g.w + 2 * pad - kw) / stride + 1;
  return g;
}

// cols[(c*kh+i)*kw+j][oy*ow+ox] = x[c][oy*s-p+i][ox*s-p+j]
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t area = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * area;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          T* dst = row + oy * g.ow;
          if (y < 0 || y >= static_cast<long>(g.h)) {
            std::fill_n(dst, g.ow, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(y)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long xx = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            dst[ox] = (xx < 0 || xx >= static_cast<long>(g.w)) ? T(0) : src[xx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t area = g.oh * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * area;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long y = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(y)) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long xx = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            if (xx >= 0 && xx < static_cast<long>(g.w)) dst[xx] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
              std::size_t padding) {
  const Shape& sw = weight.shape();
  if (sw.size() != 4) throw DimensionError("conv2d weight must be [K,C,kh,kw], got " + shape_str(sw));
  const ConvGeometry g = conv_geometry(input.shape(), sw[2], sw[3], stride, padding);
  if (sw[1] != g.c) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) + ", weight " + shape_str(sw));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.shape().size() != 1 || bias.shape()[0] != sw[0])) {
    throw DimensionError("conv2d bias must be [K]");
  }
  ConvGeometry geo = g;
  geo.k = sw[0];
  const bool pointwise = geo.kh == 1 && geo.kw == 1 && stride == 1 && padding == 0;
  const std::size_t patch = geo.c * geo.kh * geo.kw;
  const std::size_t area = geo.oh * geo.ow;
  const auto ki = static_cast<Eigen::Index>(geo.k), pi = static_cast<Eigen::Index>(patch),
             ai = static_cast<Eigen::Index>(area);

  Tensor<T> out(Shape{geo.n, geo.k, geo.oh, geo.ow});
  AlignedVector<T> cols(pointwise ? 0 : patch * area);
  ConstMatMap<T> W(weight.value().raw(), ki, pi);
  for (std::size_t b = 0; b < geo.n; ++b) {
    const T* x = input.value().raw() + b * geo.c * geo.h * geo.w;
    const T* colp = x;
    if (!pointwise) {
      im2col(x, geo, cols.data());
      colp = cols.data();
    }
    MatMap<T> Y(out.raw() + b * geo.k * area, ki, ai);
    Y.noalias() = W * ConstMatMap<T>(colp, pi, ai);
    if (has_bias) Y.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.value().raw(), ki);
  }

  std::vector<Var<T>> parents{input, weight};
  if (has_bias) parents.push_back(bias);
  return make_result<T>(std::move(out), parents, [input, weight, bias, has_bias, geo, pointwise](const Tensor<T>& g) {
    const std::size_t patch = geo.c * geo.kh * geo.kw;
    const std::size_t area = geo.oh * geo.ow;
    const auto ki = static_cast<Eigen::Index>(geo.k), pi = static_cast<Eigen::Index>(patch),
               ai = static_cast<Eigen::Index>(area);
    AlignedVector<T> cols(pointwise ? 0 : patch * area);
    AlignedVector<T> dcols(pointwise ? 0 : patch * area);
    ConstMatMap<T> W(weight.value().raw(), ki, pi);
    for (std::size_t b = 0; b < geo.n; ++b) {
      ConstMatMap<T> G(g.raw() + b * geo.k * area, ki, ai);
      const T* x = input.value().raw() + b * geo.c * geo.h * geo.w;
      if (weight.requires_grad()) {
        const T* colp = x;
        if (!pointwise) {
          im2col(x, geo, cols.data());
          colp = cols.data();
        }
        MatMap<T>(weight.node()->grad_buffer().raw(), ki, pi).noalias() +=
            G * ConstMatMap<T>(colp, pi, ai).transpose();
      }
      if (has_bias && bias.requires_grad()) {
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.node()->grad_buffer().raw(), ki) += G.rowwise().sum();
      }
      if (input.requires_grad()) {
        T* dx = input.node()->grad_buffer().raw() + b * geo.c * geo.h * geo.w;
        if (pointwise) {
          MatMap<T>(dx, pi, ai).noalias() += W.transpose() * G;
        } else {
          MatMap<T>(dcols.data(), pi, ai).noalias() = W.transpose() * G;
          col2im(dcols.data(), geo, dx);
        }
      }
    }
  });
}

template <typename T>
Var<T> depthwise_conv2d(const Var<T>& input, const Var<T>& weight, std::size_t stride, std::size_t padding) {
  const Shape& sw = weight.shape();
  if (sw.size() != 4 || sw[1] != 1) {
    throw DimensionError("depthwise weight must be [C,1,kh,kw], got " + shape_str(sw));
  }
  ConvGeometry geo = conv_geometry(input.shape(), sw[2], sw[3], stride, padding);
  if (sw[0] != geo.c) {
    throw DimensionError("depthwise channel mismatch: input " + shape_str(input.shape()) + ", weight " +
                         shape_str(sw));
  }
  Tensor<T> out(Shape{geo.n, geo.c, geo.oh, geo.ow});
  const T* px = input.value().raw();
  const T* pw = weight.value().raw();
  const long h = static_cast<long>(geo.h), w = static_cast<long>(geo.w);
  for (std::size_t b = 0; b < geo.n; ++b) {
    for (std::size_t c = 0; c < geo.c; ++c) {
      const T* x = px + (b * geo.c + c) * geo.h * geo.w;
      const T* k = pw + c * geo.kh * geo.kw;
      T* y = out.raw() + (b * geo.c + c) * geo.oh * geo.ow;
      for (std::size_t oy = 0; oy < geo.oh; ++oy) {
        for (std::size_t ox = 0; ox < geo.ow; ++ox) {
          T acc = 0;
          for (std::size_t i = 0; i < geo.kh; ++i) {
            const long yy = static_cast<long>(oy * stride + i) - static_cast<long>(padding);
            if (yy < 0 || yy >= h) continue;
            for (std::size_t j = 0; j < geo.kw; ++j) {
              const long xx = static_cast<long>(ox * stride + j) - static_cast<long>(padding);
              if (xx < 0 || xx >= w) continue;
              acc += x[yy * w + xx] * k[i * geo.kw + j];
            }
          }
          y[oy * geo.ow + ox] = acc;
        }
      }
    }
  }
  return make_result<T>(std::move(out), {input, weight}, [input, weight, geo](const Tensor<T>& g) {
    const T* px = input.value().raw();
    const T* pw = weight.value().raw();
    T* gx = input.requires_grad() ? input.node()->grad_buffer().raw() : nullptr;
    T* gw = weight.requires_grad() ? weight.node()->grad_buffer().raw() : nullptr;
    const long h = static_cast<long>(geo.h), w = static_cast<long>(geo.w);
    for (std::size_t b = 0; b < geo.n; ++b) {
      for (std::size_t c = 0; c < geo.c; ++c) {
        const std::size_t plane = (b * geo.c + c) * geo.h * geo.w;
        const T* k = pw + c * geo.kh * geo.kw;
        const T* gy = g.raw() + (b * geo.c + c) * geo.oh * geo.ow;
        for (std::size_t oy = 0; oy < geo.oh; ++oy) {
          for (std::size_t ox = 0; ox < geo.ow; ++ox) {
            const T d = gy[oy * geo.ow + ox];
            if (d == T(0)) continue;
            for (std::size_t i = 0; i < geo.kh; ++i) {
              const long yy = static_cast<long>(oy * geo.stride + i) - static_cast<long>(geo.pad);
              if (yy < 0 || yy >= h) continue;
              for (std::size_t j = 0; j < geo.kw; ++j) {
                const long xx = static_cast<long>(ox * geo.stride + j) - static_cast<long>(geo.pad);
                if (xx < 0 || xx >= w) continue;
                const std::size_t at = plane + static_cast<std::size_t>(yy * w + xx);
                if (gx) gx[at] += d * k[i * geo.kw + j];
                if (gw) gw[c * geo.kh * geo.kw + i * geo.kw + j] += d * px[at];
              }
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& scale, const Var<T>& shift, T epsilon) {
  if (!(epsilon > T(0))) throw ConfigError("normalization epsilon must be positive");
  const std::size_t d = x.shape().back();
  if (scale.numel() != d || shift.numel() != d) {
    throw DimensionError("layer_norm scale/shift must have " + std::to_string(d) + " entries");
  }
  const std::size_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  const T* px = x.value().raw();
  const T* gamma = scale.value().raw();
  const T* beta = shift.value().raw();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T mu = 0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + epsilon);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const T v = (row[i] - mu) * is;
      (*xhat)[r * d + i] = v;
      out[r * d + i] = gamma[i] * v + beta[i];
    }
  }
  return make_result<T>(std::move(out), {x, scale, shift}, [x, scale, shift, xhat, inv_std, rows, d](const Tensor<T>& g) {
    const T* gamma = scale.value().raw();
    T* gx = x.requires_grad() ? x.node()->grad_buffer().raw() : nullptr;
    T* gg = scale.requires_grad() ? scale.node()->grad_buffer().raw() : nullptr;
    T* gb = shift.requires_grad() ? shift.node()->grad_buffer().raw() : nullptr;
    const T inv_d = T(1) / static_cast<T>(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* dy = g.raw() + r * d;
      const T* xh = xhat->data() + r * d;
      T sum_dxh = 0, sum_dxh_xh = 0;
      for (std::size_t i = 0; i < d; ++i) {
        const T dxh = dy[i] * gamma[i];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xh[i];
        if (gg) gg[i] += dy[i] * xh[i];
        if (gb) gb[i] += dy[i];
      }
      if (gx) {
        const T is = (*inv_std)[r];
        for (std::size_t i = 0; i < d; ++i) {
          const T dxh = dy[i] * gamma[i];
          gx[r * d + i] += is * (dxh - inv_d * sum_dxh - xh[i] * inv_d * sum_dxh_xh);
        }
      }
    }
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& scale, const Var<T>& shift, RunningStats<T> stats,
                  bool training, T epsilon) {
  if (!(epsilon > T(0))) throw ConfigError("normalization epsilon must be positive");
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("batch_norm expects [N,C,...], got " + shape_str(s));
  const std::size_t n = s[0], c = s[1];
  const std::size_t inner = prod(s, 2, s.size());
  if (scale.numel() != c || shift.numel() != c) {
    throw DimensionError("batch_norm scale/shift must have " + std::to_string(c) + " entries");
  }
  if (!training && (!stats.mean || !stats.var)) throw ContractError("batch_norm inference needs running statistics");
  const std::size_t count = n * inner;
  const T* px = x.value().raw();
  std::vector<T> mu(c, 0), var(c, 0);
  if (training) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = px + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) mu[ch] += p[i];
      }
    }
    for (auto& m : mu) m /= static_cast<T>(count);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = px + (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) var[ch] += (p[i] - mu[ch]) * (p[i] - mu[ch]);
      }
    }
    for (auto& v : var) v /= static_cast<T>(count);
    if (stats.mean && stats.var) {
      const T unbias = count > 1 ? static_cast<T>(count) / static_cast<T>(count - 1) : T(1);
      for (std::size_t ch = 0; ch < c; ++ch) {
        (*stats.mean)[ch] = (T(1) - stats.momentum) * (*stats.mean)[ch] + stats.momentum * mu[ch];
        (*stats.var)[ch] = (T(1) - stats.momentum) * (*stats.var)[ch] + stats.momentum * var[ch] * unbias;
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = (*stats.mean)[ch];
      var[ch] = (*stats.var)[ch];
    }
  }
  auto inv_std = std::make_shared<std::vector<T>>(c);
  for (std::size_t ch = 0; ch < c; ++ch) (*inv_std)[ch] = T(1) / std::sqrt(var[ch] + epsilon);
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  Tensor<T> out(s);
  const T* gamma = scale.value().raw();
  const T* beta = shift.value().raw();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const T v = (px[base + i] - mu[ch]) * (*inv_std)[ch];
        (*xhat)[base + i] = v;
        out[base + i] = gamma[ch] * v + beta[ch];
      }
    }
  }
  return make_result<T>(std::move(out), {x, scale, shift},
                        [x, scale, shift, xhat, inv_std, n, c, inner, count, training](const Tensor<T>& g) {
    const T* gamma = scale.value().raw();
    std::vector<T> sum_dy(c, 0), sum_dy_xh(c, 0);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          sum_dy[ch] += g[base + i];
          sum_dy_xh[ch] += g[base + i] * (*xhat)[base + i];
        }
      }
    }
    if (scale.requires_grad()) {
      T* gg = scale.node()->grad_buffer().raw();
      for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_dy_xh[ch];
    }
    if (shift.requires_grad()) {
      T* gb = shift.node()->grad_buffer().raw();
      for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_dy[ch];
    }
    if (!x.requires_grad()) return;
    T* gx = x.node()->grad_buffer().raw();
    const T inv_count = T(1) / static_cast<T>(count);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * inner;
        const T k = gamma[ch] * (*inv_std)[ch];
        for (std::size_t i = 0; i < inner; ++i) {
          if (training) {
            gx[base + i] +=
                k * (g[base + i] - inv_count * sum_dy[ch] - (*xhat)[base + i] * inv_count * sum_dy_xh[ch]);
          } else {
            gx[base + i] += k * g[base + i];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> normalize(NormKind kind, const Var<T>& x, const Var<T>& scale, const Var<T>& shift, T epsilon,
                 RunningStats<T> stats, bool training) {
  if (kind == NormKind::layer) return layer_norm(x, scale, shift, epsilon);
  return batch_norm(x, scale, shift, stats, training, epsilon);
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
T sigmoid_scalar(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Var<T> activation(Activation kind, const Var<T>& x) {
  const std::size_t n = x.numel();
  const T* px = x.value().raw();
  Tensor<T> out(x.shape());
  T* po = out.raw();
  switch (kind) {
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) po[i] = sigmoid_scalar(px[i]);
      break;
    case Activation::silu:
      for (std::size_t i = 0; i < n; ++i) po[i] = px[i] * sigmoid_scalar(px[i]);
      break;
    case Activation::gelu:
      for (std::size_t i = 0; i < n; ++i) po[i] = T(0.5) * px[i] * (T(1) + std::erf(px[i] / std::sqrt(T(2))));
      break;
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
      break;
  }
  return make_result<T>(std::move(out), {x}, [x, kind](const Tensor<T>& g) {
    const std::size_t n = x.numel();
    const T* px = x.value().raw();
    T* gx = x.node()->grad_buffer().raw();
    switch (kind) {
      case Activation::sigmoid:
        for (std::size_t i = 0; i < n; ++i) {
          const T s = sigmoid_scalar(px[i]);
          gx[i] += g[i] * s * (T(1) - s);
        }
        break;
      case Activation::silu:
        for (std::size_t i = 0; i < n; ++i) {
          const T s = sigmoid_scalar(px[i]);
          gx[i] += g[i] * (s + px[i] * s * (T(1) - s));
        }
        break;
      case Activation::gelu: {
        const T inv_sqrt2 = T(1) / std::sqrt(T(2));
        const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(3.14159265358979323846));
        for (std::size_t i = 0; i < n; ++i) {
          const T cdf = T(0.5) * (T(1) + std::erf(px[i] * inv_sqrt2));
          const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * px[i] * px[i]);
          gx[i] += g[i] * (cdf + px[i] * pdf);
        }
        break;
      }
      case Activation::relu:
        for (std::size_t i = 0; i < n; ++i) gx[i] += px[i] > T(0) ? g[i] : T(0);
        break;
    }
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax axis out of range for " + shape_str(s));
  const std::size_t outer = prod(s, 0, axis), len = s[axis], inner = prod(s, axis + 1, s.size());
  Tensor<T> out(s);
  const T* px = x.value().raw();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      T mx = px[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, px[base + k * inner]);
      T total = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const T e = std::exp(px[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  auto y = std::make_shared<Tensor<T>>(out);
  return make_result<T>(std::move(out), {x}, [x, y, outer, len, inner](const Tensor<T>& g) {
    T* gx = x.node()->grad_buffer().raw();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        T dot = 0;
        for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * (*y)[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          gx[base + k * inner] += (*y)[base + k * inner] * (g[base + k * inner] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> dropout(const Var<T>& x, T rate, std::mt19937_64* rng) {
  if (rate < T(0) || rate >= T(1)) throw ConfigError("dropout rate must lie in [0,1)");
  if (rate == T(0) || rng == nullptr) return x;
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const T gain = T(1) / (T(1) - rate);
  for (auto& m : *mask) m = keep(*rng) ? gain : T(0);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * (*mask)[i];
  return make_result<T>(std::move(out), {x}, [x, mask](const Tensor<T>& g) {
    T* gx = x.node()->grad_buffer().raw();
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> multi_head_attention(const Var<T>& queries, const Var<T>& keys_values, const AttentionParams<T>& params,
                            std::size_t heads) {
  const Shape& sq = queries.shape();
  const Shape& skv = keys_values.shape();
  if (sq.size() != 3 || skv.size() != 3 || sq[0] != skv[0] || sq[2] != skv[2]) {
    throw DimensionError("attention expects [N,Tq,D] and [N,Tkv,D], got " + shape_str(sq) + " and " +
                         shape_str(skv));
  }
  const std::size_t n = sq[0], tq = sq[1], tkv = skv[1], d = sq[2];
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  const std::size_t dh = d / heads;
  auto split = [&](const Var<T>& v, std::size_t t) {
    return permute(reshape(v, Shape{n, t, heads, dh}), {0, 2, 1, 3});
  };
  Var<T> q = split(linear(queries, params.wq, params.bq), tq);
  Var<T> k = split(linear(keys_values, params.wk, params.bk), tkv);
  Var<T> v = split(linear(keys_values, params.wv, params.bv), tkv);
  Var<T> logits = scale(matmul(q, transpose_last_two(k)), T(1) / std::sqrt(static_cast<T>(dh)));
  Var<T> weights = softmax(logits, 3);
  Var<T> mixed = permute(matmul(weights, v), {0, 2, 1, 3});
  return linear(reshape(mixed, Shape{n, tq, d}), params.wo, params.bo);
}

// ---------------------------------------------------------------------------

template <typename T>
Var<T> bce_loss(const Var<T>& prob, const Tensor<T>& label) {
  if (prob.numel() != label.numel()) {
    throw DimensionError("bce_loss: " + std::to_string(prob.numel()) + " probabilities vs " +
                         std::to_string(label.numel()) + " labels");
  }
  for (auto y : label.data()) {
    if (y != T(0) && y != T(1)) throw InputError("bce_loss: label must be 0 or 1");
  }
  const T lo = static_cast<T>(kBceClamp);
  const T hi = T(1) - lo;
  const std::size_t n = prob.numel();
  const T* p = prob.value().raw();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T pc = std::clamp(p[i], lo, hi);
    total -= label[i] * std::log(pc) + (T(1) - label[i]) * std::log(T(1) - pc);
  }
  return make_result<T>(Tensor<T>::scalar(total / static_cast<T>(n)), {prob}, [prob, label, lo, hi](const Tensor<T>& g) {
    const std::size_t n = prob.numel();
    const T* p = prob.value().raw();
    T* gp = prob.node()->grad_buffer().raw();
    const T k = g[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (p[i] < lo || p[i] > hi) continue;
      gp[i] += k * (-label[i] / p[i] + (T(1) - label[i]) / (T(1) - p[i]));
    }
  });
}

#define DEEPSHIELD_INSTANTIATE_OPS(T)                                                                        \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> multiply(const Var<T>&, const Var<T>&);                                                     \
  template Var<T> scale(const Var<T>&, T);                                                                    \
  template Var<T> broadcast_to(const Var<T>&, const Shape&);                                                  \
  template Var<T> reshape(const Var<T>&, Shape);                                                              \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                                    \
  template Var<T> transpose_last_two(const Var<T>&);                                                          \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                                            \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                                \
  template Var<T> sum(const Var<T>&);                                                                         \
  template Var<T> mean(const Var<T>&, std::size_t);                                                           \
  template Var<T> global_avg_pool2d(const Var<T>&);                                                           \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                        \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t);              \
  template Var<T> depthwise_conv2d(const Var<T>&, const Var<T>&, std::size_t, std::size_t);                   \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                                 \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, RunningStats<T>, bool, T);          \
  template Var<T> normalize(NormKind, const Var<T>&, const Var<T>&, const Var<T>&, T, RunningStats<T>, bool); \
  template Var<T> activation(Activation, const Var<T>&);                                                      \
  template Var<T> softmax(const Var<T>&, std::size_t);                                                        \
  template Var<T> dropout(const Var<T>&, T, std::mt19937_64*);                                                \
  template Var<T> multi_head_attention(const Var<T>&, const Var<T>&, const AttentionParams<T>&, std::size_t); \
  template Var<T> bce_loss(const Var<T>&, const Tensor<T>&);

DEEPSHIELD_INSTANTIATE_OPS(float)
DEEPSHIELD_INSTANTIATE_OPS(double)

}  // namespace deepshield::ops
