#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "dscl/common.hpp"

namespace dscl {

// Dense N-dimensional array, row-major. Feature maps use (H, W, C) order.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_size(shape_))
      throw DimError("tensor: data length does not match shape " + shape_str());
  }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int dim(int i) const { return shape_[size_t(i)]; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  // rank-2 (rows, cols)
  T& at2(int i, int j) { return data_[size_t(i) * shape_[1] + j]; }
  const T& at2(int i, int j) const { return data_[size_t(i) * shape_[1] + j]; }

  // rank-3 (H, W, C)
  T& at3(int y, int x, int c) {
    return data_[(size_t(y) * shape_[1] + x) * shape_[2] + c];
  }
  const T& at3(int y, int x, int c) const {
    return data_[(size_t(y) * shape_[1] + x) * shape_[2] + c];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ")";
    return os.str();
  }

 private:
  static size_t checked_size(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw DimError("tensor: non-positive dimension");
      n *= size_t(d);
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename To, typename From>
Tensor<To> cast_tensor(const Tensor<From>& t) {
  Tensor<To> out(t.shape());
  for (size_t i = 0; i < t.size(); ++i) out[i] = To(t[i]);
  return out;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(double(t[i]))) return false;
  return true;
}

template <typename T>
T max_abs(const Tensor<T>& t) {
  T m = 0;
  for (size_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i]));
  return m;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw DimError("max_abs_diff: shape mismatch");
  T m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---- elementwise ----------------------------------------------------------

template <typename T>
T sigmoid_s(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& t) {
  Tensor<T> out(t.shape());
  for (size_t i = 0; i < t.size(); ++i) out[i] = sigmoid_s(t[i]);
  return out;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& t) {
  Tensor<T> out(t.shape());
  for (size_t i = 0; i < t.size(); ++i) out[i] = std::tanh(t[i]);
  return out;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw DimError("hadamard: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  Tensor<T> out(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

// ---- matrix products ------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimError("matmul: operands must be rank-2");
  if (a.dim(1) != b.dim(0))
    throw DimError("matmul: inner dims " + a.shape_str() + " vs " + b.shape_str());
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  for (int i = 0; i < m; ++i) {
    T* crow = c.data() + size_t(i) * n;
    for (int t = 0; t < k; ++t) {
      const T av = a[size_t(i) * k + t];
      const T* brow = b.data() + size_t(t) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// y[0..n) += W (n x m, row-major) * x[0..m)
template <typename T>
inline void matvec_acc(const T* w, int n, int m, const T* x, T* y) {
  for (int i = 0; i < n; ++i) {
    const T* row = w + size_t(i) * m;
    T acc = 0;
    for (int j = 0; j < m; ++j) acc += row[j] * x[j];
    y[i] += acc;
  }
}

// dx[0..m) += W^T (from n x m W) * v[0..n)
template <typename T>
inline void matvec_t_acc(const T* w, int n, int m, const T* v, T* dx) {
  for (int i = 0; i < n; ++i) {
    const T vi = v[i];
    if (vi == T(0)) continue;
    const T* row = w + size_t(i) * m;
    for (int j = 0; j < m; ++j) dx[j] += vi * row[j];
  }
}

// dW[i][j] += v[i] * x[j]
template <typename T>
inline void outer_acc(const T* v, int n, const T* x, int m, T* dw) {
  for (int i = 0; i < n; ++i) {
    const T vi = v[i];
    if (vi == T(0)) continue;
    T* row = dw + size_t(i) * m;
    for (int j = 0; j < m; ++j) row[j] += vi * x[j];
  }
}

// ---- channel and spatial rearrangement ------------------------------------

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& maps) {
  if (maps.empty()) throw DimError("concat_channels: no inputs");
  const int h = maps[0]->dim(0), w = maps[0]->dim(1);
  int ctotal = 0;
  for (const auto* m : maps) {
    if (m->rank() != 3) throw DimError("concat_channels: rank-3 maps required");
    if (m->dim(0) != h || m->dim(1) != w)
      throw DimError("concat_channels: spatial dims differ");
    ctotal += m->dim(2);
  }
  Tensor<T> out({h, w, ctotal});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int base = 0;
      for (const auto* m : maps) {
        const int c = m->dim(2);
        for (int k = 0; k < c; ++k) out.at3(y, x, base + k) = m->at3(y, x, k);
        base += c;
      }
    }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  return concat_channels<T>({&a, &b});
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, int c0, int c1) {
  if (t.rank() != 3) throw DimError("slice_channels: rank-3 required");
  if (c0 < 0 || c1 > t.dim(2) || c0 >= c1)
    throw DimError("slice_channels: bad channel range");
  Tensor<T> out({t.dim(0), t.dim(1), c1 - c0});
  for (int y = 0; y < t.dim(0); ++y)
    for (int x = 0; x < t.dim(1); ++x)
      for (int c = c0; c < c1; ++c) out.at3(y, x, c - c0) = t.at3(y, x, c);
  return out;
}

template <typename T>
Tensor<T> transpose_hw(const Tensor<T>& t) {
  if (t.rank() != 3) throw DimError("transpose_hw: rank-3 required");
  Tensor<T> out({t.dim(1), t.dim(0), t.dim(2)});
  const int h = t.dim(0), w = t.dim(1), c = t.dim(2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) out.at3(x, y, k) = t.at3(y, x, k);
  return out;
}

template <typename T>
Tensor<T> flip_lr(const Tensor<T>& t) {
  if (t.rank() != 3) throw DimError("flip_lr: rank-3 required");
  Tensor<T> out(t.shape());
  const int h = t.dim(0), w = t.dim(1), c = t.dim(2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) out.at3(y, w - 1 - x, k) = t.at3(y, x, k);
  return out;
}

template <typename T>
Tensor<T> flip_ud(const Tensor<T>& t) {
  if (t.rank() != 3) throw DimError("flip_ud: rank-3 required");
  Tensor<T> out(t.shape());
  const int h = t.dim(0), w = t.dim(1), c = t.dim(2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) out.at3(h - 1 - y, x, k) = t.at3(y, x, k);
  return out;
}

// ---- serialization --------------------------------------------------------
//
// Flat binary format: magic "DSCT", version byte (1), rank byte, dims as
// 32-bit little-endian unsigned, values as 32-bit little-endian floats in
// row-major order.

namespace detail {

inline void put_u32le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32le(std::istream& is, uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
      (uint32_t(b[3]) << 24);
  return true;
}

}  // namespace detail

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_tensor: cannot open " + path);
  os.write("DSCT", 4);
  os.put(char(1));
  os.put(char(t.rank()));
  for (int i = 0; i < t.rank(); ++i) detail::put_u32le(os, uint32_t(t.dim(i)));
  for (size_t i = 0; i < t.size(); ++i) {
    float f = float(t[i]);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32le(os, bits);
  }
  if (!os) throw DataError("save_tensor: write failed for " + path);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_tensor: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DSCT", 4) != 0)
    throw DataError("load_tensor: bad magic in " + path);
  int version = is.get();
  if (version != 1) throw DataError("load_tensor: unsupported version in " + path);
  int rank = is.get();
  if (rank < 0 || rank > 8) throw DataError("load_tensor: bad rank in " + path);
  std::vector<int> shape(size_t(rank), 0);
  for (int i = 0; i < rank; ++i) {
    uint32_t d;
    if (!detail::get_u32le(is, d) || d == 0 || d > (1u << 30))
      throw DataError("load_tensor: bad dims in " + path);
    shape[size_t(i)] = int(d);
  }
  Tensor<T> t(shape);
  for (size_t i = 0; i < t.size(); ++i) {
    uint32_t bits;
    if (!detail::get_u32le(is, bits))
      throw DataError("load_tensor: truncated file " + path);
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f)) throw DataError("load_tensor: non-finite value in " + path);
    t[i] = T(f);
  }
  is.peek();
  if (!is.eof()) throw DataError("load_tensor: trailing bytes in " + path);
  return t;
}

}  // namespace dscl
