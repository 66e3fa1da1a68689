#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "igc/errors.hpp"

namespace igc {

/// Dense 4-D array (N, C, H, W), row-major with W innermost. The element type
/// carries the precision: Tensor<double> on verification paths, Tensor<float>
/// for training runs. Shape is fixed at construction.
template <typename T>
class Tensor {
  public:
    Tensor() : dims_{0, 0, 0, 0} {}

    Tensor(int n, int c, int h, int w) : dims_{n, c, h, w} {
        if (n < 0 || c < 0 || h < 0 || w < 0)
            throw ShapeError("negative tensor dim " + shape_str());
        data_.assign(static_cast<size_t>(n) * c * h * w, T(0));
    }

    int n() const { return dims_[0]; }
    int c() const { return dims_[1]; }
    int h() const { return dims_[2]; }
    int w() const { return dims_[3]; }

    size_t size() const { return data_.size(); }

    size_t index(int n, int c, int h, int w) const {
        return ((static_cast<size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w;
    }

    T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

    std::string shape_str() const {
        return "(" + std::to_string(dims_[0]) + "," + std::to_string(dims_[1]) + "," +
               std::to_string(dims_[2]) + "," + std::to_string(dims_[3]) + ")";
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(n(), c(), h(), w());
        for (size_t i = 0; i < data_.size(); ++i) out.vec()[i] = static_cast<U>(data_[i]);
        return out;
    }

  private:
    std::array<int, 4> dims_;
    std::vector<T> data_;
};

/// Flat row-major matrix.
template <typename T>
class Matrix {
  public:
    Matrix() = default;

    Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
        if (rows < 0 || cols < 0) throw ShapeError("negative matrix dim");
        data_.assign(static_cast<size_t>(rows) * cols, T(0));
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    T& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = T(1);
        return m;
    }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

// Channel-range helpers used by the group convolutions.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int c1) {
    Tensor<T> out(x.n(), c1 - c0, x.h(), x.w());
    const size_t plane = static_cast<size_t>(x.h()) * x.w();
    for (int n = 0; n < x.n(); ++n)
        for (int c = c0; c < c1; ++c) {
            const T* src = x.data() + x.index(n, c, 0, 0);
            T* dst = out.data() + out.index(n, c - c0, 0, 0);
            for (size_t i = 0; i < plane; ++i) dst[i] = src[i];
        }
    return out;
}

template <typename T>
void paste_channels(Tensor<T>& dst, const Tensor<T>& src, int c0) {
    const size_t plane = static_cast<size_t>(dst.h()) * dst.w();
    for (int n = 0; n < src.n(); ++n)
        for (int c = 0; c < src.c(); ++c) {
            const T* s = src.data() + src.index(n, c, 0, 0);
            T* d = dst.data() + dst.index(n, c0 + c, 0, 0);
            for (size_t i = 0; i < plane; ++i) d[i] = s[i];
        }
}

// Stack `copies` channel-wise duplicates of x; used by the special-case
// constructions that feed replicated inputs through the IGC path.
template <typename T>
Tensor<T> replicate_channels(const Tensor<T>& x, int copies) {
    Tensor<T> out(x.n(), x.c() * copies, x.h(), x.w());
    for (int r = 0; r < copies; ++r) paste_channels(out, x, r * x.c());
    return out;
}

} // namespace igc
