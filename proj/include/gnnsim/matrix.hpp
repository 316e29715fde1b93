#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gnnsim/rng.hpp"

namespace gnnsim {

// Dense row-major matrix. All kernels below accumulate in a fixed order
// (ascending inner index) so results are bitwise reproducible.
template <typename T>
class Mat {
  public:
    Mat() = default;
    Mat(size_t rows, size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{0}) {}

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    T* row(size_t r) { return data_.data() + r * cols_; }
    const T* row(size_t r) const { return data_.data() + r * cols_; }
    T& at(size_t r, size_t c) { return data_[r * cols_ + c]; }
    const T& at(size_t r, size_t c) const { return data_[r * cols_ + c]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T{0}); }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

  private:
    size_t rows_ = 0, cols_ = 0;
    std::vector<T> data_;
};

using MatF = Mat<float>;
using MatD = Mat<double>;

// Glorot-uniform fill, deterministic per (seed, stream).
template <typename T>
void glorot_uniform(Mat<T>& w, uint64_t seed, uint64_t stream) {
    const double a = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    auto eng = make_engine(seed, stream);
    std::uniform_real_distribution<double> dist(-a, a);
    for (size_t i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(dist(eng));
}

// y[r] += x[r] * W + b for the given rows; inner accumulation over input
// columns in ascending order.
template <typename T>
void dense_rows(const T* x, size_t in_dim, const Mat<T>& w, const std::vector<T>& b,
                T* y, size_t out_dim) {
    assert(w.rows() == in_dim && w.cols() == out_dim);
    for (size_t j = 0; j < out_dim; ++j) y[j] = b.empty() ? T{0} : b[j];
    for (size_t i = 0; i < in_dim; ++i) {
        const T xi = x[i];
        if (xi == T{0}) continue;  // exact-zero skip: adding 0*w is identity
        const T* wr = w.row(i);
        for (size_t j = 0; j < out_dim; ++j) y[j] += xi * wr[j];
    }
}

// y = x * W^T for one row (used by backward passes).
template <typename T>
void dense_rows_wt(const T* x, size_t out_dim, const Mat<T>& w, T* y, size_t in_dim) {
    assert(w.rows() == in_dim && w.cols() == out_dim);
    for (size_t i = 0; i < in_dim; ++i) {
        const T* wr = w.row(i);
        T acc{0};
        for (size_t j = 0; j < out_dim; ++j) acc += x[j] * wr[j];
        y[i] = acc;
    }
}

template <typename T>
T relative_diff(const Mat<T>& a, const Mat<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("relative_diff: shape mismatch");
    double num = 0, den = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(double(a.data()[i]) - double(b.data()[i])));
        den = std::max(den, std::abs(double(a.data()[i])));
    }
    return static_cast<T>(den == 0 ? num : num / den);
}

}  // namespace gnnsim
