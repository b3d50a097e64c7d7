#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "picg/common.hpp"
#include "picg/rng.hpp"

namespace picg {

// Dense row-major tensor of doubles. Compute runs in double so analytic
// gradients can be checked against finite differences at tight tolerances;
// persisted blobs are little-endian float32 (see serialize.hpp).
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(size_t(numel_of(shape_)), 0.0);
    }
    Tensor(std::vector<int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (int64_t(data_.size()) != numel_of(shape_))
            throw shape_error("tensor data size does not match shape");
    }

    static int64_t numel_of(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(int i) const { return shape_[size_t(i)]; }
    int ndim() const { return int(shape_.size()); }
    int64_t numel() const { return int64_t(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[size_t(i)]; }
    double operator[](int64_t i) const { return data_[size_t(i)]; }

    // 2-D accessors (rows x cols).
    double& at(int64_t r, int64_t c) { return data_[size_t(r * shape_[1] + c)]; }
    double at(int64_t r, int64_t c) const { return data_[size_t(r * shape_[1] + c)]; }
    int64_t rows() const { return shape_[0]; }
    int64_t cols() const { return shape_[1]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    void add_(const Tensor& other) {
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    }
    void scale_(double a) {
        for (auto& v : data_) v *= a;
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor randn(std::vector<int64_t> shape, Rng& rng, double stddev) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = rng.normal() * stddev;
        return t;
    }

    static Tensor uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = rng.uniform(lo, hi);
        return t;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

  private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

// C[m,n] (+)= op(A) * op(B). Accumulates when beta == 1, overwrites when
// beta == 0. Loop orders chosen so the inner loop is stride-1 on C and B.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, int64_t lda, const double* b, int64_t ldb, double beta, double* c,
          int64_t ldc);

}  // namespace picg
