#pragma once

#include <cassert>
#include <vector>

#include "efta/half.hpp"
#include "efta/rng.hpp"

namespace efta {

// HALF_STORED: elements live on the 16-bit grid (quantize on write).
// FULL: plain 32-bit elements (accumulators, checksums, intermediates).
enum class Storage { FULL, HALF_STORED };

class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, Storage st = Storage::FULL)
        : rows_(rows), cols_(cols), storage_(st), data_(static_cast<size_t>(rows) * cols, 0.0f) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    Storage storage() const { return storage_; }

    float operator()(int r, int c) const { return data_[idx(r, c)]; }

    // quantizing write (respects storage class)
    void set(int r, int c, float v) {
        data_[idx(r, c)] = storage_ == Storage::HALF_STORED ? quantize_half(v) : v;
    }

    // direct mutable access; only meaningful for FULL storage
    float& at(int r, int c) {
        assert(storage_ == Storage::FULL);
        return data_[idx(r, c)];
    }

    const float* data() const { return data_.data(); }
    float* data() { return data_.data(); }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool bit_equal(const Matrix& o) const;
    bool all_finite() const;

    static Matrix random(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0,
                         Storage st = Storage::HALF_STORED);

private:
    size_t idx(int r, int c) const {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return static_cast<size_t>(r) * cols_ + c;
    }

    int rows_ = 0, cols_ = 0;
    Storage storage_ = Storage::FULL;
    std::vector<float> data_;
};

Matrix transpose(const Matrix& m);

// Disjoint row/column partitions; concatenation reproduces the input.
std::vector<Matrix> tile_rows(const Matrix& m, int block);
std::vector<Matrix> tile_cols(const Matrix& m, int block);
Matrix concat_rows(const std::vector<Matrix>& tiles);
Matrix concat_cols(const std::vector<Matrix>& tiles);

// Shared reductions: every kernel path must use these so summation order
// (and therefore bit patterns) agree across protected and plain paths.
float row_max(const Matrix& m, int r);
float row_sum(const Matrix& m, int r);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace efta
