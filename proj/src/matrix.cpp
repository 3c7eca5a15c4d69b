#include "efta/matrix.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace efta {

bool Matrix::bit_equal(const Matrix& o) const {
    if (!same_shape(o)) return false;
    return std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(float)) == 0;
}

bool Matrix::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix Matrix::random(int rows, int cols, Rng& rng, double lo, double hi, Storage st) {
    Matrix m(rows, cols, st);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m.set(r, c, static_cast<float>(rng.uniform(lo, hi)));
    return m;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows(), m.storage());
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) t.set(c, r, m(r, c));
    return t;
}

std::vector<Matrix> tile_rows(const Matrix& m, int block) {
    if (block <= 0 || m.rows() % block != 0)
        throw std::invalid_argument("tile_rows: block must divide rows");
    std::vector<Matrix> out;
    out.reserve(m.rows() / block);
    for (int r0 = 0; r0 < m.rows(); r0 += block) {
        Matrix t(block, m.cols(), m.storage());
        for (int r = 0; r < block; ++r)
            for (int c = 0; c < m.cols(); ++c) t.set(r, c, m(r0 + r, c));
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<Matrix> tile_cols(const Matrix& m, int block) {
    if (block <= 0 || m.cols() % block != 0)
        throw std::invalid_argument("tile_cols: block must divide cols");
    std::vector<Matrix> out;
    out.reserve(m.cols() / block);
    for (int c0 = 0; c0 < m.cols(); c0 += block) {
        Matrix t(m.rows(), block, m.storage());
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < block; ++c) t.set(r, c, m(r, c0 + c));
        out.push_back(std::move(t));
    }
    return out;
}

Matrix concat_rows(const std::vector<Matrix>& tiles) {
    if (tiles.empty()) return {};
    int rows = 0;
    for (const auto& t : tiles) rows += t.rows();
    Matrix m(rows, tiles[0].cols(), tiles[0].storage());
    int r0 = 0;
    for (const auto& t : tiles) {
        for (int r = 0; r < t.rows(); ++r)
            for (int c = 0; c < t.cols(); ++c) m.set(r0 + r, c, t(r, c));
        r0 += t.rows();
    }
    return m;
}

Matrix concat_cols(const std::vector<Matrix>& tiles) {
    if (tiles.empty()) return {};
    int cols = 0;
    for (const auto& t : tiles) cols += t.cols();
    Matrix m(tiles[0].rows(), cols, tiles[0].storage());
    int c0 = 0;
    for (const auto& t : tiles) {
        for (int r = 0; r < t.rows(); ++r)
            for (int c = 0; c < t.cols(); ++c) m.set(r, c0 + c, t(r, c));
        c0 += t.cols();
    }
    return m;
}

float row_max(const Matrix& m, int r) {
    float v = m(r, 0);
    for (int c = 1; c < m.cols(); ++c) v = std::max(v, m(r, c));
    return v;
}

float row_sum(const Matrix& m, int r) {
    float s = 0.0f;
    for (int c = 0; c < m.cols(); ++c) s += m(r, c);
    return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
    double d = 0.0;
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) {
            const double x = std::abs(static_cast<double>(a(r, c)) - b(r, c));
            if (std::isnan(x)) return std::numeric_limits<double>::infinity();
            d = std::max(d, x);
        }
    return d;
}

}  // namespace efta
