#include "efta/abft.hpp"

#include <cmath>
#include <stdexcept>

namespace efta {

namespace {

bool finite(float v) { return std::isfinite(v); }

uint64_t encode_flops(int rows, int stride, int groups) {
    // c1: (G-1) adds per cell; c2: G muls + (G-1) adds per cell
    return static_cast<uint64_t>(rows) * stride * (3ull * groups - 2);
}

}  // namespace

ChecksumPair encode_strided(const Matrix& t, int stride, Counters* cnt) {
    if (stride <= 0 || t.cols() % stride != 0)
        throw std::invalid_argument("encode_strided: stride must divide tile width");
    const int groups = t.cols() / stride;
    ChecksumPair cp;
    cp.stride = stride;
    cp.groups = groups;
    cp.c1 = Matrix(t.rows(), stride, Storage::FULL);
    cp.c2 = Matrix(t.rows(), stride, Storage::FULL);
    for (int r = 0; r < t.rows(); ++r) {
        for (int j = 0; j < stride; ++j) {
            float s1 = 0.0f, s2 = 0.0f;
            for (int l = 0; l < groups; ++l) {
                const float v = t(r, j + stride * l);
                s1 += v;
                s2 += static_cast<float>(l + 1) * v;
            }
            cp.c1.at(r, j) = s1;
            cp.c2.at(r, j) = s2;
        }
    }
    if (cnt) cnt->add_cs_encode(encode_flops(t.rows(), stride, groups));
    return cp;
}

std::pair<Matrix, Matrix> strided_sums(const Matrix& t, int stride, Counters* cnt) {
    if (stride <= 0 || t.cols() % stride != 0)
        throw std::invalid_argument("strided_sums: stride must divide tile width");
    const int groups = t.cols() / stride;
    Matrix s1(t.rows(), stride, Storage::FULL), s2(t.rows(), stride, Storage::FULL);
    for (int r = 0; r < t.rows(); ++r) {
        for (int j = 0; j < stride; ++j) {
            float a = 0.0f, b = 0.0f;
            for (int l = 0; l < groups; ++l) {
                const float v = t(r, j + stride * l);
                a += v;
                b += static_cast<float>(l + 1) * v;
            }
            s1.at(r, j) = a;
            s2.at(r, j) = b;
        }
    }
    if (cnt) cnt->flops_verify += encode_flops(t.rows(), stride, groups);
    return {std::move(s1), std::move(s2)};
}

VerificationReport verify_locate_correct(Matrix& t, const ChecksumPair& cp, double eps_abs,
                                         Counters* cnt, const std::vector<double>* row_eps_mult) {
    VerificationReport rep;
    const int stride = cp.stride, groups = cp.groups;
    if (t.cols() != stride * groups || cp.c1.rows() != t.rows())
        throw std::invalid_argument("verify_locate_correct: checksum/tile shape mismatch");
    if (row_eps_mult && static_cast<int>(row_eps_mult->size()) != t.rows())
        throw std::invalid_argument("verify_locate_correct: row_eps_mult size mismatch");

    if (!cp.c1.all_finite() || !cp.c2.all_finite()) {
        rep.status = VerifyStatus::NONFINITE;
        rep.residual = std::numeric_limits<double>::infinity();
        return rep;
    }

    // Non-finite data cells are errors at a known position: restore each from
    // the unit checksum minus its finite group siblings (needs to be the only
    // bad cell in its group).
    if (!t.all_finite()) {
        for (int r = 0; r < t.rows(); ++r) {
            for (int j = 0; j < stride; ++j) {
                int bad = -1, bad_count = 0;
                for (int l = 0; l < groups; ++l)
                    if (!finite(t(r, j + stride * l))) {
                        bad = l;
                        ++bad_count;
                    }
                if (bad_count == 0) continue;
                ++rep.violations;
                if (bad_count > 1) {
                    rep.status = VerifyStatus::NONFINITE;
                    rep.residual = std::numeric_limits<double>::infinity();
                    return rep;
                }
                float rest = 0.0f;
                for (int l = 0; l < groups; ++l)
                    if (l != bad) rest += t(r, j + stride * l);
                const int col = j + stride * bad;
                t.at(r, col) = cp.c1(r, j) - rest;
                ++rep.corrections;
                rep.row = r;
                rep.col = col;
                rep.delta = std::numeric_limits<double>::infinity();
                if (cnt) cnt->flops_verify += groups;
            }
        }
    }

    auto [s1, s2] = strided_sums(t, stride, cnt);
    bool any_uncorrectable = false;
    for (int r = 0; r < t.rows(); ++r) {
        const double eps_row = row_eps_mult ? eps_abs * (*row_eps_mult)[r] : eps_abs;
        for (int j = 0; j < stride; ++j) {
            double s1d = s1(r, j), s2d = s2(r, j);
            if (!std::isfinite(s1d) || !std::isfinite(s2d)) {
                // A corrupted cell near FLT_MAX overflows the float sums once
                // the group weight multiplies it. Redo this group in double so
                // the discrepancy ratio stays usable for location.
                s1d = 0.0;
                s2d = 0.0;
                for (int l = 0; l < groups; ++l) {
                    const double vv = t(r, j + stride * l);
                    s1d += vv;
                    s2d += (l + 1.0) * vv;
                }
                if (cnt) cnt->flops_verify += 3ull * groups;
            }
            const double d1 = static_cast<double>(cp.c1(r, j)) - s1d;
            const double d2 = static_cast<double>(cp.c2(r, j)) - s2d;
            // residual reports what the detector saw, before any repair
            rep.residual = std::max(rep.residual, std::max(std::abs(d1), std::abs(d2) / groups));
            const bool v1 = std::abs(d1) > eps_row;
            const bool v2 = std::abs(d2) > eps_row * groups;
            if (!v1 && !v2) continue;
            ++rep.violations;
            if (!v1) {
                // weighted checksum alone disagrees: its own storage is suspect
                rep.checksum_repair = true;
                continue;
            }
            const double ratio = d2 / d1;
            const double nearest = std::round(ratio);
            if (nearest == 0.0 && std::abs(ratio) <= 0.25) {
                // unit checksum alone disagrees: checksum cell fault, data intact
                rep.checksum_repair = true;
                continue;
            }
            const int g = static_cast<int>(nearest) - 1;
            if (g < 0 || g >= groups || std::abs(ratio - nearest) > 0.25) {
                if (std::max(std::abs(d1), std::abs(d2) / groups) > eps_row * kLocateNoiseBand)
                    any_uncorrectable = true;
                continue;
            }
            // Rebuild the located cell from the unit checksum and its group
            // siblings rather than adding d1: when the corrupted value is
            // orders of magnitude above the rest of the group it absorbs the
            // siblings out of the fresh sum, and the incremental correction
            // would cancel to zero instead of the original value.
            const int col = j + stride * g;
            float rest = 0.0f;
            for (int l = 0; l < groups; ++l)
                if (l != g) rest += t(r, j + stride * l);
            const float old_val = t(r, col);
            const float new_val = cp.c1(r, j) - rest;
            t.at(r, col) = new_val;
            if (cnt) cnt->flops_verify += groups;
            ++rep.corrections;
            const double applied = static_cast<double>(new_val) - static_cast<double>(old_val);
            if (std::abs(applied) > std::abs(rep.delta)) {
                rep.delta = applied;
                rep.row = r;
                rep.col = col;
            }
        }
    }
    if (cnt) cnt->flops_verify += 2ull * t.rows() * stride;

    if (any_uncorrectable)
        rep.status = VerifyStatus::DETECTED_UNCORRECTABLE;
    else if (rep.corrections > 0 || rep.checksum_repair)
        rep.status = VerifyStatus::CORRECTED;
    return rep;
}

Matrix encode_traditional(const Matrix& a, Counters* cnt) {
    Matrix chk(2, a.cols(), Storage::FULL);
    for (int j = 0; j < a.cols(); ++j) {
        float s1 = 0.0f, s2 = 0.0f;
        for (int i = 0; i < a.rows(); ++i) {
            const float v = a(i, j);
            s1 += v;
            s2 += static_cast<float>(i + 1) * v;
        }
        chk.at(0, j) = s1;
        chk.at(1, j) = s2;
    }
    if (cnt) cnt->add_cs_encode(static_cast<uint64_t>(a.cols()) * (3ull * a.rows() - 2));
    return chk;
}

VerificationReport verify_traditional(Matrix& c, const Matrix& checks, double eps_abs,
                                      Counters* cnt) {
    VerificationReport rep;
    if (checks.rows() != 2 || checks.cols() != c.cols())
        throw std::invalid_argument("verify_traditional: checksum shape mismatch");
    if (!checks.all_finite()) {
        rep.status = VerifyStatus::NONFINITE;
        rep.residual = std::numeric_limits<double>::infinity();
        return rep;
    }

    const int m = c.rows();

    // Non-finite data cells are errors at a known position: restore each from
    // the unit checksum minus its finite column siblings (needs to be the only
    // bad cell in its column).
    if (!c.all_finite()) {
        for (int j = 0; j < c.cols(); ++j) {
            int bad = -1, bad_count = 0;
            for (int i = 0; i < m; ++i)
                if (!finite(c(i, j))) {
                    bad = i;
                    ++bad_count;
                }
            if (bad_count == 0) continue;
            ++rep.violations;
            if (bad_count > 1) {
                rep.status = VerifyStatus::NONFINITE;
                rep.residual = std::numeric_limits<double>::infinity();
                return rep;
            }
            float rest = 0.0f;
            for (int i = 0; i < m; ++i)
                if (i != bad) rest += c(i, j);
            c.at(bad, j) = checks(0, j) - rest;
            ++rep.corrections;
            rep.row = bad;
            rep.col = j;
            rep.delta = std::numeric_limits<double>::infinity();
            if (cnt) cnt->flops_verify += m;
        }
    }

    bool any_uncorrectable = false;
    for (int j = 0; j < c.cols(); ++j) {
        float s1 = 0.0f, s2 = 0.0f;
        for (int i = 0; i < m; ++i) {
            const float v = c(i, j);
            s1 += v;
            s2 += static_cast<float>(i + 1) * v;
        }
        double s1d = s1, s2d = s2;
        if (!std::isfinite(s1d) || !std::isfinite(s2d)) {
            // A corrupted cell near FLT_MAX overflows the float sums once the
            // row weight multiplies it; redo this column in double so the
            // discrepancy ratio stays usable for location.
            s1d = 0.0;
            s2d = 0.0;
            for (int i = 0; i < m; ++i) {
                const double vv = c(i, j);
                s1d += vv;
                s2d += (i + 1.0) * vv;
            }
            if (cnt) cnt->flops_verify += 3ull * m;
        }
        const double d1 = static_cast<double>(checks(0, j)) - s1d;
        const double d2 = static_cast<double>(checks(1, j)) - s2d;
        // residual reports what the detector saw, before any repair
        rep.residual = std::max(rep.residual, std::max(std::abs(d1), std::abs(d2) / m));
        const bool v1 = std::abs(d1) > eps_abs;
        const bool v2 = std::abs(d2) > eps_abs * m;
        if (!v1 && !v2) continue;
        ++rep.violations;
        if (!v1) {
            rep.checksum_repair = true;
            continue;
        }
        const double ratio = d2 / d1;
        const double nearest = std::round(ratio);
        if (nearest == 0.0 && std::abs(ratio) <= 0.25) {
            rep.checksum_repair = true;
            continue;
        }
        const int row = static_cast<int>(nearest) - 1;
        if (row < 0 || row >= m || std::abs(ratio - nearest) > 0.25) {
            if (std::max(std::abs(d1), std::abs(d2) / m) > eps_abs * kLocateNoiseBand)
                any_uncorrectable = true;
            continue;
        }
        // Rebuild the located cell from the unit checksum and its column
        // siblings rather than adding d1: a corrupted value far above the rest
        // of the column absorbs the siblings out of the fresh sum, and the
        // incremental correction would cancel to zero instead of the original.
        float rest = 0.0f;
        for (int i = 0; i < m; ++i)
            if (i != row) rest += c(i, j);
        const float old_val = c(row, j);
        const float new_val = checks(0, j) - rest;
        c.at(row, j) = new_val;
        if (cnt) cnt->flops_verify += m;
        ++rep.corrections;
        const double applied = static_cast<double>(new_val) - static_cast<double>(old_val);
        if (std::abs(applied) > std::abs(rep.delta)) {
            rep.delta = applied;
            rep.row = row;
            rep.col = j;
        }
    }
    if (cnt) cnt->flops_verify += static_cast<uint64_t>(c.cols()) * (3ull * m - 2 + 2);

    if (any_uncorrectable)
        rep.status = VerifyStatus::DETECTED_UNCORRECTABLE;
    else if (rep.corrections > 0 || rep.checksum_repair)
        rep.status = VerifyStatus::CORRECTED;
    return rep;
}

std::pair<Matrix, ChecksumPair> checksummed_gemm(const Matrix& a, const Matrix& bt, int stride,
                                                 Counters* cnt, GemmStage stage,
                                                 const Matrix* c_init,
                                                 const ChecksumPair* cp_init) {
    const int w = bt.cols();
    ChecksumPair e = encode_strided(bt, stride, cnt);

    Matrix aug(bt.rows(), w + 2 * stride, Storage::FULL);
    for (int r = 0; r < bt.rows(); ++r) {
        for (int c = 0; c < w; ++c) aug.at(r, c) = bt(r, c);
        for (int j = 0; j < stride; ++j) {
            aug.at(r, w + j) = e.c1(r, j);
            aug.at(r, w + stride + j) = e.c2(r, j);
        }
    }

    Matrix init_aug;
    const Matrix* init_ptr = nullptr;
    if (c_init) {
        if (!cp_init) throw std::invalid_argument("checksummed_gemm: c_init without cp_init");
        init_aug = Matrix(c_init->rows(), w + 2 * stride, Storage::FULL);
        for (int r = 0; r < c_init->rows(); ++r) {
            for (int c = 0; c < w; ++c) init_aug.at(r, c) = (*c_init)(r, c);
            for (int j = 0; j < stride; ++j) {
                init_aug.at(r, w + j) = cp_init->c1(r, j);
                init_aug.at(r, w + stride + j) = cp_init->c2(r, j);
            }
        }
        init_ptr = &init_aug;
    }

    Matrix caug = gemm_mixed(a, aug, init_ptr, cnt, stage, w);

    Matrix c(a.rows(), w, Storage::FULL);
    ChecksumPair cp;
    cp.stride = stride;
    cp.groups = w / stride;
    cp.c1 = Matrix(a.rows(), stride, Storage::FULL);
    cp.c2 = Matrix(a.rows(), stride, Storage::FULL);
    for (int r = 0; r < a.rows(); ++r) {
        for (int col = 0; col < w; ++col) c.at(r, col) = caug(r, col);
        for (int j = 0; j < stride; ++j) {
            cp.c1.at(r, j) = caug(r, w + j);
            cp.c2.at(r, j) = caug(r, w + stride + j);
        }
    }
    return {std::move(c), std::move(cp)};
}

}  // namespace efta
