#include <cmath>
#include <limits>
#include <stdexcept>

#include "efta/efta.hpp"
#include "efta/gemm.hpp"

// Operation-level baseline: the attention pipeline split into three kernels
// that exchange full intermediate tensors.
//   1. S = scale * Q K^T    per block pair, traditional row+column checksums
//   2. P = softmax(S)       per row, duplicated evaluation + rowsum-vs-1
//   3. O = P V              per row block, traditional row+column checksums

namespace efta {

namespace {

struct TwoSided {
    Matrix col_checks;  // 2 x cols, propagated full-column checksums
    Matrix row_checks;  // 2 x rows, propagated full-row checksums
};

// Split an augmented product [(rows+2) x (cols+2)] into the data block and
// its two propagated checksum directions.
TwoSided split_aug(const Matrix& caug, Matrix& c, int rows, int cols) {
    c = Matrix(rows, cols, Storage::FULL);
    TwoSided t;
    t.col_checks = Matrix(2, cols, Storage::FULL);
    t.row_checks = Matrix(2, rows, Storage::FULL);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j) c.at(r, j) = caug(r, j);
    for (int j = 0; j < cols; ++j) {
        t.col_checks.at(0, j) = caug(rows, j);
        t.col_checks.at(1, j) = caug(rows + 1, j);
    }
    for (int r = 0; r < rows; ++r) {
        t.row_checks.at(0, r) = caug(r, cols);
        t.row_checks.at(1, r) = caug(r, cols + 1);
    }
    return t;
}

// Column-direction verification first (locates the row inside a column);
// if that declares defeat, retry through the row direction, which resolves
// pairs of errors that share a column but not a row.
VerificationReport verify_two_sided(Matrix& c, const TwoSided& t, double eps, Counters* cnt) {
    VerificationReport rep = verify_traditional(c, t.col_checks, eps, cnt);
    if (rep.status != VerifyStatus::DETECTED_UNCORRECTABLE) return rep;
    Matrix ct = transpose(c);
    VerificationReport rrep = verify_traditional(ct, t.row_checks, eps, cnt);
    if (rrep.corrections == 0) return rep;
    Matrix fixed = transpose(ct);
    VerificationReport again = verify_traditional(fixed, t.col_checks, eps, cnt);
    if (again.status == VerifyStatus::CLEAN || again.status == VerifyStatus::CORRECTED) {
        c = std::move(fixed);
        again.corrections += rep.corrections + rrep.corrections;
        again.violations = rep.violations;
        again.residual = rep.residual;
        again.status = VerifyStatus::CORRECTED;
        return again;
    }
    return rep;
}

// [A ; col-checksum rows] for the left operand.
Matrix with_check_rows(const Matrix& a, Counters* cnt) {
    Matrix checks = encode_traditional(a, cnt);
    Matrix aug(a.rows() + 2, a.cols(), Storage::FULL);
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) aug.at(r, c) = a(r, c);
    for (int c = 0; c < a.cols(); ++c) {
        aug.at(a.rows(), c) = checks(0, c);
        aug.at(a.rows() + 1, c) = checks(1, c);
    }
    return aug;
}

// [B | row-checksum columns] for the right operand.
Matrix with_check_cols(const Matrix& b, Counters* cnt) {
    Matrix aug(b.rows(), b.cols() + 2, Storage::FULL);
    for (int r = 0; r < b.rows(); ++r) {
        float s1 = 0.0f, s2 = 0.0f;
        for (int c = 0; c < b.cols(); ++c) {
            const float v = b(r, c);
            aug.at(r, c) = v;
            s1 += v;
            s2 += static_cast<float>(c + 1) * v;
        }
        aug.at(r, b.cols()) = s1;
        aug.at(r, b.cols() + 1) = s2;
    }
    if (cnt) cnt->add_cs_encode(static_cast<uint64_t>(b.rows()) * (3ull * b.cols() - 2));
    return aug;
}

}  // namespace

std::pair<Matrix, FTReport> decoupled_ft_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                                                 const AttnConfig& cfg_in, const Thresholds& thr,
                                                 FaultInjector* inj, const KernelKnobs* knobs) {
    AttnConfig cfg = cfg_in;
    cfg.validate();
    if (q.rows() != cfg.seq_len || q.cols() != cfg.head_dim || !q.same_shape(k) ||
        !q.same_shape(v))
        throw ConfigError("attention: Q/K/V must all be seq_len x head_dim");

    const int N = cfg.seq_len, d = cfg.head_dim, B = cfg.block;
    const int n = cfg.num_blocks();
    const bool collect = knobs && knobs->collect_weights;
    const float bias = knobs ? knobs->rowmax_bias : 0.0f;

    FTReport rep;
    rep.mode = FTMode::DECOUPLED;
    Counters& cnt = rep.counters;
    rep.final_m.assign(N, 0.0f);
    rep.final_l.assign(N, 0.0f);

    const auto qtiles = tile_rows(q, B);
    const auto ktiles = tile_rows(k, B);

    // ---- kernel 1: S blocks with two-sided traditional checksums ----
    Matrix s(N, N, Storage::FULL);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            cnt.hbm_reads += 2ull * B * d;
            Matrix aaug = with_check_rows(qtiles[i], &cnt);
            Matrix baug = with_check_cols(transpose(ktiles[j]), &cnt);
            Matrix caug = gemm_mixed(aaug, baug);
            cnt.add_main_scores(2ull * B * B * d);
            cnt.add_cs_scores(2ull * ((B + 2) * (B + 2) - B * B) * d);

            Matrix c;
            TwoSided checks = split_aug(caug, c, B, B);
            if (inj)
                for (int r = 0; r < B; ++r)
                    for (int cc = 0; cc < B; ++cc)
                        c.at(r, cc) = inj->tap(FaultSite::GEMM1_OUT, i, j, r, cc, c(r, cc));

            VerificationReport vr = verify_two_sided(c, checks, thr.eps_lin, &cnt);
            rep.push_event(CheckKind::BLOCK_CHECKSUM, i, j, vr);

            for (int r = 0; r < B; ++r)
                for (int cc = 0; cc < B; ++cc) s.at(i * B + r, j * B + cc) = c(r, cc) * cfg.scale;
            cnt.flops_main += static_cast<uint64_t>(B) * B;
        }
        cnt.intermediate_elems += static_cast<uint64_t>(B) * N;  // S row band written
    }

    // ---- kernel 2: duplicated softmax over full rows ----
    cnt.intermediate_elems += static_cast<uint64_t>(N) * N;  // S read back
    Matrix p(N, N, Storage::FULL);
    const double rowsum_eps = thr.eps1 * N;
    for (int r = 0; r < N; ++r) {
        const int bi = r / B, rl = r % B;
        float m = row_max(s, r) + bias;
        m = inj ? inj->tap(FaultSite::REDUCE_MAX, bi, 0, rl, 0, m) : m;
        rep.final_m[r] = m;

        auto eval = [&](std::vector<float>& out) {
            out.resize(N);
            for (int c = 0; c < N; ++c) {
                float a = s(r, c) - m;
                a = inj ? inj->tap(FaultSite::SUB_MAX, bi, c / B, rl, c % B, a) : a;
                float e = std::exp(a);
                e = inj ? inj->tap(FaultSite::EXP_OUT, bi, c / B, rl, c % B, e) : e;
                out[c] = e;
            }
        };
        auto agree = [&](const std::vector<float>& a, const std::vector<float>& b) {
            double diff = 0.0;
            for (int c = 0; c < N; ++c)
                diff = std::max(diff, std::abs(static_cast<double>(a[c]) - b[c]));
            cnt.flops_verify += static_cast<uint64_t>(N);
            return diff;
        };

        std::vector<float> e1, e2;
        eval(e1);
        cnt.flops_main += 2ull * N;
        eval(e2);
        cnt.flops_checksum += 2ull * N;  // redundant evaluation is the FT work
        double diff = agree(e1, e2);
        if (!(diff <= thr.eps1)) {  // NaN disagrees
            VerificationReport dr;
            dr.status = VerifyStatus::CORRECTED;
            dr.residual = diff;
            dr.violations = 1;
            std::vector<float> e3;
            eval(e3);
            cnt.flops_checksum += 2ull * N;
            const double diff23 = agree(e2, e3);
            if (!(diff23 <= thr.eps1)) {
                dr.status = VerifyStatus::DETECTED_UNCORRECTABLE;
                dr.residual = std::max(diff, diff23);
            } else {
                dr.corrections = 1;
            }
            e1 = std::move(e2);
            e2 = std::move(e3);
            dr.row = rl;
            rep.push_event(CheckKind::DMR_SOFTMAX, bi, 0, dr);
        }
        for (int c = 0; c < N; ++c) p.at(r, c) = 0.5f * (e1[c] + e2[c]);
        cnt.flops_checksum += 2ull * N;

        float l = row_sum(p, r);
        l = inj ? inj->tap(FaultSite::REDUCE_SUM, bi, 0, rl, 0, l) : l;
        cnt.flops_main += static_cast<uint64_t>(N) - 1;

        // normalize; the row of a softmax must sum to one
        std::vector<float> norm(N);
        bool ok = false;
        double worst = 0.0;
        for (int attempt = 0; attempt < 3 && !ok; ++attempt) {
            if (attempt > 0) {
                l = row_sum(p, r);
                l = inj ? inj->tap(FaultSite::REDUCE_SUM, bi, 0, rl, 0, l) : l;
                cnt.flops_main += static_cast<uint64_t>(N) - 1;
            }
            for (int c = 0; c < N; ++c) {
                float pv = p(r, c) / l;
                pv = inj ? inj->tap(FaultSite::NORMALIZE_OUT, bi, c / B, rl, c % B, pv) : pv;
                norm[c] = pv;
            }
            cnt.flops_main += static_cast<uint64_t>(N);
            double rs = 0.0;
            for (int c = 0; c < N; ++c) rs += norm[c];
            cnt.flops_verify += static_cast<uint64_t>(N);
            const double dev = std::abs(rs - 1.0);
            worst = std::max(worst, dev);
            ok = std::isfinite(rs) && dev <= rowsum_eps;
            if (!ok) {
                VerificationReport dr;
                dr.status = attempt < 2 ? VerifyStatus::CORRECTED : VerifyStatus::DETECTED_UNCORRECTABLE;
                dr.corrections = attempt < 2 ? 1 : 0;
                dr.residual = dev / N;
                dr.row = rl;
                rep.push_event(CheckKind::DMR_SOFTMAX, bi, 0, dr);
                ++rep.recomputes;
            } else {
                VerificationReport dr;
                dr.residual = dev / N;
                dr.row = rl;
                rep.push_event(CheckKind::DMR_SOFTMAX, bi, 0, dr);
            }
        }
        for (int c = 0; c < N; ++c) p.at(r, c) = norm[c];
        rep.final_l[r] = l;
    }
    cnt.intermediate_elems += static_cast<uint64_t>(N) * N;  // P written

    if (collect) rep.weights = p;

    // ---- kernel 3: O blocks with two-sided traditional checksums ----
    Matrix o(N, d, Storage::FULL);
    const auto ptiles = tile_rows(p, B);
    cnt.intermediate_elems += static_cast<uint64_t>(N) * N;  // P read back
    for (int i = 0; i < n; ++i) {
        cnt.hbm_reads += static_cast<uint64_t>(N) * d;  // V streamed per row block
        Matrix aaug = with_check_rows(ptiles[i], &cnt);
        Matrix baug = with_check_cols(v, &cnt);
        Matrix caug = gemm_mixed(aaug, baug);
        cnt.add_main_output(2ull * B * d * N);
        cnt.add_cs_output(2ull * ((B + 2) * (d + 2) - B * d) * N);

        Matrix c;
        TwoSided checks = split_aug(caug, c, B, d);
        if (inj)
            for (int r = 0; r < B; ++r)
                for (int cc = 0; cc < d; ++cc)
                    c.at(r, cc) = inj->tap(FaultSite::GEMM2_ACC, i, 0, r, cc, c(r, cc));

        VerificationReport vr = verify_two_sided(c, checks, thr.eps2, &cnt);
        rep.push_event(CheckKind::BLOCK_CHECKSUM, i, n, vr);

        for (int r = 0; r < B; ++r)
            for (int cc = 0; cc < d; ++cc) o.at(i * B + r, cc) = c(r, cc);
        cnt.hbm_writes += static_cast<uint64_t>(B) * d;
    }

    return {std::move(o), std::move(rep)};
}

}  // namespace efta
