#include "efta/attention.hpp"

#include "efta/config.hpp"
#include "efta/efta.hpp"
#include "efta/gemm.hpp"

namespace efta {

namespace {

void check_shapes(const Matrix& q, const Matrix& k, const Matrix& v, const AttnConfig& cfg) {
    const int n = cfg.seq_len, d = cfg.head_dim;
    if (q.rows() != n || q.cols() != d || k.rows() != n || k.cols() != d || v.rows() != n ||
        v.cols() != d)
        throw ConfigError("attention: Q/K/V must all be seq_len x head_dim");
}

}  // namespace

Matrix standard_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                          const AttnConfig& cfg_in, SoftmaxState* state, Counters* cnt) {
    AttnConfig cfg = cfg_in;
    cfg.validate();
    check_shapes(q, k, v, cfg);
    const int n = cfg.seq_len, d = cfg.head_dim;

    Matrix kt = transpose(k);
    Matrix s = gemm_mixed(q, kt, nullptr, cnt, GemmStage::SCORES);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) s.at(r, c) *= cfg.scale;
    if (cnt) cnt->add_main_scores(static_cast<uint64_t>(n) * n);

    if (cnt) {
        cnt->hbm_reads += 3ull * n * d;
        cnt->hbm_writes += static_cast<uint64_t>(n) * d;
    }

    std::vector<float> m(n), l(n);
    Matrix p(n, n, Storage::FULL);
    for (int r = 0; r < n; ++r) {
        m[r] = row_max(s, r);
        for (int c = 0; c < n; ++c) p.at(r, c) = std::exp(s(r, c) - m[r]);
        l[r] = row_sum(p, r);
    }
    if (cnt) cnt->flops_main += static_cast<uint64_t>(n) * (2ull * n + (n - 1));

    Matrix o = gemm_mixed(p, v, nullptr, cnt, GemmStage::OUTPUT);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) o.at(r, c) /= l[r];
    if (cnt) cnt->add_main_output(static_cast<uint64_t>(n) * d);

    if (state) {
        state->m = std::move(m);
        state->l = std::move(l);
    }
    return o;
}

Matrix flash_attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttnConfig& cfg,
                       SoftmaxState* state, Counters* cnt) {
    auto [o, rep] = efta_forward(q, k, v, cfg, Thresholds::observe(), FTMode::NONE);
    if (state) {
        state->m = rep.final_m;
        state->l = rep.final_l;
    }
    if (cnt) *cnt += rep.counters;
    return o;
}

}  // namespace efta
