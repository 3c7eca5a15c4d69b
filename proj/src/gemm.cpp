#include "efta/gemm.hpp"

#include <stdexcept>

namespace efta {

Matrix gemm_mixed(const Matrix& a, const Matrix& b, const Matrix* c_init, Counters* cnt,
                  GemmStage stage, int cs_cols_from) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw std::invalid_argument("gemm_mixed: inner dimensions disagree");
    if (c_init && (c_init->rows() != m || c_init->cols() != n))
        throw std::invalid_argument("gemm_mixed: c_init shape mismatch");

    Matrix c(m, n, Storage::FULL);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            float acc = c_init ? (*c_init)(i, j) : 0.0f;
            for (int p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
            c.at(i, j) = acc;
        }
    }

    if (cnt) {
        const int main_cols = (cs_cols_from >= 0 && cs_cols_from <= n) ? cs_cols_from : n;
        const uint64_t fl_main = 2ull * m * main_cols * k;
        const uint64_t fl_cs = 2ull * m * (n - main_cols) * k;
        switch (stage) {
            case GemmStage::SCORES:
                cnt->add_main_scores(fl_main);
                cnt->add_cs_scores(fl_cs);
                break;
            case GemmStage::OUTPUT:
                cnt->add_main_output(fl_main);
                cnt->add_cs_output(fl_cs);
                break;
            case GemmStage::PLAIN:
                cnt->flops_main += fl_main + fl_cs;
                break;
        }
    }
    return c;
}

}  // namespace efta
