#pragma once

#include "efta/counters.hpp"
#include "efta/matrix.hpp"

namespace efta {

// Which GEMM of the attention pipeline a call belongs to, for counter
// attribution. PLAIN bills everything to flops_main without a stage split.
enum class GemmStage { PLAIN, SCORES, OUTPUT };

// C = C_init + A * B with 32-bit products and accumulation, one inner loop
// per output cell in fixed k order. Columns at index >= cs_cols_from are
// billed as checksum work (cs_cols_from < 0: all columns are main work).
Matrix gemm_mixed(const Matrix& a, const Matrix& b, const Matrix* c_init = nullptr,
                  Counters* cnt = nullptr, GemmStage stage = GemmStage::PLAIN,
                  int cs_cols_from = -1);

}  // namespace efta
