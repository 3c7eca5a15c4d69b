#pragma once

#include <vector>

#include "efta/config.hpp"
#include "efta/counters.hpp"
#include "efta/matrix.hpp"

namespace efta {

// Final per-row softmax statistics of an attention forward pass.
struct SoftmaxState {
    std::vector<float> m;  // row maximum of the scaled scores
    std::vector<float> l;  // softmax denominator
};

// Reference attention: O = softmax(scale * Q K^T) V with the full score and
// probability matrices materialized. Single global max/sum per row.
Matrix standard_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                          const AttnConfig& cfg, SoftmaxState* state = nullptr,
                          Counters* cnt = nullptr);

// Blocked streaming attention (online softmax recurrence over key/value
// blocks). Shares its main-path arithmetic with the protected kernel, so a
// protected run with no faults reproduces these bits exactly.
Matrix flash_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                       const AttnConfig& cfg, SoftmaxState* state = nullptr,
                       Counters* cnt = nullptr);

}  // namespace efta
