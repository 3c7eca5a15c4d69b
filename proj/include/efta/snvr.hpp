#pragma once

#include <limits>
#include <vector>

#include "efta/abft.hpp"
#include "efta/matrix.hpp"

namespace efta {

class FaultInjector;

// Detection thresholds.
//   eps1    exp-stage log-domain tolerance (~relative product tolerance)
//   eps2    output-stage absolute checksum tolerance
//   eps_lin score-stage absolute checksum tolerance
struct Thresholds {
    double eps1 = 7e-6;
    double eps2 = 0.48;
    double eps_lin = 0.48;

    // GPU-scale reference defaults; desk runs should calibrate instead
    static Thresholds reference_defaults() { return Thresholds{}; }

    // observation mode: nothing trips, discrepancies are only recorded
    static Thresholds observe() {
        const double inf = std::numeric_limits<double>::infinity();
        return Thresholds{inf, inf, inf};
    }
};

// Per-row record of the maximum seen in each processed block plus the
// running global maximum, kept outside the main accumulators so the rowsum
// range check has trustworthy inputs.
struct RowmaxHistory {
    explicit RowmaxHistory(int rows) : block_max(rows), global(rows, -inf()) {}

    static float inf() { return std::numeric_limits<float>::infinity(); }

    void push(int row, float bm) { block_max[row].push_back(bm); }

    float max_over_list(int row) const {
        float m = -inf();
        for (float v : block_max[row]) m = std::max(m, v);
        return m;
    }

    std::vector<std::vector<float>> block_max;
    std::vector<float> global;  // kernel's running max per row
};

// test helper: a consistently shifted rowmax vector
std::vector<float> perturb_rowmax(const std::vector<float>& m, float delta);

// P = exp(S - m[r]) elementwise; exp-domain unit checksum
// Pc1[r][j] = exp(Sc1[r][j] - groups * m[r]).
// In exact arithmetic Pc1 equals the product of the group's P elements.
std::pair<Matrix, Matrix> exp_with_checksum(const Matrix& s, const ChecksumPair& cp_s,
                                            const std::vector<float>& m, Counters* cnt = nullptr);

struct ExpStageOutcome {
    VerificationReport report;
    bool recomputed = false;        // some rows were re-derived from S
    bool linear_corrected = false;  // score tile repaired via its checksums
};

// Log-domain verification of the exp stage:
//   sum_l log P[r][j+s*l]  vs  log Pc1[r][j]
// On violation (or non-finite/zero degeneracy): first re-verify the score
// tile against its checksums (algebraic repair + re-exp); otherwise recompute
// max+exp for the affected rows from held m_old. Mutates P/Pc1/S/m/block_max.
ExpStageOutcome verify_exp_stage(Matrix& p, Matrix& pc1, Matrix& s, const ChecksumPair& cp_s,
                                 std::vector<float>& m, const std::vector<float>& m_old,
                                 std::vector<float>& block_max, const Thresholds& thr,
                                 Counters* cnt = nullptr, FaultInjector* inj = nullptr,
                                 int block_i = 0, int block_j = 0);

struct RestrictReport {
    std::vector<int> replaced_rows;  // tile-local indices
    double max_violation = 0.0;      // distance outside the range, pre-replacement
};

// Range restriction of the softmax denominator: each row must satisfy
//   sum_k exp(block_max[k] - running_max)  <=  l  <=  seq_len
// (inclusive both ends). Out-of-range or non-finite values are replaced by
// the lower-bound approximation.
RestrictReport restrict_rowsum(std::vector<float>& l, const RowmaxHistory& hist, int seq_len,
                               Counters* cnt = nullptr);

}  // namespace efta
