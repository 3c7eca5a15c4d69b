#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "efta/abft.hpp"
#include "efta/config.hpp"
#include "efta/counters.hpp"
#include "efta/fault.hpp"
#include "efta/matrix.hpp"
#include "efta/snvr.hpp"

namespace efta {

// Fault-tolerance flavor of a forward pass.
//   NONE            unprotected blocked kernel
//   EFTA            in-kernel checksums; output verified every iteration
//   EFTA_OPTIMIZED  in-kernel checksums; output verified once, after the
//                   final normalization
//   DECOUPLED       three separate kernels: checksummed GEMM, duplicated
//                   softmax, checksummed GEMM (intermediates cross HBM)
enum class FTMode { NONE, EFTA, EFTA_OPTIMIZED, DECOUPLED };

const char* ft_mode_name(FTMode mode);
std::optional<FTMode> ft_mode_from_name(const std::string& name);

// Which check produced an event.
enum class CheckKind {
    SCORE_CHECKSUM,   // linear re-verification of the score tile
    EXP_CHECKSUM,     // log-domain product check of the exp stage
    FACTOR_RANGE,     // rescale factor outside (0, 1]
    ROWSUM_RANGE,     // softmax denominator outside its admissible range
    OUTPUT_CHECKSUM,  // strided checksum check of the output accumulator
    DMR_SOFTMAX,      // duplicated-evaluation disagreement / rowsum-vs-1
    BLOCK_CHECKSUM,   // traditional full-column/row checksum of a GEMM block
};

const char* check_kind_name(CheckKind kind);

struct StageEvent {
    CheckKind kind{};
    int block_i = 0;
    int block_j = 0;  // n = post-loop (final) check of a row block
    VerificationReport rep;
};

// Everything a forward pass reports besides the output tensor.
struct FTReport {
    FTMode mode = FTMode::NONE;
    std::vector<StageEvent> events;

    int detections = 0;          // events whose status was not CLEAN
    int corrections = 0;         // located-and-repaired cells + recomputed rows
    int recomputes = 0;          // recovery re-executions that changed bits
    int range_replacements = 0;  // denominators replaced by the range bound
    bool failed = false;         // some check ended beyond repair

    Counters counters;

    std::vector<float> final_l;      // per absolute row, post restriction
    std::vector<float> final_m;      // per absolute row
    std::vector<int> restricted_rows;  // absolute rows whose l was replaced

    Matrix weights;  // N x N effective attention weights (when requested)

    // largest discrepancy any event of this kind observed (-inf if none)
    double max_residual(CheckKind kind) const;

    void push_event(CheckKind kind, int bi, int bj, const VerificationReport& r);
};

// Diagnostic knobs. Default-constructed = production behavior.
struct KernelKnobs {
    bool collect_weights = false;  // materialize effective attention weights
    // Evaluate the linear score check every iteration (normally it only runs
    // when the exp-stage check trips). Used to observe clean-run residuals.
    bool observe_linear = false;
    // Constant added to every block maximum before the running-max update;
    // exercises the shift invariance of the normalized output.
    float rowmax_bias = 0.0f;
};

// Protected (or plain, mode NONE) blocked attention forward pass.
std::pair<Matrix, FTReport> efta_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                                         const AttnConfig& cfg, const Thresholds& thr,
                                         FTMode mode, FaultInjector* inj = nullptr,
                                         const KernelKnobs* knobs = nullptr);

// Operation-level baseline: GEMM I and GEMM II carry traditional full
// column/row checksums, the softmax between them is verified by duplicated
// evaluation plus a rowsum-vs-1 check. S and P cross kernel boundaries.
std::pair<Matrix, FTReport> decoupled_ft_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                                                 const AttnConfig& cfg, const Thresholds& thr,
                                                 FaultInjector* inj = nullptr,
                                                 const KernelKnobs* knobs = nullptr);

// Measured and closed-form overhead fractions derived from counters.
struct OverheadReport {
    double checksum_over_main = 0.0;  // flops_checksum / flops_main
    double verify_over_main = 0.0;    // flops_verify / flops_main
    double ft_over_main = 0.0;        // (checksum + verify) / main

    // checksum-column share of each GEMM stage, measured vs closed form
    double scores_cs_measured = 0.0;
    double scores_cs_predicted = 0.0;  // 2s/B  (two checksum columns)
    double output_cs_measured = 0.0;
    double output_cs_predicted = 0.0;  // 2s/d
    bool scores_identity_exact = false;  // integer identity held exactly
    bool output_identity_exact = false;

    uint64_t intermediate_elems = 0;
};

OverheadReport overhead_report(const AttnConfig& cfg, FTMode mode, const Counters& cnt);

}  // namespace efta
