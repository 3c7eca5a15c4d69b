#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "efta/config.hpp"
#include "efta/rng.hpp"

namespace efta {

// Injection sites: computed values at operation boundaries (post-op).
// Coordinates are (block_i, block_j, row, col) in tile-local terms; per-row
// values (REDUCE_MAX, REDUCE_SUM) use col = 0; NORMALIZE_OUT uses block_j = 0.
enum class FaultSite {
    GEMM1_OUT,       // score tile cell after the scaled first GEMM
    SUB_MAX,         // exponent argument after max subtraction
    EXP_OUT,         // exp output cell
    REDUCE_MAX,      // running row max after the max update
    REDUCE_SUM,      // running row sum after the sum update
    RESCALE_FACTOR,  // output-accumulator cell after the rescale multiply
    GEMM2_ACC,       // output-accumulator cell after the second GEMM
    NORMALIZE_OUT,   // output cell after division by the row sum
};

inline constexpr int FAULT_SITE_COUNT = 8;

const char* fault_site_name(FaultSite s);
std::optional<FaultSite> fault_site_from_name(const std::string& name);

// Single-bit upset of a computed value. width 32 flips the raw float image;
// width 16 flips the binary16 image and re-embeds (grid-resident values).
float flip_bit(float v, int width, int bit);

struct FaultSpec {
    FaultSite site = FaultSite::GEMM1_OUT;
    int block_i = 0;
    int block_j = 0;
    int row = 0;
    int col = 0;
    int bit = 0;
    int trigger = 1;  // fire on the k-th evaluation of this value

    std::string to_string() const;
    static FaultSpec parse(const std::string& text);  // SITE:i:j:row:col:bit[:trigger]
};

struct FaultPlan {
    std::vector<FaultSpec> specs;

    bool empty() const { return specs.empty(); }

    // Enforces the single-upset model: coordinates in range for cfg and at
    // most one spec per row-block (one fault per detection-correction cycle).
    void validate(const AttnConfig& cfg) const;

    static FaultPlan from_file(const std::string& path);
    void to_file(const std::string& path) const;
};

// One uniformly random single-fault spec over the allowed sites. With
// decoupled_layout, sites that live outside the key-block loop there
// (REDUCE_MAX, REDUCE_SUM, GEMM2_ACC) are pinned to block_j = 0.
FaultPlan sample_random_plan(const AttnConfig& cfg, const std::vector<FaultSite>& sites, Rng& rng,
                             bool decoupled_layout = false);

struct FiredFault {
    FaultSpec spec;
    float before = 0.0f;
    float after = 0.0f;
};

// Consulted by kernels at every site boundary. Counts evaluations of each
// targeted value so recomputation (a fresh evaluation) does not re-trigger
// an already-fired fault, while trigger > 1 can target recomputed values.
class FaultInjector {
public:
    explicit FaultInjector(const FaultPlan& plan)
        : plan_(plan), eval_counts_(plan.specs.size(), 0) {}

    float tap(FaultSite site, int block_i, int block_j, int row, int col, float v) {
        for (size_t k = 0; k < plan_.specs.size(); ++k) {
            const FaultSpec& f = plan_.specs[k];
            if (f.site != site || f.block_i != block_i || f.block_j != block_j ||
                f.row != row || f.col != col)
                continue;
            if (++eval_counts_[k] == f.trigger) {
                const float flipped = flip_bit(v, 32, f.bit);
                fired_.push_back({f, v, flipped});
                return flipped;
            }
        }
        return v;
    }

    const std::vector<FiredFault>& fired() const { return fired_; }

private:
    FaultPlan plan_;
    std::vector<int> eval_counts_;
    std::vector<FiredFault> fired_;
};

}  // namespace efta
