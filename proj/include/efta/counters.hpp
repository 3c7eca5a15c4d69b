#pragma once

#include <cstdint>

namespace efta {

// Work and traffic accounting. Convention: mul = 1 flop, add = 1 flop
// (GEMM inner step = 2); exp/log/div count 1 each.
//
// flops_checksum aggregates the checksum-column GEMM work plus checksum
// encoding; the *_gemm_* sub-buckets isolate the GEMM share so the
// closed-form column-fraction identities can be asserted exactly.
struct Counters {
    uint64_t flops_main = 0;
    uint64_t flops_checksum = 0;
    uint64_t flops_verify = 0;
    uint64_t hbm_reads = 0;
    uint64_t hbm_writes = 0;

    // elements of intermediate tensors written+read across kernel boundaries
    uint64_t intermediate_elems = 0;

    // per-stage GEMM breakdown (scores = first GEMM, output = second)
    uint64_t flops_main_gemm_scores = 0;
    uint64_t flops_cs_gemm_scores = 0;
    uint64_t flops_main_gemm_output = 0;
    uint64_t flops_cs_gemm_output = 0;
    uint64_t flops_cs_encode = 0;

    // verification events
    uint64_t exp_checks = 0;
    uint64_t output_checks = 0;

    void add_main_scores(uint64_t n) { flops_main += n; flops_main_gemm_scores += n; }
    void add_main_output(uint64_t n) { flops_main += n; flops_main_gemm_output += n; }
    void add_cs_scores(uint64_t n) { flops_checksum += n; flops_cs_gemm_scores += n; }
    void add_cs_output(uint64_t n) { flops_checksum += n; flops_cs_gemm_output += n; }
    void add_cs_encode(uint64_t n) { flops_checksum += n; flops_cs_encode += n; }

    Counters& operator+=(const Counters& o) {
        flops_main += o.flops_main;
        flops_checksum += o.flops_checksum;
        flops_verify += o.flops_verify;
        hbm_reads += o.hbm_reads;
        hbm_writes += o.hbm_writes;
        intermediate_elems += o.intermediate_elems;
        flops_main_gemm_scores += o.flops_main_gemm_scores;
        flops_cs_gemm_scores += o.flops_cs_gemm_scores;
        flops_main_gemm_output += o.flops_main_gemm_output;
        flops_cs_gemm_output += o.flops_cs_gemm_output;
        flops_cs_encode += o.flops_cs_encode;
        exp_checks += o.exp_checks;
        output_checks += o.output_checks;
        return *this;
    }

    void reset() { *this = Counters{}; }
};

}  // namespace efta
