#pragma once

#include <utility>
#include <vector>

#include "efta/config.hpp"
#include "efta/counters.hpp"
#include "efta/gemm.hpp"
#include "efta/matrix.hpp"

namespace efta {

enum class VerifyStatus { CLEAN, CORRECTED, DETECTED_UNCORRECTABLE, NONFINITE };

struct VerificationReport {
    VerifyStatus status = VerifyStatus::CLEAN;
    int row = -1;               // located cell (tile coordinates), -1 if none
    int col = -1;
    double delta = 0.0;         // largest applied correction
    double residual = 0.0;      // max discrepancy the detector observed, pre-repair
    int violations = 0;         // checksum cells over threshold
    int corrections = 0;        // data cells repaired
    bool checksum_repair = false;  // discrepancy traced to checksum storage itself

    bool detected() const { return status != VerifyStatus::CLEAN; }
};

// Row-direction strided checksums of a tile: for each row r and checksum
// column j in [0, stride), group l holds tile column j + stride*l.
//   c1[r][j] = sum_l T[r][j+s*l]          (unit weights)
//   c2[r][j] = sum_l (l+1) * T[r][j+s*l]  (group weights 1..groups)
struct ChecksumPair {
    Matrix c1, c2;
    int stride = 0;
    int groups = 0;
};

ChecksumPair encode_strided(const Matrix& t, int stride, Counters* cnt = nullptr);

// Fresh weighted sums with the exact same summation order as encode_strided;
// billed to flops_verify.
std::pair<Matrix, Matrix> strided_sums(const Matrix& t, int stride, Counters* cnt = nullptr);

// A discrepancy above threshold whose weighted/unweighted ratio does not land
// on a group is either multi-cell damage or single-cell noise barely past the
// threshold, where the ratio is dominated by rounding error. Up to this many
// multiples of the threshold it is treated as the latter: logged, left alone,
// not fatal. The induced data error stays at rounding scale.
inline constexpr double kLocateNoiseBand = 16.0;

// Compare checksums against fresh sums; locate single-cell errors by the
// weighted/unweighted discrepancy ratio and repair them in place.
// Independent checksum columns are handled independently, so co-resident
// row errors in distinct checksum columns are all corrected.
// `row_eps_mult`, when given (one factor per row, >= 1), loosens the threshold
// for rows whose legitimate residual is known to be amplified, e.g. by a
// denominator that was range-restricted below its true value.
VerificationReport verify_locate_correct(Matrix& t, const ChecksumPair& cp, double eps_abs,
                                         Counters* cnt = nullptr,
                                         const std::vector<double>* row_eps_mult = nullptr);

// Traditional full-column checksums: two extra rows [1..1]*A and [1..M]*A.
Matrix encode_traditional(const Matrix& a, Counters* cnt = nullptr);

// Verify a product against propagated column checksums (2 x cols); locate the
// faulty row per column by the weighted ratio and repair.
VerificationReport verify_traditional(Matrix& c, const Matrix& checks, double eps_abs,
                                      Counters* cnt = nullptr);

// One-pass GEMM of a against [bt | strided checksum columns of bt].
// Returns the product and its propagated checksum pair. The checksum columns
// ride along at fp32; data columns keep whatever grid bt uses.
std::pair<Matrix, ChecksumPair> checksummed_gemm(const Matrix& a, const Matrix& bt, int stride,
                                                 Counters* cnt = nullptr,
                                                 GemmStage stage = GemmStage::SCORES,
                                                 const Matrix* c_init = nullptr,
                                                 const ChecksumPair* cp_init = nullptr);

}  // namespace efta
