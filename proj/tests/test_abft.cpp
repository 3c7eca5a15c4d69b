#include <doctest.h>

#include <cmath>
#include <limits>

#include "efta/abft.hpp"
#include "efta/matrix.hpp"
#include "efta/rng.hpp"

using namespace efta;

TEST_CASE("strided encode: frozen values for a tile of ones") {
    Matrix t(1, 16, Storage::FULL);
    for (int c = 0; c < 16; ++c) t.at(0, c) = 1.0f;
    ChecksumPair cp = encode_strided(t, 8);
    CHECK(cp.stride == 8);
    CHECK(cp.groups == 2);
    for (int j = 0; j < 8; ++j) {
        CHECK(cp.c1(0, j) == 2.0f);  // 1 + 1
        CHECK(cp.c2(0, j) == 3.0f);  // 1*1 + 2*1
    }
}

TEST_CASE("single error: located by the weighted ratio and repaired") {
    Rng rng(301);
    Matrix t = Matrix::random(3, 16, rng, -1.0, 1.0, Storage::FULL);
    Matrix orig = t;
    ChecksumPair cp = encode_strided(t, 8);

    // column 13 = checksum column 5, group index 1 (ratio 2)
    t.at(2, 13) += 1.0f;
    VerificationReport rep = verify_locate_correct(t, cp, 1e-4);
    CHECK(rep.status == VerifyStatus::CORRECTED);
    CHECK(rep.row == 2);
    CHECK(rep.col == 13);
    CHECK(rep.corrections == 1);
    CHECK(rep.violations == 1);
    CHECK(rep.residual == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(max_abs_diff(t, orig) < 1e-5);
}

TEST_CASE("clean tile: no detection, zero-ish residual") {
    Rng rng(307);
    Matrix t = Matrix::random(4, 32, rng, -1.0, 1.0, Storage::FULL);
    ChecksumPair cp = encode_strided(t, 8);
    VerificationReport rep = verify_locate_correct(t, cp, 1e-4);
    CHECK(rep.status == VerifyStatus::CLEAN);
    CHECK(rep.violations == 0);
    CHECK(rep.residual < 1e-5);
    CHECK_FALSE(rep.detected());
}

TEST_CASE("two errors sharing a checksum column are not silently mended") {
    Rng rng(311);
    Matrix t = Matrix::random(1, 16, rng, -1.0, 1.0, Storage::FULL);
    Matrix orig = t;
    ChecksumPair cp = encode_strided(t, 8);

    // columns 3 and 11 share checksum column 3 (groups 0 and 1);
    // unequal deltas make the ratio (1*1 + 2*0.5)/1.5 = 4/3: non-integral
    t.at(0, 3) += 1.0f;
    t.at(0, 11) += 0.5f;
    VerificationReport rep = verify_locate_correct(t, cp, 1e-4);
    CHECK(rep.status == VerifyStatus::DETECTED_UNCORRECTABLE);
    CHECK(max_abs_diff(t, orig) > 0.4);  // not repaired
}

TEST_CASE("two errors in distinct checksum columns are both repaired") {
    Rng rng(313);
    Matrix t = Matrix::random(2, 16, rng, -1.0, 1.0, Storage::FULL);
    Matrix orig = t;
    ChecksumPair cp = encode_strided(t, 8);

    t.at(1, 3) += 1.0f;   // checksum column 3
    t.at(1, 12) -= 0.5f;  // checksum column 4
    VerificationReport rep = verify_locate_correct(t, cp, 1e-4);
    CHECK(rep.status == VerifyStatus::CORRECTED);
    CHECK(rep.corrections == 2);
    CHECK(max_abs_diff(t, orig) < 1e-5);
}

TEST_CASE("corrupted checksum cell: flagged as checksum repair, data untouched") {
    Rng rng(317);
    Matrix t = Matrix::random(1, 16, rng, -1.0, 1.0, Storage::FULL);
    Matrix orig = t;
    ChecksumPair cp = encode_strided(t, 8);
    cp.c1.at(0, 2) += 1.0f;  // weighted sum still agrees: c2 clean, ratio 0

    VerificationReport rep = verify_locate_correct(t, cp, 1e-4);
    CHECK(rep.status == VerifyStatus::CORRECTED);
    CHECK(rep.checksum_repair);
    CHECK(rep.corrections == 0);
    CHECK(t.bit_equal(orig));
}

TEST_CASE("non-finite data cell: restored from the unit checksum") {
    Rng rng(319);
    Matrix t = Matrix::random(2, 16, rng, -1.0, 1.0, Storage::FULL);
    Matrix orig = t;
    ChecksumPair cp = encode_strided(t, 8);

    t.at(0, 9) = std::numeric_limits<float>::quiet_NaN();
    VerificationReport rep = verify_locate_correct(t, cp, 1e-4);
    CHECK(rep.status == VerifyStatus::CORRECTED);
    CHECK(max_abs_diff(t, orig) < 1e-5);
    CHECK(t.all_finite());
}

TEST_CASE("two non-finite cells in one group cannot be restored") {
    Rng rng(323);
    Matrix t = Matrix::random(1, 16, rng, -1.0, 1.0, Storage::FULL);
    ChecksumPair cp = encode_strided(t, 8);
    t.at(0, 1) = std::numeric_limits<float>::infinity();
    t.at(0, 9) = std::numeric_limits<float>::quiet_NaN();
    VerificationReport rep = verify_locate_correct(t, cp, 1e-4);
    CHECK(rep.status == VerifyStatus::NONFINITE);
}

TEST_CASE("checksums propagate through a GEMM within rounding error") {
    // Multiplying [B | E1 | E2] by A carries the checksum columns through the
    // product. The propagated sums group terms as sum_k a*(sum_l b) while a
    // direct encode of C groups them as sum_l(sum_k a*b), so they agree only
    // up to float rounding — the data columns themselves are untouched.
    Rng rng(331);
    Matrix a = Matrix::random(8, 12, rng);
    Matrix bt = Matrix::random(12, 16, rng);
    auto [c, cp] = checksummed_gemm(a, bt, 8);
    Matrix plain = gemm_mixed(a, bt);
    CHECK(c.bit_equal(plain));

    ChecksumPair direct = encode_strided(c, 8);
    CHECK(max_abs_diff(cp.c1, direct.c1) < 1e-5);
    CHECK(max_abs_diff(cp.c2, direct.c2) < 1e-4);
}

TEST_CASE("propagated checksums survive accumulation across calls") {
    Rng rng(337);
    Matrix a1 = Matrix::random(4, 6, rng);
    Matrix b1 = Matrix::random(6, 8, rng);
    Matrix a2 = Matrix::random(4, 6, rng);
    Matrix b2 = Matrix::random(6, 8, rng);

    auto [c1, cp1] = checksummed_gemm(a1, b1, 4);
    auto [c2, cp2] = checksummed_gemm(a2, b2, 4, nullptr, GemmStage::SCORES, &c1, &cp1);

    VerificationReport rep = verify_locate_correct(c2, cp2, 1e-4);
    CHECK(rep.status == VerifyStatus::CLEAN);

    // an initial value without its checksums is a contract violation
    CHECK_THROWS_AS(checksummed_gemm(a2, b2, 4, nullptr, GemmStage::SCORES, &c1, nullptr),
                    std::invalid_argument);
}

TEST_CASE("fault injected into a propagated product is located and repaired") {
    Rng rng(347);
    Matrix a = Matrix::random(8, 12, rng);
    Matrix bt = Matrix::random(12, 16, rng);
    auto [c, cp] = checksummed_gemm(a, bt, 8);
    Matrix clean = c;
    c.at(5, 6) -= 0.25f;
    VerificationReport rep = verify_locate_correct(c, cp, 1e-4);
    CHECK(rep.status == VerifyStatus::CORRECTED);
    CHECK(rep.row == 5);
    CHECK(rep.col == 6);
    CHECK(max_abs_diff(c, clean) < 1e-5);
}

TEST_CASE("traditional column checksums: locate the faulty row") {
    Rng rng(353);
    Matrix a = Matrix::random(6, 5, rng);
    Matrix checks = encode_traditional(a);
    CHECK(checks.rows() == 2);
    CHECK(checks.cols() == 5);

    Matrix orig = a;
    a.at(2, 4) += 0.5f;  // weighted/unweighted ratio = 3 -> row index 2
    VerificationReport rep = verify_traditional(a, checks, 1e-4);
    CHECK(rep.status == VerifyStatus::CORRECTED);
    CHECK(rep.row == 2);
    CHECK(rep.col == 4);
    CHECK(max_abs_diff(a, orig) < 1e-5);
}

TEST_CASE("traditional checksums cannot fix two faults in one column") {
    // Deltas +1.0 at row 1 and +0.5 at row 4 alias to the integral ratio
    // (2*1.0 + 5*0.5)/1.5 = 3, so the locator lands on row 2 and "corrects"
    // the wrong cell. Whatever the reported status, the data is not restored.
    Rng rng(359);
    Matrix a = Matrix::random(6, 5, rng);
    Matrix orig = a;
    Matrix checks = encode_traditional(a);
    a.at(1, 2) += 1.0f;
    a.at(4, 2) += 0.5f;
    VerificationReport rep = verify_traditional(a, checks, 1e-4);
    CHECK(rep.status != VerifyStatus::CLEAN);
    CHECK(max_abs_diff(a, orig) > 0.2);
}

TEST_CASE("residual reported is the pre-repair discrepancy") {
    Rng rng(367);
    Matrix t = Matrix::random(1, 16, rng, -1.0, 1.0, Storage::FULL);
    ChecksumPair cp = encode_strided(t, 8);
    t.at(0, 2) += 0.75f;
    VerificationReport rep = verify_locate_correct(t, cp, 1e-4);
    CHECK(rep.status == VerifyStatus::CORRECTED);
    CHECK(rep.residual == doctest::Approx(0.75).epsilon(1e-3));
}
