#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "efta/campaign.hpp"
#include "efta/rng.hpp"

using namespace efta;

TEST_CASE("calibration: thresholds cover clean residuals with the safety margin") {
    AttnConfig cfg(64, 32, 16);
    CalibrationResult cal = calibrate_thresholds(cfg, FTMode::EFTA_OPTIMIZED, 50, 2.0, 9001);
    CHECK_FALSE(cal.degenerate);
    CHECK(cal.thr.eps1 == doctest::Approx(2.0 * cal.max_exp));
    CHECK(cal.thr.eps2 == doctest::Approx(2.0 * cal.max_out));
    CHECK(cal.thr.eps_lin == doctest::Approx(2.0 * cal.max_lin));
    CHECK(cal.max_exp > 0.0);
    CHECK(cal.max_out > 0.0);
    CHECK(cal.max_lin > 0.0);
    // noise floors for unit-range inputs: far below the published defaults
    CHECK(cal.thr.eps1 < 1e-3);
    CHECK(cal.thr.eps2 < 1e-2);

    // calibration is deterministic in the seed
    CalibrationResult again = calibrate_thresholds(cfg, FTMode::EFTA_OPTIMIZED, 50, 2.0, 9001);
    CHECK(again.thr.eps1 == cal.thr.eps1);
    CHECK(again.thr.eps2 == cal.thr.eps2);
    CHECK(again.thr.eps_lin == cal.thr.eps_lin);
}

TEST_CASE("calibration: a mode with no checks is flagged degenerate") {
    AttnConfig cfg(32, 16, 16);
    CalibrationResult cal = calibrate_thresholds(cfg, FTMode::NONE, 10, 2.0, 5);
    CHECK(cal.degenerate);
}

TEST_CASE("campaign: clean trials raise no alarms under calibrated thresholds") {
    AttnConfig cfg(64, 32, 16);
    CalibrationResult cal = calibrate_thresholds(cfg, FTMode::EFTA_OPTIMIZED, 100, 2.0, 31337);

    CampaignOptions opt;
    opt.cfg = cfg;
    opt.mode = FTMode::EFTA_OPTIMIZED;
    opt.thr = cal.thr;
    opt.trials = 100;
    opt.seed = 777;  // disjoint from the calibration seed
    opt.inject = InjectKind::NONE;
    CampaignStats stats = run_campaign(opt);
    CHECK(stats.trials == 100);
    CHECK(stats.injected == 0);
    // a safety factor of 2 over 100 fresh runs: at most a stray outlier
    CHECK(stats.false_alarms <= 1);
    int clean = 0;
    for (const auto& rec : stats.records)
        if (rec.outcome == Outcome::CLEAN) ++clean;
    CHECK(clean >= 99);
}

TEST_CASE("campaign: random injection bookkeeping is consistent") {
    AttnConfig cfg(64, 32, 16);
    CalibrationResult cal = calibrate_thresholds(cfg, FTMode::EFTA_OPTIMIZED, 100, 2.0, 31337);

    CampaignOptions opt;
    opt.cfg = cfg;
    opt.mode = FTMode::EFTA_OPTIMIZED;
    opt.thr = cal.thr;
    opt.trials = 150;
    opt.seed = 4242;
    opt.inject = InjectKind::RANDOM;
    CampaignStats stats = run_campaign(opt);

    CHECK(stats.trials == 150);
    CHECK(stats.injected == 150);
    CHECK(stats.fired > 0);
    CHECK(stats.fired <= stats.injected);
    CHECK(stats.corrected + stats.range_restricted + stats.masked_benign + stats.range_contract +
              stats.uncorrectable ==
          stats.injected);
    CHECK(stats.false_alarms == 0);

    int fired_records = 0;
    for (const auto& rec : stats.records) {
        CHECK(rec.injected);
        CHECK_FALSE(rec.fault.empty());
        if (rec.fired) ++fired_records;
        if (rec.outcome == Outcome::CORRECTED) {
            CHECK(rec.detections > 0);
            CHECK(std::isfinite(rec.residual_out));
        }
        if (rec.outcome == Outcome::CLEAN) CHECK_FALSE(rec.fired);
    }
    CHECK(fired_records == stats.fired);
    // single-bit upsets against the protected kernel: nothing should be lost
    CHECK(stats.coverage() == doctest::Approx(1.0));
}

TEST_CASE("campaign: deterministic in the seed, including across worker counts") {
    AttnConfig cfg(64, 32, 16);
    CampaignOptions opt;
    opt.cfg = cfg;
    opt.mode = FTMode::EFTA_OPTIMIZED;
    opt.thr = Thresholds{1e-5, 1e-4, 1e-4};
    opt.trials = 60;
    opt.seed = 12345;
    opt.inject = InjectKind::RANDOM;

    CampaignStats a = run_campaign(opt);
    CampaignStats b = run_campaign(opt);
    opt.jobs = 4;
    CampaignStats c = run_campaign(opt);

    REQUIRE(a.records.size() == b.records.size());
    REQUIRE(a.records.size() == c.records.size());
    for (size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].seed == b.records[i].seed);
        CHECK(a.records[i].fault == b.records[i].fault);
        CHECK(a.records[i].outcome == b.records[i].outcome);
        CHECK(a.records[i].residual_out == b.records[i].residual_out);
        CHECK(a.records[i].seed == c.records[i].seed);
        CHECK(a.records[i].fault == c.records[i].fault);
        CHECK(a.records[i].outcome == c.records[i].outcome);
        CHECK(a.records[i].residual_out == c.records[i].residual_out);
    }
    CHECK(a.counters.flops_main == c.counters.flops_main);

    opt.jobs = 1;
    opt.seed = 54321;
    CampaignStats d = run_campaign(opt);
    bool any_differs = false;
    for (size_t i = 0; i < a.records.size(); ++i)
        if (a.records[i].fault != d.records[i].fault) any_differs = true;
    CHECK(any_differs);
}

TEST_CASE("campaign: fixed plans are replayed verbatim") {
    AttnConfig cfg(64, 32, 16);
    CampaignOptions opt;
    opt.cfg = cfg;
    opt.mode = FTMode::EFTA_OPTIMIZED;
    opt.thr = Thresholds{1e-5, 1e-4, 1e-4};
    opt.trials = 5;
    opt.seed = 99;
    opt.inject = InjectKind::FIXED;
    opt.fixed_plan.specs.push_back(FaultSpec::parse("EXP_OUT:1:1:2:3:31"));

    CampaignStats stats = run_campaign(opt);
    CHECK(stats.injected == 5);
    for (const auto& rec : stats.records) {
        CHECK(rec.fault == "EXP_OUT:1:1:2:3:31");
        CHECK(rec.site == "EXP_OUT");
        CHECK(rec.bit == 31);
        CHECK(rec.outcome == Outcome::CORRECTED);
    }
}

TEST_CASE("campaign: multiple heads produce one record per (trial, head)") {
    AttnConfig cfg(32, 16, 16, 8, 2);  // two heads
    CampaignOptions opt;
    opt.cfg = cfg;
    opt.mode = FTMode::EFTA_OPTIMIZED;
    opt.thr = Thresholds{1e-5, 1e-4, 1e-4};
    opt.trials = 10;
    opt.seed = 7;
    CampaignStats stats = run_campaign(opt);
    CHECK(stats.trials == 20);
    int h0 = 0, h1 = 0;
    for (const auto& rec : stats.records) (rec.head == 0 ? h0 : h1)++;
    CHECK(h0 == 10);
    CHECK(h1 == 10);
}

TEST_CASE("threshold sweep: rates are monotone non-increasing in the multiplier") {
    AttnConfig cfg(64, 32, 16);
    CalibrationResult cal = calibrate_thresholds(cfg, FTMode::EFTA_OPTIMIZED, 50, 1.0, 2024);
    auto sweep = threshold_sweep(cfg, FTMode::EFTA_OPTIMIZED, cal.thr, 40, 606, 8);
    REQUIRE(sweep.size() == 8);
    for (size_t i = 0; i + 1 < sweep.size(); ++i) {
        CHECK(sweep[i].multiplier < sweep[i + 1].multiplier);
        CHECK(sweep[i].detection_rate >= sweep[i + 1].detection_rate);
        CHECK(sweep[i].false_alarm_rate >= sweep[i + 1].false_alarm_rate);
    }
    // tightest thresholds: essentially everything flags; loosest: clean runs pass
    CHECK(sweep.front().false_alarm_rate > 0.5);
    CHECK(sweep.back().false_alarm_rate == 0.0);
    CHECK(sweep.front().detection_rate >= sweep.back().detection_rate);
}

TEST_CASE("classification: outcome ladder on synthetic reports") {
    AttnConfig cfg(32, 16, 16);
    Thresholds thr{1e-5, 1e-4, 1e-4};
    Rng rng(808);
    Matrix ref = Matrix::random(32, 16, rng, -1.0, 1.0, Storage::FULL);

    FaultPlan none, some;
    some.specs.push_back(FaultSpec::parse("GEMM1_OUT:0:0:1:2:30"));

    SUBCASE("no plan, no detection: clean") {
        FTReport rep;
        CHECK(classify_trial(ref, ref, rep, none, thr) == Outcome::CLEAN);
    }
    SUBCASE("no plan but a detection: false alarm") {
        FTReport rep;
        rep.detections = 1;
        CHECK(classify_trial(ref, ref, rep, none, thr) == Outcome::FALSE_ALARM);
    }
    SUBCASE("plan, detected, output restored: corrected") {
        FTReport rep;
        rep.detections = 1;
        rep.corrections = 1;
        rep.final_l.assign(32, 10.0f);
        CHECK(classify_trial(ref, ref, rep, some, thr) == Outcome::CORRECTED);
    }
    SUBCASE("plan, undetected, output intact: masked benign") {
        FTReport rep;
        rep.final_l.assign(32, 10.0f);
        CHECK(classify_trial(ref, ref, rep, some, thr) == Outcome::MASKED_BENIGN);
    }
    SUBCASE("plan, detected, output wrong: uncorrectable") {
        FTReport rep;
        rep.detections = 1;
        rep.final_l.assign(32, 10.0f);
        Matrix out = ref;
        out.at(3, 3) += 5.0f;  // ruins the argmax of row 3
        CHECK(classify_trial(out, ref, rep, some, thr) == Outcome::UNCORRECTABLE);
    }
    SUBCASE("plan, failed flag set: uncorrectable even if the output looks fine") {
        FTReport rep;
        rep.failed = true;
        rep.final_l.assign(32, 10.0f);
        CHECK(classify_trial(ref, ref, rep, some, thr) == Outcome::UNCORRECTABLE);
    }
    SUBCASE("denominator replaced, ranking intact: range restricted") {
        FTReport rep;
        rep.detections = 1;
        rep.range_replacements = 1;
        rep.final_l.assign(32, 10.0f);
        Matrix out = ref;
        for (int c = 0; c < 16; ++c) out.at(5, c) *= 3.0f;  // uniform row rescale
        FaultPlan sum_fault;
        sum_fault.specs.push_back(FaultSpec::parse("REDUCE_SUM:0:0:5:0:30"));
        CHECK(classify_trial(out, ref, rep, sum_fault, thr) == Outcome::RANGE_RESTRICTED);
    }
    SUBCASE("in-range denominator wobble, ranking intact: range contract") {
        FTReport rep;
        rep.final_l.assign(32, 10.0f);
        Matrix out = ref;
        for (int c = 0; c < 16; ++c) out.at(5, c) *= 1.2f;
        FaultPlan sum_fault;
        sum_fault.specs.push_back(FaultSpec::parse("REDUCE_SUM:0:0:5:0:3"));
        CHECK(classify_trial(out, ref, rep, sum_fault, thr) == Outcome::RANGE_CONTRACT);
    }
}

TEST_CASE("default sites cover every stage the mode computes") {
    auto efta_sites = default_sites(FTMode::EFTA_OPTIMIZED);
    CHECK(efta_sites.size() == size_t(FAULT_SITE_COUNT));
    // the decoupled pipeline materializes full softmax tiles and has no
    // streaming rescale stage, so that site does not exist for it
    auto dec = default_sites(FTMode::DECOUPLED);
    CHECK(dec.size() == size_t(FAULT_SITE_COUNT) - 1);
    CHECK(std::find(dec.begin(), dec.end(), FaultSite::RESCALE_FACTOR) == dec.end());
    CHECK(default_sites(FTMode::NONE).empty() == false);
}
