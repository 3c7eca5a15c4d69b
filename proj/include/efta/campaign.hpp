#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "efta/efta.hpp"

namespace efta {

// Outcome of one trial, judged against the same-mode fault-free run.
enum class Outcome {
    CLEAN,             // no fault injected, nothing tripped
    FALSE_ALARM,       // no fault injected, a check tripped anyway
    CORRECTED,         // detected and the output matches the reference
    RANGE_RESTRICTED,  // detected, denominator replaced, row ranking intact
    MASKED_BENIGN,     // undetected, output deviation within tolerance
    RANGE_CONTRACT,    // undetected in-range denominator wobble, ranking intact
    UNCORRECTABLE,     // wrong output or a check declared defeat
};

const char* outcome_name(Outcome o);

struct TrialRecord {
    int trial = 0;
    int head = 0;
    uint64_t seed = 0;
    bool injected = false;
    bool fired = false;
    std::string fault;  // spec string, empty on clean trials
    std::string site;
    int bit = -1;
    int detections = 0;
    int corrections = 0;
    int recomputes = 0;
    int range_replacements = 0;
    bool failed = false;
    bool argmax_ok = true;
    double residual_out = 0.0;      // ||O - O_ref||_inf
    double rel_residual_out = 0.0;  // residual_out / ||O_ref||_inf
    Outcome outcome = Outcome::CLEAN;
};

struct CampaignStats {
    int trials = 0;  // (trial, head) records
    int injected = 0;
    int fired = 0;
    int detected = 0;
    int false_alarms = 0;
    int corrected = 0;
    int range_restricted = 0;
    int masked_benign = 0;
    int range_contract = 0;
    int uncorrectable = 0;
    int argmax_preserved = 0;  // among injected records
    double max_corrected_residual = 0.0;
    Counters counters;  // summed over the measured (mode) runs
    std::vector<TrialRecord> records;

    // fraction of fired faults that did not end in a wrong answer
    double coverage() const;
};

enum class InjectKind { NONE, RANDOM, FIXED };

struct CampaignOptions {
    AttnConfig cfg;
    FTMode mode = FTMode::EFTA_OPTIMIZED;
    Thresholds thr;
    int trials = 100;
    uint64_t seed = 1;
    InjectKind inject = InjectKind::NONE;
    std::vector<FaultSite> sites;  // empty: every site the mode implements
    FaultPlan fixed_plan;          // used when inject == FIXED
    int jobs = 1;
};

CampaignStats run_campaign(const CampaignOptions& opt);

// Sites a mode's kernels actually evaluate.
std::vector<FaultSite> default_sites(FTMode mode);

// Judge one faulted run against its fault-free twin.
Outcome classify_trial(const Matrix& out, const Matrix& ref, const FTReport& rep,
                       const FaultPlan& plan, const Thresholds& thr);

struct CalibrationResult {
    Thresholds thr;
    double max_exp = 0.0;  // worst clean exp-stage discrepancy seen
    double max_out = 0.0;  // worst clean output-checksum discrepancy
    double max_lin = 0.0;  // worst clean score-checksum discrepancy
    bool degenerate = false;  // a family produced no usable residual
};

// Clean runs in observation mode; each threshold becomes the worst observed
// discrepancy of its family times the safety factor.
CalibrationResult calibrate_thresholds(const AttnConfig& cfg, FTMode mode, int trials,
                                       double safety, uint64_t seed);

struct SweepPoint {
    double multiplier = 0.0;
    double detection_rate = 0.0;    // over faulted observation runs
    double false_alarm_rate = 0.0;  // over clean observation runs
};

// One observation pass per trial; detection is re-judged after the fact at
// each multiple of the base thresholds. Rates are non-increasing in the
// multiplier by construction.
std::vector<SweepPoint> threshold_sweep(const AttnConfig& cfg, FTMode mode,
                                        const Thresholds& base, int trials, uint64_t seed,
                                        int points = 10);

void write_trials_csv(const std::string& path, const CampaignStats& stats);

}  // namespace efta
