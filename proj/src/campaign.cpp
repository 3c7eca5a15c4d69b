#include "efta/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace efta {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::pair<Matrix, FTReport> forward(const Matrix& q, const Matrix& k, const Matrix& v,
                                    const AttnConfig& cfg, const Thresholds& thr, FTMode mode,
                                    FaultInjector* inj, const KernelKnobs* knobs) {
    return mode == FTMode::DECOUPLED ? decoupled_ft_forward(q, k, v, cfg, thr, inj, knobs)
                                     : efta_forward(q, k, v, cfg, thr, mode, inj, knobs);
}

bool rows_argmax_match(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    for (int r = 0; r < a.rows(); ++r) {
        int ia = 0, ib = 0;
        for (int c = 1; c < a.cols(); ++c) {
            if (a(r, c) > a(r, ia)) ia = c;
            if (b(r, c) > b(r, ib)) ib = c;
        }
        if (ia != ib) return false;
    }
    return true;
}

double max_abs(const Matrix& m) {
    double v = 0.0;
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) v = std::max(v, std::abs(static_cast<double>(m(r, c))));
    return v;
}

// Per-family worst discrepancies of one run's events, for calibration and
// threshold sweeps. `hard` marks detections that no threshold can disable
// (non-finite/degenerate rows, range restriction, factor guard).
struct FamilyResiduals {
    double exp = -kInf;
    double out = -kInf;
    double lin = -kInf;
    bool hard = false;
};

FamilyResiduals family_residuals(const FTReport& rep, int num_blocks) {
    FamilyResiduals f;
    for (const auto& e : rep.events) {
        const double r = e.rep.residual;
        switch (e.kind) {
            case CheckKind::EXP_CHECKSUM:
            case CheckKind::DMR_SOFTMAX:
                if (std::isfinite(r)) f.exp = std::max(f.exp, r);
                break;
            case CheckKind::OUTPUT_CHECKSUM:
                if (std::isfinite(r)) f.out = std::max(f.out, r);
                break;
            case CheckKind::SCORE_CHECKSUM:
                if (std::isfinite(r)) f.lin = std::max(f.lin, r);
                break;
            case CheckKind::BLOCK_CHECKSUM:
                if (std::isfinite(r)) {
                    if (e.block_j == num_blocks)
                        f.out = std::max(f.out, r);
                    else
                        f.lin = std::max(f.lin, r);
                }
                break;
            case CheckKind::FACTOR_RANGE:
            case CheckKind::ROWSUM_RANGE:
                f.hard = true;
                break;
        }
        if (!std::isfinite(e.rep.residual) && e.rep.detected()) f.hard = true;
    }
    return f;
}

}  // namespace

const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::CLEAN: return "clean";
        case Outcome::FALSE_ALARM: return "false_alarm";
        case Outcome::CORRECTED: return "corrected";
        case Outcome::RANGE_RESTRICTED: return "range_restricted";
        case Outcome::MASKED_BENIGN: return "masked_benign";
        case Outcome::RANGE_CONTRACT: return "range_contract";
        case Outcome::UNCORRECTABLE: return "uncorrectable";
    }
    return "?";
}

double CampaignStats::coverage() const {
    int bad = 0, base = 0;
    for (const auto& r : records) {
        if (!r.fired) continue;
        ++base;
        if (r.outcome == Outcome::UNCORRECTABLE) ++bad;
    }
    return base == 0 ? 1.0 : 1.0 - static_cast<double>(bad) / base;
}

std::vector<FaultSite> default_sites(FTMode mode) {
    std::vector<FaultSite> s = {FaultSite::GEMM1_OUT,   FaultSite::SUB_MAX,
                                FaultSite::EXP_OUT,     FaultSite::REDUCE_MAX,
                                FaultSite::REDUCE_SUM,  FaultSite::RESCALE_FACTOR,
                                FaultSite::GEMM2_ACC,   FaultSite::NORMALIZE_OUT};
    if (mode == FTMode::DECOUPLED)
        s.erase(std::remove(s.begin(), s.end(), FaultSite::RESCALE_FACTOR), s.end());
    return s;
}

Outcome classify_trial(const Matrix& out, const Matrix& ref, const FTReport& rep,
                       const FaultPlan& plan, const Thresholds& thr) {
    if (plan.empty()) return rep.detections > 0 ? Outcome::FALSE_ALARM : Outcome::CLEAN;

    const bool finite = out.all_finite();
    const double res = max_abs_diff(out, ref);
    const double benign_tol = std::max(thr.eps2, 1e-2 * max_abs(ref));
    const bool argmax_ok = finite && rows_argmax_match(out, ref);

    bool reduction_site = false;
    for (const auto& f : plan.specs)
        reduction_site |=
            f.site == FaultSite::REDUCE_MAX || f.site == FaultSite::REDUCE_SUM;

    bool l_ok = true;
    const double upper = static_cast<double>(out.rows());
    for (float l : rep.final_l) l_ok &= std::isfinite(l) && l > 0.0f && l <= upper;

    if (!finite || rep.failed) return Outcome::UNCORRECTABLE;

    if (rep.detections == 0) {
        if (res <= benign_tol) return Outcome::MASKED_BENIGN;
        if (reduction_site && l_ok && argmax_ok) return Outcome::RANGE_CONTRACT;
        return Outcome::UNCORRECTABLE;
    }
    if (res <= benign_tol) return Outcome::CORRECTED;
    if (rep.range_replacements > 0 && argmax_ok) return Outcome::RANGE_RESTRICTED;
    if (reduction_site && l_ok && argmax_ok) return Outcome::RANGE_CONTRACT;
    return Outcome::UNCORRECTABLE;
}

CampaignStats run_campaign(const CampaignOptions& opt_in) {
    CampaignOptions opt = opt_in;
    opt.cfg.validate();
    if (opt.trials <= 0) throw ConfigError("campaign: trials must be positive");
    if (opt.inject == InjectKind::FIXED) opt.fixed_plan.validate(opt.cfg);
    if (opt.sites.empty()) opt.sites = default_sites(opt.mode);
    const int jobs = std::max(1, opt.jobs);

    const int heads = opt.cfg.heads;
    CampaignStats stats;
    stats.records.resize(static_cast<size_t>(opt.trials) * heads);

    std::atomic<int> next{0};
    std::mutex merge_mu;

    auto worker = [&]() {
        Counters local;
        for (;;) {
            const int t = next.fetch_add(1);
            if (t >= opt.trials) break;
            const uint64_t tseed = trial_seed(opt.seed, static_cast<uint64_t>(t));
            for (int h = 0; h < heads; ++h) {
                const uint64_t hseed = heads == 1 ? tseed : trial_seed(tseed, static_cast<uint64_t>(h));
                Rng rng(hseed);
                const Matrix q = Matrix::random(opt.cfg.seq_len, opt.cfg.head_dim, rng);
                const Matrix k = Matrix::random(opt.cfg.seq_len, opt.cfg.head_dim, rng);
                const Matrix v = Matrix::random(opt.cfg.seq_len, opt.cfg.head_dim, rng);

                FaultPlan plan;
                if (opt.inject == InjectKind::RANDOM)
                    plan = sample_random_plan(opt.cfg, opt.sites, rng,
                                              opt.mode == FTMode::DECOUPLED);
                else if (opt.inject == InjectKind::FIXED)
                    plan = opt.fixed_plan;

                TrialRecord rec;
                rec.trial = t;
                rec.head = h;
                rec.seed = hseed;
                rec.injected = !plan.empty();

                if (plan.empty()) {
                    auto [out, rep] = forward(q, k, v, opt.cfg, opt.thr, opt.mode, nullptr, nullptr);
                    local += rep.counters;
                    rec.detections = rep.detections;
                    rec.failed = rep.failed;
                    rec.outcome = classify_trial(out, out, rep, plan, opt.thr);
                } else {
                    rec.fault = plan.specs.front().to_string();
                    rec.site = fault_site_name(plan.specs.front().site);
                    rec.bit = plan.specs.front().bit;
                    auto [ref, ref_rep] =
                        forward(q, k, v, opt.cfg, opt.thr, opt.mode, nullptr, nullptr);
                    (void)ref_rep;
                    FaultInjector inj(plan);
                    auto [out, rep] = forward(q, k, v, opt.cfg, opt.thr, opt.mode, &inj, nullptr);
                    local += rep.counters;
                    rec.fired = !inj.fired().empty();
                    rec.detections = rep.detections;
                    rec.corrections = rep.corrections;
                    rec.recomputes = rep.recomputes;
                    rec.range_replacements = rep.range_replacements;
                    rec.failed = rep.failed;
                    rec.argmax_ok = rows_argmax_match(out, ref);
                    rec.residual_out = max_abs_diff(out, ref);
                    const double refmax = max_abs(ref);
                    rec.rel_residual_out = refmax > 0 ? rec.residual_out / refmax : rec.residual_out;
                    rec.outcome = classify_trial(out, ref, rep, plan, opt.thr);
                }
                stats.records[static_cast<size_t>(t) * heads + h] = std::move(rec);
            }
        }
        std::lock_guard<std::mutex> lk(merge_mu);
        stats.counters += local;
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (const auto& r : stats.records) {
        ++stats.trials;
        if (r.injected) ++stats.injected;
        if (r.fired) ++stats.fired;
        if (r.detections > 0) ++stats.detected;
        if (r.injected && r.argmax_ok) ++stats.argmax_preserved;
        switch (r.outcome) {
            case Outcome::CLEAN: break;
            case Outcome::FALSE_ALARM: ++stats.false_alarms; break;
            case Outcome::CORRECTED:
                ++stats.corrected;
                stats.max_corrected_residual =
                    std::max(stats.max_corrected_residual, r.residual_out);
                break;
            case Outcome::RANGE_RESTRICTED: ++stats.range_restricted; break;
            case Outcome::MASKED_BENIGN: ++stats.masked_benign; break;
            case Outcome::RANGE_CONTRACT: ++stats.range_contract; break;
            case Outcome::UNCORRECTABLE: ++stats.uncorrectable; break;
        }
    }
    return stats;
}

CalibrationResult calibrate_thresholds(const AttnConfig& cfg_in, FTMode mode, int trials,
                                       double safety, uint64_t seed) {
    AttnConfig cfg = cfg_in;
    cfg.validate();
    if (trials <= 0) throw ConfigError("calibration: trials must be positive");
    if (safety < 1.0) throw ConfigError("calibration: safety factor must be >= 1");

    CalibrationResult result;
    double mexp = -kInf, mout = -kInf, mlin = -kInf;
    KernelKnobs knobs;
    knobs.observe_linear = true;
    const Thresholds observe = Thresholds::observe();

    for (int t = 0; t < trials; ++t) {
        Rng rng(trial_seed(seed, static_cast<uint64_t>(t)));
        const Matrix q = Matrix::random(cfg.seq_len, cfg.head_dim, rng);
        const Matrix k = Matrix::random(cfg.seq_len, cfg.head_dim, rng);
        const Matrix v = Matrix::random(cfg.seq_len, cfg.head_dim, rng);
        auto [out, rep] = forward(q, k, v, cfg, observe, mode, nullptr, &knobs);
        (void)out;
        const FamilyResiduals f = family_residuals(rep, cfg.num_blocks());
        mexp = std::max(mexp, f.exp);
        mout = std::max(mout, f.out);
        mlin = std::max(mlin, f.lin);
    }

    result.max_exp = std::isfinite(mexp) ? mexp : 0.0;
    result.max_out = std::isfinite(mout) ? mout : 0.0;
    result.max_lin = std::isfinite(mlin) ? mlin : 0.0;
    result.degenerate = !(std::isfinite(mexp) && mexp > 0.0) ||
                        !(std::isfinite(mout) && mout > 0.0) ||
                        !(std::isfinite(mlin) && mlin > 0.0);
    result.thr.eps1 = std::isfinite(mexp) ? mexp * safety : kInf;
    result.thr.eps2 = std::isfinite(mout) ? mout * safety : kInf;
    result.thr.eps_lin = std::isfinite(mlin) ? mlin * safety : kInf;
    return result;
}

std::vector<SweepPoint> threshold_sweep(const AttnConfig& cfg_in, FTMode mode,
                                        const Thresholds& base, int trials, uint64_t seed,
                                        int points) {
    AttnConfig cfg = cfg_in;
    cfg.validate();
    if (trials <= 0 || points <= 1) throw ConfigError("sweep: trials and points must be positive");

    KernelKnobs knobs;
    knobs.observe_linear = true;
    const Thresholds observe = Thresholds::observe();
    const std::vector<FaultSite> sites = default_sites(mode);

    std::vector<FamilyResiduals> clean_runs, fault_runs;
    clean_runs.reserve(trials);
    fault_runs.reserve(trials);

    for (int t = 0; t < trials; ++t) {
        Rng rng(trial_seed(seed, static_cast<uint64_t>(t)));
        const Matrix q = Matrix::random(cfg.seq_len, cfg.head_dim, rng);
        const Matrix k = Matrix::random(cfg.seq_len, cfg.head_dim, rng);
        const Matrix v = Matrix::random(cfg.seq_len, cfg.head_dim, rng);

        auto [oc, repc] = forward(q, k, v, cfg, observe, mode, nullptr, &knobs);
        (void)oc;
        clean_runs.push_back(family_residuals(repc, cfg.num_blocks()));

        FaultPlan plan = sample_random_plan(cfg, sites, rng, mode == FTMode::DECOUPLED);
        FaultInjector inj(plan);
        auto [of, repf] = forward(q, k, v, cfg, observe, mode, &inj, &knobs);
        (void)of;
        fault_runs.push_back(family_residuals(repf, cfg.num_blocks()));
    }

    auto trips = [&](const FamilyResiduals& f, double mult) {
        if (f.hard) return true;
        if (std::isfinite(f.exp) && std::isfinite(base.eps1) && f.exp > base.eps1 * mult)
            return true;
        if (std::isfinite(f.out) && std::isfinite(base.eps2) && f.out > base.eps2 * mult)
            return true;
        if (std::isfinite(f.lin) && std::isfinite(base.eps_lin) && f.lin > base.eps_lin * mult)
            return true;
        return false;
    };

    std::vector<SweepPoint> sweep;
    for (int p = 0; p < points; ++p) {
        // log-spaced multipliers from 1e-2 to 1e+2
        const double expo = -2.0 + 4.0 * p / (points - 1);
        SweepPoint sp;
        sp.multiplier = std::pow(10.0, expo);
        int det = 0, fa = 0;
        for (const auto& f : fault_runs) det += trips(f, sp.multiplier) ? 1 : 0;
        for (const auto& f : clean_runs) fa += trips(f, sp.multiplier) ? 1 : 0;
        sp.detection_rate = static_cast<double>(det) / trials;
        sp.false_alarm_rate = static_cast<double>(fa) / trials;
        sweep.push_back(sp);
    }
    return sweep;
}

void write_trials_csv(const std::string& path, const CampaignStats& stats) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << "trial,head,seed,injected,fired,site,bit,fault,detections,corrections,recomputes,"
           "range_replacements,failed,argmax_ok,residual_out,rel_residual_out,outcome\n";
    for (const auto& r : stats.records) {
        out << r.trial << ',' << r.head << ',' << r.seed << ',' << (r.injected ? 1 : 0) << ','
            << (r.fired ? 1 : 0) << ',' << r.site << ',' << r.bit << ',' << r.fault << ','
            << r.detections << ',' << r.corrections << ',' << r.recomputes << ','
            << r.range_replacements << ',' << (r.failed ? 1 : 0) << ',' << (r.argmax_ok ? 1 : 0)
            << ',' << r.residual_out << ',' << r.rel_residual_out << ',' << outcome_name(r.outcome)
            << '\n';
    }
}

}  // namespace efta
